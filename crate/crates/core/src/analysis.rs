//! Monte Carlo estimators for the qualitative behaviour of the scheme:
//! moment curves and time averages, interval occupancy, pathwise log-growth,
//! second-moment inequalities for Poisson integrals, and the coupled
//! coarse/fine harness measuring convergence in probability.
//!
//! All estimators are deterministic map-reduces over path indices (see
//! [`crate::ensemble`]). Paths that overflow are excluded and counted;
//! negative iterates are kept and moments are taken of |Ȳ|.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::engine::{simulate_path, EmPath};
use crate::ensemble::map_reduce;
use crate::error::{invalid, Result, SimError};
use crate::model::{regime_check, ModelParams};
use crate::noise::{generate_noise, stream_rng, Domain, SimGrid};
use crate::stats::{EstimateWithCI, MomentAccumulator};

pub(crate) fn run_path(params: &ModelParams, grid: SimGrid, seed: u64, index: usize) -> EmPath {
    let noise = generate_noise(grid, params.lambda, seed, index as u64);
    simulate_path(params, &noise).expect("noise generated with the model's own intensity")
}

/// Human-readable notes on violated hypotheses for a moment of order `p`.
pub fn moment_warnings(params: &ModelParams, p: f64) -> Vec<String> {
    let mut out = Vec::new();
    if p >= 2.0 {
        if !regime_check(params, p).moment_ok() {
            out.push(format!(
                "moment bound of order {p} needs 2rho < gamma+1, or 2rho = gamma+1 with a2 > (p-1)sigma^2/2; \
                 got rho={}, gamma={}",
                params.rho, params.gamma
            ));
        }
    } else if p < 0.0 {
        let q = -p;
        let ok = 2.0 * params.rho <= params.gamma + 1.0 + crate::model::REGIME_BOUNDARY_TOL
            && params.gamma <= q + 1.0;
        if q < 1.0 || !ok {
            out.push(format!(
                "inverse moment bound of order {q} needs q >= 1, 2rho <= gamma+1 and gamma <= q+1; \
                 got rho={}, gamma={}",
                params.rho, params.gamma
            ));
        }
    } else {
        out.push(format!(
            "moment order {p} is outside the bounded regimes (p >= 2 or p <= -1)"
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurve {
    pub p: f64,
    pub times: Vec<f64>,
    /// Estimate of E|Ȳ(t_n)|^p at each node.
    pub nodes: Vec<EstimateWithCI>,
    pub n_paths: u64,
    pub n_excluded: u64,
    /// Share of included paths with at least one negative iterate.
    pub negative_path_fraction: f64,
    pub warnings: Vec<String>,
}

impl MomentCurve {
    /// Mean of the node estimates over the final quarter of the horizon.
    pub fn plateau(&self) -> f64 {
        let start = self.nodes.len() - self.nodes.len().div_ceil(4);
        let tail = &self.nodes[start..];
        tail.iter().map(|e| e.point).sum::<f64>() / tail.len() as f64
    }

    /// Largest value of `point − (max(y0^p, plateau) + k·SE)` over the nodes;
    /// non-positive means every node sits under the bound.
    pub fn worst_excess(&self, y0: f64, k_se: f64) -> f64 {
        let cap = y0.powf(self.p).max(self.plateau());
        self.nodes
            .iter()
            .map(|e| e.point - (cap + k_se * e.std_error))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone)]
struct CurveAcc {
    nodes: Vec<MomentAccumulator>,
    excluded: u64,
    negative: u64,
}

/// Per-node estimate of E|Ȳ(t)|^p.
pub fn moment_curve(
    params: &ModelParams,
    p: f64,
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
) -> Result<MomentCurve> {
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be positive"));
    }
    let n_nodes = grid.n_steps() + 1;
    let acc = map_reduce(
        n_paths,
        || CurveAcc {
            nodes: vec![MomentAccumulator::new(); n_nodes],
            excluded: 0,
            negative: 0,
        },
        |acc, i| {
            let path = run_path(params, grid, seed, i);
            if path.overflowed() {
                acc.excluded += 1;
                return;
            }
            if path.went_negative() {
                acc.negative += 1;
            }
            for (a, &y) in acc.nodes.iter_mut().zip(&path.values) {
                a.push(y.abs().powf(p));
            }
        },
        |a, b| {
            for (x, y) in a.nodes.iter_mut().zip(&b.nodes) {
                x.merge(y);
            }
            a.excluded += b.excluded;
            a.negative += b.negative;
        },
    );
    let included = n_paths as u64 - acc.excluded;
    if included == 0 {
        return Err(SimError::AllPathsOverflowed);
    }
    Ok(MomentCurve {
        p,
        times: (0..n_nodes).map(|n| grid.time(n)).collect(),
        nodes: acc.nodes.iter().map(|a| a.estimate(acc.excluded)).collect(),
        n_paths: included,
        n_excluded: acc.excluded,
        negative_path_fraction: acc.negative as f64 / included as f64,
        warnings: moment_warnings(params, p),
    })
}

/// Exponent θ + 2ρ − 2 whose time-averaged moment stays bounded for θ ∈ (0,1).
pub fn time_average_exponent(params: &ModelParams, theta: f64) -> f64 {
    theta + 2.0 * params.rho - 2.0
}

/// Trapezoidal time average over [0, T] of E Σ_e |Ȳ(t)|^e.
///
/// Passing `[-2.0, 2.0]` gives the averaged E(y⁻² + y²).
pub fn time_avg_moment(
    params: &ModelParams,
    exponents: &[f64],
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
) -> Result<EstimateWithCI> {
    if exponents.is_empty() {
        return Err(invalid("exponents", "need at least one exponent"));
    }
    let n = grid.n_steps();
    let (acc, excluded) = map_reduce(
        n_paths,
        || (MomentAccumulator::new(), 0u64),
        |(acc, excluded), i| {
            let path = run_path(params, grid, seed, i);
            if path.overflowed() {
                *excluded += 1;
                return;
            }
            let g = |y: f64| exponents.iter().map(|&e| y.abs().powf(e)).sum::<f64>();
            let mut s = 0.5 * (g(path.values[0]) + g(path.values[n]));
            for &y in &path.values[1..n] {
                s += g(y);
            }
            acc.push(s / n as f64);
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1 += b.1;
        },
    );
    if acc.n == 0 {
        return Err(SimError::AllPathsOverflowed);
    }
    Ok(acc.estimate(excluded))
}

/// Ȳ(T) for every non-overflowed path, in path order.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalSample {
    pub values: Vec<f64>,
    pub n_excluded: u64,
}

pub fn terminal_values(
    params: &ModelParams,
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
) -> TerminalSample {
    let (values, n_excluded) = map_reduce(
        n_paths,
        || (Vec::new(), 0u64),
        |(v, ex), i| {
            let path = run_path(params, grid, seed, i);
            if path.overflowed() {
                *ex += 1;
            } else {
                v.push(path.values[grid.n_steps()]);
            }
        },
        |a, b| {
            a.0.extend(b.0);
            a.1 += b.1;
        },
    );
    TerminalSample { values, n_excluded }
}

impl TerminalSample {
    /// Share of terminal values strictly inside (1/n₁, n₁).
    pub fn occupancy(&self, n1: f64) -> Result<EstimateWithCI> {
        if !(n1 > 1.0) {
            return Err(invalid("n1", format!("must exceed 1, got {n1}")));
        }
        let hits = self
            .values
            .iter()
            .filter(|&&y| y > 1.0 / n1 && y < n1)
            .count() as u64;
        Ok(EstimateWithCI::proportion(
            hits,
            self.values.len() as u64,
            self.n_excluded,
        ))
    }
}

pub fn occupancy_probability(
    params: &ModelParams,
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
    n1: f64,
) -> Result<EstimateWithCI> {
    terminal_values(params, grid, n_paths, seed).occupancy(n1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancySearch {
    pub epsilon: f64,
    /// (n₁, estimate) for every level tried, n₁ = 2, 4, 8, …
    pub levels: Vec<(f64, EstimateWithCI)>,
    /// First n₁ whose occupancy reached 1 − ε.
    pub found: Option<f64>,
}

/// Doubles n₁ from 2 until the occupancy reaches 1 − ε or `max_doublings` is spent.
pub fn occupancy_search(
    params: &ModelParams,
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
    epsilon: f64,
    max_doublings: u32,
) -> Result<OccupancySearch> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(
            "epsilon",
            format!("must lie in (0,1), got {epsilon}"),
        ));
    }
    let sample = terminal_values(params, grid, n_paths, seed);
    let mut levels = Vec::new();
    let mut found = None;
    let mut n1 = 2.0;
    for _ in 0..=max_doublings {
        let est = sample.occupancy(n1)?;
        levels.push((n1, est));
        if est.point >= 1.0 - epsilon {
            found = Some(n1);
            break;
        }
        n1 *= 2.0;
    }
    Ok(OccupancySearch {
        epsilon,
        levels,
        found,
    })
}

/// Band half-width beyond ±1 used for the pathwise log-growth check.
pub const LOG_RATIO_SLACK: f64 = 0.3;
pub const LOG_RATIO_SAMPLE_SPACING: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRatioSummary {
    pub sample_times: Vec<f64>,
    pub band: (f64, f64),
    pub n_paths: u64,
    pub n_excluded: u64,
    /// (path, time) samples with Ȳ(t) > 0.
    pub n_samples: u64,
    pub n_inside: u64,
    /// Samples skipped because Ȳ(t) ≤ 0.
    pub n_nonpositive: u64,
    pub fraction_inside: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Mean of log Ȳ(t)/log t across paths at each sample time.
    pub mean_ratio: Vec<f64>,
}

#[derive(Clone)]
struct RatioAcc {
    excluded: u64,
    samples: u64,
    inside: u64,
    nonpositive: u64,
    min: f64,
    max: f64,
    by_time: Vec<MomentAccumulator>,
}

/// log Ȳ(t)/log t sampled at t = 10, 20, …, T_large.
pub fn pathwise_log_ratio(
    params: &ModelParams,
    t_large: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<LogRatioSummary> {
    if t_large < 50.0 {
        return Err(invalid(
            "t_large",
            format!("need T_large >= 50, got {t_large}"),
        ));
    }
    let grid = SimGrid::with_step(t_large, dt)?;
    let n_times = (t_large / LOG_RATIO_SAMPLE_SPACING).floor() as usize;
    let sample_times: Vec<f64> = (1..=n_times)
        .map(|k| k as f64 * LOG_RATIO_SAMPLE_SPACING)
        .collect();
    let band = (-(1.0 + LOG_RATIO_SLACK), 1.0 + LOG_RATIO_SLACK);
    let acc = map_reduce(
        n_paths,
        || RatioAcc {
            excluded: 0,
            samples: 0,
            inside: 0,
            nonpositive: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            by_time: vec![MomentAccumulator::new(); n_times],
        },
        |acc, i| {
            let path = run_path(params, grid, seed, i);
            if path.overflowed() {
                acc.excluded += 1;
                return;
            }
            for (k, &t) in sample_times.iter().enumerate() {
                let y = path
                    .step_interpolant(t)
                    .expect("sample time inside horizon");
                if y <= 0.0 {
                    acc.nonpositive += 1;
                    continue;
                }
                let r = y.ln() / t.ln();
                acc.samples += 1;
                if r >= band.0 && r <= band.1 {
                    acc.inside += 1;
                }
                acc.min = acc.min.min(r);
                acc.max = acc.max.max(r);
                acc.by_time[k].push(r);
            }
        },
        |a, b| {
            a.excluded += b.excluded;
            a.samples += b.samples;
            a.inside += b.inside;
            a.nonpositive += b.nonpositive;
            a.min = a.min.min(b.min);
            a.max = a.max.max(b.max);
            for (x, y) in a.by_time.iter_mut().zip(&b.by_time) {
                x.merge(y);
            }
        },
    );
    if acc.samples == 0 {
        return Err(SimError::AllPathsOverflowed);
    }
    Ok(LogRatioSummary {
        sample_times,
        band,
        n_paths: n_paths as u64 - acc.excluded,
        n_excluded: acc.excluded,
        n_samples: acc.samples,
        n_inside: acc.inside,
        n_nonpositive: acc.nonpositive,
        fraction_inside: acc.inside as f64 / acc.samples as f64,
        min_ratio: acc.min,
        max_ratio: acc.max,
        mean_ratio: acc.by_time.iter().map(|a| a.mean()).collect(),
    })
}

/// Integrand of the Poisson stochastic integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrand {
    /// h ≡ 1
    One,
    /// h(s) = s
    Identity,
}

impl Integrand {
    fn eval(self, s: f64) -> f64 {
        match self {
            Integrand::One => 1.0,
            Integrand::Identity => s,
        }
    }

    /// ∫₀ᵗ h(s) ds
    fn primitive(self, t: f64) -> f64 {
        match self {
            Integrand::One => t,
            Integrand::Identity => 0.5 * t * t,
        }
    }

    /// ∫₀ᵀ h(s)² ds
    fn square_integral(self, t: f64) -> f64 {
        match self {
            Integrand::One => t,
            Integrand::Identity => t * t * t / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonInequality {
    /// E|∫₀ᵀ h dN|² ≤ 2λ(1+λT) ∫₀ᵀ h² ds
    Terminal,
    /// E sup_t |∫₀ᵗ h dÑ|² ≤ 4λ ∫₀ᵀ h² ds
    CompensatedSup,
    /// E sup_t |∫₀ᵗ h dN|² ≤ (8λ + 2λT²) ∫₀ᵀ h² ds
    RawSup,
    /// E sup_t |∫₀ᵗ h dN|² ≤ (8λ + 2λ²T) ∫₀ᵀ h² ds, from N = Ñ + λt.
    RawSupSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityRow {
    pub integrand: Integrand,
    pub inequality: PoissonInequality,
    pub lhs: EstimateWithCI,
    pub rhs: f64,
    /// rhs + 3 SE − lhs; non-negative when the row passes.
    pub margin: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonIntegralCheck {
    pub lambda: f64,
    pub horizon: f64,
    pub n_samples: u64,
    pub rows: Vec<InequalityRow>,
    pub passes: bool,
}

/// Monte Carlo left-hand sides of the second-moment inequalities for Poisson
/// integrals, for h ≡ 1 and h(s) = s, against their analytic right-hand
/// sides. Jump times are simulated exactly (no grid).
///
/// The `RawSup` constant 8λ + 2λT² is smaller than E N(T)²/T whenever
/// λT > 7 + 2T², so that row can fail for large λT; `RawSupSplit` carries the
/// constant obtained by splitting off the compensator.
pub fn poisson_integral_inequality_check(
    lambda: f64,
    horizon: f64,
    n_samples: usize,
    seed: u64,
) -> Result<PoissonIntegralCheck> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be >= 0, got {lambda}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", format!("must be > 0, got {horizon}")));
    }
    const HS: [Integrand; 2] = [Integrand::One, Integrand::Identity];
    let acc = map_reduce(
        n_samples,
        || [[MomentAccumulator::new(); 4]; 2],
        |acc, i| {
            let mut rng = stream_rng(seed, Domain::JumpTimes, i as u64);
            let count = if lambda > 0.0 {
                Poisson::new(lambda * horizon)
                    .expect("positive rate")
                    .sample(&mut rng) as usize
            } else {
                0
            };
            let mut times: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * horizon).collect();
            times.sort_by(f64::total_cmp);
            for (slot, &h) in acc.iter_mut().zip(HS.iter()) {
                let mut raw = 0.0;
                let mut sup_comp: f64 = 0.0;
                for &tau in &times {
                    let comp = lambda * h.primitive(tau);
                    sup_comp = sup_comp.max((raw - comp).abs());
                    raw += h.eval(tau);
                    sup_comp = sup_comp.max((raw - comp).abs());
                }
                sup_comp = sup_comp.max((raw - lambda * h.primitive(horizon)).abs());
                slot[0].push(raw * raw);
                slot[1].push(sup_comp * sup_comp);
                // h ≥ 0, so the running raw integral peaks at T.
                slot[2].push(raw * raw);
                slot[3].push(raw * raw);
            }
        },
        |a, b| {
            for (x, y) in a.iter_mut().flatten().zip(b.iter().flatten()) {
                x.merge(y);
            }
        },
    );
    let mut rows = Vec::with_capacity(8);
    for (slot, &h) in acc.iter().zip(HS.iter()) {
        let sq = h.square_integral(horizon);
        let consts = [
            (
                PoissonInequality::Terminal,
                2.0 * lambda * (1.0 + lambda * horizon),
            ),
            (PoissonInequality::CompensatedSup, 4.0 * lambda),
            (
                PoissonInequality::RawSup,
                8.0 * lambda + 2.0 * lambda * horizon * horizon,
            ),
            (
                PoissonInequality::RawSupSplit,
                8.0 * lambda + 2.0 * lambda * lambda * horizon,
            ),
        ];
        for (a, (which, c)) in slot.iter().zip(consts) {
            let lhs = a.estimate(0);
            let rhs = c * sq;
            let margin = rhs + 3.0 * lhs.std_error - lhs.point;
            rows.push(InequalityRow {
                integrand: h,
                inequality: which,
                lhs,
                rhs,
                margin,
                passes: margin >= 0.0,
            });
        }
    }
    Ok(PoissonIntegralCheck {
        lambda,
        horizon,
        n_samples: n_samples as u64,
        passes: rows.iter().all(|r| r.passes),
        rows,
    })
}

/// Default refinement of the reference grid below the finest level, as a power of two.
pub const REFERENCE_REFINE_LOG2: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLevel {
    pub dt: f64,
    pub n_steps: usize,
    /// P(max over reference nodes |Y_ref − Ȳ_level|² ≥ ξ).
    pub exceedance: EstimateWithCI,
    /// E max |Y_ref − Ȳ_level|² over paths that did not overflow on this level.
    pub mean_sup_sq: EstimateWithCI,
    /// P(sup |Y − Ȳ|² ≥ ξ) for the level's own continuous and step interpolants.
    pub interp_exceedance: EstimateWithCI,
    pub interp_mean_sup_sq: EstimateWithCI,
    /// P(max over reference nodes |Y_ref − Y_level|² ≥ ξ) for the continuous
    /// interpolant, whose jumps land on the same reference nodes as Y_ref.
    pub cont_exceedance: EstimateWithCI,
    pub cont_mean_sup_sq: EstimateWithCI,
    /// Paths that overflowed on this level (counted as exceedances).
    pub n_overflow: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub xi: f64,
    pub horizon: f64,
    pub dt_levels: Vec<f64>,
    pub dt_ref: f64,
    pub n_paths: u64,
    /// Paths whose reference solution overflowed; dropped from every level.
    pub n_excluded: u64,
    pub levels: Vec<ConvergenceLevel>,
    pub exceedance_prob: Vec<f64>,
    pub monotone_ok: bool,
    pub interp_monotone_ok: bool,
    pub cont_monotone_ok: bool,
}

/// True when no level's estimate rises above its predecessor by more than
/// the larger of the two 95% half-widths.
pub fn nonincreasing_within_ci(estimates: &[EstimateWithCI]) -> bool {
    estimates.windows(2).all(|w| {
        let tol = w[0].half_width().max(w[1].half_width());
        w[1].point <= w[0].point + tol
    })
}

#[derive(Clone)]
struct LevelAcc {
    hits: u64,
    interp_hits: u64,
    cont_hits: u64,
    overflow: u64,
    sup_sq: MomentAccumulator,
    interp_sup_sq: MomentAccumulator,
    cont_sup_sq: MomentAccumulator,
}

impl LevelAcc {
    fn new() -> Self {
        Self {
            hits: 0,
            interp_hits: 0,
            cont_hits: 0,
            overflow: 0,
            sup_sq: MomentAccumulator::new(),
            interp_sup_sq: MomentAccumulator::new(),
            cont_sup_sq: MomentAccumulator::new(),
        }
    }

    fn merge(&mut self, o: &LevelAcc) {
        self.hits += o.hits;
        self.interp_hits += o.interp_hits;
        self.cont_hits += o.cont_hits;
        self.overflow += o.overflow;
        self.sup_sq.merge(&o.sup_sq);
        self.interp_sup_sq.merge(&o.interp_sup_sq);
        self.cont_sup_sq.merge(&o.cont_sup_sq);
    }
}

/// Coupled convergence study.
///
/// `level_steps` lists step counts per level (ascending, i.e. step sizes
/// descending). The reference grid has `max(level_steps)·2^ref_refine_log2`
/// steps; every level is driven by coarsened copies of the same reference
/// noise and compared with the reference path at every reference node.
pub fn convergence_in_probability(
    params: &ModelParams,
    horizon: f64,
    xi: f64,
    level_steps: &[usize],
    ref_refine_log2: u32,
    n_paths: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(invalid(
            "xi",
            format!("threshold must lie in (0,1), got {xi}"),
        ));
    }
    if level_steps.is_empty() {
        return Err(invalid("dt_levels", "need at least one level"));
    }
    if level_steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(
            "dt_levels",
            "step sizes must be strictly descending",
        ));
    }
    let finest = *level_steps.last().expect("non-empty");
    let n_ref = finest
        .checked_mul(1usize << ref_refine_log2)
        .ok_or_else(|| invalid("dt_levels", "reference grid too large"))?;
    let ref_grid = SimGrid::new(horizon, n_ref)?;
    let mut grids = Vec::with_capacity(level_steps.len());
    for &n in level_steps {
        if n == 0 || n_ref % n != 0 {
            return Err(invalid(
                "dt_levels",
                format!("level with {n} steps does not nest in the {n_ref}-step reference grid"),
            ));
        }
        grids.push(SimGrid::new(horizon, n)?);
    }

    let n_levels = level_steps.len();
    let (levels, excluded) = map_reduce(
        n_paths,
        || (vec![LevelAcc::new(); n_levels], 0u64),
        |(accs, excluded), i| {
            let noise = generate_noise(ref_grid, params.lambda, seed, i as u64);
            let reference = simulate_path(params, &noise).expect("matching intensity");
            if reference.overflowed() {
                *excluded += 1;
                return;
            }
            for (acc, &n) in accs.iter_mut().zip(level_steps) {
                let factor = n_ref / n;
                let coarse = noise.coarsen(factor).expect("nesting checked");
                let path = simulate_path(params, &coarse).expect("matching intensity");
                if path.overflowed() {
                    acc.overflow += 1;
                    acc.hits += 1;
                    acc.interp_hits += 1;
                    acc.cont_hits += 1;
                    continue;
                }
                let sup_sq = reference
                    .values
                    .iter()
                    .enumerate()
                    .map(|(j, &r)| {
                        let d = r - path.values[(j / factor).min(n)];
                        d * d
                    })
                    .fold(0.0, f64::max);
                let (interp, cont) = interpolant_gaps_sq(
                    params,
                    &path.values,
                    &reference.values,
                    &noise,
                    factor,
                    ref_grid.dt(),
                );
                if sup_sq >= xi {
                    acc.hits += 1;
                }
                if interp >= xi {
                    acc.interp_hits += 1;
                }
                if cont >= xi {
                    acc.cont_hits += 1;
                }
                acc.sup_sq.push(sup_sq);
                acc.interp_sup_sq.push(interp);
                acc.cont_sup_sq.push(cont);
            }
        },
        |a, b| {
            for (x, y) in a.0.iter_mut().zip(&b.0) {
                x.merge(y);
            }
            a.1 += b.1;
        },
    );
    let included = n_paths as u64 - excluded;
    if included == 0 {
        return Err(SimError::AllPathsOverflowed);
    }
    let levels: Vec<ConvergenceLevel> = levels
        .iter()
        .zip(&grids)
        .map(|(a, g)| ConvergenceLevel {
            dt: g.dt(),
            n_steps: g.n_steps(),
            exceedance: EstimateWithCI::proportion(a.hits, included, excluded),
            mean_sup_sq: a.sup_sq.estimate(a.overflow),
            interp_exceedance: EstimateWithCI::proportion(a.interp_hits, included, excluded),
            interp_mean_sup_sq: a.interp_sup_sq.estimate(a.overflow),
            cont_exceedance: EstimateWithCI::proportion(a.cont_hits, included, excluded),
            cont_mean_sup_sq: a.cont_sup_sq.estimate(a.overflow),
            n_overflow: a.overflow,
        })
        .collect();
    let ex: Vec<EstimateWithCI> = levels.iter().map(|l| l.exceedance).collect();
    let interp: Vec<EstimateWithCI> = levels.iter().map(|l| l.interp_exceedance).collect();
    let cont: Vec<EstimateWithCI> = levels.iter().map(|l| l.cont_exceedance).collect();
    Ok(ConvergenceReport {
        xi,
        horizon,
        dt_levels: grids.iter().map(|g| g.dt()).collect(),
        dt_ref: ref_grid.dt(),
        n_paths: included,
        n_excluded: excluded,
        exceedance_prob: ex.iter().map(|e| e.point).collect(),
        monotone_ok: nonincreasing_within_ci(&ex),
        interp_monotone_ok: nonincreasing_within_ci(&interp),
        cont_monotone_ok: nonincreasing_within_ci(&cont),
        levels,
    })
}

/// Max over reference nodes of |Y(t) − Ȳ(t)|² and of |Y_ref(t) − Y(t)|²,
/// where Y is the coarse path's continuous interpolant evaluated with the
/// exact fine increments.
fn interpolant_gaps_sq(
    params: &ModelParams,
    coarse_values: &[f64],
    reference: &[f64],
    fine: &crate::noise::DrivingNoise,
    factor: usize,
    fine_dt: f64,
) -> (f64, f64) {
    let mut gap: f64 = 0.0;
    let mut cont: f64 = 0.0;
    for (m, &y) in coarse_values[..coarse_values.len() - 1].iter().enumerate() {
        let drift = crate::engine::clamped_drift(params, y).0;
        let vol = params.diffusion(y);
        let jump = params.jump(y);
        let mut db = 0.0;
        let mut dn = 0u32;
        for r in 1..=factor {
            let j = m * factor + r - 1;
            db += fine.brownian[j];
            dn += fine.poisson[j];
            let d = drift * (r as f64 * fine_dt) + vol * db + jump * dn as f64;
            gap = gap.max(d * d);
            let e = reference[j + 1] - (y + d);
            cont = cont.max(e * e);
        }
    }
    (gap, cont)
}

/// Share of paths touching each kind of pathological event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityDiagnostics {
    pub dt: f64,
    pub negative: EstimateWithCI,
    pub floor_clamp: EstimateWithCI,
    pub overflow: EstimateWithCI,
}

pub fn positivity_diagnostics(
    params: &ModelParams,
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
) -> PositivityDiagnostics {
    use crate::engine::EventKind;
    let counts = map_reduce(
        n_paths,
        || [0u64; 3],
        |c, i| {
            let path = run_path(params, grid, seed, i);
            for (slot, kind) in [
                EventKind::NegativeIterate,
                EventKind::FloorClamp,
                EventKind::OverflowAbort,
            ]
            .iter()
            .enumerate()
            {
                if path.count(*kind) > 0 {
                    c[slot] += 1;
                }
            }
        },
        |a, b| {
            for k in 0..3 {
                a[k] += b[k];
            }
        },
    );
    let n = n_paths as u64;
    PositivityDiagnostics {
        dt: grid.dt(),
        negative: EstimateWithCI::proportion(counts[0], n, 0),
        floor_clamp: EstimateWithCI::proportion(counts[1], n, 0),
        overflow: EstimateWithCI::proportion(counts[2], n, 0),
    }
}

//! Zero-coupon bond and up-and-out barrier call priced from EM ensembles.
//!
//! Both use the step interpolant Ȳ, so the rate integral is an exact
//! left-endpoint sum and the barrier is monitored at grid nodes.

use serde::{Deserialize, Serialize};

use crate::analysis::run_path;
use crate::engine::simulate_path;
use crate::ensemble::map_reduce;
use crate::error::{invalid, Result, SimError};
use crate::model::ModelParams;
use crate::noise::{generate_noise, SimGrid};
use crate::stats::{EstimateWithCI, MomentAccumulator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondSpec {
    pub maturity: f64,
}

impl BondSpec {
    pub fn new(maturity: f64) -> Result<Self> {
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(invalid("maturity", format!("must be > 0, got {maturity}")));
        }
        Ok(Self { maturity })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierOptionSpec {
    pub strike: f64,
    pub barrier: f64,
    pub maturity: f64,
}

impl BarrierOptionSpec {
    /// Only positivity is enforced; the barrier may sit below the strike.
    pub fn new(strike: f64, barrier: f64, maturity: f64) -> Result<Self> {
        if !(strike > 0.0) {
            return Err(invalid("strike", format!("must be > 0, got {strike}")));
        }
        if !(barrier > 0.0) {
            return Err(invalid("barrier", format!("must be > 0, got {barrier}")));
        }
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(invalid("maturity", format!("must be > 0, got {maturity}")));
        }
        Ok(Self {
            strike,
            barrier,
            maturity,
        })
    }
}

fn check_horizon(grid: &SimGrid, maturity: f64) -> Result<()> {
    if (grid.horizon() - maturity).abs() > 1e-12 * maturity.max(1.0) {
        return Err(invalid(
            "maturity",
            format!(
                "grid horizon {} differs from maturity {maturity}",
                grid.horizon()
            ),
        ));
    }
    Ok(())
}

/// exp(−Δ Σ_{n<N} |Y_n|) for one path.
fn discount_factor(values: &[f64], dt: f64) -> f64 {
    let n = values.len() - 1;
    let integral: f64 = values[..n].iter().map(|y| y.abs()).sum::<f64>() * dt;
    (-integral).exp()
}

/// E[exp(−∫₀ᵀ |Ȳ(t)| dt)].
pub fn bond_price(
    params: &ModelParams,
    spec: &BondSpec,
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
) -> Result<EstimateWithCI> {
    check_horizon(&grid, spec.maturity)?;
    let (acc, excluded) = map_reduce(
        n_paths,
        || (MomentAccumulator::new(), 0u64),
        |(acc, ex), i| {
            let path = run_path(params, grid, seed, i);
            if path.overflowed() {
                *ex += 1;
            } else {
                acc.push(discount_factor(&path.values, grid.dt()));
            }
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

/// Bond prices on `fine_grid` and on the grid `factor` times coarser, both
/// driven by the same noise. Returns `(coarse, fine)`.
pub fn bond_price_coupled(
    params: &ModelParams,
    spec: &BondSpec,
    fine_grid: SimGrid,
    factor: usize,
    n_paths: usize,
    seed: u64,
) -> Result<(EstimateWithCI, EstimateWithCI)> {
    check_horizon(&fine_grid, spec.maturity)?;
    let coarse_grid = fine_grid.coarsened(factor)?;
    let acc = map_reduce(
        n_paths,
        || [(MomentAccumulator::new(), 0u64); 2],
        |acc, i| {
            let noise = generate_noise(fine_grid, params.lambda, seed, i as u64);
            let coarse = noise.coarsen(factor).expect("divisibility checked");
            for (slot, (n, dt)) in acc
                .iter_mut()
                .zip([(&coarse, coarse_grid.dt()), (&noise, fine_grid.dt())])
            {
                let path = simulate_path(params, n).expect("matching intensity");
                if path.overflowed() {
                    slot.1 += 1;
                } else {
                    slot.0.push(discount_factor(&path.values, dt));
                }
            }
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                x.0.merge(&y.0);
                x.1 += y.1;
            }
        },
    );
    if acc[0].0.n == 0 || acc[1].0.n == 0 {
        return Err(SimError::AllPathsOverflowed);
    }
    Ok((acc[0].0.estimate(acc[0].1), acc[1].0.estimate(acc[1].1)))
}

/// Per-path quantities the barrier payoff depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathExtremes {
    pub terminal: f64,
    pub min: f64,
    pub max: f64,
    pub overflowed: bool,
}

impl PathExtremes {
    /// (Ȳ(T) − E)⁺ if every node lies in [0, B], otherwise 0.
    pub fn barrier_payoff(&self, strike: f64, barrier: f64) -> f64 {
        if self.overflowed || self.min < 0.0 || self.max > barrier {
            0.0
        } else {
            (self.terminal - strike).max(0.0)
        }
    }
}

/// Node extremes of every path in the ensemble, in path order.
pub fn path_extremes(
    params: &ModelParams,
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
) -> Vec<PathExtremes> {
    map_reduce(
        n_paths,
        Vec::new,
        |v, i| {
            let path = run_path(params, grid, seed, i);
            let (min, max) = path
                .values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
                    (lo.min(y), hi.max(y))
                });
            v.push(PathExtremes {
                terminal: path.values[grid.n_steps()],
                min,
                max,
                overflowed: path.overflowed(),
            });
        },
        |a, b| a.extend(b),
    )
}

/// Mean barrier payoff over a fixed ensemble. Overflowed paths pay zero and
/// are reported in `n_excluded`.
pub fn barrier_price_from_extremes(
    ensemble: &[PathExtremes],
    strike: f64,
    barrier: f64,
) -> EstimateWithCI {
    let mut acc = MomentAccumulator::new();
    let mut overflowed = 0;
    for e in ensemble {
        if e.overflowed {
            overflowed += 1;
        }
        acc.push(e.barrier_payoff(strike, barrier));
    }
    acc.estimate(overflowed)
}

/// E[(Ȳ(T) − E)⁺ 1{0 ≤ Ȳ(t) ≤ B for all t ≤ T}], undiscounted.
pub fn barrier_option_price(
    params: &ModelParams,
    spec: &BarrierOptionSpec,
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
) -> Result<EstimateWithCI> {
    check_horizon(&grid, spec.maturity)?;
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be positive"));
    }
    let ensemble = path_extremes(params, grid, n_paths, seed);
    Ok(barrier_price_from_extremes(
        &ensemble,
        spec.strike,
        spec.barrier,
    ))
}

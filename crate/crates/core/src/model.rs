//! Coefficients of the generalized Ait-Sahalia rate model with Poisson jumps
//!
//! dy = (a₋₁/y − a₀ + a₁y − a₂y^γ) dt + σ y^ρ dB + δ y(t⁻) dN
//!
//! plus the Lyapunov function V(y) = y^θ − 1 − θ log y, its jump-augmented
//! generator, and the parameter-regime predicates that gate each moment and
//! pathwise bound.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SimError};

/// Below this magnitude the reciprocal drift term is treated as singular.
pub const SINGULARITY_FLOOR: f64 = 1e-12;

/// Absolute tolerance used when deciding 2ρ = γ + 1.
pub const REGIME_BOUNDARY_TOL: f64 = 1e-12;

/// Grid used for the empirical supremum of the generator.
pub const GENERATOR_GRID_POINTS: usize = 10_000;
pub const GENERATOR_GRID_LO: f64 = 1e-6;
pub const GENERATOR_GRID_HI: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub a_neg1: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub rho: f64,
    pub delta: f64,
    pub lambda: f64,
    pub y0: f64,
}

impl ModelParams {
    /// Checks every field invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fields() {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.gamma <= 1.0 {
            return Err(invalid(
                "gamma",
                format!("gamma > 1 required, got {}", self.gamma),
            ));
        }
        if self.rho <= 1.0 {
            return Err(invalid(
                "rho",
                format!("rho > 1 required, got {}", self.rho),
            ));
        }
        let nonneg = [
            ("a_neg1", self.a_neg1),
            ("a0", self.a0),
            ("a1", self.a1),
            ("a2", self.a2),
            ("sigma", self.sigma),
            ("delta", self.delta),
            ("lambda", self.lambda),
        ];
        for (name, v) in nonneg {
            if v < 0.0 {
                return Err(invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        if self.y0 <= 0.0 {
            return Err(invalid("y0", format!("y0 > 0 required, got {}", self.y0)));
        }
        Ok(())
    }

    fn fields(&self) -> [(&'static str, f64); 10] {
        [
            ("a_neg1", self.a_neg1),
            ("a0", self.a0),
            ("a1", self.a1),
            ("a2", self.a2),
            ("gamma", self.gamma),
            ("sigma", self.sigma),
            ("rho", self.rho),
            ("delta", self.delta),
            ("lambda", self.lambda),
            ("y0", self.y0),
        ]
    }

    /// Drift f(y) = a₋₁/y − a₀ + a₁y − a₂·sign(y)|y|^γ.
    ///
    /// Fails when |y| is below [`SINGULARITY_FLOOR`] and the reciprocal term is active.
    pub fn drift(&self, y: f64) -> Result<f64> {
        if self.a_neg1 > 0.0 && y.abs() < SINGULARITY_FLOOR {
            return Err(SimError::Domain(format!(
                "drift reciprocal term singular at y={y:e}"
            )));
        }
        Ok(self.drift_unchecked(y))
    }

    /// Drift with the reciprocal argument replaced by `recip_arg`.
    pub(crate) fn drift_with_recip(&self, y: f64, recip_arg: f64) -> f64 {
        let recip = if self.a_neg1 == 0.0 {
            0.0
        } else {
            self.a_neg1 / recip_arg
        };
        recip - self.a0 + self.a1 * y - self.a2 * pow_signed(y, self.gamma)
    }

    fn drift_unchecked(&self, y: f64) -> f64 {
        self.drift_with_recip(y, y)
    }

    /// σ|y|^ρ.
    pub fn diffusion(&self, y: f64) -> f64 {
        self.sigma * y.abs().powf(self.rho)
    }

    /// δy: the state change caused by one jump.
    pub fn jump(&self, y: f64) -> f64 {
        self.delta * y
    }

    /// LV(y) + λ(V((1+δ)y) − V(y)) expanded term by term.
    pub fn generator_with_jump(&self, theta: f64, y: f64) -> Result<f64> {
        check_theta(theta)?;
        if y <= 0.0 || !y.is_finite() {
            return Err(SimError::Domain(format!(
                "generator requires y > 0, got {y}"
            )));
        }
        let th = theta;
        let s2 = self.sigma * self.sigma;
        let yp = |e: f64| y.powf(e);
        let drift_part = self.a_neg1 * th * yp(th - 2.0) - self.a0 * th * yp(th - 1.0)
            + self.a1 * th * yp(th)
            - self.a2 * th * yp(th + self.gamma - 1.0)
            - self.a_neg1 * th * yp(-2.0)
            + self.a0 * th / y
            - self.a1 * th
            + self.a2 * th * yp(self.gamma - 1.0);
        let diffusion_part = -0.5 * s2 * th * (1.0 - th) * yp(th + 2.0 * self.rho - 2.0)
            + 0.5 * s2 * th * yp(2.0 * self.rho - 2.0);
        let jump_part = if self.lambda == 0.0 {
            0.0
        } else {
            self.lambda * ((1.0 + self.delta).powf(th) - 1.0) * yp(th)
                - self.lambda * th * (1.0 + self.delta).ln()
        };
        Ok(drift_part + diffusion_part + jump_part)
    }

    /// Scans the generator over a log-spaced grid and reports its supremum.
    pub fn generator_scan(&self, theta: f64) -> Result<GeneratorScan> {
        let grid = log_grid(GENERATOR_GRID_LO, GENERATOR_GRID_HI, GENERATOR_GRID_POINTS);
        let values = grid
            .iter()
            .map(|&y| self.generator_with_jump(theta, y))
            .collect::<Result<Vec<_>>>()?;
        let (argmax, sup) =
            values
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                });
        Ok(GeneratorScan {
            theta,
            sup,
            argmax_y: grid[argmax],
            grid,
            values,
        })
    }
}

/// Result of [`ModelParams::generator_scan`]; `sup` is the empirical K₁.
#[derive(Debug, Clone)]
pub struct GeneratorScan {
    pub theta: f64,
    pub sup: f64,
    pub argmax_y: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl GeneratorScan {
    pub fn median(&self) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    /// True when every value in the first and last decile of the grid lies
    /// below the median, i.e. the expression falls off at both ends.
    pub fn tails_below_median(&self) -> bool {
        let med = self.median();
        let k = self.values.len() / 10;
        let n = self.values.len();
        self.values[..k].iter().all(|&v| v < med) && self.values[n - k..].iter().all(|&v| v < med)
    }
}

/// sign(y)·|y|^p.
pub fn pow_signed(y: f64, p: f64) -> f64 {
    if y < 0.0 {
        -(-y).powf(p)
    } else {
        y.powf(p)
    }
}

/// V(y) = y^θ − 1 − θ log y for θ ∈ (0, 1), y > 0.
pub fn lyapunov(theta: f64, y: f64) -> Result<f64> {
    check_theta(theta)?;
    if y <= 0.0 || !y.is_finite() {
        return Err(SimError::Domain(format!(
            "Lyapunov function requires y > 0, got {y}"
        )));
    }
    Ok(y.powf(theta) - 1.0 - theta * y.ln())
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(SimError::Domain(format!(
            "theta must lie in (0,1), got {theta}"
        )))
    }
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Which hypothesis of the p-th moment bound holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentBranch {
    /// 2ρ < γ + 1.
    Strict,
    /// 2ρ = γ + 1 and a₂ > (p − 1)σ²/2.
    Boundary,
    Violated,
}

impl MomentBranch {
    pub fn ok(self) -> bool {
        !matches!(self, MomentBranch::Violated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub p: PValue,
    pub moment_branch: MomentBranch,
    /// Second-moment corollary: 1 < ρ ≤ (γ+1)/2, or ρ = (γ+1)/2 with 2a₂ > σ².
    pub second_moment_corollary_ok: bool,
    /// Inverse moment of order 1: 2ρ ≤ γ + 1 and γ ≤ 2.
    pub inverse_moment_ok: bool,
    /// 1 < ρ ≤ 1.5 and 1 < γ ≤ 2.
    pub pathwise_lower_ok: bool,
    /// 1 < ρ < (γ+1)/2 and 1 < γ ≤ 2.
    pub pathwise_upper_ok: bool,
    /// ρ > 1.5.
    pub time_avg_ok: bool,
}

impl RegimeReport {
    pub fn moment_ok(&self) -> bool {
        self.moment_branch.ok()
    }
}

/// Bit-pattern wrapper so the report stays `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct PValue(u64);

impl From<f64> for PValue {
    fn from(v: f64) -> Self {
        PValue(v.to_bits())
    }
}

impl From<PValue> for f64 {
    fn from(v: PValue) -> Self {
        f64::from_bits(v.0)
    }
}

/// Evaluates every regime inequality for moment order `p`.
pub fn regime_check(params: &ModelParams, p: f64) -> RegimeReport {
    let (rho, gamma) = (params.rho, params.gamma);
    let s2 = params.sigma * params.sigma;
    let gap = 2.0 * rho - (gamma + 1.0);
    let on_boundary = gap.abs() <= REGIME_BOUNDARY_TOL;
    let below = gap < -REGIME_BOUNDARY_TOL;

    let moment_branch = if below {
        MomentBranch::Strict
    } else if on_boundary && params.a2 > (p - 1.0) * s2 / 2.0 {
        MomentBranch::Boundary
    } else {
        MomentBranch::Violated
    };
    let second_moment_corollary_ok =
        (rho > 1.0 && (below || on_boundary)) || (on_boundary && 2.0 * params.a2 > s2);
    let gamma_le_2 = gamma > 1.0 && gamma <= 2.0;

    RegimeReport {
        p: p.into(),
        moment_branch,
        second_moment_corollary_ok,
        inverse_moment_ok: (below || on_boundary) && gamma <= 2.0,
        pathwise_lower_ok: rho > 1.0 && rho <= 1.5 && gamma_le_2,
        pathwise_upper_ok: rho > 1.0 && below && gamma_le_2,
        time_avg_ok: rho > 1.5,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn zero_params() -> ModelParams {
        ModelParams {
            a_neg1: 0.0,
            a0: 0.0,
            a1: 0.0,
            a2: 0.0,
            gamma: 1.5,
            sigma: 0.0,
            rho: 1.2,
            delta: 0.0,
            lambda: 0.0,
            y0: 1.0,
        }
    }

    fn mixed() -> ModelParams {
        ModelParams {
            a_neg1: 0.1,
            a0: 0.2,
            a1: 0.3,
            a2: 0.4,
            gamma: 1.5,
            sigma: 0.3,
            rho: 1.2,
            delta: 0.1,
            lambda: 2.0,
            y0: 1.0,
        }
    }

    // Independent composition: V'(y) f(y) + ½ V''(y) g(y)² + λ (V((1+δ)y) − V(y)).
    fn generator_by_composition(p: &ModelParams, theta: f64, y: f64) -> f64 {
        let v1 = theta * y.powf(theta - 1.0) - theta / y;
        let v2 = theta * (theta - 1.0) * y.powf(theta - 2.0) + theta / (y * y);
        let g = p.diffusion(y);
        v1 * p.drift(y).unwrap()
            + 0.5 * v2 * g * g
            + p.lambda
                * (lyapunov(theta, (1.0 + p.delta) * y).unwrap() - lyapunov(theta, y).unwrap())
    }

    #[test]
    fn drift_examples() {
        let mut p = zero_params();
        assert_eq!(p.drift(3.7).unwrap(), 0.0);

        p.a_neg1 = 1.0;
        p.a2 = 1.0;
        p.gamma = 2.0;
        assert_eq!(p.drift(1.0).unwrap(), 0.0);

        // 0.05 − 0.2 + 0.6 − 0.4·2^1.5
        let q = mixed();
        assert_relative_eq!(
            q.drift(2.0).unwrap(),
            -0.681_370_849_898_476,
            epsilon = 1e-14
        );
    }

    #[test]
    fn drift_rejects_near_zero_with_reciprocal_term() {
        let p = mixed();
        assert!(matches!(p.drift(1e-13), Err(SimError::Domain(_))));
        assert!(matches!(p.drift(0.0), Err(SimError::Domain(_))));
        let mut q = p;
        q.a_neg1 = 0.0;
        assert!(q.drift(0.0).unwrap().is_finite());
    }

    #[test]
    fn drift_is_odd_in_nonconstant_terms_for_negative_states() {
        let p = mixed();
        let plus = p.drift(0.7).unwrap() + p.a0;
        let minus = p.drift(-0.7).unwrap() + p.a0;
        assert_relative_eq!(plus, -minus, epsilon = 1e-15);
    }

    #[test]
    fn diffusion_examples() {
        let mut p = zero_params();
        p.sigma = 0.3;
        p.rho = 1.2;
        assert_eq!(p.diffusion(0.0), 0.0);
        assert_relative_eq!(p.diffusion(-2.0), 0.689_219_012_998_221, epsilon = 1e-14);
        p.sigma = 1.0;
        p.rho = 2.0;
        assert_eq!(p.diffusion(3.0), 9.0);
    }

    #[test]
    fn jump_examples() {
        let mut p = zero_params();
        assert_eq!(p.jump(5.0), 0.0);
        p.delta = 0.5;
        assert_eq!(p.jump(1.0), 0.5);
        p.delta = 0.1;
        assert_relative_eq!(p.jump(-0.2), -0.02, epsilon = 1e-17);
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(lyapunov(0.5, 1.0).unwrap(), 0.0);
        assert_eq!(lyapunov(0.9, 1.0).unwrap(), 0.0);
        assert_relative_eq!(
            lyapunov(0.5, 4.0).unwrap(),
            0.306_852_819_440_054_7,
            epsilon = 1e-15
        );
        assert!(lyapunov(0.5, 0.0).is_err());
        assert!(lyapunov(0.5, -1.0).is_err());
        assert!(lyapunov(1.0, 2.0).is_err());
    }

    #[test]
    fn generator_zero_coefficients() {
        let p = zero_params();
        for &y in &[0.01, 1.0, 7.5] {
            assert_eq!(p.generator_with_jump(0.3, y).unwrap(), 0.0);
        }
    }

    #[test]
    fn generator_jump_bracket_vanishes_without_jump_size() {
        let mut p = mixed();
        p.delta = 0.0;
        p.lambda = 5.0;
        let with = p.generator_with_jump(0.5, 2.0).unwrap();
        p.lambda = 0.0;
        let without = p.generator_with_jump(0.5, 2.0).unwrap();
        assert_relative_eq!(with, without, epsilon = 1e-15);
    }

    #[test]
    fn generator_matches_composition() {
        let p = mixed();
        let expanded = p.generator_with_jump(0.5, 1.5).unwrap();
        let composed = generator_by_composition(&p, 0.5, 1.5);
        assert_relative_eq!(expanded, composed, max_relative = 1e-12);
        assert!(p.generator_with_jump(0.5, 0.0).is_err());
    }

    #[test]
    fn generator_scan_is_bounded_with_falling_tails() {
        let scan = mixed().generator_scan(0.5).unwrap();
        assert!(scan.sup.is_finite());
        assert!(scan.tails_below_median());
        assert_eq!(scan.grid.len(), GENERATOR_GRID_POINTS);
        assert_relative_eq!(scan.grid[0], 1e-6, max_relative = 1e-12);
        assert_relative_eq!(
            scan.grid[GENERATOR_GRID_POINTS - 1],
            1e6,
            max_relative = 1e-12
        );
    }

    #[test]
    fn drift_tail_dominance() {
        let p = mixed();
        let big: Vec<f64> = [1e1, 1e2, 1e3, 1e4]
            .iter()
            .map(|&y| p.drift(y).unwrap())
            .collect();
        assert!(big.windows(2).all(|w| w[1] < w[0]));
        let small: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&y| p.drift(y).unwrap())
            .collect();
        assert!(small.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn regime_examples() {
        let mut p = mixed();
        p.rho = 1.2;
        p.gamma = 1.5;
        let r = regime_check(&p, 2.0);
        assert_eq!(r.moment_branch, MomentBranch::Strict);

        p.rho = 1.25;
        p.sigma = 1.0;
        p.a2 = 0.6;
        let r = regime_check(&p, 2.0);
        assert_eq!(r.moment_branch, MomentBranch::Boundary);
        p.a2 = 0.4;
        assert_eq!(regime_check(&p, 2.0).moment_branch, MomentBranch::Violated);

        p.rho = 1.6;
        let r = regime_check(&p, 2.0);
        assert!(!r.moment_ok());
        assert!(r.time_avg_ok);
    }

    #[test]
    fn validate_reports_each_field() {
        let base = mixed();
        assert!(base.validate().is_ok());
        let cases: Vec<(&str, Box<dyn Fn(&mut ModelParams)>)> = vec![
            ("gamma", Box::new(|p| p.gamma = 0.9)),
            ("rho", Box::new(|p| p.rho = 1.0)),
            ("a_neg1", Box::new(|p| p.a_neg1 = -0.1)),
            ("a0", Box::new(|p| p.a0 = -0.1)),
            ("a1", Box::new(|p| p.a1 = -0.1)),
            ("a2", Box::new(|p| p.a2 = -0.1)),
            ("sigma", Box::new(|p| p.sigma = -0.1)),
            ("delta", Box::new(|p| p.delta = -0.1)),
            ("lambda", Box::new(|p| p.lambda = -0.1)),
            ("y0", Box::new(|p| p.y0 = 0.0)),
        ];
        for (field, mutate) in cases {
            let mut p = base;
            mutate(&mut p);
            match p.validate() {
                Err(SimError::InvalidParam { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: {other:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn pow_signed_is_odd(y in -1e3f64..1e3, p in 1.0f64..3.0) {
            prop_assert_eq!(pow_signed(y, p), -pow_signed(-y, p));
            if y >= 0.0 {
                prop_assert_eq!(pow_signed(y, p), y.powf(p));
            }
        }

        #[test]
        fn lyapunov_nonnegative_zero_only_at_one(theta in 0.01f64..0.99, ly in -10.0f64..10.0) {
            let y = ly.exp();
            let v = lyapunov(theta, y).unwrap();
            prop_assert!(v >= -1e-15);
            if (y - 1.0).abs() > 1e-3 {
                prop_assert!(v > 0.0);
            }
        }

        #[test]
        fn regime_ignores_irrelevant_fields(y0 in 0.01f64..100.0, a0 in 0.0f64..5.0, lambda in 0.0f64..5.0) {
            let base = mixed();
            let mut other = base;
            other.y0 = y0;
            other.a0 = a0;
            other.lambda = lambda;
            prop_assert_eq!(regime_check(&base, 2.0), regime_check(&other, 2.0));
        }

        #[test]
        fn upper_pathwise_implies_strict_branch(rho in 1.0001f64..2.0, gamma in 1.0001f64..2.5) {
            let mut p = mixed();
            p.rho = rho;
            p.gamma = gamma;
            let r = regime_check(&p, 2.0);
            if r.pathwise_upper_ok {
                prop_assert_eq!(r.moment_branch, MomentBranch::Strict);
            }
        }

        #[test]
        fn generator_two_routes_agree(theta in 0.05f64..0.95, ly in -3.0f64..3.0) {
            let p = mixed();
            let y = ly.exp();
            let a = p.generator_with_jump(theta, y).unwrap();
            let b = generator_by_composition(&p, theta, y);
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs())));
        }
    }
}

//! Brownian and Poisson driving noise on a uniform time grid.
//!
//! Every path draws from its own ChaCha8 stream, keyed by the run seed and a
//! domain tag and selected by the path index, so an ensemble is a pure
//! function of `(seed, grid, lambda, n_paths)` whatever order paths are
//! generated in. Brownian and Poisson increments use separate domains, so
//! changing λ leaves the Brownian part of a path untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::map_reduce;
use crate::error::{invalid, Result, SimError};
use crate::stats::{EstimateWithCI, MomentAccumulator};

/// Sub-samples per step used by [`brownian_modulus_check`].
pub const MODULUS_SUBSTEPS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Domain {
    Brownian = 1,
    Poisson = 2,
    Bridge = 3,
    Modulus = 4,
    JumpTimes = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, domain, stream)`.
pub(crate) fn stream_rng(seed: u64, domain: Domain, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed ^ ((domain as u64) << 56);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    horizon: f64,
    n_steps: usize,
    dt: f64,
}

impl SimGrid {
    /// Grid of `n_steps` equal steps over `[0, horizon]`, dt = horizon / n_steps.
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid("horizon", format!("must be > 0, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(invalid("n_steps", "must be a positive integer"));
        }
        let dt = horizon / n_steps as f64;
        if dt >= 1.0 {
            return Err(invalid(
                "dt",
                format!("step must lie in (0,1), got {dt} (horizon {horizon} / {n_steps} steps)"),
            ));
        }
        Ok(Self {
            horizon,
            n_steps,
            dt,
        })
    }

    /// Grid from a step size that must divide the horizon.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", format!("must be > 0, got {dt}")));
        }
        let ratio = horizon / dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * n.max(1.0) {
            return Err(invalid(
                "dt",
                format!("step {dt} does not divide horizon {horizon} into whole steps"),
            ));
        }
        Self::new(horizon, n as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// t_n = n·dt, with the last node pinned to the horizon.
    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.horizon
        } else {
            n as f64 * self.dt
        }
    }

    pub fn coarsened(&self, factor: usize) -> Result<SimGrid> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(SimError::NonDivisibleFactor {
                factor,
                n_steps: self.n_steps,
            });
        }
        SimGrid::new(self.horizon, self.n_steps / factor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrivingNoise {
    pub grid: SimGrid,
    pub lambda: f64,
    pub seed: u64,
    pub stream_id: u64,
    /// ΔB_n, one per step.
    pub brownian: Vec<f64>,
    /// ΔN_n, one per step.
    pub poisson: Vec<u32>,
}

impl DrivingNoise {
    pub fn total_jumps(&self) -> u64 {
        self.poisson.iter().map(|&k| k as u64).sum()
    }

    /// Sums each run of `factor` consecutive increments onto a coarser grid.
    pub fn coarsen(&self, factor: usize) -> Result<DrivingNoise> {
        let grid = self.grid.coarsened(factor)?;
        if factor == 1 {
            return Ok(self.clone());
        }
        let brownian = self
            .brownian
            .chunks_exact(factor)
            .map(|c| c.iter().sum())
            .collect();
        let poisson = self
            .poisson
            .chunks_exact(factor)
            .map(|c| c.iter().sum())
            .collect();
        Ok(DrivingNoise {
            grid,
            lambda: self.lambda,
            seed: self.seed,
            stream_id: self.stream_id,
            brownian,
            poisson,
        })
    }
}

/// Draws ΔB_n ~ N(0, dt) and ΔN_n ~ Poisson(λ·dt) for one path.
pub fn generate_noise(grid: SimGrid, lambda: f64, seed: u64, path_index: u64) -> DrivingNoise {
    let n = grid.n_steps();
    let sqrt_dt = grid.dt().sqrt();
    let mut brng = stream_rng(seed, Domain::Brownian, path_index);
    let brownian: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = brng.sample(StandardNormal);
            z * sqrt_dt
        })
        .collect();
    let rate = lambda * grid.dt();
    let poisson = if rate > 0.0 {
        let mut prng = stream_rng(seed, Domain::Poisson, path_index);
        let dist = Poisson::new(rate).expect("positive finite rate");
        (0..n).map(|_| dist.sample(&mut prng) as u32).collect()
    } else {
        vec![0; n]
    };
    DrivingNoise {
        grid,
        lambda,
        seed,
        stream_id: path_index,
        brownian,
        poisson,
    }
}

/// Monte Carlo estimate of E[max_n sup_{t∈[t_n,t_{n+1}]} |B(t) − B(t_n)|⁴]
/// together with the Doob-type bound (256/27)·T·Δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusCheck {
    pub estimate: EstimateWithCI,
    pub bound: f64,
}

impl ModulusCheck {
    /// Estimate ≤ bound + 3 SE.
    pub fn passes(&self) -> bool {
        self.estimate.point <= self.bound + 3.0 * self.estimate.std_error
    }
}

pub fn doob_modulus_bound(horizon: f64, dt: f64) -> f64 {
    256.0 / 27.0 * horizon * dt
}

/// Sub-samples each step at [`MODULUS_SUBSTEPS`] points to approximate the
/// intra-step supremum.
pub fn brownian_modulus_check(grid: SimGrid, seed: u64, n_paths: usize) -> Result<ModulusCheck> {
    if n_paths < 100 {
        return Err(invalid(
            "n_paths",
            format!("need at least 100 paths, got {n_paths}"),
        ));
    }
    let sub_sd = (grid.dt() / MODULUS_SUBSTEPS as f64).sqrt();
    let acc = map_reduce(
        n_paths,
        MomentAccumulator::new,
        |acc, i| {
            let mut rng = stream_rng(seed, Domain::Modulus, i as u64);
            let mut worst: f64 = 0.0;
            for _ in 0..grid.n_steps() {
                let mut b = 0.0f64;
                for _ in 0..MODULUS_SUBSTEPS {
                    let z: f64 = rng.sample(StandardNormal);
                    b += z * sub_sd;
                    worst = worst.max(b.abs());
                }
            }
            acc.push(worst.powi(4));
        },
        |a, b| a.merge(&b),
    );
    Ok(ModulusCheck {
        estimate: acc.estimate(0),
        bound: doob_modulus_bound(grid.horizon(), grid.dt()),
    })
}

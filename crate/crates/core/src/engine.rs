//! Explicit Euler-Maruyama recursion with Poisson jumps
//!
//! Y_{n+1} = Y_n + f(Y_n)Δ + σ|Y_n|^ρ ΔB_n + δ Y_n ΔN_n
//!
//! No positivity repair is applied. Negative iterates are logged, a reciprocal
//! argument below the singularity floor is clamped and logged, and a path
//! whose magnitude leaves [`OVERFLOW_LIMIT`] is aborted with its remaining
//! nodes frozen at the last accepted value.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::model::{ModelParams, SINGULARITY_FLOOR};
use crate::noise::{stream_rng, Domain, DrivingNoise, SimGrid};
use rand::Rng;
use rand_distr::StandardNormal;

pub const OVERFLOW_LIMIT: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    NegativeIterate,
    FloorClamp,
    OverflowAbort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathEvent {
    /// Node index for negative/overflow events, step index for clamps.
    pub step: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmPath {
    pub grid: SimGrid,
    /// Y_0 … Y_N at the grid nodes.
    pub values: Vec<f64>,
    pub events: Vec<PathEvent>,
    pub params_used: ModelParams,
}

impl EmPath {
    pub fn overflowed(&self) -> bool {
        self.events
            .iter()
            .any(|e| e.kind == EventKind::OverflowAbort)
    }

    pub fn went_negative(&self) -> bool {
        self.events
            .iter()
            .any(|e| e.kind == EventKind::NegativeIterate)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Ȳ(t) = Y_n for t ∈ [t_n, t_{n+1}), Ȳ(T) = Y_N.
    pub fn step_interpolant(&self, t: f64) -> Result<f64> {
        let n = node_index(&self.grid, t)?;
        Ok(self.values[n])
    }

    /// Y(t) from the continuous-time form of the scheme.
    ///
    /// Between nodes the Brownian increment is drawn from the Brownian bridge
    /// pinned by the stored ΔB_n, and the k jumps of the step are placed
    /// uniformly. Both draws come from a stream keyed by the noise seed,
    /// path and step, so repeated queries replay exactly. Each query samples
    /// the bridge marginal at that time only; two queries inside the same step
    /// are not jointly distributed as a bridge.
    pub fn continuous_interpolant(&self, noise: &DrivingNoise, t: f64) -> Result<f64> {
        if noise.grid != self.grid || noise.lambda != self.params_used.lambda {
            return Err(SimError::Domain(
                "noise does not belong to this path".into(),
            ));
        }
        let n = node_index(&self.grid, t)?;
        let s = t - self.grid.time(n);
        if n == self.grid.n_steps() || s <= 0.0 {
            return Ok(self.values[n]);
        }
        if self.overflowed_before(n + 1) {
            return Ok(self.values[n]);
        }
        let dt = self.grid.dt();
        let frac = s / dt;
        let mut rng = stream_rng(noise.seed, Domain::Bridge, noise.stream_id);
        rng.set_word_pos((n as u128) << 20);
        let z: f64 = rng.sample(StandardNormal);
        let db = frac * noise.brownian[n] + (s * (dt - s) / dt).max(0.0).sqrt() * z;
        let k = noise.poisson[n];
        let dn = (0..k).filter(|_| rng.random::<f64>() < frac).count() as u32;
        Ok(increment(&self.params_used, self.values[n], s, db, dn).value)
    }

    fn overflowed_before(&self, node: usize) -> bool {
        self.events
            .iter()
            .any(|e| e.kind == EventKind::OverflowAbort && e.step <= node)
    }
}

fn node_index(grid: &SimGrid, t: f64) -> Result<usize> {
    if !(t >= 0.0 && t <= grid.horizon()) {
        return Err(SimError::TimeOutOfRange {
            t,
            horizon: grid.horizon(),
        });
    }
    let mut n = ((t / grid.dt()).floor() as usize).min(grid.n_steps());
    while n < grid.n_steps() && grid.time(n + 1) <= t {
        n += 1;
    }
    while n > 0 && grid.time(n) > t {
        n -= 1;
    }
    Ok(n)
}

/// Outcome of one EM step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmStep {
    pub value: f64,
    /// The reciprocal drift argument was replaced by sign(y)·ε.
    pub floor_clamped: bool,
}

/// Drift with the reciprocal argument floored at sign(y)·ε; flags the clamp.
pub(crate) fn clamped_drift(params: &ModelParams, y: f64) -> (f64, bool) {
    match params.drift(y) {
        Ok(f) => (f, false),
        Err(_) => {
            let eps = if y < 0.0 {
                -SINGULARITY_FLOOR
            } else {
                SINGULARITY_FLOOR
            };
            (params.drift_with_recip(y, eps), true)
        }
    }
}

fn increment(params: &ModelParams, y: f64, dt: f64, db: f64, dn: u32) -> EmStep {
    let (drift, floor_clamped) = clamped_drift(params, y);
    let value = y + drift * dt + params.diffusion(y) * db + params.jump(y) * dn as f64;
    EmStep {
        value,
        floor_clamped,
    }
}

/// One step of the recursion.
pub fn em_step(params: &ModelParams, y: f64, dt: f64, db: f64, dn: u32) -> EmStep {
    increment(params, y, dt, db, dn)
}

/// Iterates the scheme over the whole noise grid.
pub fn simulate_path(params: &ModelParams, noise: &DrivingNoise) -> Result<EmPath> {
    if noise.lambda != params.lambda {
        return Err(SimError::IntensityMismatch {
            noise: noise.lambda,
            params: params.lambda,
        });
    }
    let grid = noise.grid;
    let n_steps = grid.n_steps();
    let dt = grid.dt();
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut events = Vec::new();
    values.push(params.y0);
    let mut y = params.y0;
    for n in 0..n_steps {
        let step = increment(params, y, dt, noise.brownian[n], noise.poisson[n]);
        if step.floor_clamped {
            events.push(PathEvent {
                step: n,
                kind: EventKind::FloorClamp,
            });
        }
        let next = step.value;
        if !next.is_finite() || next.abs() > OVERFLOW_LIMIT {
            events.push(PathEvent {
                step: n + 1,
                kind: EventKind::OverflowAbort,
            });
            values.resize(n_steps + 1, y);
            break;
        }
        if next < 0.0 {
            events.push(PathEvent {
                step: n + 1,
                kind: EventKind::NegativeIterate,
            });
        }
        values.push(next);
        y = next;
    }
    Ok(EmPath {
        grid,
        values,
        events,
        params_used: *params,
    })
}

//! Monte Carlo toolkit for the generalized Ait-Sahalia short-rate model with
//! Poisson jumps: model coefficients, keyed driving noise, the explicit
//! Euler-Maruyama scheme, estimators for its moment/boundedness/asymptotic
//! behaviour and convergence in probability, and bond and barrier pricing.

pub mod analysis;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod finance;
pub mod io;
pub mod model;
pub mod noise;
pub mod stats;

pub use engine::{em_step, simulate_path, EmPath, EmStep, EventKind, PathEvent};
pub use error::{Result, SimError};
pub use model::{lyapunov, pow_signed, regime_check, ModelParams, MomentBranch, RegimeReport};
pub use noise::{brownian_modulus_check, generate_noise, DrivingNoise, SimGrid};
pub use stats::EstimateWithCI;

//! Learning the right-hand side `f(t, x)` of an ODE `x' = f(t, x)` from
//! uniformly sampled trajectories.
//!
//! The pipeline is split into small modules that can be used on their own:
//!
//! - [`dynamics`]: closed-form right-hand sides and a fixed-step RK4 integrator.
//! - [`datagen`]: noise injection, odd extension, smoothing splines,
//!   difference-quotient targets and the train/test split.
//! - [`net`]: a leaky-ReLU feed-forward network with exact reverse-mode gradients.
//! - [`lipreg`]: finite-set Lipschitz estimates and their subgradient.
//! - [`train`]: the regularized loss, minibatch descent and the baseline-matching sweep.
//! - [`eval`]: test error, generalization gap, Hoeffding bound and recovery error.
//! - [`experiment`]: config-driven runner used by the `lipode` binary.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the experiment
//! runner and the aliases below fix it to `f64`.

pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod lipreg;
pub mod net;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision network parameters.
pub type Mlp = net::MlpParams<f64>;
/// Single-precision network parameters.
pub type MlpF32 = net::MlpParams<f32>;
/// Double-precision dense matrix.
pub type Mat = linalg::Matrix<f64>;
/// Double-precision dataset.
pub type Data = datagen::Dataset<f64>;
/// Double-precision trajectory.
pub type Traj = dynamics::Trajectory<f64>;
/// Double-precision right-hand side.
pub type System = dynamics::RhsSystem<f64>;
/// Double-precision probe set.
pub type Probes = lipreg::ProbeSet<f64>;

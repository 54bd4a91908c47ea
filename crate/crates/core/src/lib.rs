//! Simulation and noise-design toolkit for randomly perturbed maps
//! x_{n+1} = (A + B_n) x_n + q(x_n).
//!
//! The library covers the full loop of studying noise-induced stabilization
//! of weakly unstable equilibria:
//!
//! - [`linalg`]: small dense matrices, operator norms, spectral radii,
//!   Gershgorin bounds, and the balancing similarity that shrinks
//!   off-diagonal coupling.
//! - [`noise`]: the supported random-matrix models and their moment
//!   conditions.
//! - [`lyapunov`]: Monte Carlo estimators for E log||A + B|| and the top
//!   Lyapunov exponent, quadrature log-moments, and analytic margins.
//! - [`dynamics`]: trajectory simulation, escape probabilities, decay
//!   envelopes, and the discrete Gronwall bound.
//! - [`synth`]: designing a noise model that stabilizes a given weakly
//!   unstable matrix.
//!
//! Every randomized routine takes an explicit seed and derives the stream
//! for trial i from (seed, i), so results are reproducible bit for bit
//! across thread counts.

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod lyapunov;
pub mod noise;
mod quad;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};

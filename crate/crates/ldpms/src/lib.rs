//! Numerical toolkit for the large-deviation behavior of jump diffusions
//! with fast-oscillating periodic coefficients, running at two small
//! scales: the noise strength eps and the spatial period delta.
//!
//! The pieces, in dependency order:
//!
//! * [`coeffs`]: periodic coefficient fields on the torus, the finite-atom
//!   jump measure, and the standing-assumption checks (uniform ellipticity,
//!   coefficient regularity, scale separation).
//! * [`sim`]: the Euler scheme for the two-parameter dynamics, with exact
//!   per-atom Poisson jump counts and deterministic parallel batches.
//! * [`measure_change`]: Girsanov tilts (Brownian drift shift xi, jump
//!   intensity factor 1 + phi), their exponential densities, and the tilt
//!   that tracks a target path.
//! * [`action`]: the energy functional V1 + V2 on lattice paths, the
//!   quadratic cost in the a^{-1} metric and the entropy-type jump cost.
//! * [`rate`]: the rate function J(v) = lim V_L(0, Lv)/L by quasi-Newton
//!   minimization over paths and jump intensities, with 1/L extrapolation.
//! * [`symbol`]: the generator's symbol, its finite-scale counterpart, the
//!   growth-margin check, and the transition-density upper bound.
//! * [`mc`]: Monte Carlo probabilities of terminal events, importance
//!   sampling driven by the variational minimizer, and eps log P sweeps.
//! * [`config`] and [`cli`]: the TOML run configuration, the reproducibility
//!   manifest, and the command-line front end.

pub mod action;
pub mod cli;
pub mod coeffs;
pub mod config;
pub mod error;
pub mod mc;
pub mod measure_change;
pub mod rate;
pub mod sim;
pub mod symbol;
pub(crate) mod util;

pub use error::{Error, Result};

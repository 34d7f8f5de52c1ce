//! Spectral toolkit for the periodic gauge transformation `u ↦ e^{iα·I[u]}·u`
//! on truncated Fourier series: the exact map and its Galerkin truncation,
//! Gaussian coefficient measures with exact covariance 1/(1+|n|^{2s}),
//! quartic derivative functionals with certified low-frequency series,
//! an exact Wick moment engine, and a reproducible parallel Monte Carlo
//! harness for measure-transport checks.
//!
//! The numerical core is generic over the scalar type (`Scalar`: f32/f64);
//! the aliases below fix the f64 instantiation the harness and CLI use.

pub mod error;
pub mod fit;
pub mod flow;
pub mod functionals;
pub mod kahan;
pub mod mc;
pub mod measure;
pub mod scalar;
pub mod spectral;
pub mod wick;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// f64 instantiations used throughout the studies.
pub type Coeff = num_complex::Complex<f64>;
pub type SpectralFn = spectral::SpectralFunction<f64>;
pub type SobolevExp = spectral::SobolevIndex<f64>;
pub type Measure = measure::MeasureSpec<f64>;
pub type FlowOutcome = flow::FlowResult<f64>;
pub type Functional = functionals::FunctionalValue<f64>;
pub type DyadicStats = functionals::LpStats<f64>;
pub type Moment = wick::WickMoment<f64>;

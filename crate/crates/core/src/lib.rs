//! The sign covariance `τ*` and its sample estimator `t*`.
//!
//! `τ*` is zero exactly when two ordinal, discrete or continuous variables are
//! independent, and positive otherwise. This crate computes `t*` exactly, the
//! asymptotic null law of `n·t*` (a weighted sum of centred chi-squares),
//! p-values by Fourier inversion, normal-approximation power and sample
//! sizes, and a seeded simulation harness.

pub mod error;
pub mod estimator;
pub mod inference;
pub mod kernel;
pub mod marginal;
pub mod nulldist;
pub mod rng;
pub mod simulate;
pub mod spectrum;
pub mod stats;

pub use error::{Error, Result};
pub use estimator::{estimate_tau_sigma1, tstar, tstar_bruteforce, tstar_vstatistic, PairedSample, TStarEstimate};
pub use kernel::{classify, h_kernel, Classification, KernelValue, Point, Quadruple};
pub use marginal::DiscreteMarginal;
pub use spectrum::{spectrum_continuous, spectrum_discrete, spectrum_mixed, MarginalKind, MixtureSpectrum};
pub use nulldist::{InversionMethod, InversionSettings, NullDistribution};
pub use inference::{
    resolve_marginals, sample_size, test_asymptotic, test_permutation, power_normal_approx, MarginalSpec, PowerRequest,
    TestResult,
};

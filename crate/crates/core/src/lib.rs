//! Closed-form Gaussian partial information decomposition.
//!
//! For a jointly Gaussian target `T` and sources `S_1, …, S_N`, every measure
//! computed here is half the log-ratio of two determinants built from the
//! joint covariance:
//!
//! | Measure | Function | Value |
//! |---------|----------|-------|
//! | two-source redundancy | [`redundancy_two_source`] | ½ log(det Σ₁₁ det Σ₂₂ / det Γ_{U₁}) |
//! | unique information of `S_i` | [`unique_information`] | ½ log(det Ψ_{V_i} / det Ψ_{U_i}) |
//! | `K`-th order synergistic effect | [`synergistic_effect`] | ½ log(det Ψ_{C_{K−1}} / det Ψ_{C_K}) |
//! | narrow synergy | [`narrow_synergy`] | `SE_N` |
//! | total synergistic effect | [`total_synergistic_effect`] | ½ log(det Ψ_{C₁} / det Ψ_{C_N}) |
//!
//! `Ψ_𝐀` is the conditional covariance of `T` given conditionally independent
//! copies of the source subsets in the family `𝐀` (see [`copy_identity`]).
//! All values are in nats.
//!
//! ```
//! use gausspid::{benchmarks, synergy_spectrum, total_synergistic_effect, SpectrumOptions};
//!
//! let cov = benchmarks::five_source_benchmark();
//! let tse = total_synergistic_effect(&cov)?;
//! let spectrum = synergy_spectrum(&cov, SpectrumOptions::default())?;
//! assert!((tse - 6.443).abs() < 5e-4);
//! assert!((spectrum.iter().sum::<f64>() - tse).abs() < 1e-10);
//! # Ok::<(), gausspid::Error>(())
//! ```

pub mod benchmarks;
pub mod copy_identity;
pub mod covariance_model;
pub mod empirical_data;
mod error;
pub mod estimators;
pub mod oracle_validation;

pub use covariance_model::{
    cholesky_logdet, BlockLayout, Cholesky, JointCovariance, LayoutSpec, Selector, SubsetFamily,
};
pub use error::{Error, Result};
pub use estimators::{
    estimate_with_ridge, narrow_synergy, redundancy_two_source, synergistic_effect, synergy_spectrum,
    total_synergistic_effect, unique_information, unique_information_all, Measure, MeasureReport,
    MeasureRequest, SpectrumOptions,
};

#[cfg(test)]
#[macro_export]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }};
}

//! Closed-form measures as half log-determinant ratios.
//!
//! `SE_K` and `TSE` are signed: the families `C_{K−1}` and `C_K` are not
//! nested, so more copies of larger subsets can carry less information about
//! the target. Values are reported as computed, never clamped. Redundancy and
//! unique information are nonnegative.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::copy_identity::{build_gamma, log_det_psi};
use crate::covariance_model::{cholesky_logdet, JointCovariance, LayoutSpec, Selector, SubsetFamily};
use crate::error::{Error, Result};

/// Default source count at which [`synergy_spectrum`] refuses to run.
pub const DEFAULT_SPECTRUM_CAP: usize = 15;

/// Guard for the combinatorial cost of the full spectrum. The spectrum is
/// refused for `N >= source_cap` unless `allow_large` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SpectrumOptions {
    pub source_cap: usize,
    pub allow_large: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            source_cap: DEFAULT_SPECTRUM_CAP,
            allow_large: false,
        }
    }
}

fn require_sources(cov: &JointCovariance, min: usize, what: &str) -> Result<usize> {
    let n = cov.n_sources();
    if n < min {
        return Err(Error::input(format!("{what} needs at least {min} sources, got {n}")));
    }
    Ok(n)
}

/// `½ log(det Σ₁₁ det Σ₂₂ / det Γ_{U₁})`, the information shared by the
/// conditional copies of two sources. Defined for `N = 2` only.
pub fn redundancy_two_source(cov: &JointCovariance) -> Result<f64> {
    let n = cov.n_sources();
    if n != 2 {
        return Err(Error::input(format!(
            "redundancy is defined for exactly two sources, got {n}"
        )));
    }
    let ld = |i: usize| -> Result<f64> {
        let s = Selector::source(i);
        cholesky_logdet(&cov.extract_block(&s, &s)?)
            .map_err(|e| e.with_context(|_| format!("marginal covariance of S{}", i + 1)))
    };
    let gamma = build_gamma(cov, &SubsetFamily::unique_pair(2, 0)?)?;
    let ld_gamma = cholesky_logdet(&gamma).map_err(|e| e.with_context(|_| "Γ for U_1".into()))?;
    Ok(0.5 * (ld(0)? + ld(1)? - ld_gamma))
}

/// `½ log(det Ψ_{V_i} / det Ψ_{U_i})` for zero-based source `i`.
pub fn unique_information(cov: &JointCovariance, i: usize) -> Result<f64> {
    let n = require_sources(cov, 2, "unique information")?;
    cov.layout().check_source(i)?;
    let v = log_det_psi(cov, &SubsetFamily::complement(n, i)?)?;
    let u = log_det_psi(cov, &SubsetFamily::unique_pair(n, i)?)?;
    Ok(0.5 * (v - u))
}

/// Unique information of every source, evaluated concurrently.
pub fn unique_information_all(cov: &JointCovariance) -> Result<Vec<f64>> {
    let n = require_sources(cov, 2, "unique information")?;
    (0..n).into_par_iter().map(|i| unique_information(cov, i)).collect()
}

/// `½ log(det Ψ_{C_{K−1}} / det Ψ_{C_K})` for `2 ≤ K ≤ N`. Signed.
pub fn synergistic_effect(cov: &JointCovariance, k: usize) -> Result<f64> {
    let n = require_sources(cov, 2, "synergistic effect")?;
    if k < 2 || k > n {
        return Err(Error::input(format!("order K = {k} outside 2..={n}")));
    }
    let lo = log_det_psi(cov, &SubsetFamily::order(n, k - 1)?)?;
    let hi = log_det_psi(cov, &SubsetFamily::order(n, k)?)?;
    Ok(0.5 * (lo - hi))
}

/// `SE_N` of the system, or of the system restricted to `(T, S_𝒜)` when a
/// subset `𝒜` is given (sources outside it are dropped before estimation).
pub fn narrow_synergy(cov: &JointCovariance, subset: Option<&[usize]>) -> Result<f64> {
    match subset {
        None => {
            let n = require_sources(cov, 2, "narrow synergy")?;
            synergistic_effect(cov, n)
        }
        Some(s) => {
            let sel = Selector::sources(s);
            if sel.source_indices().len() < 2 {
                return Err(Error::input("narrow synergy needs a subset of at least 2 sources"));
            }
            let restricted = cov.restrict(sel.source_indices())?;
            synergistic_effect(&restricted, restricted.n_sources())
        }
    }
}

/// `½ log(det Ψ_{C₁} / det Ψ_{C_N})`, from the two endpoint families only.
pub fn total_synergistic_effect(cov: &JointCovariance) -> Result<f64> {
    let n = require_sources(cov, 2, "total synergistic effect")?;
    let first = log_det_psi(cov, &SubsetFamily::order(n, 1)?)?;
    let last = log_det_psi(cov, &SubsetFamily::order(n, n)?)?;
    Ok(0.5 * (first - last))
}

/// `(SE_2, …, SE_N)`. Each `Ψ_{C_K}` is computed once. Families are
/// evaluated one after another because `Γ_{C_K}` near `K = N/2` dominates
/// memory.
pub fn synergy_spectrum(cov: &JointCovariance, opts: SpectrumOptions) -> Result<Vec<f64>> {
    let n = require_sources(cov, 2, "synergy spectrum")?;
    if n >= opts.source_cap && !opts.allow_large {
        return Err(Error::input(format!(
            "full spectrum refused for N = {n} (cap {}); its cost grows like Σ_K K³·C(N,K)³. \
             Pass the large-spectrum override to run it anyway",
            opts.source_cap
        )));
    }
    let mut log_dets = Vec::with_capacity(n);
    for k in 1..=n {
        log_dets.push(log_det_psi(cov, &SubsetFamily::order(n, k)?)?);
    }
    Ok(log_dets.windows(2).map(|w| 0.5 * (w[0] - w[1])).collect())
}

/// Which quantity a [`MeasureReport`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Red,
    Un,
    Se,
    Syn,
    Tse,
    Spectrum,
}

impl Measure {
    /// Whether values of this measure may be negative.
    pub fn is_signed(self) -> bool {
        matches!(self, Measure::Se | Measure::Syn | Measure::Tse | Measure::Spectrum)
    }
}

/// A measure to evaluate. Source indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MeasureRequest {
    Redundancy,
    /// One source, or all of them.
    Unique(Option<usize>),
    SynergisticEffect(usize),
    /// Whole system, or restricted to a subset.
    NarrowSynergy(Option<Vec<usize>>),
    TotalSynergisticEffect,
    Spectrum(SpectrumOptions),
}

impl MeasureRequest {
    pub fn measure(&self) -> Measure {
        match self {
            MeasureRequest::Redundancy => Measure::Red,
            MeasureRequest::Unique(_) => Measure::Un,
            MeasureRequest::SynergisticEffect(_) => Measure::Se,
            MeasureRequest::NarrowSynergy(_) => Measure::Syn,
            MeasureRequest::TotalSynergisticEffect => Measure::Tse,
            MeasureRequest::Spectrum(_) => Measure::Spectrum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

/// Measure values in nats with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureReport {
    pub measure: Measure,
    pub values: Vec<NamedValue>,
    pub unit: &'static str,
    pub signed: bool,
    pub lambda: f64,
    pub layout: LayoutSpec,
    pub wall_seconds: f64,
    /// Worker threads available to the evaluation.
    pub threads: usize,
}

impl MeasureReport {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|v| v.name == name).map(|v| v.value)
    }
}

fn subset_label(s: &[usize]) -> String {
    let inner: Vec<String> = s.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

fn evaluate(cov: &JointCovariance, request: &MeasureRequest) -> Result<Vec<NamedValue>> {
    let nv = |name: String, value: f64| NamedValue { name, value };
    Ok(match request {
        MeasureRequest::Redundancy => vec![nv("Red".into(), redundancy_two_source(cov)?)],
        MeasureRequest::Unique(Some(i)) => vec![nv(format!("Un_{}", i + 1), unique_information(cov, *i)?)],
        MeasureRequest::Unique(None) => unique_information_all(cov)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| nv(format!("Un_{}", i + 1), v))
            .collect(),
        MeasureRequest::SynergisticEffect(k) => vec![nv(format!("SE_{k}"), synergistic_effect(cov, *k)?)],
        MeasureRequest::NarrowSynergy(None) => vec![nv("Syn".into(), narrow_synergy(cov, None)?)],
        MeasureRequest::NarrowSynergy(Some(s)) => {
            let sel = Selector::sources(s);
            vec![nv(
                format!("Syn{}", subset_label(sel.source_indices())),
                narrow_synergy(cov, Some(s))?,
            )]
        }
        MeasureRequest::TotalSynergisticEffect => vec![nv("TSE".into(), total_synergistic_effect(cov)?)],
        MeasureRequest::Spectrum(opts) => synergy_spectrum(cov, *opts)?
            .into_iter()
            .enumerate()
            .map(|(j, v)| nv(format!("SE_{}", j + 2), v))
            .collect(),
    })
}

/// Evaluate a measure on `Σ + λI`. `λ = 0` runs the unregularized estimator
/// on `Σ` itself; `λ > 0` succeeds for any symmetric positive semidefinite
/// input.
pub fn estimate_with_ridge(
    cov: &JointCovariance,
    lambda: f64,
    request: &MeasureRequest,
) -> Result<MeasureReport> {
    let regularized;
    let target = if lambda == 0.0 {
        cov
    } else {
        regularized = cov.ridge(lambda)?;
        &regularized
    };
    let start = Instant::now();
    let values = evaluate(target, request).map_err(|e| {
        if lambda == 0.0 {
            e.with_context(|c| format!("{c} in the unregularized estimate; retry with a positive ridge λ"))
        } else {
            e
        }
    })?;
    let measure = request.measure();
    Ok(MeasureReport {
        measure,
        values,
        unit: "nats",
        signed: measure.is_signed(),
        lambda,
        layout: cov.layout().spec(),
        wall_seconds: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::assert_close;
    use crate::covariance_model::BlockLayout;

    fn scalar3(rows: [f64; 9]) -> JointCovariance {
        JointCovariance::new(BlockLayout::scalar(2).unwrap(), DMatrix::from_row_slice(3, 3, &rows)).unwrap()
    }

    #[test]
    fn two_source_population_values() {
        // T ~ N(0,1), S_i = T + ε_i
        let red = scalar3([1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0]);
        assert_close!(redundancy_two_source(&red).unwrap(), 0.5 * (4.0f64 / 3.0).ln(), 1e-12);
        assert_close!(unique_information(&red, 0).unwrap(), 0.5 * 1.5f64.ln(), 1e-12);
        assert_close!(synergistic_effect(&red, 2).unwrap(), 0.0, 1e-12);
        // T = S_1 + ε, S_2 ⟂ (S_1, T)
        let uni = scalar3([2.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_close!(redundancy_two_source(&uni).unwrap(), 0.0, 1e-12);
        assert_close!(unique_information(&uni, 0).unwrap(), 0.5 * 2f64.ln(), 1e-12);
        assert_close!(unique_information(&uni, 1).unwrap(), 0.0, 1e-12);
        // sources independent of T
        let ind = scalar3([1.0, 0.0, 0.0, 0.0, 1.0, 0.4, 0.0, 0.4, 1.0]);
        assert_close!(redundancy_two_source(&ind).unwrap(), 0.0, 1e-12);
    }

    #[test]
    fn input_validation() {
        let red = scalar3([1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0]);
        assert!(matches!(synergistic_effect(&red, 1), Err(Error::Input(_))));
        assert!(matches!(synergistic_effect(&red, 3), Err(Error::Input(_))));
        assert!(matches!(unique_information(&red, 2), Err(Error::Input(_))));
        assert!(matches!(narrow_synergy(&red, Some(&[0])), Err(Error::Input(_))));
        assert!(matches!(narrow_synergy(&red, Some(&[1, 1])), Err(Error::Input(_))));
        let l3 = BlockLayout::scalar(3).unwrap();
        let c3 = JointCovariance::new(l3, DMatrix::identity(4, 4)).unwrap();
        assert!(matches!(redundancy_two_source(&c3), Err(Error::Input(_))));
        let l1 = BlockLayout::scalar(1).unwrap();
        let c1 = JointCovariance::new(l1, DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(total_synergistic_effect(&c1), Err(Error::Input(_))));
    }

    #[test]
    fn narrow_synergy_of_independent_subset_is_zero() {
        let s = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 0.5, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.6, 0.0, 0.0, 0.6, 1.0],
        );
        let cov = JointCovariance::new(BlockLayout::scalar(3).unwrap(), s).unwrap();
        assert_close!(narrow_synergy(&cov, Some(&[1, 2])).unwrap(), 0.0, 1e-12);
    }

    #[test]
    fn spectrum_cap() {
        let n = 15;
        let cov = JointCovariance::new(BlockLayout::scalar(n).unwrap(), DMatrix::identity(n + 1, n + 1)).unwrap();
        let err = synergy_spectrum(&cov, SpectrumOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        let small = cov.restrict(&[0, 1, 2]).unwrap();
        assert_eq!(synergy_spectrum(&small, SpectrumOptions::default()).unwrap().len(), 2);
    }

    #[test]
    fn two_source_spectrum_is_narrow_synergy() {
        let syn = scalar3([3.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let s = synergy_spectrum(&syn, SpectrumOptions::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0], narrow_synergy(&syn, None).unwrap());
    }

    #[test]
    fn ridge_zero_delegates_exactly() {
        let syn = scalar3([3.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let r = estimate_with_ridge(&syn, 0.0, &MeasureRequest::TotalSynergisticEffect).unwrap();
        assert_eq!(r.values[0].value, total_synergistic_effect(&syn).unwrap());
        assert!(r.signed);
        assert_eq!(r.unit, "nats");
        let u = estimate_with_ridge(&syn, 0.0, &MeasureRequest::Unique(None)).unwrap();
        assert_eq!(u.values.len(), 2);
        assert_eq!(u.value("Un_2"), Some(unique_information(&syn, 1).unwrap()));
        assert!(!u.signed);
    }

    #[test]
    fn unregularized_failure_advises_ridge() {
        // S_2 = S_1 exactly: singular
        let sing = scalar3([1.0, 0.5, 0.5, 0.5, 1.0, 1.0, 0.5, 1.0, 1.0]);
        let err = estimate_with_ridge(&sing, 0.0, &MeasureRequest::TotalSynergisticEffect).unwrap_err();
        assert!(err.is_numerical());
        assert!(err.to_string().contains("ridge"), "{err}");
        let ok = estimate_with_ridge(&sing, 1e-6, &MeasureRequest::TotalSynergisticEffect).unwrap();
        assert!(ok.values[0].value.is_finite());
    }
}

//! Monte-Carlo oracle for `Ψ_𝐀` built from the linear-Gaussian
//! representation of the conditional copies, and the validation suite behind
//! the `validate` command.
//!
//! Given `T`, each copy block is `Y_a = B_a T + ξ_a` with
//! `B_a = Σ_{aT} Σ_T⁻¹` and independent residuals `ξ_a ~ N(0, Δ_a)`,
//! `Δ_a = Σ_aa − Σ_{aT} Σ_T⁻¹ Σ_{Ta}`. Sampling `(T, Y_𝐀)` this way and taking
//! the empirical Schur complement estimates `Ψ_𝐀` without touching `Λ` or `Γ`.
//!
//! The oracle does its linear algebra with nalgebra's own Cholesky so that
//! it shares no code path with [`copy_identity`](crate::copy_identity).

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::benchmarks::{five_source_benchmark, random_system, two_source_configuration};
use crate::copy_identity::{build_gamma, build_lambda, describe, psi_from_parts, psi_schur, psi_woodbury};
use crate::covariance_model::{BlockLayout, JointCovariance, Selector, SubsetFamily};
use crate::empirical_data::rng;
use crate::error::{Error, Result};
use crate::estimators::{synergistic_effect, synergy_spectrum, total_synergistic_effect, SpectrumOptions};

/// Regression and residual blocks of the copy construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeCopyModel {
    pub family: SubsetFamily,
    pub sigma_t: DMatrix<f64>,
    /// `B_a`, `d_a × d_T` each, in family order.
    pub b: Vec<DMatrix<f64>>,
    /// `Δ_a`, `d_a × d_a` each, in family order.
    pub delta: Vec<DMatrix<f64>>,
}

fn chol(m: &DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    m.clone().cholesky().ok_or_else(|| Error::not_pd(what, 0))
}

/// `B_a` and `Δ_a` for every subset of the family.
pub fn generative_params(cov: &JointCovariance, family: &SubsetFamily) -> Result<GenerativeCopyModel> {
    family.validate(cov.layout())?;
    let sigma_t = cov.target_block();
    let chol_t = chol(&sigma_t, "target covariance Σ_T")?;
    let mut b = Vec::with_capacity(family.len());
    let mut delta = Vec::with_capacity(family.len());
    for (a, subset) in family.subsets().iter().enumerate() {
        let sel = Selector::sources(subset);
        let s_ta = cov.extract_block(&Selector::target(), &sel)?;
        let s_aa = cov.extract_block(&sel, &sel)?;
        let b_a = chol_t.solve(&s_ta).transpose();
        let d_a = &s_aa - &b_a * &s_ta;
        let d_a = (&d_a + d_a.transpose()) * 0.5;
        chol(&d_a, &format!("residual covariance Δ of subset {a}"))?;
        b.push(b_a);
        delta.push(d_a);
    }
    Ok(GenerativeCopyModel { family: family.clone(), sigma_t, b, delta })
}

impl GenerativeCopyModel {
    pub fn target_dim(&self) -> usize {
        self.sigma_t.nrows()
    }

    /// `D_𝐀`.
    pub fn copy_dim(&self) -> usize {
        self.b.iter().map(|b| b.nrows()).sum()
    }

    /// Stacked `B_𝐀`, `D × d_T`.
    pub fn stacked_b(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.copy_dim(), self.target_dim());
        let mut off = 0;
        for b in &self.b {
            out.view_mut((off, 0), b.shape()).copy_from(b);
            off += b.nrows();
        }
        out
    }

    /// `D^Δ + B Σ_T Bᵀ`.
    pub fn gamma(&self) -> DMatrix<f64> {
        let b = self.stacked_b();
        let mut g = &b * &self.sigma_t * b.transpose();
        let mut off = 0;
        for d in &self.delta {
            let mut blk = g.view_mut((off, off), d.shape());
            blk += d;
            off += d.nrows();
        }
        g
    }

    /// `B Σ_T`.
    pub fn lambda(&self) -> DMatrix<f64> {
        self.stacked_b() * &self.sigma_t
    }

    /// `Σ_T⁻¹ + Σ_a B_aᵀ Δ_a⁻¹ B_a`, the inverse of `Ψ_𝐀`.
    pub fn precision(&self) -> Result<DMatrix<f64>> {
        let mut p = chol(&self.sigma_t, "target covariance Σ_T")?.inverse();
        for (a, (b, d)) in self.b.iter().zip(&self.delta).enumerate() {
            let cd = chol(d, &format!("residual covariance Δ of subset {a}"))?;
            p += b.transpose() * cd.solve(b);
        }
        Ok(p)
    }

    /// Largest `|B_a Σ_T − Σ_{aT}|` over all subsets.
    pub fn reconstruction_error(&self, cov: &JointCovariance) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (subset, b) in self.family.subsets().iter().zip(&self.b) {
            let s_at = cov.extract_block(&Selector::sources(subset), &Selector::target())?;
            worst = worst.max((b * &self.sigma_t - s_at).amax());
        }
        Ok(worst)
    }

    /// `M` draws of `(T, Y_𝐀)`, one per row. Each row consumes `d_T` normals
    /// for `T`, then the normals of each `ξ_a` in family order.
    pub fn sample<R: RngCore + ?Sized>(&self, m: usize, rng: &mut R) -> Result<DMatrix<f64>> {
        let t = self.target_dim();
        let lt = chol(&self.sigma_t, "target covariance Σ_T")?.l();
        let ld = self
            .delta
            .iter()
            .enumerate()
            .map(|(a, d)| chol(d, &format!("residual covariance Δ of subset {a}")).map(|c| c.l()))
            .collect::<Result<Vec<_>>>()?;
        let width = t + self.copy_dim();
        let mut out = DMatrix::zeros(m, width);
        let mut z = nalgebra::DVector::<f64>::zeros(width);
        for r in 0..m {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let target = &lt * z.rows(0, t);
            out.view_mut((r, 0), (1, t)).copy_from(&target.transpose());
            let mut off = t;
            for (b, l) in self.b.iter().zip(&ld) {
                let da = b.nrows();
                let y = b * &target + l * z.rows(off, da);
                out.view_mut((r, off), (1, da)).copy_from(&y.transpose());
                off += da;
            }
        }
        Ok(out)
    }
}

/// Empirical `Σ̂_T − Σ̂_{TY} Σ̂_{YY}⁻¹ Σ̂_{YT}` from `M` generative draws.
pub fn mc_psi(cov: &JointCovariance, family: &SubsetFamily, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    let model = generative_params(cov, family)?;
    let t = model.target_dim();
    let width = t + model.copy_dim();
    if m < width + 2 {
        return Err(Error::input(format!(
            "Monte-Carlo Ψ needs M >= d_T + D + 2 = {}, got {m}",
            width + 2
        )));
    }
    let mut x = model.sample(m, &mut rng(seed))?;
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let s = x.tr_mul(&x) / (m - 1) as f64;
    let d = width - t;
    let s_tt = s.view((0, 0), (t, t)).into_owned();
    let s_ty = s.view((0, t), (t, d)).into_owned();
    let s_yy = s.view((t, t), (d, d)).into_owned();
    let c = chol(&s_yy, "empirical Σ̂_YY")?;
    let psi = s_tt - &s_ty * c.solve(&s_ty.transpose());
    Ok((&psi + psi.transpose()) * 0.5)
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Outcome of testing `Ψ_{C_{K−1}} ⪰ Ψ_{C_K}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdOrdering {
    pub k: usize,
    /// Smallest eigenvalue of `Ψ_{C_{K−1}} − Ψ_{C_K}`.
    pub min_eigenvalue: f64,
    /// The difference admits a Cholesky factorization after a shift of
    /// `1e-12` times its scale.
    pub ordering_holds: bool,
    pub se_k: f64,
}

impl PsdOrdering {
    /// The ordering implies `SE_K ≥ 0`; false only if that implication fails.
    pub fn consistent(&self) -> bool {
        !self.ordering_holds || self.se_k >= -1e-10
    }
}

/// Whether the residual ordering that guarantees a nonnegative `SE_K` holds.
pub fn check_psd_ordering(cov: &JointCovariance, k: usize) -> Result<PsdOrdering> {
    let n = cov.n_sources();
    if k < 2 || k > n {
        return Err(Error::input(format!("PSD ordering needs 2 <= K <= N = {n}, got {k}")));
    }
    let hi = psi_schur(cov, &SubsetFamily::order(n, k - 1)?)?.psi;
    let lo = psi_schur(cov, &SubsetFamily::order(n, k)?)?.psi;
    let diff = &hi - &lo;
    let diff = (&diff + diff.transpose()) * 0.5;
    let scale = hi.amax().max(f64::MIN_POSITIVE);
    let shifted = &diff + DMatrix::identity(diff.nrows(), diff.ncols()) * (1e-12 * scale);
    let record = PsdOrdering {
        k,
        min_eigenvalue: diff.clone().symmetric_eigen().eigenvalues.min(),
        ordering_holds: shifted.cholesky().is_some(),
        se_k: synergistic_effect(cov, k)?,
    };
    debug_assert!(record.consistent(), "{record:?}");
    Ok(record)
}

/// One validation check with its measured error and threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub system: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

/// Systems the suite can run on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationSystem {
    /// Random layouts and covariances derived from the seed.
    Random,
    FiveSource,
    TwoSource(String),
}

impl std::str::FromStr for ValidationSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "five-source" => Ok(Self::FiveSource),
            other => two_source_configuration(other).map(|_| Self::TwoSource(other.to_string())).map_err(|_| {
                Error::input(format!(
                    "unknown system {other:?}; expected random, five-source or a two-source configuration"
                ))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationOptions {
    pub seed: u64,
    pub system: ValidationSystem,
    /// Number of random systems.
    pub systems: usize,
    /// Family specification (`C2`, `U1`, `{1,2};{3}`); all `C_K` and `U_1` when absent.
    pub families: Option<String>,
    pub mc_samples: usize,
    /// Negate Γ's off-diagonal blocks before the Schur route, to prove the
    /// dual-path check can fail.
    pub inject_fault: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            system: ValidationSystem::Random,
            systems: 20,
            families: None,
            mc_samples: 100_000,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub options: ValidationOptions,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

/// Dimension-scaled Monte-Carlo tolerance `5·sqrt((d_T + D)/M)`.
pub fn mc_tolerance(width: usize, m: usize) -> f64 {
    5.0 * (width as f64 / m as f64).sqrt()
}

const DUAL_PATH_TOL: f64 = 1e-9;
const RECONSTRUCTION_TOL: f64 = 1e-10;
const WOODBURY_TOL: f64 = 1e-9;
const TELESCOPING_TOL: f64 = 1e-10;

/// A random layout with `d_T ∈ {1, 2}`, `N ∈ 2..=4` and source dimensions in
/// `{1, 2}`, followed by a random covariance for it.
pub fn random_validation_system(seed: u64) -> Result<JointCovariance> {
    let mut r = rng(seed);
    let target = r.random_range(1..=2);
    let n = r.random_range(2..=4);
    let dims = (0..n).map(|_| r.random_range(1..=2)).collect();
    random_system(&BlockLayout::new(target, dims)?, r.next_u64())
}

fn systems(opts: &ValidationOptions) -> Result<Vec<(String, JointCovariance)>> {
    Ok(match &opts.system {
        ValidationSystem::Random => (0..opts.systems)
            .map(|i| {
                let seed = opts.seed.wrapping_add(i as u64);
                random_validation_system(seed).map(|c| (format!("random seed {seed}"), c))
            })
            .collect::<Result<_>>()?,
        ValidationSystem::FiveSource => vec![("five-source".into(), five_source_benchmark())],
        ValidationSystem::TwoSource(name) => vec![(name.clone(), two_source_configuration(name)?)],
    })
}

fn families(cov: &JointCovariance, spec: Option<&str>) -> Result<Vec<SubsetFamily>> {
    let n = cov.n_sources();
    match spec {
        Some(s) => Ok(vec![SubsetFamily::parse(s, n)?]),
        None => {
            let mut out = (1..=n).map(|k| SubsetFamily::order(n, k)).collect::<Result<Vec<_>>>()?;
            out.push(SubsetFamily::unique_pair(n, 0)?);
            Ok(out)
        }
    }
}

fn check(name: &str, system: &str, measured: f64, tolerance: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        system: system.into(),
        passed: measured <= tolerance,
        measured,
        tolerance,
        detail,
    }
}

fn failed(name: &str, system: &str, tolerance: f64, err: Error) -> CheckResult {
    CheckResult {
        name: name.into(),
        system: system.into(),
        passed: false,
        measured: f64::NAN,
        tolerance,
        detail: err.to_string(),
    }
}

fn schur_route(cov: &JointCovariance, family: &SubsetFamily, inject_fault: bool) -> Result<DMatrix<f64>> {
    if !inject_fault {
        return psi_schur(cov, family).map(|s| s.psi);
    }
    let lambda = build_lambda(cov, family)?;
    let mut gamma = build_gamma(cov, family)?;
    let mut starts = vec![0];
    for s in family.subsets() {
        starts.push(starts.last().unwrap() + cov.layout().subset_dim(s));
    }
    for a in 0..family.len() {
        for b in 0..family.len() {
            if a != b {
                let mut blk = gamma.view_mut(
                    (starts[a], starts[b]),
                    (starts[a + 1] - starts[a], starts[b + 1] - starts[b]),
                );
                blk.neg_mut();
            }
        }
    }
    psi_from_parts(&cov.target_block(), &lambda, &gamma)
}

/// Run every oracle check on the selected systems.
pub fn run_validation(opts: &ValidationOptions) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    for (label, cov) in systems(opts)? {
        for family in families(&cov, opts.families.as_deref())? {
            let fam = describe(&family);
            let sys = format!("{label}, {fam}");

            let dual = schur_route(&cov, &family, opts.inject_fault)
                .and_then(|s| psi_woodbury(&cov, &family).map(|w| relative_frobenius(&s, &w)));
            checks.push(match dual {
                Ok(err) => check("dual-path Ψ", &sys, err, DUAL_PATH_TOL, "Schur vs Woodbury, relative Frobenius".into()),
                Err(e) => failed("dual-path Ψ", &sys, DUAL_PATH_TOL, e),
            });

            let model = match generative_params(&cov, &family) {
                Ok(m) => m,
                Err(e) => {
                    checks.push(failed("generative model", &sys, 0.0, e));
                    continue;
                }
            };
            let recon = model.reconstruction_error(&cov)?;
            let gamma_err = build_gamma(&cov, &family).map(|g| (model.gamma() - &g).amax() / g.amax());
            let worst = gamma_err.map(|g| g.max(recon));
            checks.push(match worst {
                Ok(err) => check(
                    "Γ reconstruction",
                    &sys,
                    err,
                    RECONSTRUCTION_TOL,
                    "D^Δ + BΣ_TBᵀ vs Γ and B_aΣ_T vs Σ_aT, relative max-abs".into(),
                ),
                Err(e) => failed("Γ reconstruction", &sys, RECONSTRUCTION_TOL, e),
            });

            let woodbury = psi_schur(&cov, &family).and_then(|s| {
                let p = model.precision()?;
                let t = s.psi.nrows();
                Ok((&s.psi * p - DMatrix::<f64>::identity(t, t)).amax())
            });
            checks.push(match woodbury {
                Ok(err) => check("Woodbury identity", &sys, err, WOODBURY_TOL, "max-abs of Ψ·(Σ_T⁻¹ + ΣB_aᵀΔ_a⁻¹B_a) − I".into()),
                Err(e) => failed("Woodbury identity", &sys, WOODBURY_TOL, e),
            });

            let width = model.target_dim() + model.copy_dim();
            let tol = mc_tolerance(width, opts.mc_samples);
            let mc = psi_schur(&cov, &family)
                .and_then(|s| mc_psi(&cov, &family, opts.mc_samples, opts.seed).map(|m| relative_frobenius(&m, &s.psi)));
            checks.push(match mc {
                Ok(err) => check(
                    "Monte-Carlo Ψ",
                    &sys,
                    err,
                    tol,
                    format!("M = {}, tolerance 5·sqrt(({width})/M)", opts.mc_samples),
                ),
                Err(e) => failed("Monte-Carlo Ψ", &sys, tol, e),
            });
        }

        let n = cov.n_sources();
        let tele = synergy_spectrum(&cov, SpectrumOptions { allow_large: true, ..Default::default() })
            .and_then(|s| Ok((s.iter().sum::<f64>() - total_synergistic_effect(&cov)?).abs()));
        checks.push(match tele {
            Ok(err) => check("telescoping", &label, err, TELESCOPING_TOL, "|Σ_K SE_K − TSE|".into()),
            Err(e) => failed("telescoping", &label, TELESCOPING_TOL, e),
        });

        for k in 2..=n {
            let name = format!("PSD ordering K={k}");
            checks.push(match check_psd_ordering(&cov, k) {
                Ok(o) => {
                    let scalar_mismatch = cov.layout().target_dim() == 1 && o.ordering_holds != (o.se_k >= -1e-10);
                    CheckResult {
                        name,
                        system: label.clone(),
                        passed: o.consistent() && !scalar_mismatch,
                        measured: o.se_k,
                        tolerance: -1e-10,
                        detail: format!(
                            "ordering {} (min eigenvalue {:.3e}), SE_{k} = {:.6}",
                            if o.ordering_holds { "holds" } else { "fails" },
                            o.min_eigenvalue,
                            o.se_k
                        ),
                    }
                }
                Err(e) => failed(&name, &label, -1e-10, e),
            });
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { options: opts.clone(), passed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assert_close;

    fn pure_redundancy() -> JointCovariance {
        two_source_configuration("pure-redundancy").unwrap()
    }

    #[test]
    fn redundancy_regression_blocks() {
        let m = generative_params(&pure_redundancy(), &SubsetFamily::single(vec![0]).unwrap()).unwrap();
        assert_close!(m.b[0][(0, 0)], 1.0, 1e-15);
        assert_close!(m.delta[0][(0, 0)], 1.0, 1e-15);
    }

    #[test]
    fn independent_sources_have_zero_regression() {
        let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.0, 0.5, 3.0]);
        let cov = JointCovariance::new(BlockLayout::scalar(2).unwrap(), s).unwrap();
        let m = generative_params(&cov, &SubsetFamily::single(vec![0, 1]).unwrap()).unwrap();
        assert_eq!(m.b[0].amax(), 0.0);
        assert_eq!(m.delta[0], cov.extract_block(&Selector::sources(&[0, 1]), &Selector::sources(&[0, 1])).unwrap());
    }

    #[test]
    fn delta_matches_schur_conditional() {
        let cov = five_source_benchmark();
        let fam = SubsetFamily::order(5, 2).unwrap();
        let m = generative_params(&cov, &fam).unwrap();
        for (s, d) in fam.subsets().iter().zip(&m.delta) {
            let mut cond = cov.permute_sources(&(0..5).collect::<Vec<_>>()).unwrap();
            cond = cond.restrict(s).unwrap();
            // Δ_a = Σ_aa − Σ_aT Σ_T⁻¹ Σ_Ta, computed here from the other side
            let sel = Selector::sources(&(0..s.len()).collect::<Vec<_>>());
            let direct = cond.extract_block(&sel, &sel).unwrap()
                - cond.extract_block(&sel, &Selector::target()).unwrap()
                    * cond.target_block().try_inverse().unwrap()
                    * cond.extract_block(&Selector::target(), &sel).unwrap();
            assert!((d - direct).amax() < 1e-12);
        }
    }

    #[test]
    fn mc_psi_small_system() {
        let cov = pure_redundancy();
        let psi = mc_psi(&cov, &SubsetFamily::order(2, 1).unwrap(), 100_000, 3).unwrap();
        assert_close!(psi[(0, 0)], 1.0 / 3.0, 0.01);
        assert!(mc_psi(&cov, &SubsetFamily::order(2, 1).unwrap(), 4, 3).is_err());
    }

    #[test]
    fn psd_ordering_on_five_source() {
        let cov = five_source_benchmark();
        let k5 = check_psd_ordering(&cov, 5).unwrap();
        assert!(!k5.ordering_holds);
        assert!(k5.se_k < 0.0);
        let k2 = check_psd_ordering(&cov, 2).unwrap();
        assert!(k2.se_k > 0.0);
        assert!(check_psd_ordering(&cov, 1).is_err());
    }

    #[test]
    fn suite_passes_and_fault_is_caught() {
        let opts = ValidationOptions { systems: 4, mc_samples: 20_000, ..Default::default() };
        let report = run_validation(&opts).unwrap();
        let bad: Vec<_> = report.checks.iter().filter(|c| !c.passed).collect();
        assert!(report.passed, "{bad:#?}");

        let faulty = run_validation(&ValidationOptions { inject_fault: true, ..opts }).unwrap();
        assert!(!faulty.passed);
        assert!(faulty.checks.iter().any(|c| c.name == "dual-path Ψ" && !c.passed));
    }
}

//! Covariance of the target and the conditionally independent copies of a
//! family of source subsets.
//!
//! For a family `𝐀 = {𝒜_1, …, 𝒜_m}`, let `Y_𝐀` stack one copy of each
//! `S_{𝒜_a}` such that every copy has the same joint law with `T` as the
//! original subset, while distinct copies are independent given `T`. Then
//! `(T, Y_𝐀)` is Gaussian with covariance
//!
//! ```text
//! ⎡ Σ_T  Λᵀ ⎤      Λ = [Σ_{𝒜_1 T}; …; Σ_{𝒜_m T}]
//! ⎣ Λ    Γ  ⎦      Γ_ab = Σ_{𝒜_a 𝒜_a}                 if a = b
//!                       = Σ_{𝒜_a T} Σ_T⁻¹ Σ_{T 𝒜_b}     if a ≠ b
//! ```
//!
//! and `Ψ_𝐀 = Cov(T | Y_𝐀) = Σ_T − Λᵀ Γ⁻¹ Λ`.
//!
//! [`psi_woodbury`] evaluates the same matrix without forming `Γ`, as
//! `(Σ_T⁻¹ + Σ_a B_aᵀ Δ_a⁻¹ B_a)⁻¹` with `B_a = Σ_{𝒜_a T} Σ_T⁻¹` and
//! `Δ_a = Cov(S_{𝒜_a} | T)`. The two routes share nothing beyond block
//! extraction, so agreement between them is a meaningful check.

use nalgebra::DMatrix;

use crate::covariance_model::{Cholesky, JointCovariance, PivotFailure, Selector, SubsetFamily};
use crate::error::{Error, Result};

/// `Λ_𝐀`, `Γ_𝐀` and `Ψ_𝐀` for one family.
#[derive(Debug, Clone)]
pub struct AuxiliarySystem {
    pub family: SubsetFamily,
    /// `D_𝐀 × d_T`
    pub lambda: DMatrix<f64>,
    /// `D_𝐀 × D_𝐀`
    pub gamma: DMatrix<f64>,
    /// `d_T × d_T`
    pub psi: DMatrix<f64>,
}

/// Short family label for error messages; order families can have thousands
/// of subsets.
pub(crate) fn describe(family: &SubsetFamily) -> String {
    let full = family.to_string();
    if full.len() <= 60 {
        format!("family {full}")
    } else {
        let head: String = full.chars().take(40).collect();
        format!("family {head}… ({} subsets)", family.len())
    }
}

fn target_factor(cov: &JointCovariance) -> Result<Cholesky> {
    Cholesky::from_lower(cov.target_block())
        .map_err(|PivotFailure(p)| Error::not_pd("target covariance Σ_T", p))
}

/// Stack `Σ_{𝒜_a T}` in family order.
pub fn build_lambda(cov: &JointCovariance, family: &SubsetFamily) -> Result<DMatrix<f64>> {
    family.validate(cov.layout())?;
    let layout = cov.layout();
    let sigma = cov.matrix();
    let d = family.dim(layout);
    let t = layout.target_dim();
    let mut lambda = DMatrix::zeros(d, t);
    let mut row = 0;
    for subset in family.subsets() {
        for &i in subset {
            for c in layout.source_range(i) {
                for j in 0..t {
                    lambda[(row, j)] = sigma[(c, j)];
                }
                row += 1;
            }
        }
    }
    Ok(lambda)
}

fn subset_coords(cov: &JointCovariance, subset: &[usize]) -> Vec<usize> {
    subset
        .iter()
        .flat_map(|&i| cov.layout().source_range(i))
        .collect()
}

fn gamma_with_lambda(cov: &JointCovariance, family: &SubsetFamily) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let lambda = build_lambda(cov, family)?;
    let chol_t = target_factor(cov)?;
    // Z = L_T⁻¹ Λᵀ, so Zᵀ Z = Λ Σ_T⁻¹ Λᵀ holds every off-diagonal block
    let z = chol_t.solve_lower(&lambda.transpose());
    let mut gamma = z.tr_mul(&z);
    let sigma = cov.matrix();
    let mut off = 0;
    for subset in family.subsets() {
        let coords = subset_coords(cov, subset);
        for (p, &ci) in coords.iter().enumerate() {
            for (q, &cj) in coords.iter().enumerate() {
                gamma[(off + p, off + q)] = sigma[(ci, cj)];
            }
        }
        off += coords.len();
    }
    Ok((gamma, lambda))
}

/// `Γ_𝐀`: marginal covariances on the diagonal blocks, through-`T`
/// covariances off the diagonal, including between repeated subsets.
pub fn build_gamma(cov: &JointCovariance, family: &SubsetFamily) -> Result<DMatrix<f64>> {
    gamma_with_lambda(cov, family).map(|(g, _)| g)
}

/// `Σ_T − Λᵀ Γ⁻¹ Λ` from explicit parts.
pub fn psi_from_parts(
    sigma_t: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if gamma.nrows() != lambda.nrows() || sigma_t.nrows() != lambda.ncols() {
        return Err(Error::input("inconsistent Σ_T / Λ / Γ dimensions"));
    }
    let chol = Cholesky::new(gamma).map_err(|PivotFailure(p)| Error::not_pd("Γ", p))?;
    Ok(sigma_t - chol.quadratic_form(lambda))
}

/// Full auxiliary system with `Ψ_𝐀` as the Schur complement of `Γ_𝐀`.
pub fn psi_schur(cov: &JointCovariance, family: &SubsetFamily) -> Result<AuxiliarySystem> {
    let (gamma, lambda) = gamma_with_lambda(cov, family)?;
    let psi = psi_from_parts(&cov.target_block(), &lambda, &gamma)
        .map_err(|e| e.with_context(|_| format!("Γ for {}", describe(family))))?;
    Ok(AuxiliarySystem {
        family: family.clone(),
        lambda,
        gamma,
        psi,
    })
}

/// `Ψ_𝐀` alone. Factors `Γ_𝐀` in place, so peak memory is one `D_𝐀 × D_𝐀`
/// matrix; this is the path the estimators use.
pub fn psi(cov: &JointCovariance, family: &SubsetFamily) -> Result<DMatrix<f64>> {
    let (gamma, lambda) = gamma_with_lambda(cov, family)?;
    let chol = Cholesky::from_lower(gamma)
        .map_err(|PivotFailure(p)| Error::not_pd(format!("Γ for {}", describe(family)), p))?;
    Ok(cov.target_block() - chol.quadratic_form(&lambda))
}

/// `log det Ψ_𝐀`.
pub fn log_det_psi(cov: &JointCovariance, family: &SubsetFamily) -> Result<f64> {
    let psi = psi(cov, family)?;
    Cholesky::from_lower(psi)
        .map(|c| c.log_det())
        .map_err(|PivotFailure(p)| Error::not_pd(format!("Ψ for {}", describe(family)), p))
}

/// `Ψ_𝐀 = (Σ_T⁻¹ + Σ_a B_aᵀ Δ_a⁻¹ B_a)⁻¹`, evaluated subset by subset.
pub fn psi_woodbury(cov: &JointCovariance, family: &SubsetFamily) -> Result<DMatrix<f64>> {
    family.validate(cov.layout())?;
    let t = cov.layout().target_dim();
    let chol_t = target_factor(cov)?;
    let mut precision = chol_t.solve(&DMatrix::identity(t, t));
    for (a, subset) in family.subsets().iter().enumerate() {
        let sel = Selector::sources(subset);
        let cross = cov.extract_block(&Selector::target(), &sel)?; // Σ_{T𝒜}
        let b_t = chol_t.solve(&cross); // B_aᵀ = Σ_T⁻¹ Σ_{T𝒜}
        let delta = cov.extract_block(&sel, &sel)? - chol_t.quadratic_form(&cross);
        let chol_d = Cholesky::new(&delta).map_err(|PivotFailure(p)| {
            Error::not_pd(format!("residual covariance Δ of subset {a} ({})", describe(family)), p)
        })?;
        precision += chol_d.quadratic_form(&b_t.transpose());
    }
    let chol_p = Cholesky::new(&precision)
        .map_err(|PivotFailure(p)| Error::not_pd("Woodbury precision", p))?;
    let psi = chol_p.solve(&DMatrix::identity(t, t));
    Ok((&psi + psi.transpose()) * 0.5)
}

/// `[[Σ_T, Λᵀ], [Λ, Γ]]`, the exact covariance of `(T, Y_𝐀)`.
pub fn copy_joint_covariance(cov: &JointCovariance, family: &SubsetFamily) -> Result<DMatrix<f64>> {
    let (gamma, lambda) = gamma_with_lambda(cov, family)?;
    let t = cov.layout().target_dim();
    let d = gamma.nrows();
    let mut joint = DMatrix::zeros(t + d, t + d);
    joint.view_mut((0, 0), (t, t)).copy_from(&cov.target_block());
    joint.view_mut((t, 0), (d, t)).copy_from(&lambda);
    joint.view_mut((0, t), (t, d)).copy_from(&lambda.transpose());
    joint.view_mut((t, t), (d, d)).copy_from(&gamma);
    Ok(joint)
}

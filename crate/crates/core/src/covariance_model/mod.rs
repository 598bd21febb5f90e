//! Block-indexed joint covariance of `(T, S_1, …, S_N)` and the
//! positive-definite matrix algebra the estimators are built from.
//!
//! Every linear solve goes through a Cholesky factor; no matrix is ever
//! inverted explicitly. A failed factorization is the only positive
//! definiteness test.

mod cholesky;
mod family;
mod layout;

use nalgebra::DMatrix;

pub use cholesky::{cholesky_logdet, is_positive_definite, Cholesky, PivotFailure};
pub(crate) use family::binomial;
pub use family::SubsetFamily;
pub use layout::{BlockLayout, LayoutSpec, Selector};

use crate::error::{Error, Result};

/// Relative asymmetry accepted by [`JointCovariance::new`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Joint covariance `Σ` of a target block and `N` source blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCovariance {
    layout: BlockLayout,
    sigma: DMatrix<f64>,
}

impl JointCovariance {
    /// Wrap a covariance matrix. Entries must be finite and symmetric to
    /// within [`SYMMETRY_TOLERANCE`] of the largest magnitude; the stored
    /// matrix is the exact symmetrization `(Σ + Σᵀ)/2`.
    ///
    /// Positive definiteness is not checked here; each estimator finds out
    /// through its own factorizations.
    pub fn new(layout: BlockLayout, sigma: DMatrix<f64>) -> Result<Self> {
        let d = layout.total_dim();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::input(format!(
                "covariance is {}x{} but the layout has total dimension {d}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if sigma.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("covariance has non-finite entries"));
        }
        let scale = sigma.amax().max(f64::MIN_POSITIVE);
        let asym = (&sigma - sigma.transpose()).amax();
        if asym > SYMMETRY_TOLERANCE * scale {
            return Err(Error::input(format!(
                "covariance is not symmetric (max |Σ - Σᵀ| = {asym:e})"
            )));
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        Ok(Self { layout, sigma })
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn n_sources(&self) -> usize {
        self.layout.n_sources()
    }

    /// Sub-matrix at the concatenated coordinate ranges of `rows` × `cols`.
    pub fn extract_block(&self, rows: &Selector, cols: &Selector) -> Result<DMatrix<f64>> {
        let r = self.layout.indices(rows)?;
        let c = self.layout.indices(cols)?;
        Ok(DMatrix::from_fn(r.len(), c.len(), |i, j| self.sigma[(r[i], c[j])]))
    }

    /// `Σ_T`.
    pub fn target_block(&self) -> DMatrix<f64> {
        let t = self.layout.target_dim();
        self.sigma.view((0, 0), (t, t)).into_owned()
    }

    /// `Cov(T | S_𝒜) = Σ_T − Σ_{T𝒜} Σ_{𝒜𝒜}⁻¹ Σ_{𝒜T}` for a nonempty source
    /// selection `𝒜`.
    pub fn schur_conditional(&self, conditioning: &Selector) -> Result<DMatrix<f64>> {
        if conditioning.includes_target() || conditioning.source_indices().is_empty() {
            return Err(Error::input(
                "conditioning set must be a nonempty selection of sources",
            ));
        }
        let yy = self.extract_block(conditioning, conditioning)?;
        let yt = self.extract_block(conditioning, &Selector::target())?;
        let chol = Cholesky::from_lower(yy)
            .map_err(|PivotFailure(p)| Error::not_pd("conditioning covariance Σ_YY", p))?;
        Ok(self.target_block() - chol.quadratic_form(&yt))
    }

    /// `Σ + λI` with the same layout.
    pub fn ridge(&self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::input(format!("ridge λ must be finite and >= 0, got {lambda}")));
        }
        if lambda == 0.0 {
            return Ok(self.clone());
        }
        let mut sigma = self.sigma.clone();
        for i in 0..sigma.nrows() {
            sigma[(i, i)] += lambda;
        }
        Ok(Self {
            layout: self.layout.clone(),
            sigma,
        })
    }

    /// The system `(T, S_𝒜)` with all other sources dropped. Sources keep
    /// ascending order and are renumbered `0..|𝒜|`.
    pub fn restrict(&self, sources: &[usize]) -> Result<Self> {
        let sel = Selector::target_and(sources);
        if sel.source_indices().is_empty() {
            return Err(Error::input("restriction needs at least one source"));
        }
        let idx = self.layout.indices(&sel)?;
        let dims = sel
            .source_indices()
            .iter()
            .map(|&i| self.layout.source_dims()[i])
            .collect();
        let layout = BlockLayout::new(self.layout.target_dim(), dims)?;
        let sigma = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.sigma[(idx[i], idx[j])]);
        Ok(Self { layout, sigma })
    }

    /// Relabel sources so that new source `i` is old source `perm[i]`.
    pub fn permute_sources(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_sources();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::input(format!("{perm:?} is not a permutation of 0..{n}")));
        }
        let mut idx: Vec<usize> = self.layout.target_range().collect();
        for &p in perm {
            idx.extend(self.layout.source_range(p));
        }
        let dims = perm.iter().map(|&p| self.layout.source_dims()[p]).collect();
        let layout = BlockLayout::new(self.layout.target_dim(), dims)?;
        let sigma = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.sigma[(idx[i], idx[j])]);
        Ok(Self { layout, sigma })
    }

    /// Covariance of `(A_T T, A_1 S_1, …, A_N S_N)`. `transforms[0]` acts on
    /// the target, `transforms[i + 1]` on source `i`.
    pub fn transform_blocks(&self, transforms: &[DMatrix<f64>]) -> Result<Self> {
        let n = self.n_sources();
        if transforms.len() != n + 1 {
            return Err(Error::input(format!(
                "expected {} block transforms, got {}",
                n + 1,
                transforms.len()
            )));
        }
        let d = self.layout.total_dim();
        let mut a = DMatrix::<f64>::zeros(d, d);
        let ranges =
            std::iter::once(self.layout.target_range()).chain((0..n).map(|i| self.layout.source_range(i)));
        for (k, (range, t)) in ranges.zip(transforms).enumerate() {
            let w = range.len();
            if t.nrows() != w || t.ncols() != w {
                return Err(Error::input(format!("transform {k} must be {w}x{w}")));
            }
            a.view_mut((range.start, range.start), (w, w)).copy_from(t);
        }
        Self::new(self.layout.clone(), &a * &self.sigma * a.transpose())
    }

    /// Joint covariance of two independent systems with the same number of
    /// sources, stacked blockwise: `T = (T⁽ᵃ⁾, T⁽ᵇ⁾)`, `S_i = (S_i⁽ᵃ⁾, S_i⁽ᵇ⁾)`.
    pub fn stack_independent(a: &Self, b: &Self) -> Result<Self> {
        let n = a.n_sources();
        if b.n_sources() != n {
            return Err(Error::input(format!(
                "cannot stack systems with {n} and {} sources",
                b.n_sources()
            )));
        }
        let (la, lb) = (&a.layout, &b.layout);
        let dims = (0..n)
            .map(|i| la.source_dims()[i] + lb.source_dims()[i])
            .collect();
        let layout = BlockLayout::new(la.target_dim() + lb.target_dim(), dims)?;
        // (system, coordinate in that system) for each stacked coordinate
        let mut origin: Vec<(bool, usize)> = Vec::with_capacity(layout.total_dim());
        origin.extend(la.target_range().map(|c| (false, c)));
        origin.extend(lb.target_range().map(|c| (true, c)));
        for i in 0..n {
            origin.extend(la.source_range(i).map(|c| (false, c)));
            origin.extend(lb.source_range(i).map(|c| (true, c)));
        }
        let d = origin.len();
        let sigma = DMatrix::from_fn(d, d, |i, j| match (origin[i], origin[j]) {
            ((false, x), (false, y)) => a.sigma[(x, y)],
            ((true, x), (true, y)) => b.sigma[(x, y)],
            _ => 0.0,
        });
        Ok(Self { layout, sigma })
    }
}

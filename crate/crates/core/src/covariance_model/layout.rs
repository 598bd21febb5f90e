use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of the target block and of each source block.
///
/// Coordinates are ordered target first, then sources `0..N` in order. Source
/// indices in this library are zero-based; the command-line tool and the
/// report labels use one-based numbering (`S1..SN`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayoutSpec", into = "LayoutSpec")]
pub struct BlockLayout {
    target_dim: usize,
    source_dims: Vec<usize>,
    offsets: Vec<usize>,
}

/// Wire form of a layout, also used as the CSV sidecar document:
/// `{"target_dim": 1, "source_dims": [1, 1]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    pub target_dim: usize,
    pub source_dims: Vec<usize>,
}

impl TryFrom<LayoutSpec> for BlockLayout {
    type Error = Error;

    fn try_from(spec: LayoutSpec) -> Result<Self> {
        BlockLayout::new(spec.target_dim, spec.source_dims)
    }
}

impl From<BlockLayout> for LayoutSpec {
    fn from(layout: BlockLayout) -> Self {
        LayoutSpec {
            target_dim: layout.target_dim,
            source_dims: layout.source_dims,
        }
    }
}

impl BlockLayout {
    pub fn new(target_dim: usize, source_dims: Vec<usize>) -> Result<Self> {
        if target_dim == 0 {
            return Err(Error::input("target dimension must be at least 1"));
        }
        if source_dims.is_empty() {
            return Err(Error::input("at least one source is required"));
        }
        if let Some(i) = source_dims.iter().position(|&d| d == 0) {
            return Err(Error::input(format!("source S{} has dimension 0", i + 1)));
        }
        let mut offsets = Vec::with_capacity(source_dims.len() + 1);
        let mut acc = target_dim;
        offsets.push(acc);
        for &d in &source_dims {
            acc += d;
            offsets.push(acc);
        }
        Ok(Self {
            target_dim,
            source_dims,
            offsets,
        })
    }

    /// Scalar target and `n` scalar sources.
    pub fn scalar(n: usize) -> Result<Self> {
        Self::new(1, vec![1; n])
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn source_dims(&self) -> &[usize] {
        &self.source_dims
    }

    pub fn n_sources(&self) -> usize {
        self.source_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().expect("layout has at least one source")
    }

    pub fn target_range(&self) -> Range<usize> {
        0..self.target_dim
    }

    /// Coordinate range of source `i`. Panics if `i` is out of range.
    pub fn source_range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// `d_𝒜 = Σ_{i∈𝒜} d_i`.
    pub fn subset_dim(&self, subset: &[usize]) -> usize {
        subset.iter().map(|&i| self.source_dims[i]).sum()
    }

    pub(crate) fn check_source(&self, i: usize) -> Result<()> {
        if i < self.n_sources() {
            Ok(())
        } else {
            Err(Error::input(format!(
                "source index {i} out of range for {} sources",
                self.n_sources()
            )))
        }
    }

    /// Coordinates selected by `sel`: target first, then the chosen sources
    /// in ascending index order.
    pub fn indices(&self, sel: &Selector) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        if sel.target {
            out.extend(self.target_range());
        }
        for &i in &sel.sources {
            self.check_source(i)?;
            out.extend(self.source_range(i));
        }
        Ok(out)
    }

    pub fn spec(&self) -> LayoutSpec {
        self.clone().into()
    }
}

/// A choice of blocks: optionally the target, plus a set of sources.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selector {
    target: bool,
    sources: Vec<usize>,
}

impl Selector {
    pub fn target() -> Self {
        Self {
            target: true,
            sources: Vec::new(),
        }
    }

    /// Sources only; duplicates are dropped and the order normalized.
    pub fn sources(sources: &[usize]) -> Self {
        let mut s = sources.to_vec();
        s.sort_unstable();
        s.dedup();
        Self {
            target: false,
            sources: s,
        }
    }

    pub fn target_and(sources: &[usize]) -> Self {
        Self {
            target: true,
            ..Self::sources(sources)
        }
    }

    pub fn source(i: usize) -> Self {
        Self::sources(&[i])
    }

    pub fn includes_target(&self) -> bool {
        self.target
    }

    pub fn source_indices(&self) -> &[usize] {
        &self.sources
    }

    pub fn is_empty(&self) -> bool {
        !self.target && self.sources.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_partition_coordinates() {
        let l = BlockLayout::new(2, vec![1, 3, 2]).unwrap();
        assert_eq!(l.total_dim(), 8);
        assert_eq!(l.target_range(), 0..2);
        assert_eq!(l.source_range(0), 2..3);
        assert_eq!(l.source_range(1), 3..6);
        assert_eq!(l.source_range(2), 6..8);
        assert_eq!(l.subset_dim(&[0, 2]), 3);
    }

    #[test]
    fn rejects_degenerate_layouts() {
        assert!(BlockLayout::new(0, vec![1]).is_err());
        assert!(BlockLayout::new(1, vec![]).is_err());
        assert!(BlockLayout::new(1, vec![1, 0]).is_err());
    }

    #[test]
    fn selector_orders_sources_ascending() {
        let l = BlockLayout::new(1, vec![2, 1, 1]).unwrap();
        let idx = l.indices(&Selector::target_and(&[2, 0])).unwrap();
        assert_eq!(idx, vec![0, 1, 2, 4]);
        assert!(l.indices(&Selector::source(3)).is_err());
    }

    #[test]
    fn sidecar_json_roundtrip_and_strictness() {
        let l: BlockLayout = serde_json::from_str(r#"{"target_dim":1,"source_dims":[1,2]}"#).unwrap();
        assert_eq!(l.total_dim(), 4);
        assert_eq!(
            serde_json::to_string(&l).unwrap(),
            r#"{"target_dim":1,"source_dims":[1,2]}"#
        );
        assert!(serde_json::from_str::<BlockLayout>(r#"{"target_dim":1,"source_dims":[1],"x":0}"#).is_err());
        assert!(serde_json::from_str::<BlockLayout>(r#"{"target_dim":0,"source_dims":[1]}"#).is_err());
    }
}

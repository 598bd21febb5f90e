use std::fmt;

use crate::error::{Error, Result};

use super::BlockLayout;

/// An ordered collection of nonempty source subsets.
///
/// The order of the subsets fixes the block order of the stacked copy vector.
/// Repeated subsets are allowed and each repetition is treated as an
/// independent conditional copy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetFamily {
    subsets: Vec<Vec<usize>>,
}

impl SubsetFamily {
    /// Build a family from explicit subsets. Each subset is sorted and must
    /// not repeat an index.
    pub fn new(subsets: Vec<Vec<usize>>) -> Result<Self> {
        if subsets.is_empty() {
            return Err(Error::input("subset family must be nonempty"));
        }
        let mut out = Vec::with_capacity(subsets.len());
        for (a, mut s) in subsets.into_iter().enumerate() {
            if s.is_empty() {
                return Err(Error::input(format!("subset {a} of the family is empty")));
            }
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::input(format!("subset {a} repeats a source index")));
            }
            out.push(s);
        }
        Ok(Self { subsets: out })
    }

    /// `C_K`: all `k`-subsets of `0..n` in lexicographic order.
    pub fn order(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::input(format!("subset order {k} outside 1..={n}")));
        }
        let mut subsets = Vec::new();
        let mut cur: Vec<usize> = (0..k).collect();
        loop {
            subsets.push(cur.clone());
            // advance to the next combination
            let mut i = k;
            while i > 0 && cur[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            cur[i - 1] += 1;
            for j in i..k {
                cur[j] = cur[j - 1] + 1;
            }
        }
        Ok(Self { subsets })
    }

    /// `U_i = {{i}, [N] \ {i}}`.
    pub fn unique_pair(n: usize, i: usize) -> Result<Self> {
        if n < 2 || i >= n {
            return Err(Error::input(format!("U_{i} needs n >= 2 and i < n (n = {n})")));
        }
        let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        Ok(Self {
            subsets: vec![vec![i], rest],
        })
    }

    /// `V_i = {[N] \ {i}}`.
    pub fn complement(n: usize, i: usize) -> Result<Self> {
        if n < 2 || i >= n {
            return Err(Error::input(format!("V_{i} needs n >= 2 and i < n (n = {n})")));
        }
        Ok(Self {
            subsets: vec![(0..n).filter(|&j| j != i).collect()],
        })
    }

    /// The single-block family `{𝒜}`.
    pub fn single(subset: Vec<usize>) -> Result<Self> {
        Self::new(vec![subset])
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    /// Number of subsets `m`.
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// `D_𝐀 = Σ_a d_{𝒜_a}`.
    pub fn dim(&self, layout: &BlockLayout) -> usize {
        self.subsets.iter().map(|s| layout.subset_dim(s)).sum()
    }

    pub fn validate(&self, layout: &BlockLayout) -> Result<()> {
        for s in &self.subsets {
            for &i in s {
                layout.check_source(i)?;
            }
        }
        Ok(())
    }

    /// Parse `C<k>`, `U<i>`, `V<i>` (one-based `i`) or an explicit list such
    /// as `{1,2};{3}` (one-based indices).
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let t = text.trim();
        let num = |s: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::input(format!("cannot parse family {text:?}")))
        };
        let one_based = |v: usize| -> Result<usize> {
            v.checked_sub(1)
                .ok_or_else(|| Error::input(format!("source numbers start at 1 in {text:?}")))
        };
        if let Some(rest) = t.strip_prefix(['C', 'c']) {
            return Self::order(n, num(rest)?);
        }
        if let Some(rest) = t.strip_prefix(['U', 'u']) {
            return Self::unique_pair(n, one_based(num(rest)?)?);
        }
        if let Some(rest) = t.strip_prefix(['V', 'v']) {
            return Self::complement(n, one_based(num(rest)?)?);
        }
        let mut subsets = Vec::new();
        for part in t.split(';') {
            let inner = part
                .trim()
                .strip_prefix('{')
                .and_then(|p| p.strip_suffix('}'))
                .ok_or_else(|| Error::input(format!("cannot parse family {text:?}")))?;
            let s = inner
                .split(',')
                .map(|x| num(x).and_then(one_based))
                .collect::<Result<Vec<_>>>()?;
            subsets.push(s);
        }
        let fam = Self::new(subsets)?;
        for s in &fam.subsets {
            if let Some(&i) = s.iter().find(|&&i| i >= n) {
                return Err(Error::input(format!("source {} out of range 1..={n}", i + 1)));
            }
        }
        Ok(fam)
    }
}

impl fmt::Display for SubsetFamily {
    /// One-based notation, e.g. `{1};{2,3}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (a, s) in self.subsets.iter().enumerate() {
            if a > 0 {
                f.write_str(";")?;
            }
            f.write_str("{")?;
            for (j, i) in s.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", i + 1)?;
            }
            f.write_str("}")?;
        }
        Ok(())
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

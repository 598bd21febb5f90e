//! Samples, empirical covariance, seeded Gaussian sampling and file I/O.
//!
//! # Reproducibility
//!
//! All randomness comes from [`ChaCha20Rng`] seeded with
//! [`SeedableRng::seed_from_u64`], and normal variates from
//! [`rand_distr::StandardNormal`] (ziggurat). A sample matrix is drawn row by
//! row, `total_dim` variates per row, and mapped through the lower Cholesky
//! factor of the covariance. Trial `t` of an experiment with base seed `s`
//! uses seed `s + t` (wrapping), see [`trial_seed`].
//!
//! Floating-point values are written with 17 significant digits, which
//! round-trips every `f64` exactly.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::covariance_model::{BlockLayout, Cholesky, JointCovariance, PivotFailure};
use crate::error::{Error, Result};

/// The generator used by every sampling routine.
pub type ExperimentRng = ChaCha20Rng;

pub fn rng(seed: u64) -> ExperimentRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Seed of trial `trial` under base seed `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64)
}

/// `M` observations of `(T, S_1, …, S_N)`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    layout: BlockLayout,
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(layout: BlockLayout, data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() != layout.total_dim() {
            return Err(Error::input(format!(
                "sample matrix has {} columns, layout needs {}",
                data.ncols(),
                layout.total_dim()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::input("sample matrix has no rows"));
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            let (r, c) = (k % data.nrows(), k / data.nrows());
            return Err(Error::input(format!(
                "non-finite entry at row {}, column {}",
                r + 1,
                c + 1
            )));
        }
        Ok(Self { layout, data })
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Sample count `M`.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.layout != other.layout {
            return Err(Error::input("cannot concatenate samples with different layouts"));
        }
        let (m1, m2, d) = (self.len(), other.len(), self.layout.total_dim());
        let data = DMatrix::from_fn(m1 + m2, d, |r, c| {
            if r < m1 {
                self.data[(r, c)]
            } else {
                other.data[(r - m1, c)]
            }
        });
        Self::new(self.layout.clone(), data)
    }
}

/// Divisor of the centered cross-product matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `1/(M−1)`
    #[default]
    Unbiased,
    /// `1/M`
    MaximumLikelihood,
}

/// Column-centered sample covariance with the `1/(M−1)` divisor. Positive
/// semidefinite by construction; positive definite only when the data span
/// all dimensions.
pub fn empirical_covariance(samples: &SampleMatrix) -> Result<JointCovariance> {
    empirical_covariance_with(samples, Normalization::Unbiased)
}

pub fn empirical_covariance_with(samples: &SampleMatrix, norm: Normalization) -> Result<JointCovariance> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::input(format!("empirical covariance needs M >= 2 samples, got {m}")));
    }
    let mut x = samples.data.clone();
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let divisor = match norm {
        Normalization::Unbiased => (m - 1) as f64,
        Normalization::MaximumLikelihood => m as f64,
    };
    let mut sigma = x.tr_mul(&x) / divisor;
    // the product is symmetric up to summation order; make it exact
    sigma = (&sigma + sigma.transpose()) * 0.5;
    JointCovariance::new(samples.layout.clone(), sigma)
}

/// Zero-mean Gaussian sampler holding the Cholesky factor of its covariance.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    layout: BlockLayout,
    factor_t: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(cov: &JointCovariance) -> Result<Self> {
        let chol = Cholesky::new(cov.matrix())
            .map_err(|PivotFailure(p)| Error::not_pd("sampling covariance", p))?;
        Ok(Self {
            layout: cov.layout().clone(),
            factor_t: chol.factor().transpose(),
        })
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<SampleMatrix> {
        if m == 0 {
            return Err(Error::input("sample count must be at least 1"));
        }
        let d = self.layout.total_dim();
        let mut z = DMatrix::<f64>::zeros(m, d);
        for r in 0..m {
            for c in 0..d {
                z[(r, c)] = rng.sample(StandardNormal);
            }
        }
        SampleMatrix::new(self.layout.clone(), z * &self.factor_t)
    }

    pub fn sample(&self, m: usize, seed: u64) -> Result<SampleMatrix> {
        self.sample_with(m, &mut rng(seed))
    }
}

/// `M` i.i.d. draws from `N(0, Σ)`, deterministic in `seed`.
pub fn sample_gaussian(cov: &JointCovariance, m: usize, seed: u64) -> Result<SampleMatrix> {
    GaussianSampler::new(cov)?.sample(m, seed)
}

/// Parse comma-separated samples, columns ordered target first then sources.
/// Rows are numbered from 1, not counting the header.
pub fn read_csv<R: Read>(reader: R, layout: &BlockLayout, has_header: bool) -> Result<SampleMatrix> {
    let d = layout.total_dim();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::input(format!("row {row}: {e}")))?;
        if record.len() != d {
            return Err(Error::input(format!(
                "row {row}: expected {d} columns for the layout, found {}",
                record.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::input(format!("row {row}, column {}: cannot parse {field:?}", c + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::input(format!("row {row}, column {}: non-finite value", c + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::input("no data rows"));
    }
    SampleMatrix::new(layout.clone(), DMatrix::from_row_slice(rows, d, &values))
}

pub fn load_csv(path: &Path, layout: &BlockLayout, has_header: bool) -> Result<SampleMatrix> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))?;
    read_csv(std::io::BufReader::new(file), layout, has_header)
}

/// Column names `T`, `S1`, … (with `_k` suffixes for multi-dimensional blocks).
pub fn column_names(layout: &BlockLayout) -> Vec<String> {
    let block = |name: String, d: usize| -> Vec<String> {
        if d == 1 {
            vec![name]
        } else {
            (1..=d).map(|k| format!("{name}_{k}")).collect()
        }
    };
    let mut out = block("T".into(), layout.target_dim());
    for (i, &d) in layout.source_dims().iter().enumerate() {
        out.extend(block(format!("S{}", i + 1), d));
    }
    out
}

/// 17 significant digits; `NaN`/`inf` spelled as Rust parses them back.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn csv_bytes(samples: &SampleMatrix, header: bool) -> Vec<u8> {
    let mut out = Vec::new();
    if header {
        out.extend_from_slice(column_names(&samples.layout).join(",").as_bytes());
        out.push(b'\n');
    }
    for r in 0..samples.len() {
        let row: Vec<String> = samples.data.row(r).iter().map(|&x| format_f64(x)).collect();
        out.extend_from_slice(row.join(",").as_bytes());
        out.push(b'\n');
    }
    out
}

pub fn write_csv(samples: &SampleMatrix, path: &Path, header: bool) -> Result<()> {
    write_atomic(path, &csv_bytes(samples, header))
}

/// Write through a temporary file in the destination directory, then rename,
/// so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Pretty JSON with every float printed to 17 significant digits; non-finite
/// floats become `null`.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter::default());
    value
        .serialize(&mut ser)
        .map_err(|e| Error::input(format!("cannot serialize report: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    write_atomic(path, to_json_string(value)?.as_bytes())
}

#[derive(Default)]
struct SigFigFormatter {
    pretty: serde_json::ser::PrettyFormatter<'static>,
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> std::io::Result<()> {
            self.pretty.$name(w $(, $arg)*)
        })*
    };
}

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_give_zero_covariance() {
        let l = BlockLayout::scalar(2).unwrap();
        let s = SampleMatrix::new(l, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0])).unwrap();
        assert_eq!(empirical_covariance(&s).unwrap().matrix(), &DMatrix::zeros(3, 3));
    }

    #[test]
    fn covariance_needs_two_rows() {
        let l = BlockLayout::scalar(1).unwrap();
        let s = SampleMatrix::new(l, DMatrix::from_row_slice(1, 2, &[1.0, 2.0])).unwrap();
        assert!(empirical_covariance(&s).is_err());
    }

    #[test]
    fn sampling_is_deterministic_in_seed() {
        let l = BlockLayout::scalar(2).unwrap();
        let cov = JointCovariance::new(l, DMatrix::identity(3, 3)).unwrap();
        let a = sample_gaussian(&cov, 50, 9).unwrap();
        let b = sample_gaussian(&cov, 50, 9).unwrap();
        let c = sample_gaussian(&cov, 50, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn csv_parses_and_validates() {
        let l = BlockLayout::scalar(2).unwrap();
        let s = read_csv("T,S1,S2\n1,2,3\n4,5,6\n".as_bytes(), &l, true).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.data()[(1, 2)], 6.0);
        let l7 = BlockLayout::new(2, vec![1; 5]).unwrap();
        let err = read_csv("1,2,3,4,5,6\n".as_bytes(), &l7, false).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
        let err = read_csv("1,2,x\n".as_bytes(), &l, false).unwrap_err();
        assert!(err.to_string().contains("row 1, column 3"), "{err}");
        let err = read_csv("1,2,3\n1,2,inf\n".as_bytes(), &l, false).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        assert!(read_csv("".as_bytes(), &l, false).is_err());
    }

    #[test]
    fn json_uses_seventeen_significant_digits() {
        #[derive(Serialize)]
        struct R {
            x: f64,
            y: Vec<f64>,
            z: f64,
        }
        let s = to_json_string(&R { x: 0.1, y: vec![-2.5e-7], z: f64::NAN }).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("-2.5000000000000001e-7") || s.contains("-2.4999999999999999e-7"), "{s}");
        assert!(s.contains("\"z\": null"), "{s}");
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
    }

    #[test]
    fn column_names_follow_layout() {
        let l = BlockLayout::new(2, vec![1, 2]).unwrap();
        assert_eq!(column_names(&l), vec!["T_1", "T_2", "S1", "S2_1", "S2_2"]);
    }
}

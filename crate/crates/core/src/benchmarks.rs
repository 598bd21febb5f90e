//! Experimental systems and the harnesses that rerun the published
//! experiments: plug-in recovery on the five-source benchmark, wall-clock
//! scaling, the ridge sweep, plug-in convergence and the two-source grid.
//!
//! Every harness is deterministic in its seed. Trial `t` draws its samples
//! with seed `seed + t`, so all sample sizes of one trial share a random
//! stream. Trials run on the rayon pool and are collected in trial order;
//! apart from the scaling harness no output carries a wall-clock reading.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance_model::{binomial, BlockLayout, JointCovariance};
use crate::empirical_data::{
    empirical_covariance, format_f64, rng, sample_gaussian, to_json_string, trial_seed, SampleMatrix,
};
use crate::error::{Error, Result};
use crate::estimators::{
    narrow_synergy, redundancy_two_source, synergy_spectrum, total_synergistic_effect, unique_information,
    unique_information_all, NamedValue, SpectrumOptions,
};

/// Standard deviation of the latent variables `U, V₁, V₂`.
pub const LATENT_STD: f64 = 2.0;
/// Standard deviation of the observation noises `ε₁, …, ε₅`.
pub const NOISE_STD: f64 = 0.05;

const FIVE_SOURCE_INNOVATIONS: usize = 10;

/// Loadings of `(T₂, T₃, S₁, …, S₅)` on the unit-variance innovations
/// `(T₂, T₃, U, V₁, V₂, ε₁, …, ε₅)`.
fn five_source_loadings() -> DMatrix<f64> {
    let (l, e) = (LATENT_STD, NOISE_STD);
    #[rustfmt::skip]
    let w = DMatrix::from_row_slice(7, FIVE_SOURCE_INNOVATIONS, &[
        // T2   T3   U    V1   V2   ε1   ε2   ε3   ε4   ε5
        1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, // T2
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, // T3
        1.0, 0.0,   l, 0.0, 0.0,   e, 0.0, 0.0, 0.0, 0.0, // S1 = T2 + U + ε1
        1.0, 0.0,  -l, 0.0, 0.0, 0.0,   e, 0.0, 0.0, 0.0, // S2 = T2 − U + ε2
        0.0, 1.0, 0.0,   l, 0.0, 0.0, 0.0,   e, 0.0, 0.0, // S3 = T3 + V1 + ε3
        0.0, 1.0, 0.0, 0.0,   l, 0.0, 0.0, 0.0,   e, 0.0, // S4 = T3 + V2 + ε4
        0.0, 1.0, 0.0,  -l,  -l, 0.0, 0.0, 0.0, 0.0,   e, // S5 = T3 − V1 − V2 + ε5
    ]);
    w
}

/// Two-dimensional target `(T₂, T₃)` and five scalar sources in two
/// independent subsystems whose synergy arises from noise cancellation:
/// `S₁ + S₂` cancels `U`, `S₃ + S₄ + S₅` cancels `V₁` and `V₂`.
pub fn five_source_benchmark() -> JointCovariance {
    let w = five_source_loadings();
    let layout = BlockLayout::new(2, vec![1; 5]).expect("static layout");
    JointCovariance::new(layout, &w * w.transpose()).expect("static covariance")
}

/// Samples of the five-source benchmark drawn from its generative equations
/// rather than from the covariance. Each row consumes ten standard normals in
/// the order `T₂, T₃, U, V₁, V₂, ε₁, …, ε₅`.
pub fn sample_five_source_generative<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<SampleMatrix> {
    let w = five_source_loadings();
    let mut z = DMatrix::<f64>::zeros(m, FIVE_SOURCE_INNOVATIONS);
    for r in 0..m {
        for c in 0..FIVE_SOURCE_INNOVATIONS {
            z[(r, c)] = rng.sample(StandardNormal);
        }
    }
    let layout = BlockLayout::new(2, vec![1; 5]).expect("static layout");
    SampleMatrix::new(layout, z * w.transpose())
}

/// `(1/N)·A·Aᵀ + ½I` with `A` an `(N+1) × (N+1)` standard normal matrix
/// drawn row by row. The first coordinate is the scalar target, the rest are
/// `N` scalar sources. The smallest eigenvalue is at least `½`.
pub fn scaling_system(n: usize, seed: u64) -> Result<JointCovariance> {
    if n < 2 {
        return Err(Error::input(format!("scaling system needs N >= 2, got {n}")));
    }
    let sigma = offset_gram(n + 1, 1.0 / n as f64, seed);
    JointCovariance::new(BlockLayout::scalar(n)?, sigma)
}

/// A random positive definite covariance for `layout`:
/// `(1/d)·A·Aᵀ + ½I` with `d = layout.total_dim()`.
pub fn random_system(layout: &BlockLayout, seed: u64) -> Result<JointCovariance> {
    let d = layout.total_dim();
    JointCovariance::new(layout.clone(), offset_gram(d, 1.0 / d as f64, seed))
}

fn offset_gram(d: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            a[(i, j)] = r.sample(StandardNormal);
        }
    }
    let mut sigma = (&a * a.transpose()) * scale;
    sigma = (&sigma + sigma.transpose()) * 0.5;
    for i in 0..d {
        sigma[(i, i)] += 0.5;
    }
    sigma
}

/// The five controlled two-source systems. All noises are unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoSourceConfig {
    /// `S_i = T + ε_i`.
    PureRedundancy,
    /// `T = S₁ + ε`, `S₂ ⟂ T`.
    PureUnique,
    /// `T = S₁ + S₂ + ε`, `S₁ ⟂ S₂`.
    PureSynergy,
    /// Pure synergy with `Corr(S₁, S₂) = 0.3`.
    MixedCorrelated,
    /// `T = 2S₁ + S₂ + ε`, `S₁ ⟂ S₂`.
    MixedAsymmetric,
}

impl TwoSourceConfig {
    pub const ALL: [TwoSourceConfig; 5] = [
        TwoSourceConfig::PureRedundancy,
        TwoSourceConfig::PureUnique,
        TwoSourceConfig::PureSynergy,
        TwoSourceConfig::MixedCorrelated,
        TwoSourceConfig::MixedAsymmetric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TwoSourceConfig::PureRedundancy => "pure-redundancy",
            TwoSourceConfig::PureUnique => "pure-unique",
            TwoSourceConfig::PureSynergy => "pure-synergy",
            TwoSourceConfig::MixedCorrelated => "mixed-correlated",
            TwoSourceConfig::MixedAsymmetric => "mixed-asymmetric",
        }
    }

    /// Covariance of `(T, S₁, S₂)`.
    pub fn covariance(self) -> JointCovariance {
        #[rustfmt::skip]
        let rows: [f64; 9] = match self {
            TwoSourceConfig::PureRedundancy => [1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0],
            TwoSourceConfig::PureUnique => [2.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            TwoSourceConfig::PureSynergy => [3.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            TwoSourceConfig::MixedCorrelated => [3.6, 1.3, 1.3, 1.3, 1.0, 0.3, 1.3, 0.3, 1.0],
            TwoSourceConfig::MixedAsymmetric => [6.0, 2.0, 1.0, 2.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        };
        let layout = BlockLayout::scalar(2).expect("static layout");
        JointCovariance::new(layout, DMatrix::from_row_slice(3, 3, &rows)).expect("static covariance")
    }
}

impl fmt::Display for TwoSourceConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TwoSourceConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|c| c.name()).collect();
                Error::input(format!("unknown configuration {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

pub fn two_source_configuration(name: &str) -> Result<JointCovariance> {
    Ok(name.parse::<TwoSourceConfig>()?.covariance())
}

/// `(Red, Un₁, Un₂, Syn)` of a two-source system.
pub fn two_source_decomposition(cov: &JointCovariance) -> Result<Vec<NamedValue>> {
    let nv = |name: &str, value: f64| NamedValue { name: name.into(), value };
    Ok(vec![
        nv("Red", redundancy_two_source(cov)?),
        nv("Un_1", unique_information(cov, 0)?),
        nv("Un_2", unique_information(cov, 1)?),
        nv("Syn", narrow_synergy(cov, None)?),
    ])
}

/// The quantities of the five-source recovery experiment: the spectrum
/// `SE₂…SE₅`, `TSE`, and the narrow synergy of every pair and every triple.
pub fn recovery_quantities(cov: &JointCovariance) -> Result<Vec<NamedValue>> {
    let n = cov.n_sources();
    let mut out: Vec<NamedValue> = synergy_spectrum(cov, SpectrumOptions::default())?
        .into_iter()
        .enumerate()
        .map(|(j, value)| NamedValue { name: format!("SE_{}", j + 2), value })
        .collect();
    out.push(NamedValue { name: "TSE".into(), value: total_synergistic_effect(cov)? });
    for k in [2, 3] {
        for s in crate::covariance_model::SubsetFamily::order(n, k)?.subsets() {
            out.push(NamedValue {
                name: subset_synergy_name(s),
                value: narrow_synergy(cov, Some(s))?,
            });
        }
    }
    Ok(out)
}

/// The quantities tracked by the convergence experiment.
pub fn convergence_quantities(cov: &JointCovariance) -> Result<Vec<NamedValue>> {
    let spectrum = synergy_spectrum(cov, SpectrumOptions::default())?;
    let nv = |name: String, value: f64| NamedValue { name, value };
    Ok(vec![
        nv("SE_2".into(), spectrum[0]),
        nv("SE_3".into(), spectrum[1]),
        nv("TSE".into(), total_synergistic_effect(cov)?),
        nv(subset_synergy_name(&[0, 1]), narrow_synergy(cov, Some(&[0, 1]))?),
        nv(subset_synergy_name(&[2, 3, 4]), narrow_synergy(cov, Some(&[2, 3, 4]))?),
    ])
}

fn subset_synergy_name(s: &[usize]) -> String {
    let inner: Vec<String> = s.iter().map(|i| (i + 1).to_string()).collect();
    format!("Syn{{{}}}", inner.join(","))
}

/// One measured value of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    /// Configuration label, e.g. a system name or a timing method.
    pub group: String,
    pub trial: usize,
    pub seed: u64,
    pub samples: usize,
    pub lambda: f64,
    pub n_sources: usize,
    pub quantity: String,
    /// `NaN` when the estimate failed.
    pub value: f64,
    pub success: bool,
}

/// Statistics over the successful records sharing
/// `(group, n_sources, samples, lambda, quantity)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub group: String,
    pub n_sources: usize,
    pub samples: usize,
    pub lambda: f64,
    pub quantity: String,
    pub count: usize,
    pub successes: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `n − 1`).
    pub sd: f64,
    pub median: f64,
    pub population: Option<f64>,
}

impl Aggregate {
    /// `mean − population`.
    pub fn bias(&self) -> Option<f64> {
        self.population.map(|p| self.mean - p)
    }
}

/// How a timing method ran out of budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExceedKind {
    /// The measured median exceeded the budget.
    Measured,
    /// The cost model projected the next size past the budget; not run.
    Projected,
    /// The largest Γ would not fit in the memory limit; not run.
    Memory,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetExceedance {
    pub method: ScalingMethod,
    pub n_sources: usize,
    pub seconds: f64,
    pub kind: ExceedKind,
}

/// Per-trial records, their aggregates and the configuration that produced
/// them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub budget_exceeded: Vec<BudgetExceedance>,
}

impl ExperimentResult {
    fn new(experiment: &str, config: &impl Serialize, records: Vec<TrialRecord>, population: impl Fn(&TrialRecord) -> Option<f64>) -> Self {
        let aggregates = aggregate_records(&records, population);
        let mut metadata = BTreeMap::new();
        metadata.insert(
            "config".to_string(),
            serde_json::to_value(config).expect("configs serialize"),
        );
        metadata.insert("unit".to_string(), "nats".into());
        Self {
            experiment: experiment.into(),
            metadata,
            records,
            aggregates,
            budget_exceeded: Vec::new(),
        }
    }

    /// First aggregate for `(group, quantity)`.
    pub fn aggregate(&self, group: &str, quantity: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.group == group && a.quantity == quantity)
    }

    pub fn records_csv(&self) -> Vec<u8> {
        let mut out = String::from("group,trial,seed,samples,lambda,n_sources,quantity,value,success\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.group,
                r.trial,
                r.seed,
                r.samples,
                format_f64(r.lambda),
                r.n_sources,
                csv_field(&r.quantity),
                format_f64(r.value),
                r.success
            ));
        }
        out.into_bytes()
    }

    pub fn aggregates_csv(&self) -> Vec<u8> {
        let mut out = String::from(
            "group,n_sources,samples,lambda,quantity,count,successes,mean,sd,median,population,bias\n",
        );
        let opt = |x: Option<f64>| x.map(format_f64).unwrap_or_default();
        for a in &self.aggregates {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                a.group,
                a.n_sources,
                a.samples,
                format_f64(a.lambda),
                csv_field(&a.quantity),
                a.count,
                a.successes,
                format_f64(a.mean),
                format_f64(a.sd),
                format_f64(a.median),
                opt(a.population),
                opt(a.bias())
            ));
        }
        out.into_bytes()
    }

    /// `(method, N, median seconds, status)`: one row per measured size, then
    /// one row per budget exceedance.
    pub fn scaling_csv(&self) -> Vec<u8> {
        let mut out = String::from("method,n_sources,median_seconds,status\n");
        for a in &self.aggregates {
            out.push_str(&format!("{},{},{},measured\n", a.group, a.n_sources, format_f64(a.median)));
        }
        for e in &self.budget_exceeded {
            let status = serde_json::to_value(e.kind).expect("serializes");
            out.push_str(&format!(
                "{},{},{},exceeded-{}\n",
                e.method,
                e.n_sources,
                format_f64(e.seconds),
                status.as_str().unwrap_or_default()
            ));
        }
        out.into_bytes()
    }

    /// Everything but the per-trial records.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            experiment: &'a str,
            metadata: &'a BTreeMap<String, serde_json::Value>,
            aggregates: &'a [Aggregate],
            #[serde(skip_serializing_if = "<[_]>::is_empty")]
            budget_exceeded: &'a [BudgetExceedance],
        }
        to_json_string(&Summary {
            experiment: &self.experiment,
            metadata: &self.metadata,
            aggregates: &self.aggregates,
            budget_exceeded: &self.budget_exceeded,
        })
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') {
        format!("\"{s}\"")
    } else {
        s.to_string()
    }
}

/// Group records by `(group, n_sources, samples, lambda, quantity)` in order of
/// first appearance and summarize the successful values of each group.
pub fn aggregate_records(records: &[TrialRecord], population: impl Fn(&TrialRecord) -> Option<f64>) -> Vec<Aggregate> {
    type Key<'a> = (&'a str, usize, usize, u64, &'a str);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: BTreeMap<Key, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.group.as_str(), r.n_sources, r.samples, r.lambda.to_bits(), r.quantity.as_str());
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let values: Vec<f64> = rs.iter().filter(|r| r.success).map(|r| r.value).collect();
            let (mean, sd, median) = summarize(&values);
            Aggregate {
                group: key.0.to_string(),
                n_sources: key.1,
                samples: key.2,
                lambda: f64::from_bits(key.3),
                quantity: key.4.to_string(),
                count: rs.len(),
                successes: values.len(),
                mean,
                sd,
                median,
                population: population(rs[0]),
            }
        })
        .collect()
}

/// `(mean, sample SD, median)`; `NaN` where undefined.
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    (mean, sd, median(values))
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Run `trials` independent trials in parallel, keeping trial order.
fn run_trials<F>(trials: usize, seed: u64, f: F) -> Vec<TrialRecord>
where
    F: Fn(usize, u64) -> Vec<TrialRecord> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| f(t, trial_seed(seed, t)))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Records for one trial's quantities; a failed estimate marks every
/// expected quantity as unsuccessful.
#[allow(clippy::too_many_arguments)]
fn trial_records(
    group: &str,
    trial: usize,
    seed: u64,
    samples: usize,
    lambda: f64,
    n_sources: usize,
    expected: &[String],
    values: Result<Vec<NamedValue>>,
) -> Vec<TrialRecord> {
    let rec = |quantity: &str, value: f64, success: bool| TrialRecord {
        group: group.to_string(),
        trial,
        seed,
        samples,
        lambda,
        n_sources,
        quantity: quantity.to_string(),
        value,
        success,
    };
    match values {
        Ok(vs) => vs.iter().map(|v| rec(&v.name, v.value, true)).collect(),
        Err(_) => expected.iter().map(|q| rec(q, f64::NAN, false)).collect(),
    }
}

fn plug_in<F>(population: &JointCovariance, samples: usize, seed: u64, f: F) -> Result<Vec<NamedValue>>
where
    F: Fn(&JointCovariance) -> Result<Vec<NamedValue>>,
{
    let data = sample_gaussian(population, samples, seed)?;
    f(&empirical_covariance(&data)?)
}

fn population_lookup(values: Vec<NamedValue>) -> BTreeMap<String, f64> {
    values.into_iter().map(|v| (v.name, v.value)).collect()
}

/// Trials, sample count and base seed of a plug-in experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialConfig {
    pub trials: usize,
    pub samples: usize,
    pub seed: u64,
}

impl TrialConfig {
    pub const fn new(trials: usize, samples: usize, seed: u64) -> Self {
        Self { trials, samples, seed }
    }
}

/// Plug-in recovery of the five-source spectrum, `TSE`, and all pair and
/// triple synergies (defaults: 50 trials of `M = 1000`).
pub fn run_recovery(cfg: &TrialConfig) -> Result<ExperimentResult> {
    let cov = five_source_benchmark();
    let truth = recovery_quantities(&cov)?;
    let names: Vec<String> = truth.iter().map(|v| v.name.clone()).collect();
    let pop = population_lookup(truth);
    let group = "five-source";
    let records = run_trials(cfg.trials, cfg.seed, |t, s| {
        let values = plug_in(&cov, cfg.samples, s, recovery_quantities);
        trial_records(group, t, s, cfg.samples, 0.0, 5, &names, values)
    });
    Ok(ExperimentResult::new("recovery", cfg, records, |r| pop.get(&r.quantity).copied()))
}

/// Plug-in `(Red, Un₁, Un₂, Syn)` on every two-source configuration.
pub fn run_two_source(cfg: &TrialConfig) -> Result<ExperimentResult> {
    let names: Vec<String> = ["Red", "Un_1", "Un_2", "Syn"].map(String::from).to_vec();
    let mut records = Vec::new();
    let mut pop = BTreeMap::new();
    for config in TwoSourceConfig::ALL {
        let cov = config.covariance();
        for v in two_source_decomposition(&cov)? {
            pop.insert((config.name().to_string(), v.name), v.value);
        }
        records.extend(run_trials(cfg.trials, cfg.seed, |t, s| {
            let values = plug_in(&cov, cfg.samples, s, two_source_decomposition);
            trial_records(config.name(), t, s, cfg.samples, 0.0, 2, &names, values)
        }));
    }
    Ok(ExperimentResult::new("two-source", cfg, records, |r| {
        pop.get(&(r.group.clone(), r.quantity.clone())).copied()
    }))
}

/// Grid of sample sizes and ridge strengths for the near-singular regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RidgeSweepConfig {
    pub sample_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for RidgeSweepConfig {
    fn default() -> Self {
        Self {
            sample_grid: vec![10, 12, 15, 25, 50, 100, 500],
            lambda_grid: vec![0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1e-1, 1.0],
            trials: 50,
            seed: 0,
        }
    }
}

/// Relative `TSE` error `|TSE(Σ̂ + λI) − TSE(Σ)| / TSE(Σ)` on the five-source
/// benchmark per `(M, λ, trial)`. A failed Cholesky factorization is an
/// unsuccessful record. The λ with the smallest mean error among fully
/// successful cells is reported per `M` under `lambda_star`.
pub fn run_ridge_sweep(cfg: &RidgeSweepConfig) -> Result<ExperimentResult> {
    if cfg.lambda_grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::input("ridge λ grid must be nonnegative"));
    }
    let cov = five_source_benchmark();
    let tse = total_synergistic_effect(&cov)?;
    let mut records = Vec::new();
    for &m in &cfg.sample_grid {
        records.extend(run_trials(cfg.trials, cfg.seed, |t, s| {
            let sigma_hat = sample_gaussian(&cov, m, s).and_then(|d| empirical_covariance(&d));
            cfg.lambda_grid
                .iter()
                .map(|&lambda| {
                    let err = sigma_hat
                        .as_ref()
                        .map_err(|e| Error::input(e.to_string()))
                        .and_then(|c| c.ridge(lambda))
                        .and_then(|c| total_synergistic_effect(&c))
                        .map(|v| (v - tse).abs() / tse.abs());
                    TrialRecord {
                        group: format!("M={m}"),
                        trial: t,
                        seed: s,
                        samples: m,
                        lambda,
                        n_sources: 5,
                        quantity: "TSE_relative_error".into(),
                        value: *err.as_ref().unwrap_or(&f64::NAN),
                        success: err.is_ok(),
                    }
                })
                .collect()
        }));
    }
    let mut result = ExperimentResult::new("ridge", cfg, records, |_| None);
    let mut lambda_star = serde_json::Map::new();
    for &m in &cfg.sample_grid {
        let best = result
            .aggregates
            .iter()
            .filter(|a| a.samples == m && a.successes == a.count && a.count > 0)
            .min_by(|a, b| a.mean.total_cmp(&b.mean));
        lambda_star.insert(m.to_string(), best.map(|a| a.lambda.into()).unwrap_or(serde_json::Value::Null));
    }
    result.metadata.insert("lambda_star".into(), lambda_star.into());
    result.metadata.insert("population_tse".into(), tse.into());
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceConfig {
    pub sample_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            sample_grid: vec![50, 100, 200, 500, 1000, 2000, 5000, 10000],
            trials: 100,
            seed: 0,
        }
    }
}

/// Bias and spread of `SE₂`, `SE₃`, `TSE`, `Syn{1,2}` and `Syn{3,4,5}` across
/// sample sizes. Metadata holds, per quantity, the log-log slope of the SD
/// against `M` and the relative SD at the largest `M`.
pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ExperimentResult> {
    let cov = five_source_benchmark();
    let truth = convergence_quantities(&cov)?;
    let names: Vec<String> = truth.iter().map(|v| v.name.clone()).collect();
    let pop = population_lookup(truth);
    let mut records = Vec::new();
    for &m in &cfg.sample_grid {
        records.extend(run_trials(cfg.trials, cfg.seed, |t, s| {
            let values = plug_in(&cov, m, s, convergence_quantities);
            trial_records(&format!("M={m}"), t, s, m, 0.0, 5, &names, values)
        }));
    }
    let mut result = ExperimentResult::new("convergence", cfg, records, |r| pop.get(&r.quantity).copied());
    let mut slopes = serde_json::Map::new();
    let mut rel_sd = serde_json::Map::new();
    for q in &names {
        let rows: Vec<&Aggregate> = result.aggregates.iter().filter(|a| &a.quantity == q).collect();
        if rows.len() >= 2 {
            let xs: Vec<f64> = rows.iter().map(|a| a.samples as f64).collect();
            let ys: Vec<f64> = rows.iter().map(|a| a.sd).collect();
            slopes.insert(q.clone(), loglog_slope(&xs, &ys).into());
        }
        if let Some(last) = rows.iter().max_by_key(|a| a.samples) {
            rel_sd.insert(q.clone(), (last.sd / pop[q].abs()).into());
        }
    }
    result.metadata.insert("sd_slope".into(), slopes.into());
    result.metadata.insert("relative_sd_at_largest_m".into(), rel_sd.into());
    Ok(result)
}

/// Estimators timed by [`run_scaling`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingMethod {
    Spectrum,
    Tse,
    Un,
    Syn,
}

impl ScalingMethod {
    pub const ALL: [ScalingMethod; 4] = [
        ScalingMethod::Spectrum,
        ScalingMethod::Tse,
        ScalingMethod::Un,
        ScalingMethod::Syn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScalingMethod::Spectrum => "spectrum",
            ScalingMethod::Tse => "tse",
            ScalingMethod::Un => "un",
            ScalingMethod::Syn => "syn",
        }
    }

    /// Dimensions `D` of the families whose Γ is factored, scalar sources.
    fn family_dims(self, n: usize) -> Vec<f64> {
        let c = |k: usize| (k * binomial(n, k)) as f64;
        match self {
            ScalingMethod::Spectrum => (1..=n).map(c).collect(),
            ScalingMethod::Tse => vec![c(1), c(n)],
            ScalingMethod::Un => (0..n).flat_map(|_| [n as f64, (n - 1) as f64]).collect(),
            ScalingMethod::Syn => vec![c(n - 1), c(n)],
        }
    }

    /// Floating-point operations of the Γ assemblies and factorizations.
    pub fn cost_model(self, n: usize) -> f64 {
        self.family_dims(n).iter().map(|d| d * d * d / 3.0 + 2.0 * d * d).sum()
    }

    /// Bytes of the largest Γ.
    pub fn peak_bytes(self, n: usize) -> f64 {
        let d = self.family_dims(n).into_iter().fold(0.0, f64::max);
        8.0 * d * d
    }

    fn evaluate(self, cov: &JointCovariance) -> Result<()> {
        match self {
            ScalingMethod::Spectrum => synergy_spectrum(
                cov,
                SpectrumOptions {
                    allow_large: true,
                    ..SpectrumOptions::default()
                },
            )
            .map(drop),
            ScalingMethod::Tse => total_synergistic_effect(cov).map(drop),
            ScalingMethod::Un => unique_information_all(cov).map(drop),
            ScalingMethod::Syn => narrow_synergy(cov, None).map(drop),
        }
    }
}

impl fmt::Display for ScalingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::input(format!("unknown timing method {s:?}; expected spectrum, tse, un or syn")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingConfig {
    pub methods: Vec<ScalingMethod>,
    /// Source counts, visited in ascending order.
    pub n_grid: Vec<usize>,
    pub budget_seconds: f64,
    pub trials: usize,
    pub samples: usize,
    pub seed: u64,
    /// Sizes whose largest Γ exceeds this are not attempted.
    pub memory_limit_bytes: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            methods: ScalingMethod::ALL.to_vec(),
            n_grid: vec![2, 3, 4, 5, 6, 8, 10, 12, 15, 20, 30, 50, 75, 100, 150, 200, 300, 400, 500],
            budget_seconds: 1000.0,
            trials: 10,
            samples: 1000,
            seed: 0,
            memory_limit_bytes: 4.0 * (1u64 << 30) as f64,
        }
    }
}

/// Wall-clock medians of each estimator over growing `N`.
///
/// Each trial draws a fresh [`scaling_system`] with the trial seed, estimates
/// its covariance from `samples` draws, and times the estimator alone on a
/// single thread. One warm-up evaluation precedes the timed trials of each
/// size and is discarded. A method stops at the first size whose median
/// exceeds the budget, or before a size whose projected time (previous median
/// scaled by [`ScalingMethod::cost_model`]) or Γ footprint would exceed its
/// limit.
pub fn run_scaling(cfg: &ScalingConfig) -> Result<ExperimentResult> {
    if cfg.trials == 0 {
        return Err(Error::input("scaling needs at least one trial"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::input(format!("cannot build timing thread pool: {e}")))?;
    let mut grid = cfg.n_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    let mut records = Vec::new();
    let mut exceeded = Vec::new();
    for &method in &cfg.methods {
        let mut previous: Option<(usize, f64)> = None;
        for &n in &grid {
            if n < 2 {
                return Err(Error::input("scaling sizes must be at least 2"));
            }
            if method.peak_bytes(n) > cfg.memory_limit_bytes {
                exceeded.push(BudgetExceedance { method, n_sources: n, seconds: f64::NAN, kind: ExceedKind::Memory });
                break;
            }
            if let Some((pn, pt)) = previous {
                let projected = pt * method.cost_model(n) / method.cost_model(pn);
                if projected > cfg.budget_seconds {
                    exceeded.push(BudgetExceedance { method, n_sources: n, seconds: projected, kind: ExceedKind::Projected });
                    break;
                }
            }
            let mut times = Vec::with_capacity(cfg.trials);
            for t in 0..cfg.trials {
                let s = trial_seed(cfg.seed, t);
                let system = scaling_system(n, s)?;
                let cov = empirical_covariance(&sample_gaussian(&system, cfg.samples, s)?)?;
                let seconds = pool.install(|| -> Result<f64> {
                    if t == 0 {
                        method.evaluate(&cov)?;
                    }
                    let start = Instant::now();
                    method.evaluate(&cov)?;
                    Ok(start.elapsed().as_secs_f64())
                })?;
                times.push(seconds);
                records.push(TrialRecord {
                    group: method.name().into(),
                    trial: t,
                    seed: s,
                    samples: cfg.samples,
                    lambda: 0.0,
                    n_sources: n,
                    quantity: "seconds".into(),
                    value: seconds,
                    success: true,
                });
            }
            let med = median(&times);
            previous = Some((n, med));
            if med > cfg.budget_seconds {
                exceeded.push(BudgetExceedance { method, n_sources: n, seconds: med, kind: ExceedKind::Measured });
                break;
            }
        }
    }
    let mut result = ExperimentResult::new("scaling", cfg, records, |_| None);
    result.metadata.insert("unit".into(), "seconds".into());
    result.metadata.insert(
        "timing".into(),
        "estimator only; sampling and covariance estimation excluded; single thread; one discarded warm-up per size".into(),
    );
    result.budget_exceeded = exceeded;
    Ok(result)
}

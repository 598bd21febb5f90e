mod args;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use gausspid::benchmarks::{
    five_source_benchmark, run_convergence, run_recovery, run_ridge_sweep, run_scaling, run_two_source,
    sample_five_source_generative, scaling_system, ConvergenceConfig, ExperimentResult, RidgeSweepConfig,
    ScalingConfig, ScalingMethod, TrialConfig, TwoSourceConfig,
};
use gausspid::empirical_data::{csv_bytes, empirical_covariance, load_csv, rng, sample_gaussian, to_json_string, write_atomic};
use gausspid::oracle_validation::{run_validation, ValidationOptions};
use gausspid::{estimate_with_ridge, BlockLayout, LayoutSpec, MeasureReport, MeasureRequest, SpectrumOptions};
use serde::Serialize;

use args::{BenchmarkArgs, Cli, Command, EstimateArgs, Experiment, Format, MeasureArg, SampleArgs, ValidateArgs};

/// Identifies the JSON documents this binary writes; bump on breaking changes.
const ESTIMATE_SCHEMA: &str = "gausspid/estimate-report/v1";
const BENCHMARK_SCHEMA: &str = "gausspid/benchmark-summary/v1";
const VALIDATE_SCHEMA: &str = "gausspid/validation-report/v1";

#[derive(Debug)]
enum Failure {
    Validation(String),
    Input(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<gausspid::Error> for Failure {
    fn from(e: gausspid::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(format!("{e}\nhint: rerun with a positive ridge, e.g. --ridge 1e-6"))
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

/// The parsed invocation, echoed into every JSON output.
#[derive(Serialize)]
struct RunConfig<'a> {
    command: &'a Command,
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: cannot configure {threads} threads: {e}");
        return ExitCode::from(2);
    }
    let config = RunConfig { command: &cli.command, threads };
    let result = match &cli.command {
        Command::Estimate(a) => estimate(a, &config),
        Command::Benchmark(a) => benchmark(a, &config),
        Command::Validate(a) => validate(a, &config),
        Command::Sample(a) => sample(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Validation(m) => eprintln!("validation failed: {m}"),
                Failure::Input(m) | Failure::Numerical(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Outcome {
    match out {
        Some(p) => write_atomic(p, bytes).map_err(Failure::from),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::Input(format!("cannot write to standard output: {e}"))),
    }
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    Ok(to_json_string(value)?.into_bytes())
}

fn parse_layout(text: &str) -> Result<BlockLayout, Failure> {
    let doc = if text.trim_start().starts_with('{') {
        text.to_string()
    } else {
        std::fs::read_to_string(text).map_err(|e| Failure::Input(format!("cannot read layout {text}: {e}")))?
    };
    let spec: LayoutSpec =
        serde_json::from_str(&doc).map_err(|e| Failure::Input(format!("invalid layout sidecar: {e}")))?;
    Ok(BlockLayout::try_from(spec)?)
}

fn one_based(indices: &[usize], what: &str) -> Result<Vec<usize>, Failure> {
    indices
        .iter()
        .map(|&i| i.checked_sub(1).ok_or_else(|| Failure::Input(format!("{what} indices start at 1"))))
        .collect()
}

fn requests(a: &EstimateArgs) -> Result<Vec<MeasureRequest>, Failure> {
    let mut out = Vec::new();
    for m in &a.measures {
        out.push(match m {
            MeasureArg::Red => MeasureRequest::Redundancy,
            MeasureArg::Un => MeasureRequest::Unique(None),
            MeasureArg::Se => MeasureRequest::SynergisticEffect(
                a.order.ok_or_else(|| Failure::Input("measure se needs --order K".into()))?,
            ),
            MeasureArg::Syn => MeasureRequest::NarrowSynergy(a.subset.as_deref().map(|s| one_based(s, "--subset")).transpose()?),
            MeasureArg::Tse => MeasureRequest::TotalSynergisticEffect,
            MeasureArg::Spectrum => MeasureRequest::Spectrum(SpectrumOptions {
                allow_large: a.allow_large_spectrum,
                ..SpectrumOptions::default()
            }),
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    schema: &'static str,
    config: &'a RunConfig<'a>,
    samples: usize,
    normalization: &'static str,
    reports: Vec<MeasureReport>,
}

fn estimate(a: &EstimateArgs, config: &RunConfig) -> Outcome {
    let layout = parse_layout(&a.layout)?;
    let requests = requests(a)?;
    let data = load_csv(&a.input, &layout, a.header)?;
    let cov = empirical_covariance(&data)?;
    let reports = requests
        .iter()
        .map(|r| estimate_with_ridge(&cov, a.ridge, r))
        .collect::<Result<Vec<_>, _>>()?;
    let bytes = match a.format {
        Format::Json => json(&EstimateOutput {
            schema: ESTIMATE_SCHEMA,
            config,
            samples: data.len(),
            normalization: "1/(M-1)",
            reports,
        })?,
        Format::Csv => {
            let mut s = String::from("measure,name,value,unit,lambda,samples\n");
            for r in &reports {
                let measure = serde_json::to_value(r.measure).expect("serializes");
                for v in &r.values {
                    s.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        measure.as_str().unwrap_or_default(),
                        v.name.replace(',', ";"),
                        gausspid::empirical_data::format_f64(v.value),
                        r.unit,
                        gausspid::empirical_data::format_f64(r.lambda),
                        data.len()
                    ));
                }
            }
            s.into_bytes()
        }
    };
    emit(a.out.as_deref(), &bytes)
}

fn benchmark(a: &BenchmarkArgs, config: &RunConfig) -> Outcome {
    let trial_cfg = |trials: usize, samples: usize| TrialConfig::new(a.trials.unwrap_or(trials), a.samples.unwrap_or(samples), a.seed);
    let mut result: ExperimentResult = match a.experiment {
        Experiment::Recovery => run_recovery(&trial_cfg(50, 1000))?,
        Experiment::TwoSource => run_two_source(&trial_cfg(50, 1000))?,
        Experiment::Ridge => {
            let d = RidgeSweepConfig::default();
            run_ridge_sweep(&RidgeSweepConfig {
                sample_grid: a.sample_grid.clone().unwrap_or(d.sample_grid),
                lambda_grid: a.lambda_grid.clone().unwrap_or(d.lambda_grid),
                trials: a.trials.unwrap_or(d.trials),
                seed: a.seed,
            })?
        }
        Experiment::Convergence => {
            let d = ConvergenceConfig::default();
            run_convergence(&ConvergenceConfig {
                sample_grid: a.sample_grid.clone().unwrap_or(d.sample_grid),
                trials: a.trials.unwrap_or(d.trials),
                seed: a.seed,
            })?
        }
        Experiment::Scaling => {
            let d = ScalingConfig::default();
            let methods = match &a.methods {
                Some(ms) => ms.iter().map(|m| m.parse::<ScalingMethod>()).collect::<Result<_, _>>()?,
                None => d.methods,
            };
            run_scaling(&ScalingConfig {
                methods,
                n_grid: a.n_grid.clone().unwrap_or(d.n_grid),
                budget_seconds: a.budget_seconds,
                trials: a.trials.unwrap_or(d.trials),
                samples: a.samples.unwrap_or(d.samples),
                seed: a.seed,
                memory_limit_bytes: d.memory_limit_bytes,
            })?
        }
    };
    result.metadata.insert("schema".into(), BENCHMARK_SCHEMA.into());
    result
        .metadata
        .insert("run".into(), serde_json::to_value(config).expect("config serializes"));
    let summary = result.summary_json()?.into_bytes();
    match &a.out {
        None => match a.format {
            Format::Json => emit(None, &summary),
            Format::Csv => emit(None, &result.aggregates_csv()),
        },
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
            let name = serde_json::to_value(a.experiment).expect("serializes");
            let name = name.as_str().unwrap_or("experiment");
            write_atomic(&dir.join(format!("{name}_trials.csv")), &result.records_csv())?;
            write_atomic(&dir.join(format!("{name}_summary.csv")), &result.aggregates_csv())?;
            if a.experiment == Experiment::Scaling {
                write_atomic(&dir.join("scaling_medians.csv"), &result.scaling_csv())?;
            }
            write_atomic(&dir.join(format!("{name}_summary.json")), &summary)?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ValidateOutput<'a> {
    schema: &'static str,
    config: &'a RunConfig<'a>,
    #[serde(flatten)]
    report: gausspid::oracle_validation::ValidationReport,
}

fn validate(a: &ValidateArgs, config: &RunConfig) -> Outcome {
    let opts = ValidationOptions {
        seed: a.seed,
        system: a.system.parse()?,
        systems: a.systems,
        families: a.families.clone(),
        mc_samples: a.samples,
        inject_fault: a.inject_fault,
    };
    let report = run_validation(&opts)?;
    for c in &report.checks {
        eprintln!(
            "{} {:<20} {:<50} measured {:.3e} tolerance {:.3e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.system,
            c.measured,
            c.tolerance
        );
    }
    let failures = report.checks.iter().filter(|c| !c.passed).count();
    let total = report.checks.len();
    emit(a.out.as_deref(), &json(&ValidateOutput { schema: VALIDATE_SCHEMA, config, report })?)?;
    if failures > 0 {
        return Err(Failure::Validation(format!("{failures} of {total} checks failed")));
    }
    Ok(())
}

fn sample(a: &SampleArgs) -> Outcome {
    let data = match a.system.as_str() {
        "five-source" => sample_gaussian(&five_source_benchmark(), a.samples, a.seed)?,
        "five-source-generative" => {
            if a.samples == 0 {
                return Err(Failure::Input("sample count must be at least 1".into()));
            }
            sample_five_source_generative(a.samples, &mut rng(a.seed))?
        }
        s => {
            let cov = if let Some(n) = s.strip_prefix("scaling:") {
                let n = n.parse().map_err(|_| Failure::Input(format!("cannot parse N in {s:?}")))?;
                scaling_system(n, a.seed)?
            } else {
                s.parse::<TwoSourceConfig>()?.covariance()
            };
            sample_gaussian(&cov, a.samples, a.seed)?
        }
    };
    if let Some(p) = &a.layout {
        write_atomic(p, &json(&data.layout().spec())?)?;
    }
    emit(a.out.as_deref(), &csv_bytes(&data, a.header))
}

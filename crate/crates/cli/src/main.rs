//! `milo` — dataset generation, training, evaluation, and benchmark
//! reports for the learning-to-optimize MINLP toolkit.

use anyhow::{bail, Context, Result};
use milo_cli::{container, manifest, model_io};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use milo_core::baselines::{
    brute_force_oracle, rr_baseline, solve_relaxation, OracleConfig, RelaxationConfig,
};
use milo_core::correction::{lt_correct, rc_correct, rs_round, CorrectionConfig, Method};
use milo_core::net::{hidden_width_for, MlpSpec};
use milo_core::problems::{
    objective, violation, CoefficientSet, Family, MixedIntegerSolution, ParametricInstance,
};
use milo_core::projection::ProjectionConfig;
use milo_core::training::{
    predict_relaxed, train, Dataset, ModelWeights, TrainingConfig, FEASIBILITY_TOLERANCE,
};

use container::Container;
use manifest::{Dims, RunManifest};

#[derive(Parser)]
#[command(name = "milo", version, about = "Learning-to-optimize toolkit for parametric MINLPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate problem coefficients and train/validation/test instance sets.
    Generate(GenerateArgs),
    /// Train a solution mapping (and correction net) on a generated dataset.
    Train(TrainArgs),
    /// Evaluate trained weights on the test split, optionally with projection.
    Eval(EvalArgs),
    /// Run a multi-method benchmark and write a consolidated report.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Problem family: iqp, inp, mirb, or rb2d.
    #[arg(long)]
    problem: String,
    /// Number of decision variables.
    #[arg(long)]
    n: usize,
    /// Number of constraints (ignored by families with a fixed count).
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training split size.
    #[arg(long, default_value_t = 8000)]
    train: usize,
    /// Validation split size.
    #[arg(long, default_value_t = 1000)]
    val: usize,
    /// Test split size.
    #[arg(long, default_value_t = 100)]
    test: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory produced by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Correction method: rc, lt, rs, or rl.
    #[arg(long)]
    method: String,
    /// Penalty weight on constraint violation.
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory produced by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Weights container produced by `train`.
    #[arg(long)]
    weights: PathBuf,
    /// Correction method; must match the weights file.
    #[arg(long)]
    method: String,
    /// Run feasibility projection: on or off.
    #[arg(long, default_value = "on", value_parser = ["on", "off"])]
    project: String,
    /// Projection step size.
    #[arg(long, default_value_t = 0.01)]
    proj_step: f64,
    /// Projection iteration cap.
    #[arg(long, default_value_t = 1000)]
    proj_max_iter: usize,
    /// Feasibility tolerance.
    #[arg(long, default_value_t = FEASIBILITY_TOLERANCE)]
    tol: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory produced by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated methods from: rc, lt, rs, rl, rr, oracle.
    #[arg(long, default_value = "rc,lt,rr,oracle")]
    methods: String,
    /// Epoch budget for the learned methods.
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    /// Penalty weight for the learned methods.
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

// --- shared JSON schemas ---

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct InstanceJson {
    idx: usize,
    obj: f64,
    violation: f64,
    time_s: f64,
    proj_iters: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct MetricsJson {
    method: String,
    obj_mean: f64,
    obj_median: f64,
    feasible_frac: f64,
    mean_time_s: f64,
    /// Feasibility before projection (equals `feasible_frac` when
    /// projection is off).
    pre_feasible_frac: f64,
    instances: Vec<InstanceJson>,
    manifest: RunManifest,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct BenchRow {
    method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    obj_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    obj_median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feasible_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct BenchReport {
    rows: Vec<BenchRow>,
    manifest: RunManifest,
}

/// In reproducible mode (`SOURCE_DATE_EPOCH` set) wall-clock measurements
/// are reported as zero so artifacts are byte-identical across reruns.
fn report_time(elapsed_s: f64) -> f64 {
    if std::env::var_os("SOURCE_DATE_EPOCH").is_some() {
        0.0
    } else {
        elapsed_s
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn load_dataset_dir(dir: &Path) -> Result<(CoefficientSet, usize, usize)> {
    let c = Container::read(&dir.join("coefficients.bin"))?;
    model_io::coefficients_from(&c)
}

fn load_split(dir: &Path, split: &str) -> Result<Vec<ParametricInstance>> {
    let c = Container::read(&dir.join(format!("{split}.bin")))?;
    model_io::instances_from(&c)
}

// --- generate ---

fn run_generate(args: &GenerateArgs) -> Result<()> {
    let family = Family::parse(&args.problem)?;
    let coeffs = milo_core::problems::build_family(family, args.n, args.m, args.seed)?;
    let dataset = Dataset::sample(&coeffs, args.train, args.val, args.test, args.seed);
    let manifest = RunManifest::new(
        "generate",
        family.tag(),
        Dims {
            n: args.n,
            m: args.m,
        },
        BTreeMap::from([("seed".to_string(), args.seed)]),
        serde_json::json!({
            "train": args.train,
            "val": args.val,
            "test": args.test,
        }),
    );
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    model_io::coefficients_container(&coeffs, args.n, args.m, &manifest)?
        .write(&args.out.join("coefficients.bin"))?;
    for (split, instances) in [
        ("train", &dataset.train),
        ("val", &dataset.validation),
        ("test", &dataset.test),
    ] {
        model_io::instances_container(split, instances, coeffs.n_xi, &manifest)?
            .write(&args.out.join(format!("{split}.bin")))?;
    }
    println!(
        "wrote coefficients + {}/{}/{} instances to {}",
        dataset.train.len(),
        dataset.validation.len(),
        dataset.test.len(),
        args.out.display()
    );
    Ok(())
}

// --- train ---

fn model_specs(
    coeffs: &CoefficientSet,
    n: usize,
    m: usize,
    method: Method,
) -> Result<(MlpSpec, Option<MlpSpec>)> {
    let hidden = hidden_width_for(coeffs.family, n, m);
    let pi = MlpSpec::pi(coeffs.n_xi, hidden, coeffs.n_dec())?;
    let delta = if method.uses_delta() {
        Some(MlpSpec::delta(
            coeffs.n_dec() + coeffs.n_xi,
            hidden,
            coeffs.n_dec(),
        )?)
    } else {
        None
    };
    Ok((pi, delta))
}

#[derive(Serialize)]
struct HistoryJson<'a> {
    epochs: &'a [milo_core::training::EpochRecord],
    manifest: &'a RunManifest,
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let (coeffs, n, m) = load_dataset_dir(&args.data)?;
    let method = Method::parse(&args.method)?;
    let dataset = Dataset {
        train: load_split(&args.data, "train")?,
        validation: load_split(&args.data, "val")?,
        test: Vec::new(),
    };
    let (pi_spec, delta_spec) = model_specs(&coeffs, n, m, method)?;
    let ccfg = CorrectionConfig::new(method);
    let tcfg = TrainingConfig {
        lambda: args.lambda,
        learning_rate: args.lr,
        batch_size: args.batch,
        max_epochs: args.epochs,
        patience: args.patience,
        seed: args.seed,
    };
    let manifest = RunManifest::new(
        "train",
        coeffs.family.tag(),
        Dims { n, m },
        BTreeMap::from([
            ("seed".to_string(), args.seed),
            ("data_seed".to_string(), coeffs.seed),
        ]),
        serde_json::to_value(&tcfg)?,
    );
    let (weights, history) = train(
        &coeffs,
        &dataset,
        &pi_spec,
        delta_spec.as_ref(),
        &ccfg,
        &tcfg,
    )?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    model_io::weights_container(&weights, &ccfg, &tcfg, &manifest)?
        .write(&args.out.join("weights.bin"))?;
    write_json(
        &args.out.join("history.json"),
        &HistoryJson {
            epochs: &history,
            manifest: &manifest,
        },
    )?;
    let best = history
        .iter()
        .map(|e| e.validation_loss)
        .fold(f64::INFINITY, f64::min);
    println!(
        "trained {} for {} epochs; best validation loss {best:.6}",
        method.tag(),
        history.len()
    );
    Ok(())
}

// --- eval ---

/// Corrects a relaxed solution in EVAL mode (noise off).
fn correct_eval(
    coeffs: &CoefficientSet,
    weights: &ModelWeights,
    ccfg: &CorrectionConfig,
    xbar: &[f64],
    instance: &ParametricInstance,
) -> Result<MixedIntegerSolution> {
    match ccfg.method {
        Method::Rs | Method::Rl => Ok(rs_round(coeffs, xbar)?),
        Method::Rc | Method::Lt => {
            let delta = weights
                .delta
                .as_ref()
                .context("weights file has no correction net for this method")?;
            let mut cfg = ccfg.clone();
            cfg.noise = false;
            let out = if cfg.method == Method::Rc {
                rc_correct(coeffs, delta, &cfg, xbar, instance, 0)?
            } else {
                lt_correct(coeffs, delta, &cfg, xbar, instance)?
            };
            Ok(out.xhat)
        }
    }
}

struct EvalRecord {
    pre_violation: f64,
    final_obj: f64,
    final_violation: f64,
    per_constraint: Vec<f64>,
    time_s: f64,
    proj_iters: usize,
}

fn eval_instances(
    coeffs: &CoefficientSet,
    weights: &ModelWeights,
    ccfg: &CorrectionConfig,
    testset: &[ParametricInstance],
    project: bool,
    pcfg: &ProjectionConfig,
) -> Result<Vec<EvalRecord>> {
    let mut records = Vec::with_capacity(testset.len());
    for inst in testset {
        let t0 = Instant::now();
        let xbar = predict_relaxed(coeffs, &weights.pi, inst)?;
        let pre = correct_eval(coeffs, weights, ccfg, &xbar, inst)?;
        let (fin, proj_iters) = if project {
            let delta = weights
                .delta
                .as_ref()
                .context("projection requires rc or lt weights with a correction net")?;
            let mut cfg = ccfg.clone();
            cfg.noise = false;
            let (sol, report) =
                milo_core::projection::project(coeffs, delta, &cfg, pcfg, &xbar, inst)?;
            (sol, report.iterations)
        } else {
            (pre.clone(), 0)
        };
        let time_s = report_time(t0.elapsed().as_secs_f64());
        let g = milo_core::problems::constraints(coeffs, inst, &fin)?;
        records.push(EvalRecord {
            pre_violation: violation(coeffs, inst, &pre)?,
            final_obj: objective(coeffs, inst, &fin)?,
            final_violation: violation(coeffs, inst, &fin)?,
            per_constraint: g.iter().map(|v| v.max(0.0)).collect(),
            time_s,
            proj_iters,
        });
    }
    Ok(records)
}

fn metrics_from_records(
    method: &str,
    records: &[EvalRecord],
    tol: f64,
    manifest: RunManifest,
) -> MetricsJson {
    let n = records.len().max(1) as f64;
    let mut objs: Vec<f64> = records.iter().map(|r| r.final_obj).collect();
    objs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if objs.is_empty() {
        0.0
    } else if objs.len() % 2 == 1 {
        objs[objs.len() / 2]
    } else {
        0.5 * (objs[objs.len() / 2 - 1] + objs[objs.len() / 2])
    };
    MetricsJson {
        method: method.to_string(),
        obj_mean: records.iter().map(|r| r.final_obj).sum::<f64>() / n,
        obj_median: median,
        feasible_frac: records
            .iter()
            .filter(|r| r.final_violation <= tol)
            .count() as f64
            / n,
        mean_time_s: records.iter().map(|r| r.time_s).sum::<f64>() / n,
        pre_feasible_frac: records
            .iter()
            .filter(|r| r.pre_violation <= tol)
            .count() as f64
            / n,
        instances: records
            .iter()
            .enumerate()
            .map(|(idx, r)| InstanceJson {
                idx,
                obj: r.final_obj,
                violation: r.final_violation,
                time_s: r.time_s,
                proj_iters: r.proj_iters,
            })
            .collect(),
        manifest,
    }
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let (coeffs, n, m) = load_dataset_dir(&args.data)?;
    let testset = load_split(&args.data, "test")?;
    let weights_container = Container::read(&args.weights)?;
    let (weights, ccfg) = model_io::weights_from(&weights_container)?;
    let method = Method::parse(&args.method)?;
    if method != ccfg.method {
        bail!(
            "--method {} does not match weights trained for {}",
            method.tag(),
            ccfg.method.tag()
        );
    }
    let project = args.project == "on";
    if project && !method.uses_delta() {
        bail!("--project on requires method rc or lt");
    }
    let pcfg = ProjectionConfig {
        eta: args.proj_step,
        max_iterations: args.proj_max_iter,
        epsilon: args.tol,
        lipschitz: None,
    };
    let records = eval_instances(&coeffs, &weights, &ccfg, &testset, project, &pcfg)?;
    let manifest = RunManifest::new(
        "eval",
        coeffs.family.tag(),
        Dims { n, m },
        BTreeMap::from([("data_seed".to_string(), coeffs.seed)]),
        serde_json::json!({
            "method": method.tag(),
            "project": args.project,
            "proj_step": args.proj_step,
            "proj_max_iter": args.proj_max_iter,
            "tol": args.tol,
        }),
    );
    let metrics = metrics_from_records(method.tag(), &records, args.tol, manifest);
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    write_json(&args.out.join("metrics.json"), &metrics)?;

    let mut csv = String::from("idx,obj,violation,time_s,proj_iters\n");
    for r in &metrics.instances {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.idx, r.obj, r.violation, r.time_s, r.proj_iters
        ));
    }
    std::fs::write(args.out.join("instances.csv"), csv)?;

    let mut heat = String::new();
    for r in &records {
        let row: Vec<String> = r.per_constraint.iter().map(|v| v.to_string()).collect();
        heat.push_str(&row.join(","));
        heat.push('\n');
    }
    std::fs::write(args.out.join("heatmap.csv"), heat)?;

    println!(
        "{}: obj mean {:.4}, feasible {:.0}% (pre-projection {:.0}%), mean time {:.4}s",
        metrics.method,
        metrics.obj_mean,
        100.0 * metrics.feasible_frac,
        100.0 * metrics.pre_feasible_frac,
        metrics.mean_time_s
    );
    Ok(())
}

// --- bench ---

fn summarize_rows(records: &[(f64, f64, f64)]) -> (f64, f64, f64, f64) {
    let n = records.len().max(1) as f64;
    let mut objs: Vec<f64> = records.iter().map(|r| r.0).collect();
    objs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if objs.is_empty() {
        0.0
    } else if objs.len() % 2 == 1 {
        objs[objs.len() / 2]
    } else {
        0.5 * (objs[objs.len() / 2 - 1] + objs[objs.len() / 2])
    };
    let mean = records.iter().map(|r| r.0).sum::<f64>() / n;
    let feas = records
        .iter()
        .filter(|r| r.1 <= FEASIBILITY_TOLERANCE)
        .count() as f64
        / n;
    let time = records.iter().map(|r| r.2).sum::<f64>() / n;
    (mean, median, feas, time)
}

/// (objective, violation, time) per test instance for one bench method.
fn bench_method(
    method: &str,
    coeffs: &CoefficientSet,
    n: usize,
    m: usize,
    dataset: &Dataset,
    args: &BenchArgs,
) -> Result<Vec<(f64, f64, f64)>> {
    let rcfg = RelaxationConfig::default();
    match method {
        "rr" => dataset
            .test
            .iter()
            .map(|inst| {
                let t0 = Instant::now();
                let sol = rr_baseline(coeffs, inst, &rcfg)?;
                Ok((
                    objective(coeffs, inst, &sol)?,
                    violation(coeffs, inst, &sol)?,
                    report_time(t0.elapsed().as_secs_f64()),
                ))
            })
            .collect(),
        "oracle" => dataset
            .test
            .iter()
            .map(|inst| {
                let t0 = Instant::now();
                let center = solve_relaxation(coeffs, inst, &rcfg)?;
                let sol =
                    brute_force_oracle(coeffs, inst, &center, &OracleConfig::default(), &rcfg)?
                        .context("no feasible assignment in the oracle window")?;
                Ok((
                    objective(coeffs, inst, &sol)?,
                    violation(coeffs, inst, &sol)?,
                    report_time(t0.elapsed().as_secs_f64()),
                ))
            })
            .collect(),
        tag => {
            let method = Method::parse(tag)?;
            let (pi_spec, delta_spec) = model_specs(coeffs, n, m, method)?;
            let ccfg = CorrectionConfig::new(method);
            let tcfg = TrainingConfig {
                lambda: args.lambda,
                max_epochs: args.epochs,
                seed: args.seed,
                ..TrainingConfig::default()
            };
            let (weights, _) = train(coeffs, dataset, &pi_spec, delta_spec.as_ref(), &ccfg, &tcfg)?;
            dataset
                .test
                .iter()
                .map(|inst| {
                    let t0 = Instant::now();
                    let xbar = predict_relaxed(coeffs, &weights.pi, inst)?;
                    let sol = correct_eval(coeffs, &weights, &ccfg, &xbar, inst)?;
                    Ok((
                        objective(coeffs, inst, &sol)?,
                        violation(coeffs, inst, &sol)?,
                        report_time(t0.elapsed().as_secs_f64()),
                    ))
                })
                .collect()
        }
    }
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    let (coeffs, n, m) = load_dataset_dir(&args.data)?;
    let dataset = Dataset {
        train: load_split(&args.data, "train")?,
        validation: load_split(&args.data, "val")?,
        test: load_split(&args.data, "test")?,
    };
    let manifest = RunManifest::new(
        "bench",
        coeffs.family.tag(),
        Dims { n, m },
        BTreeMap::from([
            ("seed".to_string(), args.seed),
            ("data_seed".to_string(), coeffs.seed),
        ]),
        serde_json::json!({
            "methods": args.methods,
            "epochs": args.epochs,
            "lambda": args.lambda,
        }),
    );
    let mut rows = Vec::new();
    let mut failed = false;
    for method in args.methods.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match bench_method(method, &coeffs, n, m, &dataset, args) {
            Ok(records) => {
                let (mean, median, feas, time) = summarize_rows(&records);
                rows.push(BenchRow {
                    method: method.to_string(),
                    obj_mean: Some(mean),
                    obj_median: Some(median),
                    feasible_pct: Some(100.0 * feas),
                    mean_time_s: Some(time),
                    error: None,
                });
            }
            Err(e) => {
                failed = true;
                rows.push(BenchRow {
                    method: method.to_string(),
                    obj_mean: None,
                    obj_median: None,
                    feasible_pct: None,
                    mean_time_s: None,
                    error: Some(format!("{e:#}")),
                });
            }
        }
    }
    let report = BenchReport { rows, manifest };
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    write_json(&args.out.join("report.json"), &report)?;

    let mut table = format!(
        "{:<8} {:>12} {:>12} {:>10} {:>12}\n",
        "Method", "Obj Mean", "Obj Med", "Feasible", "Mean Time"
    );
    for row in &report.rows {
        match &row.error {
            None => table.push_str(&format!(
                "{:<8} {:>12.4} {:>12.4} {:>9.0}% {:>11.4}s\n",
                row.method,
                row.obj_mean.unwrap_or(f64::NAN),
                row.obj_median.unwrap_or(f64::NAN),
                row.feasible_pct.unwrap_or(f64::NAN),
                row.mean_time_s.unwrap_or(f64::NAN),
            )),
            Some(e) => table.push_str(&format!("{:<8} error: {e}\n", row.method)),
        }
    }
    std::fs::write(args.out.join("report.txt"), &table)?;
    print!("{table}");
    if failed {
        bail!("one or more bench methods failed; see report.json");
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => run_generate(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Bench(args) => run_bench(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pathmetric::baseline;
use pathmetric::datagen::{self, FeatureDataset};
use pathmetric::experiments::{self, Exp1Config, Exp2Config, Exp3Config};
use pathmetric::io::{self, csv_table, format_f64};
use pathmetric::matrices::{check_metric, symmetrize};
use pathmetric::mixture::{self, MetricBundle, TrainConfig, Weights};
use pathmetric::projector::project;
use pathmetric::{DissimilarityMatrix, Error, ErrorCategory, Result};

#[derive(Parser)]
#[command(name = "pathmetric", version, about = "Metric learning through shortest-path projections")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON file with settings for the subcommand; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Results root; each run writes to `<out>/<command>/<timestamp>/`.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Worker threads for experiment grids (0 means all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Project a square CSV matrix onto the metric cone.
    Project {
        input: PathBuf,
        /// Also write every canonical shortest path.
        #[arg(long)]
        traces: bool,
    },
    /// Train mixture weights on the labelled linear objective.
    TrainLinear(TrainArgs),
    /// Train mixture weights on the least-squares objective.
    TrainLsq(TrainArgs),
    /// Solve the explicitly constrained QP over mixture weights.
    BaselineQp {
        manifest: PathBuf,
        /// Target matrix; defaults to the manifest's target.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        rho: f64,
        #[arg(long, default_value_t = baseline::DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = baseline::DEFAULT_ROW_CAP)]
        row_cap: usize,
    },
    /// Time constraint construction against one single-pair projection.
    Timing {
        #[arg(long, value_delimiter = ',', default_value = "40,60,80,120,160")]
        d_list: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        r: usize,
    },
    /// Generate synthetic inputs.
    Gen {
        #[command(subcommand)]
        what: GenCommand,
    },
    /// Runtime and objective study: path method, barrier QP, random weights.
    Exp1 {
        #[arg(long)]
        row_cap: Option<usize>,
    },
    /// 1-NN accuracy of the trained mixture, the best single metric and the full metric.
    Exp2,
    /// 1-NN accuracy of graph-only, feature-only and mixture metrics.
    Exp3,
}

#[derive(Args)]
struct TrainArgs {
    manifest: PathBuf,
    /// Target matrix for train-lsq; defaults to the manifest's target.
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    kmax: Option<usize>,
    /// Comma-separated initial weights; defaults to a seeded unit-norm draw.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    alpha0: Option<Vec<f64>>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    improvement_tol: Option<f64>,
}

#[derive(Args, Clone)]
struct BlobArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    n_classes: usize,
    #[arg(long, default_value_t = 10)]
    d_x: usize,
    #[arg(long, default_value_t = 1.5)]
    spread: f64,
}

#[derive(Subcommand)]
enum GenCommand {
    /// Labelled feature clouds.
    Blobs(BlobArgs),
    /// Feature clouds plus a planted-partition graph.
    Citation {
        #[command(flatten)]
        blobs: BlobArgs,
        #[arg(long, default_value_t = 0.1)]
        intra_p: f64,
        #[arg(long, default_value_t = 0.02)]
        inter_p: f64,
    },
    /// Threshold path-metric bundle with target and labels.
    Bundle {
        #[command(flatten)]
        blobs: BlobArgs,
        #[arg(long, default_value_t = 8)]
        r: usize,
        /// Unit edge weights on the threshold graphs instead of target distances.
        #[arg(long)]
        unit_weights: bool,
    },
}

/// Training settings as read from `--config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainFile {
    eta: Option<f64>,
    k_max: Option<usize>,
    rho: Option<f64>,
    alpha0: Option<Vec<f64>>,
    eval_every: Option<usize>,
    improvement_tol: Option<f64>,
    seed: Option<u64>,
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Parse => 3,
        ErrorCategory::Validation => 4,
        ErrorCategory::Connectivity => 5,
        ErrorCategory::Capacity => 6,
        ErrorCategory::Divergence => 7,
        ErrorCategory::Io => 8,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}

/// Creates `<out>/<name>/<UTC timestamp>/`, suffixing `-1`, `-2`, ... on collision.
fn run_dir(out: &Path, name: &str) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let base = out.join(name);
    let mut dir = base.join(&stamp);
    let mut n = 0;
    while dir.exists() {
        n += 1;
        dir = base.join(format!("{stamp}-{n}"));
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => io::read_json(p),
        None => Ok(T::default()),
    }
}

/// Replaces a seed list by as many consecutive seeds starting at `seed`.
fn override_seeds(seeds: &mut Vec<u64>, seed: Option<u64>) {
    if let Some(s) = seed {
        let n = seeds.len().max(1) as u64;
        *seeds = (s..s + n).collect();
    }
}

fn run(cli: Cli) -> Result<PathBuf> {
    let c = &cli.common;
    match &cli.command {
        Command::Project { input, traces } => {
            let x = symmetrize(&io::read_matrix(input)?);
            let p = project(&x);
            let dir = run_dir(&c.out, "project")?;
            io::write_matrix(&dir.join("metric.csv"), &p.metric)?;
            if *traces {
                let all: Vec<_> = p.forward_traces().collect();
                io::write_json(&dir.join("traces.json"), &all)?;
            }
            Ok(dir)
        }
        Command::TrainLinear(args) => train(c, args, false),
        Command::TrainLsq(args) => train(c, args, true),
        Command::BaselineQp {
            manifest,
            target,
            rho,
            eps,
            row_cap,
        } => {
            let loaded = io::load_bundle(manifest)?;
            let target = resolve_target(target, loaded.target)?;
            let cs = baseline::build_constraints(&loaded.bundle, *eps, Some(*row_cap))?;
            let sol = baseline::solve_qp(&loaded.bundle, &target, &cs, *rho)?;
            let m_alpha = mixture::mixture_matrix(&sol.alpha, &loaded.bundle)?;
            let violations = check_metric(&m_alpha, 1e-6);
            let dir = run_dir(&c.out, "baseline-qp")?;
            io::write_json(&dir.join("weights.json"), &sol.alpha)?;
            io::write_json(
                &dir.join("feasibility.json"),
                &serde_json::json!({
                    "n_triangle": cs.n_triangle,
                    "n_nonneg": cs.n_nonneg,
                    "eps": cs.eps,
                    "trivial_rows": sol.trivial_rows,
                    "min_slack": sol.min_slack,
                    "kkt_residual": sol.kkt_residual,
                    "duality_gap": sol.duality_gap,
                    "newton_steps": sol.newton_steps,
                    "objective": sol.objective,
                    "mse": sol.mse,
                    "metric_violations": violations.len(),
                }),
            )?;
            io::write_json(
                &dir.join("timing.json"),
                &serde_json::json!({
                    "build_seconds": cs.build_seconds,
                    "solve_seconds": sol.solve_seconds,
                }),
            )?;
            Ok(dir)
        }
        Command::Timing { d_list, r } => {
            let rows = baseline::timing_probe(d_list, *r, c.seed.unwrap_or(0))?;
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|row| {
                    let op = serde_json::to_value(row.op).expect("serializes");
                    vec![
                        op.as_str().unwrap_or_default().to_string(),
                        row.d.to_string(),
                        format_f64(row.wall_seconds),
                    ]
                })
                .collect();
            let dir = run_dir(&c.out, "timing")?;
            io::write_text(&dir.join("timing.csv"), &csv_table(&["op", "D", "wall_seconds"], &body))?;
            Ok(dir)
        }
        Command::Gen { what } => gen(c, what),
        Command::Exp1 { row_cap } => {
            let mut cfg: Exp1Config = read_config(&c.config)?;
            override_seeds(&mut cfg.seeds, c.seed);
            if let Some(w) = c.workers {
                cfg.workers = w;
            }
            if let Some(cap) = row_cap {
                cfg.row_cap = *cap;
            }
            let rows = experiments::run_experiment1(&cfg)?;
            let dir = run_dir(&c.out, "exp1")?;
            io::write_json(&dir.join("config.json"), &cfg)?;
            io::write_text(&dir.join("objectives.csv"), &experiments::exp1_csv(&rows, false))?;
            io::write_text(&dir.join("timing.csv"), &experiments::exp1_csv(&rows, true))?;
            Ok(dir)
        }
        Command::Exp2 => {
            let mut cfg: Exp2Config = read_config(&c.config)?;
            override_seeds(&mut cfg.seeds, c.seed);
            if let Some(w) = c.workers {
                cfg.workers = w;
            }
            let reports = experiments::run_experiment2(&cfg)?;
            write_eval(c, "exp2", &cfg, &reports)
        }
        Command::Exp3 => {
            let mut cfg: Exp3Config = read_config(&c.config)?;
            override_seeds(&mut cfg.seeds, c.seed);
            if let Some(w) = c.workers {
                cfg.workers = w;
            }
            let reports = experiments::run_experiment3(&cfg)?;
            write_eval(c, "exp3", &cfg, &reports)
        }
    }
}

fn write_eval<T: Serialize>(
    c: &Common,
    name: &str,
    cfg: &T,
    reports: &[pathmetric::evalkit::EvalReport],
) -> Result<PathBuf> {
    let dir = run_dir(&c.out, name)?;
    io::write_json(&dir.join("config.json"), cfg)?;
    io::write_text(
        &dir.join("summary.csv"),
        &experiments::summary_csv(&experiments::summarize(reports)),
    )?;
    io::write_json(&dir.join("reports.json"), &reports)?;
    Ok(dir)
}

fn resolve_target(flag: &Option<PathBuf>, from_manifest: Option<DissimilarityMatrix>) -> Result<DissimilarityMatrix> {
    match (flag, from_manifest) {
        (Some(p), _) => io::read_dissimilarity(p),
        (None, Some(t)) => Ok(t),
        (None, None) => Err(Error::Configuration(
            "a target matrix is required: pass --target or list target_path in the manifest".into(),
        )),
    }
}

fn train(c: &Common, args: &TrainArgs, lsq: bool) -> Result<PathBuf> {
    let file: TrainFile = read_config(&c.config)?;
    let loaded = io::load_bundle(&args.manifest)?;
    let bundle: &MetricBundle = &loaded.bundle;
    let seed = c.seed.or(file.seed).unwrap_or(0);
    let alpha0 = match args.alpha0.clone().or(file.alpha0) {
        Some(a) => Weights::new(a)?,
        None => Weights::random_unit(bundle.len(), seed)?,
    };
    let mut cfg = TrainConfig::with_defaults(alpha0, seed);
    cfg.eta = args.eta.or(file.eta).unwrap_or(cfg.eta);
    cfg.rho = args.rho.or(file.rho).unwrap_or(cfg.rho);
    cfg.k_max = args.kmax.or(file.k_max).unwrap_or(cfg.k_max);
    cfg.eval_every = args.eval_every.or(file.eval_every);
    cfg.improvement_tol = args.improvement_tol.or(file.improvement_tol);

    let (name, report) = if lsq {
        let target = resolve_target(&args.target, loaded.target.clone())?;
        ("train-lsq", mixture::sgd_lsq(bundle, &target, &cfg)?)
    } else {
        ("train-linear", mixture::sgd_linear(bundle, &cfg)?)
    };
    let dir = run_dir(&c.out, name)?;
    io::write_json(&dir.join("config.json"), &cfg)?;
    io::write_json(&dir.join("weights.json"), &report.alpha_star)?;
    let trace: Vec<Vec<String>> = report
        .objective_trace
        .iter()
        .map(|(k, v)| vec![k.to_string(), format_f64(*v)])
        .collect();
    io::write_text(&dir.join("trace.csv"), &csv_table(&["iteration", "objective"], &trace))?;
    io::write_json(
        &dir.join("run.json"),
        &serde_json::json!({
            "iterations_run": report.iterations_run,
            "stopped_early": report.stopped_early,
        }),
    )?;
    io::write_json(
        &dir.join("timing.json"),
        &serde_json::json!({
            "wall_seconds": report.wall_time,
            "step_seconds": report.step_seconds,
        }),
    )?;
    Ok(dir)
}

fn features_csv(ds: &FeatureDataset) -> String {
    let rows: Vec<Vec<String>> = ds
        .points
        .iter()
        .map(|p| p.iter().map(|&x| format_f64(x)).collect())
        .collect();
    rows.iter().map(|r| r.join(",") + "\n").collect()
}

fn blobs(args: &BlobArgs, seed: u64) -> Result<FeatureDataset> {
    datagen::synthetic_blobs(args.d, args.n_classes, args.d_x, args.spread, seed)
}

fn gen(c: &Common, what: &GenCommand) -> Result<PathBuf> {
    let seed = c.seed.unwrap_or(0);
    match what {
        GenCommand::Blobs(args) => {
            let ds = blobs(args, seed)?;
            let dir = run_dir(&c.out, "gen-blobs")?;
            io::write_text(&dir.join("features.csv"), &features_csv(&ds))?;
            io::write_labels(&dir.join("labels.csv"), &ds.labels)?;
            Ok(dir)
        }
        GenCommand::Citation {
            blobs: args,
            intra_p,
            inter_p,
        } => {
            let ds = blobs(args, seed)?;
            let mask = datagen::synthetic_citation_graph(&ds, *intra_p, *inter_p, seed)?;
            let dir = run_dir(&c.out, "gen-citation")?;
            io::write_text(&dir.join("features.csv"), &features_csv(&ds))?;
            io::write_labels(&dir.join("labels.csv"), &ds.labels)?;
            io::write_mask(&dir.join("graph.csv"), &mask)?;
            Ok(dir)
        }
        GenCommand::Bundle {
            blobs: args,
            r,
            unit_weights,
        } => {
            let ds = blobs(args, seed)?;
            let target = datagen::normalized_euclidean_metric(&ds)?;
            let tb = datagen::threshold_path_metrics(&target, *r, *unit_weights)?;
            let bundle = tb.bundle.with_labels(ds.labels.clone())?;
            let dir = run_dir(&c.out, "gen-bundle")?;
            io::save_bundle(&dir, &bundle, Some(&target), Some(tb.levels), seed)?;
            Ok(dir)
        }
    }
}

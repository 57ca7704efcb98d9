use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use diffclean_core::age::write_metrics_csv;
use diffclean_core::config::RunConfig;
use diffclean_core::data::{load_pair_manifest, read_predictions, read_scores, write_roc_csv, SplitTag};
use diffclean_core::encoders::Registries;
use diffclean_core::eval::{merge_reports, read_report_rows, roc, tmr_at_fmr, EvalReport, DEFAULT_FMR};
use diffclean_core::pipeline::{batch_clean, MakeupRemover};
use diffclean_core::workflow::{rerun_manifest, run_finetune, run_train_age};
use diffclean_core::Error;

const EXIT_CODES: &str = "Exit codes:
  0  success
  1  unexpected failure
  2  usage error (unknown subcommand or flag)
  3  invalid configuration
  4  unreadable or invalid input data
  5  numerical failure during training
  6  rerun did not reproduce the recorded manifest";

#[derive(Debug, Parser)]
#[command(name = "diffclean", version, about = "Makeup removal with a fine-tuned diffusion model", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the proxy age regressor.
    TrainAge(TrainArgs),
    /// Fine-tune the makeup remover on (clean, made-up) pairs.
    Finetune(FinetuneArgs),
    /// Repeat a run recorded in a manifest and compare per-epoch losses.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        /// Largest accepted relative difference per epoch.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Remove makeup from every image in a directory.
    Clean {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Age metrics from a prediction CSV (id,prediction,truth[,group]).
    EvalAge {
        #[arg(long)]
        pred: PathBuf,
        /// Predictions on the unprocessed images, for estimation shift.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Age bins and interval level are read from here when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
        /// Report CSV; defaults to `<pred>_report.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ROC and TMR at a target FMR from a score CSV (score,label).
    EvalId {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FMR)]
        fmr: f64,
        /// ROC CSV; defaults to `<scores>_roc.csv`.
        #[arg(long)]
        roc: Option<PathBuf>,
    },
    /// Merge report CSVs side by side. Inputs are `label=path` or a path.
    Report {
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a pair manifest and print split and style counts.
    PairsCheck {
        #[arg(long)]
        manifest: PathBuf,
        /// Required image side.
        #[arg(long)]
        side: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replaces the master seed and every per-section seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let cfg = RunConfig::load(&self.config)?;
        Ok(match self.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        })
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory; defaults to `<cache>/train-age`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Remover checkpoint to continue from.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Output checkpoint; defaults to `paths.checkpoint`, then `<cache>/finetune/remover.ckpt`.
    #[arg(long)]
    ckpt: Option<PathBuf>,
}

#[derive(Debug)]
struct RerunMismatch;

impl std::fmt::Display for RerunMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("rerun differs from the recorded manifest")
    }
}

impl std::error::Error for RerunMismatch {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<RerunMismatch>().is_some() {
        return 6;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::UnknownBackend(_) | Error::DuplicateBackend(_) | Error::InvalidBins(_)) => 3,
        Some(Error::NonFiniteLoss(_)) => 5,
        Some(_) => 4,
        None => 1,
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn train_age(args: TrainArgs) -> anyhow::Result<()> {
    let cfg = args.run.load()?;
    let dir = args.out.unwrap_or_else(|| cfg.cache_dir().join("train-age"));
    let (outcome, mut manifest) = run_train_age(&cfg)?;
    let ckpt = dir.join("age.ckpt");
    outcome.model.save(&ckpt)?;
    write_metrics_csv(dir.join("metrics.csv"), &outcome.metrics)?;
    manifest.checkpoint = Some(ckpt.clone());
    write_json(&dir.join("manifest.json"), &manifest)?;
    let best = &outcome.metrics[outcome.best_epoch];
    println!("best epoch {} val MAE {:.3}", best.epoch, best.val_mae);
    println!("checkpoint {}", ckpt.display());
    Ok(())
}

fn finetune(args: FinetuneArgs) -> anyhow::Result<()> {
    let mut cfg = args.run.load()?;
    if let Some(r) = args.resume {
        cfg.paths.resume = Some(r);
    }
    let ckpt = args
        .ckpt
        .or_else(|| cfg.paths.checkpoint.clone())
        .unwrap_or_else(|| cfg.cache_dir().join("finetune").join("remover.ckpt"));
    let mut outcome = run_finetune(&cfg, &Registries::with_defaults())?;
    if let Some(parent) = ckpt.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    outcome.remover.save(&ckpt)?;
    outcome.manifest.checkpoint = Some(ckpt.clone());
    let manifest = ckpt.with_extension("manifest.json");
    outcome.manifest.save(&manifest)?;
    for e in &outcome.manifest.epochs {
        println!("epoch {} train total {:.6}", e.epoch, e.train.total);
    }
    println!("checkpoint {}", ckpt.display());
    println!("manifest {}", manifest.display());
    Ok(())
}

fn rerun(manifest: &Path, tol: f64) -> anyhow::Result<()> {
    let report = rerun_manifest(manifest, &Registries::with_defaults())?;
    for (i, (a, b)) in report.recorded.iter().zip(&report.reproduced).enumerate() {
        println!("epoch {i} recorded {a:.9} reproduced {b:.9}");
    }
    println!(
        "{}: max relative difference {:.3e}, datasets {}",
        report.workflow,
        report.max_rel_diff,
        if report.datasets_match { "match" } else { "differ" }
    );
    if !report.within(tol) {
        return Err(RerunMismatch.into());
    }
    Ok(())
}

fn clean(input: &Path, out: &Path, ckpt: &Path) -> anyhow::Result<()> {
    let remover = MakeupRemover::load(ckpt)?;
    let outcome = batch_clean(input, out, &remover)?;
    for (p, why) in &outcome.skipped {
        warn!("skipped {}: {why}", p.display());
    }
    println!("cleaned {} images, skipped {}", outcome.processed(), outcome.skipped.len());
    if outcome.processed() == 0 && !outcome.skipped.is_empty() {
        return Err(Error::Data {
            path: input.to_path_buf(),
            message: "no image could be processed".into(),
        }
        .into());
    }
    Ok(())
}

fn eval_age(
    pred: &Path,
    baseline: Option<&Path>,
    config: Option<&Path>,
    label: Option<String>,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let cfg = match config {
        Some(c) => RunConfig::load(c)?,
        None => RunConfig::default(),
    };
    let records = read_predictions(pred)?;
    let base = baseline.map(read_predictions).transpose()?;
    let label = label.unwrap_or_else(|| pred.file_stem().and_then(|s| s.to_str()).unwrap_or("predictions").into());
    let report = EvalReport::from_records(&label, &records, &cfg.eval.bins, base.as_deref(), cfg.eval.confidence)?;
    let out = out.unwrap_or_else(|| sibling(pred, "report"));
    report.write_csv(&out)?;
    print!("{}", report.summary());
    println!("report {}", out.display());
    Ok(())
}

fn eval_id(scores: &Path, fmr: f64, roc_out: Option<PathBuf>) -> anyhow::Result<()> {
    let set = read_scores(scores)?;
    let curve = roc(&set)?;
    let op = tmr_at_fmr(&curve, fmr)?;
    let out = roc_out.unwrap_or_else(|| sibling(scores, "roc"));
    write_roc_csv(&out, &curve)?;
    println!(
        "TMR {:.4} at FMR {:.3e} (threshold {}, {} genuine, {} impostor)",
        op.tmr(),
        fmr,
        op.point.threshold,
        set.genuine.len(),
        set.impostor.len()
    );
    println!("roc {}", out.display());
    Ok(())
}

fn report(inputs: &[String], out: Option<PathBuf>) -> anyhow::Result<()> {
    let mut reports = Vec::with_capacity(inputs.len());
    for spec in inputs {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                (p.file_stem().and_then(|s| s.to_str()).unwrap_or(spec).to_string(), p)
            }
        };
        if reports.iter().any(|(l, _)| *l == label) {
            bail!("duplicate report label {label:?}");
        }
        reports.push((label, read_report_rows(&path)?));
    }
    let table = merge_reports(&reports);
    match out {
        Some(p) => {
            std::fs::write(&p, table).with_context(|| format!("writing {}", p.display()))?;
            println!("merged {} reports into {}", reports.len(), p.display());
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn pairs_check(manifest: &Path, side: Option<usize>) -> anyhow::Result<()> {
    let m = load_pair_manifest(manifest)?;
    let pairs = m.load_pairs(side)?;
    println!("{} pairs, all clean/made-up dimensions agree", pairs.len());
    for tag in [SplitTag::Train, SplitTag::Val, SplitTag::Test] {
        println!("split {:<5} {}", format!("{tag:?}").to_lowercase(), m.split(tag).len());
    }
    for (style, n) in m.style_counts() {
        println!("style {style} {n}");
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::TrainAge(a) => train_age(a),
        Command::Finetune(a) => finetune(a),
        Command::Rerun { manifest, tol } => rerun(&manifest, tol),
        Command::Clean { input, out, ckpt } => clean(&input, &out, &ckpt),
        Command::EvalAge {
            pred,
            baseline,
            config,
            label,
            out,
        } => eval_age(&pred, baseline.as_deref(), config.as_deref(), label, out),
        Command::EvalId { scores, fmr, roc } => eval_id(&scores, fmr, roc),
        Command::Report { inputs, out } => report(&inputs, out),
        Command::PairsCheck { manifest, side } => pairs_check(&manifest, side),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {
            info!("done");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

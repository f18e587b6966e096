use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use segbench::calibrate::THRESHOLD_FILE;
use segbench::manifest::MANIFEST_FILE;
use segbench::report::{read_report, render_text, write_report};
use segbench::stub::{run_stub, StubMode};
use segbench::{
    calibrate, evaluate, make_dataset, resolve_methods, thread_pool, write_calibration, Calibration, CaseLoader,
    DatasetSpec, Manifest, Split, ThresholdArg,
};
use segbench_core::segmentation::PredictorHandle;

#[derive(Parser)]
#[command(name = "segbench", version, about = "Phantom segmentation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Parallelism {
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Process cases one at a time, for timing runs.
    #[arg(long)]
    serial: bool,
}

impl Parallelism {
    fn pool(&self) -> Result<rayon::ThreadPool> {
        thread_pool(if self.serial { 1 } else { self.workers })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate phantom cases and a manifest.
    MakeDataset {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        n_train: usize,
        #[arg(long, default_value_t = 10)]
        n_val: usize,
        #[arg(long, default_value_t = 20)]
        n_test: usize,
        #[arg(long, default_value_t = 0)]
        n_test_pro: usize,
        /// Acquire each case as a simulated tracked sweep and reconstruct it.
        #[arg(long)]
        via_sweep: bool,
    },
    /// Select the max-F1 threshold on the validation split.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictor: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Write every case file the run opened to this file.
        #[arg(long)]
        audit_log: Option<PathBuf>,
        #[command(flatten)]
        par: Parallelism,
    },
    /// Evaluate one or more predictors on a test split.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// `[label=]kind[:key=value;...]`, repeatable.
        #[arg(long = "predictor", required = true)]
        predictors: Vec<String>,
        /// A number, or a threshold.json (or the directory holding it) from
        /// `calibrate`.
        #[arg(long)]
        threshold: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "test_retro")]
        split: Split,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        audit_log: Option<PathBuf>,
        #[command(flatten)]
        par: Parallelism,
    },
    /// Re-render report files from a report.json.
    Report {
        /// report.json or the directory holding it.
        #[arg(long)]
        input: PathBuf,
        /// Write the rendered files here instead of only printing the table.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Minimal external predictor for tests: `predict-stub <mode> <input> <output>`.
    PredictStub {
        mode: StubMode,
        input: PathBuf,
        output: PathBuf,
    },
}

fn parse_threshold(arg: &str) -> Result<ThresholdArg> {
    if let Ok(v) = arg.parse::<f64>() {
        return Ok(ThresholdArg::Value(v));
    }
    let mut p = PathBuf::from(arg);
    if p.is_dir() {
        p = p.join(THRESHOLD_FILE);
    }
    Ok(ThresholdArg::Calibrated(Calibration::load(&p)?))
}

fn manifest_path(p: PathBuf) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::MakeDataset {
            out_dir,
            seed,
            n_train,
            n_val,
            n_test,
            n_test_pro,
            via_sweep,
        } => {
            let mut spec = DatasetSpec::new(n_train, n_val, n_test, seed);
            spec.n_test_pro = n_test_pro;
            spec.via_sweep = via_sweep;
            let m = make_dataset(&out_dir, &spec)?;
            println!("wrote {} cases to {}", m.cases.len(), out_dir.join(MANIFEST_FILE).display());
        }
        Command::Calibrate {
            manifest,
            predictor,
            out_dir,
            audit_log,
            par,
        } => {
            let m = Manifest::load(manifest_path(manifest))?;
            let h: PredictorHandle = predictor.parse().context("--predictor")?;
            let loader = CaseLoader::new();
            let result = calibrate(&m, &h, &loader, &par.pool()?);
            if let Some(p) = &audit_log {
                loader.write_log(p)?;
            }
            let (cal, curve) = result?;
            write_calibration(&out_dir, &cal, &curve)?;
            println!(
                "threshold {} (F1 {:.4}, AUC-PR {:.4}, AUC-ROC {:.4}) over {} validation cases",
                cal.threshold, cal.f1, cal.auc_pr, cal.auc_roc, cal.n_cases
            );
        }
        Command::Evaluate {
            manifest,
            predictors,
            threshold,
            out_dir,
            split,
            alpha,
            audit_log,
            par,
        } => {
            let m = Manifest::load(manifest_path(manifest))?;
            let threshold = threshold.as_deref().map(parse_threshold).transpose()?;
            let methods = resolve_methods(&predictors, threshold.as_ref())?;
            for meth in &methods {
                tracing::info!(method = %meth.label, predictor = %meth.handle, tau = meth.tau, source = meth.tau_source);
            }
            let loader = CaseLoader::new();
            let report = evaluate(&m, split, &methods, &loader, &par.pool()?, alpha)?;
            if let Some(p) = &audit_log {
                loader.write_log(p)?;
            }
            write_report(&out_dir, &report)?;
            print!("{}", render_text(&report));
            if report.n_failures() > 0 {
                eprintln!("{} case evaluations failed; see {}", report.n_failures(), out_dir.display());
                return Ok(ExitCode::from(2));
            }
        }
        Command::Report { input, out_dir } => {
            let path = if input.is_dir() { input.join(segbench::report::REPORT_JSON) } else { input };
            let report = read_report(&path)?;
            if let Some(dir) = out_dir {
                write_report(&dir, &report)?;
            }
            print!("{}", render_text(&report));
        }
        Command::PredictStub { mode, input, output } => run_stub(mode, &input, &output)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

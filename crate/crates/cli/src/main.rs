//! `nob`: generate data, train, evaluate, gradient-check and benchmark
//! neural operators.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 data format error,
//! 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nob_core::data::{gen_synthetic, Dataset, SynthConfig};
use nob_core::enhancements::{FusionConfig, FusionMode, GeoEncoding};
use nob_core::harness::{
    benchmark, emit_report, evaluate_run, gradcheck_model, train_run, Loss, MetricsRecord, ReportFormat, RunConfig, SplitName,
};
use nob_core::operators::{ModelConfig, ARCHITECTURES};
use nob_core::{Error, Result};

const GRAD_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "nob", version, about = "Neural-operator benchmark harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic Poisson dataset described by a JSON config.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write checkpoint, log and config to a run directory.
    Train {
        #[arg(long)]
        model: String,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained run on one split.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Report path; `.csv` selects CSV, anything else markdown.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Finite-difference gradient check of a toy-size model (`all` for every one).
    Gradcheck {
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "none")]
        fusion: String,
        #[arg(long, default_value = "none")]
        geoenc: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train and test several models under identical settings.
    Bench {
        /// Comma-separated model names.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainOpts {
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "none")]
    fusion: String,
    #[arg(long, default_value = "none")]
    geoenc: String,
    /// Points sampled per sample and step (whole samples when omitted).
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// mse | rel-mse
    #[arg(long, default_value = "mse")]
    loss: String,
    /// JSON file with further model hyperparameters.
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Disable the thread pool.
    #[arg(long)]
    serial: bool,
    /// Print every n-th epoch (0 = silent).
    #[arg(long, default_value_t = 10)]
    log_every: usize,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn fusion(mode: &str, geoenc: &str) -> Result<FusionConfig> {
    Ok(FusionConfig {
        mode: mode.parse::<FusionMode>()?,
        geoenc: geoenc.parse::<GeoEncoding>()?,
    })
}

fn model_config(name: &str, o: &TrainOpts) -> Result<ModelConfig> {
    let mut mc = match &o.model_config {
        Some(p) => read_json::<ModelConfig>(p)?,
        None => ModelConfig::default(),
    };
    mc.arch = name.to_string();
    mc.family()?;
    if let Some(h) = o.hidden {
        mc.hidden = Some(h);
    }
    if let Some(l) = o.layers {
        mc.layers = l;
    }
    mc.fusion = fusion(&o.fusion, &o.geoenc)?;
    Ok(mc)
}

fn run_config(model: ModelConfig, data: &Path, o: &TrainOpts) -> Result<RunConfig> {
    let cfg = RunConfig {
        model,
        data: data.to_path_buf(),
        epochs: o.epochs,
        batch: o.batch,
        lr: o.lr,
        seed: o.seed,
        points: o.points,
        parallel: !o.serial,
        loss: o.loss.parse::<Loss>()?,
        ..RunConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn report_format(path: &Path) -> ReportFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => ReportFormat::Csv,
        _ => ReportFormat::Markdown,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen { config, out } => {
            let cfg: SynthConfig = read_json(&config)?;
            let m = gen_synthetic(&cfg, &out)?;
            println!(
                "wrote {} samples ({}^3 interior nodes) to {}",
                m.n_samples,
                cfg.n,
                out.display()
            );
        }
        Cmd::Train { model, data, opts, out } => {
            let cfg = run_config(model_config(&model, &opts)?, &data, &opts)?;
            let every = opts.log_every;
            let (_, res) = train_run(&cfg, &out, |e| {
                if every > 0 && (e.epoch % every == 0 || e.epoch == 1 || e.epoch == cfg.epochs) {
                    eprintln!(
                        "epoch {:>5}  loss {:.4e}  val {:.4e}  lr {:.2e}  {:.3} s/epoch",
                        e.epoch, e.train_loss, e.val_loss, e.lr, e.seconds
                    );
                }
            })?;
            println!(
                "{}: {} parameters, {} optimizer steps, best validation loss {:.4e} at epoch {}, median {:.3} s/epoch",
                res.model.arch(),
                res.model.param_count(),
                res.total_steps(),
                res.best_val,
                res.best_epoch,
                res.s_per_epoch()
            );
        }
        Cmd::Eval { run, data, split, report } => {
            let split: SplitName = split.parse()?;
            let rec = evaluate_run(&run, &data, split)?;
            if rec.excluded > 0 {
                eprintln!("{} sample(s) with a zero field excluded from the relative error", rec.excluded);
            }
            let md = emit_report(std::slice::from_ref(&rec), ReportFormat::Markdown);
            print!("{md}");
            if let Some(path) = report {
                write_text(&path, &emit_report(&[rec], report_format(&path)))?;
            }
        }
        Cmd::Gradcheck {
            model,
            fusion: f,
            geoenc,
            seed,
        } => {
            let fc = fusion(&f, &geoenc)?;
            let names: Vec<&str> = if model == "all" {
                ARCHITECTURES.to_vec()
            } else {
                vec![model.as_str()]
            };
            let mut worst: f64 = 0.0;
            for name in names {
                let r = gradcheck_model(name, fc, seed)?;
                println!("{name:14} checked {:3}  max rel deviation {:.3e}  ({})", r.checked, r.max_rel, r.worst);
                worst = worst.max(r.max_rel);
            }
            if !(worst < GRAD_TOL) {
                return Err(Error::Numerical(format!("gradient deviation {worst:.3e} exceeds {GRAD_TOL:.0e}")));
            }
        }
        Cmd::Bench { models, data, opts, out } => {
            if models.is_empty() {
                return Err(Error::Config("no models given".into()));
            }
            let configs = models.iter().map(|m| model_config(m, &opts)).collect::<Result<Vec<_>>>()?;
            let base = run_config(configs[0].clone(), &data, &opts)?;
            let ds = Dataset::load(&data)?;
            let rows = benchmark(&configs, &base, &ds);
            let ok: Vec<MetricsRecord> = rows.iter().filter_map(|r| r.result.clone().ok()).collect();
            let mut text = if ok.is_empty() {
                String::new()
            } else {
                emit_report(&ok, report_format(&out))
            };
            for r in &rows {
                if let Err(e) = &r.result {
                    eprintln!("{}: failed: {e}", r.model);
                    if report_format(&out) == ReportFormat::Markdown {
                        text.push_str(&format!("\n{} failed: {e}\n", r.model));
                    }
                }
            }
            write_text(&out, &text)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

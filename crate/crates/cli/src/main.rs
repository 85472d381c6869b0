//! `windtimer`: synth → clean → dataset → pretrain/train/finetune →
//! forecast → eval/ablate/one-turbine → report.
//!
//! Settings are layered, later wins: built-in desk defaults, `--config`
//! file, `WINDTIMER__SECTION__KEY` environment variables, `--set key=value`,
//! then dedicated flags such as `--seed`.
//!
//! Exit status: 0 on success, 1 on a usage or validation error, 2 when a
//! stage fails while running.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use windtimer::config::KvConfig;
use windtimer::pipeline::{self, StageOutput};
use windtimer::train::TrainMode;
use windtimer::Error;

#[derive(Parser, Debug)]
#[command(name = "windtimer", version, about = "Wind-turbine SCADA cleaning and Timer forecasting")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Global seed (`seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (`threads`, default 1). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Stride of test windows (`dataset.stride.test`).
    #[arg(long, global = true, value_name = "N")]
    test_stride: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic plant: per-turbine CSVs and truth.csv.
    Synth,
    /// Clean per-turbine CSVs.
    Clean {
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
    },
    /// Window cleaned CSVs into train/validation/test sample caches.
    Dataset {
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
    },
    /// Pre-train a Timer on the synthetic corpus plus optional datasets.
    Pretrain {
        /// Dataset directory whose windows join the corpus; repeatable.
        #[arg(long, value_name = "DIR")]
        data: Vec<PathBuf>,
    },
    /// Train a model spec from scratch.
    Train {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, default_value = "timer")]
        model: String,
    },
    /// Fine-tune every parameter of a checkpoint.
    Finetune {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, default_value = "timer-finetune")]
        model: String,
    },
    /// Forecast past the end of a turbine CSV.
    Forecast {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "CSV")]
        input: PathBuf,
        #[arg(long)]
        horizon: usize,
    },
    /// Score checkpoints on a dataset's test split.
    Eval {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE", required = true)]
        checkpoint: Vec<PathBuf>,
        /// Comma-separated horizons (`eval.horizons`).
        #[arg(long, value_name = "LIST")]
        horizons: Option<String>,
    },
    /// Retrain on nested fractions of the training windows.
    Ablate {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Pretrained checkpoint for fine-tuned specs and the zero-shot row.
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Comma-separated fractions (`ablate.fractions`).
        #[arg(long, value_name = "LIST")]
        fractions: Option<String>,
        #[arg(long, value_name = "LIST")]
        horizons: Option<String>,
    },
    /// Train on one turbine, test on the whole plant; three trials.
    OneTurbine {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Three comma-separated turbine ids (`one_turbine.turbines`).
        #[arg(long, value_name = "LIST")]
        turbines: Option<String>,
        #[arg(long, value_name = "LIST")]
        horizons: Option<String>,
    },
    /// Merge report CSVs and render tables and plots.
    Report {
        /// report.csv files or directories holding one; repeatable.
        #[arg(long, value_name = "PATH", required = true)]
        input: Vec<PathBuf>,
    },
    /// Run synth, clean, dataset, pretrain, train and eval end to end.
    Pipeline,
}

fn resolve_config(g: &Global, env: impl IntoIterator<Item = (String, String)>) -> windtimer::Result<KvConfig> {
    let mut cfg = pipeline::desk_defaults();
    if let Some(path) = &g.config {
        cfg.merge(&KvConfig::load(path)?);
    }
    cfg.apply_env(env);
    cfg.apply_assignments(g.set.iter().map(String::as_str))?;
    if let Some(s) = g.seed {
        cfg.set("seed", s);
    }
    if let Some(t) = g.threads {
        cfg.set("threads", t);
    }
    if let Some(s) = g.test_stride {
        cfg.set("dataset.stride.test", s);
    }
    if let Some(out) = &g.out {
        cfg.set("out", out.display());
    }
    Ok(cfg)
}

fn out_dir(cfg: &KvConfig) -> windtimer::Result<PathBuf> {
    cfg.get("out")
        .map(PathBuf::from)
        .ok_or_else(|| Error::Config("missing --out (or `out` in the config)".into()))
}

fn set_opt(cfg: &mut KvConfig, key: &str, value: &Option<String>) {
    if let Some(v) = value {
        cfg.set(key, v);
    }
}

fn dispatch(command: &Command, mut cfg: KvConfig) -> windtimer::Result<StageOutput> {
    let out = out_dir(&cfg)?;
    match command {
        Command::Synth => pipeline::synth_stage(&cfg, &out),
        Command::Clean { input } => pipeline::clean_stage(&cfg, input, &out),
        Command::Dataset { input } => pipeline::dataset_stage(&cfg, input, &out),
        Command::Pretrain { data } => pipeline::pretrain_stage(&cfg, data, &out),
        Command::Train { data, model } => pipeline::train_stage(&cfg, model, TrainMode::Scratch, data, None, &out),
        Command::Finetune { data, checkpoint, model } => {
            pipeline::train_stage(&cfg, model, TrainMode::Finetune, data, Some(checkpoint), &out)
        }
        Command::Forecast { checkpoint, input, horizon } => {
            pipeline::forecast_stage(&cfg, checkpoint, input, *horizon, &out.join("predictions.csv"))
        }
        Command::Eval { data, checkpoint, horizons } => {
            set_opt(&mut cfg, "eval.horizons", horizons);
            pipeline::eval_stage(&cfg, data, checkpoint, &out)
        }
        Command::Ablate { data, checkpoint, fractions, horizons } => {
            set_opt(&mut cfg, "ablate.fractions", fractions);
            set_opt(&mut cfg, "eval.horizons", horizons);
            pipeline::ablate_stage(&cfg, data, checkpoint.as_deref(), &out)
        }
        Command::OneTurbine { data, checkpoint, turbines, horizons } => {
            set_opt(&mut cfg, "one_turbine.turbines", turbines);
            set_opt(&mut cfg, "eval.horizons", horizons);
            pipeline::one_turbine_stage(&cfg, data, checkpoint.as_deref(), &out)
        }
        Command::Report { input } => pipeline::report_stage(&cfg, input, &out),
        Command::Pipeline => {
            let s = pipeline::run_pipeline(&cfg, &out)?;
            print!("{}", s.render());
            Ok(StageOutput {
                artifacts: Vec::new(),
                warnings: s.warnings,
            })
        }
    }
}

fn report_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(args: impl IntoIterator<Item = OsString>, env: impl IntoIterator<Item = (String, String)>) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match resolve_config(&cli.global, env) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match dispatch(&cli.command, cfg) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            report_paths(&out.artifacts);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os(), std::env::vars()))
}

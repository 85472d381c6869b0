//! File-based stages behind the command-line tool, and the end-to-end run.
//!
//! Every stage reads its inputs from directories, writes only under its
//! output directory, and leaves a `run.cfg` snapshot of the configuration it
//! ran with.

mod specs;
mod stages;

use std::path::{Path, PathBuf};

pub use specs::{desk_defaults, resolve_spec, spec_names, NamedSpec};
pub use stages::{
    ablate_stage, clean_stage, dataset_stage, eval_settings, eval_stage, forecast_stage, load_dataset, load_split,
    load_turbines, one_turbine_stage, pretrain_stage, report_stage, seed_of, strides_of, synth_stage, threads_of,
    train_stage, turbine_files, StageOutput, CHECKPOINT_FILE, HISTORY_FILE, MANIFEST_FILE, REPORT_FILE, RUN_CONFIG,
    SCORE_FILE, SPLITS, TRUTH_FILE,
};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::train::TrainMode;

#[derive(Clone, Debug, Default)]
pub struct PipelineSummary {
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
    /// `(model, horizon, mse)` from the final report.
    pub headline: Vec<(String, usize, f64)>,
}

impl PipelineSummary {
    fn absorb(&mut self, out: StageOutput) {
        self.artifacts.extend(out.artifacts);
        self.warnings.extend(out.warnings);
    }

    pub fn render(&self) -> String {
        let mut s = String::from("artifacts:\n");
        for a in &self.artifacts {
            s.push_str(&format!("  {}\n", a.display()));
        }
        s.push_str("mse:\n");
        for (m, h, v) in &self.headline {
            s.push_str(&format!("  {m} H={h}: {v:.4}\n"));
        }
        s
    }
}

/// Settings for the source plant used in pre-training: a different seed
/// and span, windowed more densely.
fn source_config(cfg: &KvConfig) -> Result<KvConfig> {
    let mut c = cfg.clone();
    let seed = seed_of(cfg)?;
    c.set("synth.seed", cfg.u64_or("pretrain.source.seed", seed.wrapping_add(1))?);
    c.set("synth.turbines", cfg.usize_or("pretrain.source.turbines", 6)?);
    c.set("synth.days", cfg.usize_or("pretrain.source.days", 365)?);
    c.set("dataset.stride.train", cfg.usize_or("pretrain.source.stride", strides_of(cfg)?.train)?);
    Ok(c)
}

/// synth → clean → dataset → pretrain → train every `eval.models` spec →
/// eval. Outputs go to fixed subdirectories of `out`, so a rerun overwrites
/// them in place.
pub fn run_pipeline(cfg: &KvConfig, out: &Path) -> Result<PipelineSummary> {
    let mut summary = PipelineSummary::default();
    let d = |name: &str| out.join(name);

    summary.absorb(synth_stage(cfg, &d("synth")).map_err(Error::in_stage("synth"))?);
    summary.absorb(clean_stage(cfg, &d("synth"), &d("clean")).map_err(Error::in_stage("clean"))?);
    summary.absorb(dataset_stage(cfg, &d("clean"), &d("dataset")).map_err(Error::in_stage("dataset"))?);

    let mut pretrain_data = Vec::new();
    if cfg.bool_or("pretrain.source.enabled", true)? {
        let sc = source_config(cfg).map_err(Error::in_stage("source"))?;
        let src = d("source");
        summary.absorb(synth_stage(&sc, &src.join("synth")).map_err(Error::in_stage("source synth"))?);
        summary.absorb(clean_stage(&sc, &src.join("synth"), &src.join("clean")).map_err(Error::in_stage("source clean"))?);
        summary.absorb(dataset_stage(&sc, &src.join("clean"), &src.join("dataset")).map_err(Error::in_stage("source dataset"))?);
        pretrain_data.push(src.join("dataset"));
    }

    let models = cfg
        .get_list::<String>("eval.models")?
        .filter(|m| !m.is_empty())
        .ok_or_else(|| Error::Config("eval.models must list at least one spec".into()))?;
    let needs_pretrain = models
        .iter()
        .map(|m| resolve_spec(cfg, m, None))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .any(|s| s.train.mode == TrainMode::Finetune);
    let pretrained = d("pretrain").join(CHECKPOINT_FILE);
    if needs_pretrain {
        summary.absorb(pretrain_stage(cfg, &pretrain_data, &d("pretrain")).map_err(Error::in_stage("pretrain"))?);
    }

    let mut checkpoints = Vec::new();
    for name in &models {
        let spec = resolve_spec(cfg, name, None)?;
        let init = (spec.train.mode == TrainMode::Finetune).then_some(pretrained.as_path());
        let dir = d("models").join(name);
        summary.absorb(
            train_stage(cfg, name, spec.train.mode, &d("dataset"), init, &dir).map_err(Error::in_stage("train"))?,
        );
        checkpoints.push(dir.join(CHECKPOINT_FILE));
    }
    summary.absorb(eval_stage(cfg, &d("dataset"), &checkpoints, &d("eval")).map_err(Error::in_stage("eval"))?);

    let report_path = d("eval").join(REPORT_FILE);
    let file = std::fs::File::open(&report_path).map_err(|e| Error::io(&report_path, e))?;
    let report = EvalReport::read_csv(std::io::BufReader::new(file))?;
    summary.headline = report.rows.iter().map(|r| (r.meta.model.clone(), r.horizon, r.mse)).collect();
    let summary_path = out.join("summary.txt");
    summary.artifacts.push(summary_path.clone());
    std::fs::write(&summary_path, summary.render()).map_err(|e| Error::io(&summary_path, e))?;
    Ok(summary)
}

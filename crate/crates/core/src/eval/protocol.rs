use rand::seq::SliceRandom;

use super::metrics::{evaluate_horizons, Predictor, EVAL_CONTEXT, HORIZONS};
use super::report::{EvalReport, RowMeta};
use crate::autodiff::ParamSet;
use crate::clean::{clean_frame, CleanConfig, RawScadaFrame, WindowSample};
use crate::error::{Error, Result};
use crate::inference::Forecaster;
use crate::models::ModelConfig;
use crate::train::{dataset_for, train, NormScope, TrainConfig, TrainHistory};
use crate::series::{windowed_splits, SplitSpec, WindowStrides};
use crate::util::{par_map, rng_for};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub horizons: Vec<usize>,
    pub context: usize,
    pub threads: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            horizons: HORIZONS.to_vec(),
            context: EVAL_CONTEXT,
            threads: 1,
        }
    }
}

/// A model to train and score.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub id: String,
    pub config: ModelConfig,
    pub train: TrainConfig,
    /// Starting weights, required when fine-tuning.
    pub init: Option<ParamSet>,
    /// Points per training sample. Windows are cut into consecutive pieces
    /// of this length.
    pub train_length: usize,
    pub norm: NormScope,
}

impl ModelSpec {
    fn rows(&self) -> Result<usize> {
        let unit = match &self.config {
            ModelConfig::Timer(c) => c.patch,
            ModelConfig::Transformer(c) => c.decoder.patch,
            ModelConfig::Lstm(_) => 1,
        };
        if self.train_length == 0 || self.train_length % unit != 0 || self.train_length / unit < 2 {
            return Err(Error::Config(format!(
                "{}: training length {} is not at least two whole tokens of {unit}",
                self.id, self.train_length
            )));
        }
        Ok(self.train_length / unit)
    }
}

/// Train, validation and test windows of one experiment.
#[derive(Clone, Debug, Default)]
pub struct ExperimentData {
    pub train: Vec<WindowSample>,
    pub validation: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

/// Consecutive non-overlapping `len`-point pieces of every window.
pub fn cut_windows(windows: &[WindowSample], len: usize) -> Result<Vec<WindowSample>> {
    let mut out = Vec::new();
    for w in windows {
        let t = w.len();
        for k in 0..t / len {
            let data = (0..4).flat_map(|c| w.channel_at(c)[k * len..(k + 1) * len].iter().copied()).collect();
            out.push(WindowSample::new(w.turbine_id.clone(), w.start + (k * len) as i64 * w.interval, w.interval, data)?);
        }
    }
    Ok(out)
}

/// Train `spec` on `train_windows`, early-stopping on `val_windows`.
pub fn fit_model(spec: &ModelSpec, train_windows: &[WindowSample], val_windows: &[WindowSample]) -> Result<(Forecaster, TrainHistory)> {
    let rows = spec.rows()?;
    let tr = dataset_for(&spec.config, &cut_windows(train_windows, spec.train_length)?, rows, spec.norm)?;
    let va = dataset_for(&spec.config, &cut_windows(val_windows, spec.train_length)?, rows, spec.norm)?;
    let out = train(&spec.config, spec.init.as_ref(), &tr, &va, &spec.train)?;
    Ok((Forecaster::new(spec.config.clone(), out.params), out.history))
}

fn meta(spec: &ModelSpec, fraction: f64, scope: &str) -> RowMeta {
    RowMeta {
        model: spec.id.clone(),
        mode: spec.train.mode.name().to_string(),
        seed: spec.train.seed,
        data_fraction: fraction,
        scope: scope.to_string(),
    }
}

/// Train every spec on the full training split and score it on the test
/// split.
pub fn compare_models(specs: &[ModelSpec], data: &ExperimentData, settings: &EvalSettings, scope: &str) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for spec in specs {
        let (model, _) = fit_model(spec, &data.train, &data.validation)?;
        let scores = evaluate_horizons(&model, &data.test, &settings.horizons, settings.context, settings.threads)?;
        report.push_scores(&meta(spec, 1.0, scope), &scores);
    }
    Ok(report)
}

/// Training-data fractions for the data-volume ablation.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationPlan {
    /// Ascending, each in `(0, 1]`.
    pub fractions: Vec<f64>,
    pub seed: u64,
}

impl AblationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty()
            || self.fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0))
            || self.fractions.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(format!(
                "ablation fractions must be ascending values in (0, 1], got {:?}",
                self.fractions
            )));
        }
        Ok(())
    }
}

/// The first `fraction·n` items of a seed-determined permutation of `0..n`,
/// in ascending order. Smaller fractions give subsets of larger ones.
pub fn nested_subset(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_for(seed, 0xAB1A));
    let take = ((fraction * n as f64) + 1e-9).floor() as usize;
    let mut out = perm[..take.min(n)].to_vec();
    out.sort_unstable();
    out
}

/// Retrain every spec on nested subsets of the training windows and score
/// each on the same test set. A pretrained model scored without any
/// training contributes a zero-shot row at every fraction.
pub fn run_ablation(
    plan: &AblationPlan,
    specs: &[ModelSpec],
    data: &ExperimentData,
    zero_shot: Option<(&str, &dyn Predictor)>,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    plan.validate()?;
    let zero = match zero_shot {
        Some((name, model)) => Some((name, evaluate_horizons(model, &data.test, &settings.horizons, settings.context, settings.threads)?)),
        None => None,
    };
    let mut report = EvalReport::default();
    for &f in &plan.fractions {
        let subset: Vec<WindowSample> = nested_subset(data.train.len(), f, plan.seed)
            .into_iter()
            .map(|i| data.train[i].clone())
            .collect();
        for spec in specs {
            let m = meta(spec, f, "plant");
            if subset.is_empty() {
                report.push_skipped(&m, &settings.horizons);
                continue;
            }
            let (model, _) = fit_model(spec, &subset, &data.validation)?;
            let scores = evaluate_horizons(&model, &data.test, &settings.horizons, settings.context, settings.threads)?;
            report.push_scores(&m, &scores);
        }
        if let Some((name, scores)) = &zero {
            let m = RowMeta {
                model: name.to_string(),
                mode: "zero-shot".to_string(),
                seed: plan.seed,
                data_fraction: f,
                scope: "plant".to_string(),
            };
            report.push_scores(&m, scores);
        }
    }
    Ok(report)
}

/// Per-turbine experiment data.
#[derive(Clone, Debug)]
pub struct TurbineData {
    pub turbine_id: String,
    pub data: ExperimentData,
}

/// Clean every turbine and window its kept rows into train, validation and
/// test periods. Periods are resolved once over the plant's whole time span,
/// so all turbines share them.
pub fn prepare_turbines(
    frames: &[RawScadaFrame],
    clean: &CleanConfig,
    split: &SplitSpec,
    window: usize,
    strides: WindowStrides,
    threads: usize,
) -> Result<(Vec<TurbineData>, Vec<String>)> {
    let start = frames.iter().filter_map(|f| f.timestamps.first()).min().copied();
    let end = frames.iter().filter_map(|f| f.timestamps.last().map(|t| t + f.interval)).max();
    let (Some(start), Some(end)) = (start, end) else {
        return Err(Error::invalid("no SCADA rows to prepare"));
    };
    let bounds = split.resolve(start, end)?;
    let cleaned = par_map(frames, threads, |f| clean_frame(f, clean, None));
    let mut turbines = Vec::new();
    let mut warnings = Vec::new();
    for (frame, out) in frames.iter().zip(cleaned) {
        let out = out?;
        warnings.extend(out.labels.warnings.iter().cloned());
        let splits = windowed_splits(&out.frame, &out.labels, &bounds, window, strides)?;
        warnings.extend(splits.warnings);
        turbines.push(TurbineData {
            turbine_id: frame.turbine_id.clone(),
            data: ExperimentData {
                train: splits.train,
                validation: splits.validation,
                test: splits.test,
            },
        });
    }
    Ok((turbines, warnings))
}

/// All turbines' windows pooled per split.
pub fn pool(turbines: &[TurbineData]) -> ExperimentData {
    let mut out = ExperimentData::default();
    for t in turbines {
        out.train.extend(t.data.train.iter().cloned());
        out.validation.extend(t.data.validation.iter().cloned());
        out.test.extend(t.data.test.iter().cloned());
    }
    out
}

#[derive(Clone, Debug)]
pub struct OneTurbineOutcome {
    /// Per-model, per-horizon mean over the trials.
    pub average: EvalReport,
    pub trials: Vec<EvalReport>,
}

/// Three trials, each training every spec on one turbine's data and testing
/// on the test windows of every turbine in the plant; errors are averaged
/// over the trials.
pub fn one_turbine_protocol(
    train_turbines: &[&str],
    plant: &[TurbineData],
    specs: &[ModelSpec],
    settings: &EvalSettings,
) -> Result<OneTurbineOutcome> {
    if train_turbines.len() != 3 || plant.len() < 3 {
        return Err(Error::invalid(format!(
            "the one-turbine protocol needs 3 training turbines from a plant of at least 3, got {} of {}",
            train_turbines.len(),
            plant.len()
        )));
    }
    let test: Vec<WindowSample> = plant.iter().flat_map(|t| t.data.test.iter().cloned()).collect();
    let mut trials = Vec::new();
    for id in train_turbines {
        let source = plant
            .iter()
            .find(|t| t.turbine_id == *id)
            .ok_or_else(|| Error::invalid(format!("turbine {id} is not in the plant")))?;
        let mut report = EvalReport::default();
        for spec in specs {
            let (model, _) = fit_model(spec, &source.data.train, &source.data.validation)?;
            let scores = evaluate_horizons(&model, &test, &settings.horizons, settings.context, settings.threads)?;
            report.push_scores(&meta(spec, 1.0, &format!("train {id}, test plant")), &scores);
        }
        trials.push(report);
    }
    let mut average = EvalReport::default();
    for (i, row) in trials[0].rows.iter().enumerate() {
        let mut r = row.clone();
        let k = trials.len() as f64;
        r.mse = trials.iter().map(|t| t.rows[i].mse).sum::<f64>() / k;
        for c in 0..4 {
            r.raw_mse[c] = trials.iter().map(|t| t.rows[i].raw_mse[c]).sum::<f64>() / k;
        }
        r.meta.scope = format!("mean of trials {}, test plant", train_turbines.join("/"));
        average.rows.push(r);
    }
    Ok(OneTurbineOutcome { average, trials })
}

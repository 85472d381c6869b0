use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::specs::{resolve_spec, NamedSpec};
use crate::clean::{
    clean_frame, Channel, CleanConfig, CleaningStats, OutlierLabeling, RawScadaFrame, WindowSample, SAMPLING_INTERVAL_SECS,
};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::eval::{
    cut_windows, evaluate_horizons, fit_model, one_turbine_protocol, render_report, run_ablation, AblationPlan,
    EvalReport, EvalSettings, ExperimentData, TurbineData, EVAL_CONTEXT, HORIZONS,
};
use crate::inference::{write_predictions, Forecaster, TimeAnchor, WindowContext};
use crate::models::{load_checkpoint, save_checkpoint, Checkpoint, ModelConfig};
use crate::series::{read_cache, to_s3, windowed_splits, write_cache, write_manifest, ManifestEntry, SplitSpec, WindowStrides};
use crate::synth::{cleaning_score, generate_plant, read_truth_csv, write_truth_csv, CleaningScore, GroundTruth, SynthConfig, TruthLabel};
use crate::train::{dataset_for, pretrain_corpus, timer_dataset, train, Dataset, Regime, StopReason, TrainHistory, TrainMode};
use crate::util::par_map;

pub const RUN_CONFIG: &str = "run.cfg";
pub const TRUTH_FILE: &str = "truth.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const SCORE_FILE: &str = "cleaning_score.csv";
pub const SPLITS: [&str; 3] = ["train", "validation", "test"];

/// Files written by a stage and anything worth telling the user.
#[derive(Clone, Debug, Default)]
pub struct StageOutput {
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn flush(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write the resolved configuration into `dir`, tagged with the stage.
fn snapshot(cfg: &KvConfig, dir: &Path, stage: &str, out: &mut StageOutput) -> Result<()> {
    let mut c = cfg.clone();
    c.set("stage", stage);
    let path = dir.join(RUN_CONFIG);
    c.save(&path)?;
    out.artifacts.push(path);
    Ok(())
}

pub fn seed_of(cfg: &KvConfig) -> Result<u64> {
    cfg.u64_or("seed", 0)
}

pub fn threads_of(cfg: &KvConfig) -> Result<usize> {
    let t = cfg.usize_or("threads", 1)?;
    if t == 0 {
        return Err(Error::Config("threads must be >= 1".into()));
    }
    Ok(t)
}

pub fn eval_settings(cfg: &KvConfig) -> Result<EvalSettings> {
    let horizons = cfg.get_list::<usize>("eval.horizons")?.unwrap_or_else(|| HORIZONS.to_vec());
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::Config(format!("eval.horizons must be positive, got {horizons:?}")));
    }
    Ok(EvalSettings {
        horizons,
        context: cfg.usize_or("eval.context", EVAL_CONTEXT)?,
        threads: threads_of(cfg)?,
    })
}

fn list_or(cfg: &KvConfig, key: &str) -> Result<Vec<String>> {
    match cfg.get_list::<String>(key)? {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::Config(format!("`{key}` must list at least one entry"))),
    }
}

const RESERVED_STEMS: [&str; 5] = ["truth", "cleaning_score", "manifest", "report", "predictions"];

/// Per-turbine CSVs in `dir` as `(turbine id, path)`, sorted by id. Files
/// with a dotted stem (`T01.labels.csv`) or a reserved name are skipped.
pub fn turbine_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if stem.contains('.') || RESERVED_STEMS.contains(&stem) {
            continue;
        }
        out.push((stem.to_string(), path));
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::invalid(format!("no turbine CSVs in {}", dir.display())));
    }
    Ok(out)
}

fn read_frames(dir: &Path) -> Result<Vec<RawScadaFrame>> {
    turbine_files(dir)?
        .iter()
        .map(|(id, path)| RawScadaFrame::read_csv_path(id, path))
        .collect()
}

/// Generate a synthetic plant: one CSV per turbine plus `truth.csv`.
/// `synth.seed` falls back to the global `seed`.
pub fn synth_stage(cfg: &KvConfig, out_dir: &Path) -> Result<StageOutput> {
    let mut sc = SynthConfig::default().apply_config(cfg)?;
    sc.seed = cfg.u64_or("synth.seed", seed_of(cfg)?)?;
    let plant = generate_plant(&sc)?;
    make_dir(out_dir)?;
    let mut out = StageOutput::default();
    for t in &plant {
        let path = out_dir.join(format!("{}.csv", t.frame.turbine_id));
        t.frame.write_csv_path(&path)?;
        out.artifacts.push(path);
    }
    let path = out_dir.join(TRUTH_FILE);
    let mut w = create(&path)?;
    write_truth_csv(&plant, &mut w)?;
    flush(w, &path)?;
    out.artifacts.push(path);
    let mut snap = cfg.clone();
    sc.write_config(&mut snap);
    snapshot(&snap, out_dir, "synth", &mut out)?;
    Ok(out)
}

/// Clean every turbine CSV in `input`.
///
/// Writes the kept rows (`<id>.csv`), per-row verdicts (`<id>.labels.csv`)
/// and the fitted statistics (`<id>.stats.cfg`). Statistics found next to
/// an input file are reused, so cleaning a cleaned directory changes
/// nothing. With `truth.csv` present, detection is scored per class.
pub fn clean_stage(cfg: &KvConfig, input: &Path, out_dir: &Path) -> Result<StageOutput> {
    let clean = CleanConfig::default().apply_config(cfg)?;
    let files = turbine_files(input)?;
    let mut jobs = Vec::new();
    for (id, path) in &files {
        let frame = RawScadaFrame::read_csv_path(id, path)?;
        let stats_path = input.join(format!("{id}.stats.cfg"));
        let stats = if stats_path.exists() {
            Some(CleaningStats::from_config(&KvConfig::load(&stats_path)?)?)
        } else {
            None
        };
        jobs.push((frame, stats));
    }
    let results = par_map(&jobs, threads_of(cfg)?, |(f, s)| clean_frame(f, &clean, s.as_ref()));
    let truth: Option<BTreeMap<String, (GroundTruth, Vec<i64>)>> = {
        let p = input.join(TRUTH_FILE);
        if p.exists() {
            Some(read_truth_csv(open(&p)?)?.into_iter().map(|(g, t)| (g.turbine_id.clone(), (g, t))).collect())
        } else {
            None
        }
    };

    make_dir(out_dir)?;
    let mut out = StageOutput::default();
    let mut scores = Vec::new();
    for ((frame, _), res) in jobs.iter().zip(results) {
        let res = res?;
        let id = &frame.turbine_id;
        out.warnings.extend(res.labels.warnings.iter().cloned());

        let path = out_dir.join(format!("{id}.csv"));
        res.cleaned().write_csv_path(&path)?;
        out.artifacts.push(path);

        let path = out_dir.join(format!("{id}.labels.csv"));
        let mut w = create(&path)?;
        res.labels.write_csv(&frame.timestamps, &mut w)?;
        flush(w, &path)?;
        out.artifacts.push(path);

        let path = out_dir.join(format!("{id}.stats.cfg"));
        let mut kv = KvConfig::new();
        res.stats.write_config(&mut kv);
        kv.save(&path)?;
        out.artifacts.push(path);

        if let Some((gt, ts)) = truth.as_ref().and_then(|t| t.get(id)) {
            if *ts != frame.timestamps {
                return Err(Error::invalid(format!("{TRUTH_FILE}: timestamps of {id} do not match its CSV")));
            }
            scores.push((id.clone(), cleaning_score(&res.detection, gt)?));
        }
    }
    if !scores.is_empty() {
        let all = CleaningScore::combine(&scores.iter().map(|(_, s)| s.clone()).collect::<Vec<_>>());
        scores.push(("all".to_string(), all));
        let path = out_dir.join(SCORE_FILE);
        let mut w = create(&path)?;
        write_scores(&scores, &mut w)?;
        flush(w, &path)?;
        out.artifacts.push(path);
    }
    let mut snap = cfg.clone();
    clean.write_config(&mut snap);
    snapshot(&snap, out_dir, "clean", &mut out)?;
    Ok(out)
}

/// `turbine_id,class,support,detected,flagged,precision,recall`; the NORMAL
/// row counts false rejections in `detected`.
fn write_scores(scores: &[(String, CleaningScore)], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["turbine_id", "class", "support", "detected", "flagged", "precision", "recall"])?;
    for (id, s) in scores {
        for c in s.classes.iter().chain([&s.overall]) {
            let class = if c.label == TruthLabel::Normal { "ANY" } else { c.label.name() };
            let precision = if c.precision_undefined { String::new() } else { c.precision.to_string() };
            w.write_record([
                id.clone(),
                class.to_string(),
                c.support.to_string(),
                c.detected.to_string(),
                c.flagged.to_string(),
                precision,
                c.recall.to_string(),
            ])?;
        }
        w.write_record([
            id.clone(),
            TruthLabel::Normal.name().to_string(),
            s.normal_total.to_string(),
            s.normal_rejected.to_string(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(SCORE_FILE, e))?;
    Ok(())
}

fn split_spec(cfg: &KvConfig) -> Result<SplitSpec> {
    match cfg.get_list::<f64>("dataset.split")? {
        None => Ok(SplitSpec::default()),
        Some(r) if r.len() == 3 => Ok(SplitSpec::Ratios([r[0], r[1], r[2]])),
        Some(r) => Err(Error::Config(format!("dataset.split needs 3 ratios, got {r:?}"))),
    }
}

pub fn strides_of(cfg: &KvConfig) -> Result<WindowStrides> {
    let d = WindowStrides::default();
    let s = WindowStrides {
        train: cfg.usize_or("dataset.stride.train", d.train)?,
        validation: cfg.usize_or("dataset.stride.validation", d.validation)?,
        test: cfg.usize_or("dataset.stride.test", d.test)?,
    };
    if s.train == 0 || s.validation == 0 || s.test == 0 {
        return Err(Error::Config(format!("window strides must be >= 1, got {s:?}")));
    }
    Ok(s)
}

/// Window the cleaned CSVs in `input` into train, validation and test
/// periods shared by all turbines. Writes `manifest.csv` and one sample
/// cache per split, each window stored as four normalized channel series.
pub fn dataset_stage(cfg: &KvConfig, input: &Path, out_dir: &Path) -> Result<StageOutput> {
    let window = cfg.usize_or("dataset.window", crate::clean::DEFAULT_WINDOW)?;
    let patch = cfg.usize_or("model.patch", crate::series::DEFAULT_PATCH)?;
    if window == 0 || patch == 0 || window % patch != 0 {
        return Err(Error::Config(format!("dataset.window {window} is not a multiple of model.patch {patch}")));
    }
    let strides = strides_of(cfg)?;
    let files = turbine_files(input)?;
    let frames = read_frames(input)?;
    let start = frames.iter().filter_map(|f| f.timestamps.first()).min().copied();
    let end = frames.iter().filter_map(|f| f.timestamps.last().map(|t| t + f.interval)).max();
    let (Some(start), Some(end)) = (start, end) else {
        return Err(Error::invalid(format!("{}: cleaned CSVs hold no rows", input.display())));
    };
    let bounds = split_spec(cfg)?.resolve(start, end)?;

    let mut out = StageOutput::default();
    let mut per_split: [Vec<(usize, WindowSample)>; 3] = Default::default();
    for (frame, (_, path)) in frames.iter().zip(&files) {
        let s = windowed_splits(frame, &OutlierLabeling::all_keep(frame.len()), &bounds, window, strides)?;
        out.warnings.extend(s.warnings);
        let source = path.display();
        for (k, ws) in [s.train, s.validation, s.test].into_iter().enumerate() {
            for w in ws {
                let offset = frame
                    .timestamps
                    .binary_search(&w.start)
                    .map_err(|_| Error::invalid(format!("{source}: window start {} not found", w.start)))?;
                per_split[k].push((offset, w));
            }
        }
    }

    make_dir(out_dir)?;
    let mut manifest = Vec::new();
    for (k, split) in SPLITS.iter().enumerate() {
        let mut seqs = Vec::new();
        for (offset, w) in &per_split[k] {
            manifest.push(ManifestEntry {
                sample_id: manifest.len(),
                split: split.to_string(),
                turbine_id: w.turbine_id.clone(),
                source: format!("{}.csv", w.turbine_id),
                offset: *offset,
                start: w.start,
                length: w.len(),
            });
            seqs.extend(to_s3(w)?);
        }
        let path = out_dir.join(format!("{split}.cache"));
        let mut f = create(&path)?;
        write_cache(&seqs, patch, &mut f)?;
        flush(f, &path)?;
        out.artifacts.push(path);
    }
    let path = out_dir.join(MANIFEST_FILE);
    let mut f = create(&path)?;
    write_manifest(&manifest, &mut f)?;
    flush(f, &path)?;
    out.artifacts.push(path);
    snapshot(cfg, out_dir, "dataset", &mut out)?;
    Ok(out)
}

/// Windows of one split of a dataset directory, in raw units.
pub fn load_split(dir: &Path, split: &str) -> Result<Vec<WindowSample>> {
    let path = dir.join(format!("{split}.cache"));
    let (seqs, _) = read_cache(open(&path)?)?;
    if seqs.len() % 4 != 0 {
        return Err(Error::invalid(format!("{}: {} series is not a whole number of windows", path.display(), seqs.len())));
    }
    seqs.chunks(4)
        .map(|group| {
            let first = &group[0];
            let aligned = group.iter().zip(Channel::ALL).all(|(q, c)| {
                q.channel == Some(c) && q.turbine_id == first.turbine_id && q.start == first.start
            });
            if !aligned {
                return Err(Error::invalid(format!("{}: series are not grouped by window", path.display())));
            }
            let data = group.iter().flat_map(|q| q.raw()).collect();
            WindowSample::new(first.turbine_id.clone(), first.start, SAMPLING_INTERVAL_SECS, data)
        })
        .collect()
}

pub fn load_dataset(dir: &Path) -> Result<ExperimentData> {
    Ok(ExperimentData {
        train: load_split(dir, "train")?,
        validation: load_split(dir, "validation")?,
        test: load_split(dir, "test")?,
    })
}

/// A dataset directory regrouped per turbine, sorted by id.
pub fn load_turbines(dir: &Path) -> Result<Vec<TurbineData>> {
    let data = load_dataset(dir)?;
    let mut by_id: BTreeMap<String, ExperimentData> = BTreeMap::new();
    let groups = [(data.train, 0), (data.validation, 1), (data.test, 2)];
    for (windows, k) in groups {
        for w in windows {
            let e = by_id.entry(w.turbine_id.clone()).or_default();
            [&mut e.train, &mut e.validation, &mut e.test][k].push(w);
        }
    }
    Ok(by_id
        .into_iter()
        .map(|(turbine_id, data)| TurbineData { turbine_id, data })
        .collect())
}

fn save_model(out_dir: &Path, spec: &NamedSpec, config: &ModelConfig, model: Forecaster, history: &TrainHistory, out: &mut StageOutput) -> Result<()> {
    make_dir(out_dir)?;
    let mut meta = KvConfig::new();
    meta.set("id", &spec.name);
    meta.set("mode", spec.train.mode.name());
    meta.set("seed", spec.train.seed);
    meta.set("best_epoch", history.best_epoch);
    meta.set("stop_reason", history.stop_reason.name());
    let path = out_dir.join(CHECKPOINT_FILE);
    save_checkpoint(
        &path,
        &Checkpoint {
            config: config.clone(),
            params: model.params,
            metadata: meta,
        },
    )?;
    out.artifacts.push(path);
    let path = out_dir.join(HISTORY_FILE);
    let mut w = create(&path)?;
    history.write_csv(&mut w)?;
    flush(w, &path)?;
    out.artifacts.push(path);
    Ok(())
}

fn regimes_of(cfg: &KvConfig) -> Result<Vec<Regime>> {
    list_or(cfg, "pretrain.regimes")?.iter().map(|r| Regime::from_name(r)).collect()
}

/// Pre-train a Timer on the synthetic regime corpus plus the training
/// windows of every directory in `data`. Validation uses those directories'
/// validation windows, or a held-out corpus draw when there are none.
pub fn pretrain_stage(cfg: &KvConfig, data: &[PathBuf], out_dir: &Path) -> Result<StageOutput> {
    let name = cfg.str_or("pretrain.spec", "timer").to_string();
    let spec = resolve_spec(cfg, &name, Some(TrainMode::Pretrain))?;
    let ModelConfig::Timer(timer) = &spec.model else {
        return Err(Error::Config(format!("pretrain.spec `{name}` must be a timer model")));
    };
    if spec.train_length % timer.patch != 0 {
        return Err(Error::Config(format!("{name}: train_length is not a multiple of the patch")));
    }
    let rows = spec.train_length / timer.patch;
    let regimes = regimes_of(cfg)?;
    let per_regime = cfg.usize_or("pretrain.samples_per_regime", 400)?;
    let corpus = pretrain_corpus(&regimes, per_regime, spec.train_length, spec.train.seed)?;
    let mut train_set = timer_dataset(&corpus, timer.patch, rows, timer.use_time_embedding, SAMPLING_INTERVAL_SECS)?;
    let mut val_set = Dataset::new(rows, timer.patch);
    for dir in data {
        let d = load_dataset(dir)?;
        train_set.extend(dataset_for(&spec.model, &cut_windows(&d.train, spec.train_length)?, rows, spec.norm)?)?;
        val_set.extend(dataset_for(&spec.model, &cut_windows(&d.validation, spec.train_length)?, rows, spec.norm)?)?;
    }
    if val_set.is_empty() {
        let held = pretrain_corpus(&regimes, (per_regime / 10).max(1), spec.train_length, spec.train.seed ^ 0x7A11_D0E5)?;
        val_set = timer_dataset(&held, timer.patch, rows, timer.use_time_embedding, SAMPLING_INTERVAL_SECS)?;
    }
    let outcome = train(&spec.model, None, &train_set, &val_set, &spec.train)?;
    let mut out = StageOutput::default();
    let model = Forecaster::new(spec.model.clone(), outcome.params);
    save_model(out_dir, &spec, &spec.model, model, &outcome.history, &mut out)?;
    snapshot(cfg, out_dir, "pretrain", &mut out)?;
    Ok(out)
}

/// Train spec `name` on a dataset directory from scratch, or fine-tune it
/// from `checkpoint`.
pub fn train_stage(
    cfg: &KvConfig,
    name: &str,
    mode: TrainMode,
    data: &Path,
    checkpoint: Option<&Path>,
    out_dir: &Path,
) -> Result<StageOutput> {
    let spec = resolve_spec(cfg, name, Some(mode))?;
    let init = match (mode, checkpoint) {
        (TrainMode::Finetune, None) => {
            return Err(Error::Config("fine-tuning needs a starting checkpoint".into()));
        }
        (TrainMode::Finetune, Some(path)) => Some(load_checkpoint(path, Some(&spec.model))?.params),
        (_, Some(_)) => {
            return Err(Error::Config(format!("a starting checkpoint only applies to fine-tuning, not {}", mode.name())));
        }
        (_, None) => None,
    };
    let d = load_dataset(data)?;
    let (model, history) = fit_model(&spec.model_spec(init), &d.train, &d.validation)?;
    let mut out = StageOutput::default();
    if history.stop_reason == StopReason::NonFiniteLoss {
        out.warnings.push(format!("{name}: training stopped on a non-finite loss; keeping the best epoch"));
    }
    save_model(out_dir, &spec, &spec.model, model, &history, &mut out)?;
    snapshot(cfg, out_dir, mode.name(), &mut out)?;
    Ok(out)
}

/// Forecast `horizon` steps past the last `eval.context` rows of a turbine
/// CSV. Those rows must be contiguous and complete.
pub fn forecast_stage(cfg: &KvConfig, checkpoint: &Path, input: &Path, horizon: usize, out_file: &Path) -> Result<StageOutput> {
    let ck = load_checkpoint(checkpoint, None)?;
    let id = input.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
    let frame = RawScadaFrame::read_csv_path(id, input)?;
    let context = cfg.usize_or("eval.context", EVAL_CONTEXT)?;
    let n = frame.len();
    if context == 0 || n < context {
        return Err(Error::invalid(format!("{}: {n} rows, need a context of {context}", input.display())));
    }
    let lo = n - context;
    if (lo..n - 1).any(|i| !frame.consecutive(i)) || frame.channels.iter().any(|c| c[lo..].iter().any(|v| v.is_nan())) {
        return Err(Error::invalid(format!(
            "{}: the last {context} rows must be contiguous and complete",
            input.display()
        )));
    }
    let ctx = WindowContext {
        channels: frame.channels.iter().map(|c| c[lo..].to_vec()).collect(),
        time: Some(TimeAnchor {
            start: frame.timestamps[lo],
            interval: frame.interval,
        }),
    };
    let f = Forecaster::new(ck.config, ck.params).forecast(&[ctx], horizon, 1)?;
    if let Some(dir) = out_file.parent().filter(|p| !p.as_os_str().is_empty()) {
        make_dir(dir)?;
    }
    let mut w = create(out_file)?;
    let names: Vec<&str> = Channel::ALL.iter().map(|c| c.name()).collect();
    write_predictions(&f[0], &names, &mut w)?;
    flush(w, out_file)?;
    Ok(StageOutput {
        artifacts: vec![out_file.to_path_buf()],
        warnings: Vec::new(),
    })
}

fn write_report(cfg: &KvConfig, report: &EvalReport, out_dir: &Path, stage: &str) -> Result<StageOutput> {
    let mut out = StageOutput {
        artifacts: render_report(report, out_dir)?,
        warnings: Vec::new(),
    };
    snapshot(cfg, out_dir, stage, &mut out)?;
    Ok(out)
}

/// Score checkpoints on the test split of a dataset directory.
pub fn eval_stage(cfg: &KvConfig, data: &Path, checkpoints: &[PathBuf], out_dir: &Path) -> Result<StageOutput> {
    if checkpoints.is_empty() {
        return Err(Error::Config("eval needs at least one checkpoint".into()));
    }
    let settings = eval_settings(cfg)?;
    let test = load_split(data, "test")?;
    let mut report = EvalReport::default();
    for path in checkpoints {
        let ck = load_checkpoint(path, None)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        let meta = crate::eval::RowMeta {
            model: ck.metadata.get("id").unwrap_or(stem).to_string(),
            mode: ck.metadata.get("mode").unwrap_or("unknown").to_string(),
            seed: ck.metadata.u64_or("seed", 0)?,
            data_fraction: 1.0,
            scope: "plant".to_string(),
        };
        let model = Forecaster::new(ck.config, ck.params);
        let scores = evaluate_horizons(&model, &test, &settings.horizons, settings.context, settings.threads)?;
        report.push_scores(&meta, &scores);
    }
    write_report(cfg, &report, out_dir, "eval")
}

fn specs_with_init(cfg: &KvConfig, key: &str, checkpoint: Option<&Path>) -> Result<Vec<crate::eval::ModelSpec>> {
    let mut specs = Vec::new();
    for name in list_or(cfg, key)? {
        let s = resolve_spec(cfg, &name, None)?;
        let init = if s.train.mode == TrainMode::Finetune {
            let path = checkpoint.ok_or_else(|| {
                Error::Config(format!("spec `{name}` fine-tunes and needs a pretrained checkpoint"))
            })?;
            Some(load_checkpoint(path, Some(&s.model))?.params)
        } else {
            None
        };
        specs.push(s.model_spec(init));
    }
    Ok(specs)
}

/// Data-volume ablation over `ablate.fractions`. With a pretrained
/// checkpoint, its zero-shot score is reported at every fraction.
pub fn ablate_stage(cfg: &KvConfig, data: &Path, checkpoint: Option<&Path>, out_dir: &Path) -> Result<StageOutput> {
    let settings = eval_settings(cfg)?;
    let plan = AblationPlan {
        fractions: cfg
            .get_list::<f64>("ablate.fractions")?
            .ok_or_else(|| Error::Config("ablate.fractions is not set".into()))?,
        seed: seed_of(cfg)?,
    };
    plan.validate()?;
    let specs = specs_with_init(cfg, "ablate.models", checkpoint)?;
    let d = load_dataset(data)?;
    let zero = match checkpoint {
        Some(p) => {
            let ck = load_checkpoint(p, None)?;
            Some(Forecaster::new(ck.config, ck.params))
        }
        None => None,
    };
    let report = run_ablation(
        &plan,
        &specs,
        &d,
        zero.as_ref().map(|m| ("timer-zero-shot", m as &dyn crate::eval::Predictor)),
        &settings,
    )?;
    write_report(cfg, &report, out_dir, "ablate")
}

/// Three one-turbine trials, each tested on every turbine. Writes the
/// averaged report plus `trial_<id>.csv` per trial.
pub fn one_turbine_stage(cfg: &KvConfig, data: &Path, checkpoint: Option<&Path>, out_dir: &Path) -> Result<StageOutput> {
    let settings = eval_settings(cfg)?;
    let ids = list_or(cfg, "one_turbine.turbines")?;
    let specs = specs_with_init(cfg, "one_turbine.models", checkpoint)?;
    let plant = load_turbines(data)?;
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let outcome = one_turbine_protocol(&id_refs, &plant, &specs, &settings)?;
    let mut out = write_report(cfg, &outcome.average, out_dir, "one-turbine")?;
    for (id, trial) in ids.iter().zip(&outcome.trials) {
        let path = out_dir.join(format!("trial_{id}.csv"));
        let mut w = create(&path)?;
        trial.write_csv(&mut w)?;
        flush(w, &path)?;
        out.artifacts.push(path);
    }
    Ok(out)
}

/// Merge report CSVs (or directories holding `report.csv`) and render them.
pub fn report_stage(cfg: &KvConfig, inputs: &[PathBuf], out_dir: &Path) -> Result<StageOutput> {
    if inputs.is_empty() {
        return Err(Error::Config("report needs at least one input report".into()));
    }
    let mut report = EvalReport::default();
    for p in inputs {
        let path = if p.is_dir() { p.join(REPORT_FILE) } else { p.clone() };
        report.extend(EvalReport::read_csv(open(&path)?)?);
    }
    write_report(cfg, &report, out_dir, "report")
}

use super::*;
use crate::clean::WindowSample;
use crate::inference::{Forecaster, MultiForecast, WindowContext};
use crate::models::{init_params, LstmConfig, ModelConfig, TimerConfig};
use crate::series::NormStats;
use crate::train::{NormScope, TrainConfig, TrainMode};

fn window(id: &str, k: usize, len: usize) -> WindowSample {
    let data = (0..4)
        .flat_map(|c| (0..len).map(move |t| ((t + 3 * k) as f64 * 0.4 + c as f64).sin() * (c + 1) as f64 + 0.02 * t as f64 + c as f64))
        .collect();
    WindowSample::new(id, (k * len * 600) as i64, 600, data).unwrap()
}

/// Returns the true continuation of whichever window a context came from.
struct Oracle(Vec<WindowSample>);

impl Predictor for Oracle {
    fn predict(&self, contexts: &[WindowContext], horizon: usize, _threads: usize) -> crate::Result<Vec<MultiForecast>> {
        Ok(contexts
            .iter()
            .map(|ctx| {
                let n = ctx.channels[0].len();
                let w = self.0.iter().find(|w| w.channel_at(0)[..n] == ctx.channels[0][..]).unwrap();
                let mut normalized = Vec::new();
                let mut raw = Vec::new();
                let mut stats = Vec::new();
                for c in 0..4 {
                    let st = NormStats::fit(&ctx.channels[c]).unwrap();
                    let truth = w.channel_at(c)[n..n + horizon].to_vec();
                    normalized.push(st.normalize(&truth));
                    raw.push(truth);
                    stats.push(st);
                }
                MultiForecast { normalized, raw, stats, iterations: 1 }
            })
            .collect())
    }
}

struct Zero;

impl Predictor for Zero {
    fn predict(&self, contexts: &[WindowContext], horizon: usize, _threads: usize) -> crate::Result<Vec<MultiForecast>> {
        Ok(contexts
            .iter()
            .map(|ctx| {
                let stats: Vec<NormStats> = ctx.channels.iter().map(|c| NormStats::fit(c).unwrap()).collect();
                MultiForecast {
                    normalized: vec![vec![0.0; horizon]; 4],
                    raw: stats.iter().map(|s| vec![s.mean; horizon]).collect(),
                    stats,
                    iterations: 1,
                }
            })
            .collect())
    }
}

#[test]
fn mse_examples() {
    assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert_eq!(mse(&[3.0, 4.0, 5.0], &[1.0, 2.0, 3.0]).unwrap(), 4.0);
    assert_eq!(mse(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 2.5);
    assert!(mse(&[], &[]).is_err());
    assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn oracle_scores_zero_and_zero_model_scores_target_variance() {
    let ws: Vec<WindowSample> = (0..5).map(|k| window("T", k, 40)).collect();
    let s = evaluate_horizons(&Oracle(ws.clone()), &ws, &[1, 4, 8], 32, 1).unwrap();
    assert!(s.mse.iter().all(|&m| m == 0.0));
    assert!(s.raw_mse.iter().all(|r| r.iter().all(|&m| m == 0.0)));

    let z = evaluate_horizons(&Zero, &ws, &[8], 32, 1).unwrap();
    let mut sq = 0.0;
    for w in &ws {
        for c in 0..4 {
            let st = NormStats::fit(&w.channel_at(c)[..32]).unwrap();
            sq += st.normalize(&w.channel_at(c)[32..40]).iter().map(|v| v * v).sum::<f64>();
        }
    }
    assert!((z.mse[0] - sq / (5.0 * 4.0 * 8.0)).abs() < 1e-12);
}

#[test]
fn short_windows_are_skipped_and_counted() {
    let mut ws: Vec<WindowSample> = (0..3).map(|k| window("T", k, 40)).collect();
    ws.push(window("T", 9, 35));
    let s = evaluate_horizons(&Zero, &ws, &[1, 8], 32, 1).unwrap();
    assert_eq!((s.n_windows, s.skipped), (3, 1));
    assert!(evaluate_horizons(&Zero, &ws, &[], 32, 1).is_err());
}

fn tiny_timer() -> ModelConfig {
    ModelConfig::Timer(TimerConfig { layers: 1, model_dim: 8, ffn_hidden: 16, heads: 2, patch: 4, context_tokens: 8, ..TimerConfig::tiny() })
}

#[test]
fn sliced_horizons_match_dedicated_calls_and_window_averages() {
    let cfg = tiny_timer();
    let f = Forecaster::new(cfg.clone(), init_params(&cfg, 2).unwrap());
    let ws: Vec<WindowSample> = (0..6).map(|k| window("T", k, 40)).collect();
    let all = evaluate_horizons(&f, &ws, &[1, 6, 8], 32, 1).unwrap();
    let one = evaluate_horizons(&f, &ws, &[1], 32, 1).unwrap();
    assert_eq!(all.mse[0], one.mse[0]);
    let per_window: f64 = ws
        .iter()
        .map(|w| evaluate_horizons(&f, std::slice::from_ref(w), &[1, 6, 8], 32, 1).unwrap().mse[1])
        .sum::<f64>()
        / ws.len() as f64;
    assert!((per_window - all.mse[1]).abs() < 1e-12);
}

fn spec(id: &str, cfg: ModelConfig, seed: u64) -> ModelSpec {
    ModelSpec {
        id: id.into(),
        config: cfg,
        train: TrainConfig { lr: 1e-2, epochs: 2, batch_size: 4, seed, ..TrainConfig::for_mode(TrainMode::Scratch) },
        init: None,
        train_length: 16,
        norm: NormScope::Window,
    }
}

fn data(id: &str) -> ExperimentData {
    ExperimentData {
        train: (0..6).map(|k| window(id, k, 32)).collect(),
        validation: (6..8).map(|k| window(id, k, 32)).collect(),
        test: (8..11).map(|k| window(id, k, 40)).collect(),
    }
}

fn settings(horizons: &[usize]) -> EvalSettings {
    EvalSettings { horizons: horizons.to_vec(), context: 32, threads: 1 }
}

#[test]
fn ablation_is_nested_and_full_fraction_matches_comparison() {
    for seed in 0..5 {
        let small = nested_subset(50, 0.1, seed);
        let large = nested_subset(50, 0.5, seed);
        assert_eq!((small.len(), large.len()), (5, 25));
        assert!(small.iter().all(|i| large.contains(i)));
    }
    let d = data("T");
    let specs = [spec("Timer", tiny_timer(), 1)];
    let pre = Forecaster::new(tiny_timer(), init_params(&tiny_timer(), 9).unwrap());
    let plan = AblationPlan { fractions: vec![0.1, 0.5, 1.0], seed: 4 };
    let rep = run_ablation(&plan, &specs, &d, Some(("Pretrained", &pre)), &settings(&[1, 4])).unwrap();
    assert_eq!(rep.rows.len(), 3 * 2 * 2);
    // 10% of 6 windows is no window at all.
    assert!(rep.rows[..2].iter().all(|r| r.skipped));
    let zero: Vec<f64> = rep.rows.iter().filter(|r| r.meta.mode == "zero-shot").map(|r| r.mse).collect();
    assert_eq!(zero.len(), 6);
    assert!((0..6).all(|i| zero[i] == zero[i % 2]));
    let base = compare_models(&specs, &d, &settings(&[1, 4]), "plant").unwrap();
    let full: Vec<_> = rep.rows.iter().filter(|r| r.meta.data_fraction == 1.0 && r.meta.mode != "zero-shot").cloned().collect();
    assert_eq!(full, base.rows);
    assert!(AblationPlan { fractions: vec![0.5, 0.2], seed: 0 }.validate().is_err());
}

#[test]
fn one_turbine_protocol_shape_and_symmetry() {
    let plant: Vec<TurbineData> = ["A", "B", "C", "D"]
        .iter()
        .map(|id| TurbineData { turbine_id: id.to_string(), data: data("X") })
        .collect();
    let lstm = ModelConfig::Lstm(LstmConfig { hidden_units: 4, layers: 1, dropout: 0.0, input_dim: 4 });
    let specs = [spec("Timer", tiny_timer(), 3), spec("LSTM", lstm, 3)];
    let out = one_turbine_protocol(&["A", "B", "C"], &plant, &specs, &settings(&[1, 2, 4])).unwrap();
    assert_eq!(out.average.rows.len(), 2 * 3);
    // Clone turbines give equal trials, so the average equals each trial.
    for t in &out.trials {
        for (a, b) in t.rows.iter().zip(&out.average.rows) {
            assert!((a.mse - b.mse).abs() < 1e-12);
        }
    }
    assert!(one_turbine_protocol(&["A", "B"], &plant, &specs, &settings(&[1])).is_err());
    assert!(one_turbine_protocol(&["A", "B", "Z"], &plant, &specs, &settings(&[1])).is_err());
}

#[test]
fn single_horizon_gives_one_row_per_model() {
    let d = data("T");
    let s = evaluate_horizons(&Oracle(d.test.clone()), &d.test, &HORIZONS[..1], 32, 1).unwrap();
    let mut rep = EvalReport::default();
    rep.push_scores(&RowMeta { model: "oracle".into(), mode: "none".into(), seed: 0, data_fraction: 1.0, scope: "plant".into() }, &s);
    assert_eq!(rep.rows.len(), 1);
    assert_eq!(rep.rows[0].mse, 0.0);
}

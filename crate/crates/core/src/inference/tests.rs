use super::*;
use crate::autodiff::{Graph, Tensor};
use crate::models::{forward, init_params, lstm_forward};

fn timer() -> TimerConfig {
    TimerConfig { layers: 2, model_dim: 16, ffn_hidden: 32, heads: 2, patch: 4, context_tokens: 3, ..TimerConfig::tiny() }
}

fn wave(n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * 0.37 + phase).sin() + 0.1 * i as f64).collect()
}

#[test]
fn iteration_counts() {
    for (h, want) in [(1, 1), (6, 1), (12, 1), (24, 1), (48, 1), (96, 1), (97, 2), (192, 2)] {
        assert_eq!(iterations_for(h, 96), want);
    }
    let cfg = timer();
    let p = init_params(&ModelConfig::Timer(cfg.clone()), 1).unwrap();
    for h in [1, 4, 5, 9] {
        let r = forecast(&p, &cfg, &ForecastRequest::new(wave(12, 0.0), h)).unwrap();
        assert_eq!(r.predictions.len(), h);
        assert_eq!(r.iterations, h.div_ceil(4));
    }
}

#[test]
fn rejects_bad_requests() {
    let cfg = timer();
    let p = init_params(&ModelConfig::Timer(cfg.clone()), 1).unwrap();
    assert!(forecast(&p, &cfg, &ForecastRequest::new(wave(12, 0.0), 0)).is_err());
    assert!(forecast(&p, &cfg, &ForecastRequest::new(wave(10, 0.0), 4)).is_err());
    let timed = TimerConfig { use_time_embedding: true, ..cfg };
    let p = init_params(&ModelConfig::Timer(timed.clone()), 1).unwrap();
    assert!(forecast(&p, &timed, &ForecastRequest::new(wave(12, 0.0), 4)).is_err());
    let req = ForecastRequest { time: Some(TimeAnchor { start: 0, interval: 600 }), ..ForecastRequest::new(wave(12, 0.0), 4) };
    assert!(forecast(&p, &timed, &req).is_ok());
}

#[test]
fn zero_head_forecasts_zero() {
    let cfg = timer();
    let mut p = init_params(&ModelConfig::Timer(cfg.clone()), 1).unwrap();
    p.get_mut("head.w").unwrap().data_mut().fill(0.0);
    let r = forecast(&p, &cfg, &ForecastRequest::new(wave(12, 0.0), 11)).unwrap();
    assert!(r.predictions.iter().all(|&v| v == 0.0));
}

#[test]
fn rolling_context_and_prefixes() {
    let cfg = timer();
    let p = init_params(&ModelConfig::Timer(cfg.clone()), 4).unwrap();
    let ctx = wave(12, 0.3);
    let long = forecast(&p, &cfg, &ForecastRequest::new(ctx.clone(), 8)).unwrap().predictions;
    let first = forecast(&p, &cfg, &ForecastRequest::new(ctx.clone(), 4)).unwrap().predictions;
    assert_eq!(first, long[..4]);
    // The second iteration sees the two newest context tokens and the first prediction.
    let mut rolled = ctx[4..].to_vec();
    rolled.extend_from_slice(&first);
    let second = forecast(&p, &cfg, &ForecastRequest::new(rolled, 4)).unwrap().predictions;
    assert_eq!(second, long[4..]);
    for h in 1..8 {
        let r = forecast(&p, &cfg, &ForecastRequest::new(ctx.clone(), h)).unwrap().predictions;
        assert_eq!(r, long[..h]);
    }
}

#[test]
fn batching_is_bitwise_neutral() {
    let cfg = timer();
    let p = init_params(&ModelConfig::Timer(cfg.clone()), 5).unwrap();
    let reqs: Vec<ForecastRequest> = (0..5).map(|k| ForecastRequest::new(wave(12, k as f64), 3 + k)).collect();
    let batched = forecast_batch(&p, &cfg, &reqs).unwrap();
    for (r, b) in reqs.iter().zip(&batched) {
        assert_eq!(&forecast(&p, &cfg, r).unwrap(), b);
    }
}

fn context(len: usize) -> WindowContext {
    WindowContext::new((0..4).map(|c| wave(len, c as f64).iter().map(|v| v * (c + 1) as f64 + 3.0).collect()).collect())
}

#[test]
fn channel_independence() {
    let cfg = timer();
    let p = init_params(&ModelConfig::Timer(cfg.clone()), 6).unwrap();
    let ctx = context(12);
    let out = forecast_multivariate(&p, &cfg, &ctx, 6).unwrap();
    assert_eq!(out.normalized.len(), 4);
    assert!(out.normalized.iter().all(|c| c.len() == 6));

    let mut permuted = ctx.clone();
    permuted.channels.reverse();
    let pout = forecast_multivariate(&p, &cfg, &permuted, 6).unwrap();
    for c in 0..4 {
        assert_eq!(pout.normalized[c], out.normalized[3 - c]);
        assert_eq!(pout.raw[c], out.raw[3 - c]);
    }
    let mut dup = ctx.clone();
    dup.channels[2] = dup.channels[1].clone();
    let dout = forecast_multivariate(&p, &cfg, &dup, 6).unwrap();
    assert_eq!(dout.normalized[1], dout.normalized[2]);
    assert_eq!(dout.normalized[0], out.normalized[0]);
}

#[test]
fn raw_copy_uses_context_stats() {
    let cfg = timer();
    let p = init_params(&ModelConfig::Timer(cfg.clone()), 6).unwrap();
    let out = forecast_multivariate(&p, &cfg, &context(12), 5).unwrap();
    for c in 0..4 {
        let st = NormStats::fit(&context(12).channels[c]).unwrap();
        assert_eq!(out.stats[c], st);
        assert_eq!(out.raw[c], denormalize(&out.normalized[c], st));
    }
}

#[test]
fn transformer_mixes_channels() {
    let cfg = BaselineTransformerConfig { decoder: timer(), channels: 4 };
    let p = init_params(&ModelConfig::Transformer(cfg.clone()), 2).unwrap();
    let ctx = context(12);
    let out = transformer_forecast(&p, &cfg, &ctx, 6).unwrap();
    assert_eq!(out.iterations, 2);
    assert!(out.normalized.iter().all(|c| c.len() == 6));
    let mut changed = ctx.clone();
    changed.channels[0][11] += 5.0;
    let cout = transformer_forecast(&p, &cfg, &changed, 6).unwrap();
    assert_ne!(cout.normalized[3], out.normalized[3]);
}

fn lstm() -> LstmConfig {
    LstmConfig { hidden_units: 5, layers: 2, dropout: 0.1, input_dim: 4 }
}

#[test]
fn lstm_stepper_matches_graph() {
    let cfg = lstm();
    let p = init_params(&ModelConfig::Lstm(cfg.clone()), 3).unwrap();
    let steps = 9;
    let x: Vec<f64> = (0..steps * 4).map(|i| (i as f64 * 0.71).cos()).collect();
    let mut g = Graph::eval();
    let bound = p.register(&mut g, false);
    let xv = g.constant(Tensor::new(vec![1, steps, 4], x.clone()).unwrap());
    let y = lstm_forward(&mut g, &bound, &cfg, xv).unwrap();
    let want = g.value(y).data().to_vec();
    let mut stepper = LstmStepper::new(&p, &cfg).unwrap();
    for t in 0..steps {
        let got = stepper.step(&x[t * 4..(t + 1) * 4]);
        for c in 0..4 {
            assert!((got[c] - want[t * 4 + c]).abs() < 1e-12);
        }
    }
}

#[test]
fn lstm_recursion() {
    let cfg = lstm();
    let p = init_params(&ModelConfig::Lstm(cfg.clone()), 3).unwrap();
    let ctx = context(20);
    let long = lstm_forecast(&p, &cfg, &ctx, 10).unwrap();
    for h in [1, 4, 9] {
        let short = lstm_forecast(&p, &cfg, &ctx, h).unwrap();
        for c in 0..4 {
            assert_eq!(short.normalized[c], long.normalized[c][..h]);
        }
    }
    // Step h only sees the context and earlier predictions: replaying them
    // through the graph as inputs reproduces every step.
    let (values, _) = ctx.normalized().unwrap();
    let mut seq: Vec<f64> = (0..20).flat_map(|t| values.iter().map(move |v| v[t])).collect();
    for h in 0..9 {
        seq.extend((0..4).map(|c| long.normalized[c][h]));
    }
    let mut g = Graph::eval();
    let bound = p.register(&mut g, false);
    let xv = g.constant(Tensor::new(vec![1, 29, 4], seq).unwrap());
    let y = forward(&mut g, &bound, &ModelConfig::Lstm(cfg.clone()), xv, None).unwrap();
    let out = g.value(y).data();
    for h in 0..10 {
        for c in 0..4 {
            assert!((out[(19 + h) * 4 + c] - long.normalized[c][h]).abs() < 1e-10);
        }
    }

    let mut zero = p.clone();
    zero.tensors_mut().iter_mut().for_each(|t| t.data_mut().fill(0.0));
    let z = lstm_forecast(&zero, &cfg, &ctx, 5).unwrap();
    assert!(z.normalized.iter().all(|c| c.iter().all(|&v| v == 0.0)));
}

#[test]
fn forecaster_ignores_thread_count() {
    let cfg = ModelConfig::Timer(timer());
    let f = Forecaster::new(cfg.clone(), init_params(&cfg, 8).unwrap());
    let ctxs: Vec<WindowContext> = (0..40).map(|k| {
        let mut c = context(12);
        c.channels[0][0] += k as f64;
        c
    }).collect();
    let a = f.forecast(&ctxs, 7, 1).unwrap();
    let b = f.forecast(&ctxs, 7, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[5], forecast_multivariate(&f.params, &timer(), &ctxs[5], 7).unwrap());
}

#[test]
fn prediction_csv_round_trip() {
    let out = MultiForecast::new(vec![vec![0.5, -1.25]], vec![NormStats { mean: 2.0, std: 4.0 }], 1);
    let mut buf = Vec::new();
    write_predictions(&out, &["power"], &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text, "channel,step,value_normalized,value_raw\npower,1,0.5,4\npower,2,-1.25,-3\n");
    let rows = read_predictions(&buf[..]).unwrap();
    assert_eq!(rows[1].value_raw, -3.0);
    assert!(write_predictions(&out, &["a", "b"], Vec::new()).is_err());
}

use autogp::data::{metrics, synth, SynthKind, SynthParams, TimeSeriesMatrix};
use autogp::diff::Tensor;
use autogp::forecaster::{
    evaluate, train, ForecastConfig, KernelStrategy, TrainOutcome, TrainedModel, WindowConfig,
};
use autogp::kernel_search::KernelStructure;

fn config(length: usize, epochs: usize) -> ForecastConfig {
    let mut cfg = ForecastConfig::default();
    cfg.window = WindowConfig::new(length, 1, 1);
    cfg.model.patch = Some(2);
    cfg.train.epochs = epochs;
    cfg.train.lr = 1e-2;
    cfg
}

fn fixed(text: &str) -> KernelStrategy {
    KernelStrategy::Fixed(text.parse::<KernelStructure>().unwrap())
}

fn fit(series: &TimeSeriesMatrix, kernel: &str, cfg: &ForecastConfig) -> TrainOutcome {
    train(series, None, &fixed(kernel), cfg).unwrap()
}

fn sine(t: usize) -> TimeSeriesMatrix {
    synth(SynthKind::Sine, t, &SynthParams::default(), 0.05, 7).unwrap()
}

fn last_window(series: &TimeSeriesMatrix, length: usize) -> Tensor {
    series.rows(series.len() - length, length).values
}

#[test]
fn constant_series_is_predicted_exactly() {
    let series = TimeSeriesMatrix::from_columns(&[vec![3.25; 40]]).unwrap();
    let out = fit(&series, "SE", &config(4, 20));
    let f = out.model.predict(&last_window(&series, 4), 5).unwrap();
    for &v in f.mean.data() {
        assert!((v - 3.25).abs() < 1e-3, "{v}");
    }
}

#[test]
fn linear_trend_is_learned_with_lin() {
    let y: Vec<f64> = (0..80).map(|i| 2.0 + 0.1 * i as f64).collect();
    let series = TimeSeriesMatrix::from_columns(&[y.clone()]).unwrap();
    let out = fit(&series, "LIN", &config(4, 150));
    let mut abs = 0.0;
    for r in 4..y.len() {
        let w = series.rows(r - 4, 4).values;
        abs += (out.model.predict(&w, 1).unwrap().mean.item() - y[r]).abs();
    }
    let mae = abs / (y.len() - 4) as f64;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    assert!(mae < 0.05 * std, "MAE {mae} vs std {std}");
}

#[test]
fn same_seed_gives_same_trajectory() {
    let series = sine(60);
    let cfg = config(6, 15);
    let a = fit(&series, "SE + PER", &cfg);
    let b = fit(&series, "SE + PER", &cfg);
    assert_eq!(a.losses, b.losses);
    let mut other = cfg.clone();
    other.seed = 1;
    assert_ne!(fit(&series, "SE + PER", &other).losses, a.losses);
}

#[test]
fn loss_settles_over_the_last_epochs() {
    let series = sine(80);
    let out = fit(&series, "SE", &config(6, 100));
    let losses = &out.losses;
    assert!(losses.last().unwrap() < &losses[0]);
    let tail = losses.len() - losses.len() / 10;
    let mut best = losses[..tail].iter().cloned().fold(f64::INFINITY, f64::min);
    for &l in &losses[tail..] {
        assert!(l <= best + 1e-3 * best.abs().max(1.0), "{l} above running minimum {best}");
        best = best.min(l);
    }
}

#[test]
fn save_and_load_predict_identically() {
    let series = sine(60);
    let out = fit(&series, "SE * PER + LIN", &config(6, 10));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    out.model.save(&path).unwrap();
    let back = TrainedModel::load(&path).unwrap();
    assert_eq!(back.fingerprint(), out.model.fingerprint());
    assert_eq!(back.kernel_text(), out.model.kernel_text());
    let w = last_window(&series, 6);
    let a = out.model.predict(&w, 8).unwrap();
    let b = back.predict(&w, 8).unwrap();
    assert_eq!(a.mean.data(), b.mean.data());
    assert_eq!(a.std.data(), b.std.data());
}

#[test]
fn tampered_model_file_is_rejected() {
    let series = sine(40);
    let out = fit(&series, "SE", &config(4, 3));
    let text = out.model.to_json().unwrap();
    let tampered = text.replacen("\"fingerprint\": \"", "\"fingerprint\": \"0", 1);
    assert_ne!(tampered, text);
    assert!(TrainedModel::from_json(&tampered).is_err());
    assert!(TrainedModel::from_json(&text.replacen("\"version\": 1", "\"version\": 99", 1)).is_err());
}

#[test]
fn longer_horizons_extend_shorter_ones() {
    let series = sine(60);
    let out = fit(&series, "SE + PER", &config(6, 10));
    let w = last_window(&series, 6);
    for k in 1..6 {
        let short = out.model.predict(&w, k).unwrap();
        let long = out.model.predict(&w, k + 1).unwrap();
        assert_eq!(short.mean.data(), &long.mean.data()[..k]);
        assert_eq!(short.std.data(), &long.std.data()[..k]);
    }
}

#[test]
fn one_step_forecast_is_one_posterior() {
    let series = sine(60);
    let out = fit(&series, "RQ", &config(6, 10));
    let m = &out.model;
    let w = last_window(&series, 6);
    let f = m.predict(&w, 1).unwrap();
    let post = m.posterior_normalized(&m.normalizer.apply(&w)).unwrap();
    assert_eq!(f.mean.item(), m.normalizer.invert_value(0, post.mean[0]));
    assert_eq!(f.std.item(), post.std()[0] * m.normalizer.std[0]);
}

#[test]
fn second_step_sees_first_prediction() {
    let series = sine(60);
    let out = fit(&series, "SE", &config(6, 10));
    let m = &out.model;
    let w = last_window(&series, 6);
    let two = m.predict(&w, 2).unwrap();

    let z = m.normalizer.apply(&w);
    let p1 = m.posterior_normalized(&z).unwrap();
    let mut next = z.data()[1..].to_vec();
    next.push(p1.mean[0]);
    let p2 = m.posterior_normalized(&Tensor::matrix(6, 1, next).unwrap()).unwrap();
    assert_eq!(two.mean.at(1, 0), m.normalizer.invert_value(0, p2.mean[0]));
    assert!(two.std.data().iter().all(|&s| s >= 0.0));
}

#[test]
fn wrong_window_shape_is_an_error() {
    let series = sine(40);
    let out = fit(&series, "SE", &config(4, 2));
    assert!(out.model.predict(&last_window(&series, 3), 1).is_err());
    assert!(out.model.predict(&last_window(&series, 4), 0).is_err());
}

#[test]
fn error_scales_with_normalization() {
    let series = sine(80);
    let out = fit(&series, "SE", &config(6, 10));
    let m = &out.model;
    let test = synth(SynthKind::Sine, 30, &SynthParams::default(), 0.05, 9).unwrap();
    let direct = evaluate(m, &test.values, 3).unwrap();

    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for o in 6..=test.len() - 3 {
        let f = m.predict(&test.rows(o - 6, 6).values, 3).unwrap();
        for k in 0..3 {
            pred.push(m.normalizer.apply_value(0, f.mean.at(k, 0)));
            truth.push(m.normalizer.apply_value(0, test.values.at(o + k, 0)));
        }
    }
    let normalized = metrics(&truth, &pred).unwrap();
    let rescaled = normalized.mae * m.normalizer.std[0];
    assert!((rescaled - direct.mae).abs() < 1e-8, "{rescaled} vs {}", direct.mae);
}

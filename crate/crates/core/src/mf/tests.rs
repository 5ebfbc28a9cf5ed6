use super::*;
use crate::problems::{make_dataset, make_lf_dataset, Axis, BenchFidelity, Benchmark, Grid, ProblemId};
use crate::tensor::{Activation, Tensor};
use crate::wavelets::WaveletFamily;
use crate::wno::init_params;

fn small_config() -> WnoConfig {
    WnoConfig {
        width: 8,
        n_layers: 2,
        levels: 2,
        wavelet: WaveletFamily::Db2,
        proj_hidden: 16,
        ..WnoConfig::default()
    }
}

fn quick_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        decay_every: 0,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn b1_spec(n: usize) -> ProblemSpec {
    ProblemSpec {
        hf_extent: n,
        lf_extent: n,
        ..ProblemSpec::new(ProblemId::B1)
    }
}

fn b1_sample(k: f64, n: usize) -> Sample {
    let grid = Grid::new(vec![Axis::nodes(0.0, 1.0, n)]);
    let a = GridFunction::from_fn(grid, 1, |x| Benchmark::B1.input(k, x, None)).unwrap();
    let u = GridFunction::new(
        a.grid.clone(),
        1,
        (0..n)
            .map(|p| Benchmark::B1.eval(BenchFidelity::High, &[a.values[p]], &a.grid.point(p)).unwrap())
            .collect(),
    )
    .unwrap();
    Sample {
        lf_input: Some(a.clone()),
        input: a,
        output: u,
    }
}

#[test]
fn b1_residual_at_origin() {
    let data = Dataset {
        fidelity: Fidelity::High,
        samples: vec![b1_sample(10.0, 16)],
    };
    let r = residual_targets(&data, &LfSource::native(&b1_spec(16))).unwrap();
    assert!((r.samples[0].output.values[0] + 1.0).abs() < 1e-15);
    // the residual is 0.25 a - x everywhere
    let s = &r.samples[0];
    for p in 0..16 {
        let (a, x) = (s.input.values[p], s.input.grid.point(p)[0]);
        assert!((s.output.values[p] - (0.25 * a - x)).abs() < 1e-13);
    }
}

#[test]
fn identical_sources_give_zero_residuals() {
    let spec = b1_spec(16);
    let mut data = make_dataset(&spec, 3, 5).unwrap();
    for s in &mut data.samples {
        s.output = lf_solution(&spec, s.lf_input.as_ref().unwrap()).unwrap();
    }
    let r = residual_targets(&data, &LfSource::native(&spec)).unwrap();
    assert!(r.samples.iter().all(|s| s.output.values.iter().all(|&v| v == 0.0)));
}

#[test]
fn poisson_residual_matches_scripted_subtraction() {
    let spec = ProblemSpec::new(ProblemId::Poisson);
    let data = make_dataset(&spec, 2, 11).unwrap();
    let r = residual_targets(&data, &LfSource::native(&spec)).unwrap();
    for (s, res) in data.samples.iter().zip(&r.samples) {
        let coarse = crate::problems::solve_poisson_fd(s.lf_input.as_ref().unwrap()).unwrap();
        let m = coarse.values.len() - 1;
        for p in 0..s.output.values.len() {
            let x = p as f64 / 99.0;
            let i = ((x * m as f64).floor() as usize).min(m - 1);
            let t = x * m as f64 - i as f64;
            let lf = (1.0 - t) * coarse.values[i] + t * coarse.values[i + 1];
            assert!((res.output.values[p] - (s.output.values[p] - lf)).abs() < 1e-12);
        }
    }
}

#[test]
fn augmented_channels() {
    let s = b1_sample(12.0, 8);
    let lf = lf_solution(&b1_spec(8), &s.input).unwrap();
    let aug = build_augmented_input(&s.input, &lf).unwrap();
    assert_eq!(aug.channels, 3);
    assert_eq!(aug.channel(0), &s.input.values[..]);
    assert_eq!(aug.channel(1), &s.input.grid.coordinate_channels()[..]);
    assert_eq!(aug.channel(2), &lf.values[..]);

    let spec = ProblemSpec {
        hf_extent: 8,
        lf_extent: 8,
        ..ProblemSpec::new(ProblemId::B3)
    };
    let d = make_dataset(&spec, 1, 0).unwrap();
    let r = residual_targets(&d, &LfSource::native(&spec)).unwrap();
    assert_eq!(r.samples[0].input.channels, 5);

    let other = b1_sample(12.0, 9);
    assert!(matches!(build_augmented_input(&s.input, &other.output), Err(MfError::Grid(_))));
}

#[test]
fn missing_lf_input_is_reported_with_index() {
    let mut data = Dataset {
        fidelity: Fidelity::High,
        samples: vec![b1_sample(10.0, 8), b1_sample(11.0, 8)],
    };
    data.samples[1].lf_input = None;
    match residual_targets(&data, &LfSource::native(&b1_spec(8))) {
        Err(MfError::Sample { index: 1, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn two_samples_are_memorized() {
    let data = Dataset {
        fidelity: Fidelity::High,
        samples: vec![b1_sample(10.0, 16), b1_sample(13.0, 16)],
    };
    let train = TrainConfig {
        loss: LossKind::Mse,
        adam: crate::tensor::AdamConfig {
            lr: 3e-3,
            ..Default::default()
        },
        decay_every: 500,
        decay_factor: 0.5,
        ..quick_train(2000)
    };
    let out = train_hf_only(&data, &small_config(), &train).unwrap();
    assert!(out.history.last().unwrap() < &out.history[0]);
    let plain = plain_targets(&data).unwrap();
    let inputs: Vec<_> = plain.samples.iter().map(|s| s.input.clone()).collect();
    let pred = out.model.predict(&inputs).unwrap();
    let refs: Vec<_> = data.samples.iter().map(|s| s.output.clone()).collect();
    let mse = crate::metrics::mse(&pred, &refs).unwrap();
    assert!(mse < 1e-6, "{mse}");
}

#[test]
fn zero_targets_loss_is_mean_square_prediction() {
    let mut data = make_dataset(&b1_spec(16), 3, 1).unwrap();
    for s in &mut data.samples {
        s.output = s.output.map(|_| 0.0);
    }
    let plain = plain_targets(&data).unwrap();
    let config = fit_config(&small_config(), &plain).unwrap();
    let train = TrainConfig {
        loss: LossKind::Mse,
        batch_size: 3,
        ..quick_train(1)
    };
    let out = train_wno(&plain, &config, &train).unwrap();
    let inputs: Vec<_> = plain.samples.iter().map(|s| s.input.clone()).collect();
    let init = TrainedWno {
        params: init_params(&config, &[16], train.seed).unwrap(),
        input_norm: Normalizer::fit(&inputs.iter().collect::<Vec<_>>()),
        output_norm: Normalizer::identity(1),
    };
    let pred = init.predict(&inputs).unwrap();
    let n: usize = pred.iter().map(|p| p.values.len()).sum();
    let ms = pred.iter().flat_map(|p| &p.values).map(|v| v * v).sum::<f64>() / n as f64;
    assert!((out.history[0] - ms).abs() <= 1e-12 * ms, "{} vs {ms}", out.history[0]);
}

#[test]
fn training_is_deterministic() {
    let data = plain_targets(&make_dataset(&b1_spec(16), 6, 2).unwrap()).unwrap();
    let config = fit_config(&small_config(), &data).unwrap();
    let a = train_wno(&data, &config, &quick_train(5)).unwrap();
    let b = train_wno(&data, &config, &quick_train(5)).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
    let c = train_wno(&data, &config, &TrainConfig { seed: 4, ..quick_train(5) }).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn best_epoch_weights_are_returned() {
    let data = plain_targets(&make_dataset(&b1_spec(16), 4, 2).unwrap()).unwrap();
    let config = fit_config(&small_config(), &data).unwrap();
    let out = train_wno(&data, &config, &quick_train(20)).unwrap();
    let min = out.history.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(out.history[out.best_epoch], min);
}

#[test]
fn training_errors() {
    let empty = Dataset {
        fidelity: Fidelity::High,
        samples: Vec::new(),
    };
    assert!(matches!(train_wno(&empty, &small_config(), &quick_train(1)), Err(MfError::EmptyDataset)));

    let data = plain_targets(&make_dataset(&b1_spec(16), 2, 2).unwrap()).unwrap();
    let config = fit_config(&small_config(), &data).unwrap();
    let wild = TrainConfig {
        adam: crate::tensor::AdamConfig {
            lr: 1e300,
            ..Default::default()
        },
        ..quick_train(5)
    };
    assert!(matches!(train_wno(&data, &config, &wild), Err(MfError::Diverged { .. })));
    let wrong = WnoConfig {
        in_channels: 5,
        ..config
    };
    assert!(matches!(train_wno(&data, &wrong, &quick_train(1)), Err(MfError::Config(_))));
}

#[test]
fn lf_network_is_frozen_during_hf_training() {
    let spec = ProblemSpec {
        lf_extent: 8,
        ..ProblemSpec::new(ProblemId::Heat)
    };
    let lf_data = make_lf_dataset(&spec, 6, 100).unwrap();
    let (source, _) = train_lf_wno(&lf_data, &small_config(), &quick_train(3)).unwrap();
    let LfSource::Wno(net) = &source else { panic!() };
    let before = net.params.clone();
    let hf = make_dataset(&spec, 4, 0).unwrap();
    let probe = hf.samples[0].lf_input.clone().unwrap();
    let q1 = source.query(&probe).unwrap();
    let (mf, _) = train_mf(&hf, source.clone(), &small_config(), &quick_train(3)).unwrap();
    let LfSource::Wno(after) = &mf.lf else { panic!() };
    assert_eq!(after.params, before);
    assert_eq!(net.params, before);
    assert_eq!(source.query(&probe).unwrap(), q1);
}

#[test]
fn zero_network_predicts_lf_plus_bias() {
    let s = b1_sample(11.0, 16);
    let spec = b1_spec(16);
    let config = WnoConfig {
        in_channels: 3,
        activation: Activation::Gelu,
        ..small_config()
    };
    let mut params = init_params(&config, &[16], 0).unwrap();
    for t in &mut params.tensors {
        *t = Tensor::zeros(t.shape().to_vec());
    }
    *params.tensors.last_mut().unwrap() = Tensor::new(vec![1], vec![0.75]).unwrap();
    let mf = MfSurrogate {
        lf: LfSource::native(&spec),
        net: TrainedWno {
            params,
            input_norm: Normalizer::identity(3),
            output_norm: Normalizer::identity(1),
        },
    };
    let lf = lf_solution(&spec, &s.input).unwrap();
    let pred = mf_predict(&mf, &s.input, &s.input).unwrap();
    for (p, l) in pred.values.iter().zip(&lf.values) {
        assert_eq!(*p, l + 0.75);
    }
}

#[test]
fn prediction_is_lf_plus_residual() {
    let spec = b1_spec(16);
    let hf = make_dataset(&spec, 4, 9).unwrap();
    let (mf, _) = train_mf(&hf, LfSource::native(&spec), &small_config(), &quick_train(3)).unwrap();
    let s = &hf.samples[0];
    let (lf, res) = mf.predict_parts(&s.input, s.lf_input.as_ref().unwrap()).unwrap();
    let pred = mf.predict(&s.input, s.lf_input.as_ref().unwrap()).unwrap();
    let direct = mf.net.predict_one(&build_augmented_input(&s.input, &lf).unwrap()).unwrap();
    assert_eq!(res, direct);
    for ((p, l), r) in pred.values.iter().zip(&lf.values).zip(&res.values) {
        assert_eq!(*p, l + r);
    }
    assert_eq!(pred, mf.predict(&s.input, s.lf_input.as_ref().unwrap()).unwrap());
    let batch = Surrogate::Mf(mf.clone()).predict_dataset(&hf).unwrap();
    for (b, s) in batch.iter().zip(&hf.samples) {
        let one = mf.predict(&s.input, s.lf_input.as_ref().unwrap()).unwrap();
        for (x, y) in b.values.iter().zip(&one.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

fn field(values: Vec<f64>) -> GridFunction {
    let grid = Grid::new(vec![Axis::nodes(0.0, 1.0, values.len())]);
    GridFunction::new(grid, 1, values).unwrap()
}

#[test]
fn linear_ar_recovers_affine_links() {
    let lows: Vec<Vec<f64>> = vec![vec![0.3, -1.0, 2.5, 4.0], vec![1.5, 0.2, -0.7, 3.0], vec![-2.0, 0.0, 1.0, 0.5]];
    let pairs: Vec<_> = lows
        .iter()
        .map(|l| (field(l.clone()), field(l.iter().map(|v| 2.0 * v + 1.0).collect())))
        .collect();
    let m = fit_linear_ar(&pairs).unwrap();
    assert!((m.rho - 2.0).abs() < 1e-14);
    assert!(m.delta.values.iter().all(|d| (d - 1.0).abs() < 1e-14));
    let pred = m.predict(&pairs[1].0).unwrap();
    for (p, h) in pred.values.iter().zip(&pairs[1].1.values) {
        assert!((p - h).abs() < 1e-13);
    }

    let same: Vec<_> = lows.iter().map(|l| (field(l.clone()), field(l.clone()))).collect();
    let m = fit_linear_ar(&same).unwrap();
    assert!((m.rho - 1.0).abs() < 1e-14);
    assert!(m.delta.values.iter().all(|d| d.abs() < 1e-14));
}

#[test]
fn linear_ar_degenerate_and_too_small() {
    let l = field(vec![1.0, 2.0]);
    let pairs = vec![(l.clone(), field(vec![3.0, 0.0])), (l.clone(), field(vec![5.0, 2.0]))];
    let m = fit_linear_ar(&pairs).unwrap();
    assert_eq!(m.rho, 0.0);
    assert_eq!(m.delta.values, vec![4.0, 1.0]);
    assert!(matches!(
        fit_linear_ar(&pairs[..1]),
        Err(MfError::TooFewSamples { need: 2, got: 1 })
    ));
}

#[test]
fn normalizer_round_trip() {
    let a = field(vec![1.0, 2.0, 3.0]);
    let b = field(vec![5.0, 5.0, 7.0]);
    let n = Normalizer::fit(&[&a, &b]);
    let z = n.apply(&a);
    let back = n.invert(&z);
    for (x, y) in back.values.iter().zip(&a.values) {
        assert!((x - y).abs() < 1e-14);
    }
    let flat = Normalizer::fit(&[&field(vec![2.0, 2.0])]);
    assert_eq!(flat.std, vec![1.0]);
    assert_eq!(flat.mean, vec![2.0]);
}

#[test]
fn source_kind_strings() {
    for k in [LfSourceKind::Analytic, LfSourceKind::Solver, LfSourceKind::Wno] {
        assert_eq!(k.to_string().parse::<LfSourceKind>().unwrap(), k);
    }
    assert!("exact".parse::<LfSourceKind>().is_err());
}

//! Finite-difference, instrumented-count and optimizer checks for the MLP.

use mtl_core::datasets::{Normalizer, Sample};
use mtl_core::geometry::{Area, Point2};
use mtl_core::mlp::{
    count_multiplications, l2_penalty, predict_coordinates, predict_count, train, AdamState, BatchTargets,
    ForwardCache, Gradients, Head, Mlp, Model, TargetData, TrainConfig, TrainingData,
};
use mtl_core::rng::SeedSchedule;
use proptest::prelude::*;
use rand::Rng;

fn objective(net: &Mlp, x: &[f64], batch: usize, targets: BatchTargets<'_>, l2: f64) -> f64 {
    let mut cache = ForwardCache::default();
    let mut g = Gradients::zeros_like(net);
    net.forward_batch(x, batch, &mut cache);
    net.backward(&mut cache, targets, l2, &mut g) + l2_penalty(net, l2)
}

fn param(net: &mut Mlp, l: usize, is_bias: bool, k: usize) -> &mut f64 {
    let layer = &mut net.layers_mut()[l];
    if is_bias {
        &mut layer.biases[k]
    } else {
        &mut layer.weights[k]
    }
}

fn check_gradients(head: Head, weighted: bool) {
    let mut rng = SeedSchedule::new(42).stream("fd", head as u64);
    let dims = [3, 5, 4, if head == Head::Softmax { 3 } else { 2 }];
    let mut net = Mlp::init_xavier(&dims, head, &mut rng).unwrap();
    for layer in net.layers_mut() {
        for b in &mut layer.biases {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    let batch = 4;
    let x: Vec<f64> = (0..batch * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
    let reg: Vec<f64> = (0..batch * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cls = vec![0usize, 2, 1, 2];
    let weights = [400.0, 900.0];
    let targets = match head {
        Head::Linear if weighted => BatchTargets::WeightedRegression { targets: &reg, weights: &weights },
        Head::Linear => BatchTargets::Regression(&reg),
        Head::Softmax => BatchTargets::Classes(&cls),
    };
    let l2 = 0.05;

    let mut cache = ForwardCache::default();
    let mut grads = Gradients::zeros_like(&net);
    net.forward_batch(&x, batch, &mut cache);
    net.backward(&mut cache, targets, l2, &mut grads);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for l in 0..net.layers().len() {
        for (is_bias, len) in [(false, net.layers()[l].weights.len()), (true, net.layers()[l].biases.len())] {
            for k in 0..len {
                let orig = *param(&mut net, l, is_bias, k);
                *param(&mut net, l, is_bias, k) = orig + h;
                let up = objective(&net, &x, batch, targets, l2);
                *param(&mut net, l, is_bias, k) = orig - h;
                let down = objective(&net, &x, batch, targets, l2);
                *param(&mut net, l, is_bias, k) = orig;
                let numeric = (up - down) / (2.0 * h);
                let g = &grads.layers[l];
                let analytic = if is_bias { g.biases[k] } else { g.weights[k] };
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst < 1e-5, "{head:?}: worst relative gradient error {worst:e}");
}

#[test]
fn gradients_match_finite_differences_linear_head() {
    check_gradients(Head::Linear, false);
}

#[test]
fn gradients_match_finite_differences_weighted_linear_head() {
    check_gradients(Head::Linear, true);
}

#[test]
fn gradients_match_finite_differences_softmax_head() {
    check_gradients(Head::Softmax, false);
}

#[test]
fn zero_error_batch_gradients() {
    let mut rng = SeedSchedule::new(3).stream("zero", 0);
    let net = Mlp::init_xavier(&[3, 4, 2], Head::Linear, &mut rng).unwrap();
    let x = [0.3, -0.2, 0.9, 1.0, 0.5, -0.5];
    let mut cache = ForwardCache::default();
    let out = net.forward_batch(&x, 2, &mut cache).to_vec();
    let mut g = Gradients::zeros_like(&net);
    net.backward(&mut cache, BatchTargets::Regression(&out), 0.0, &mut g);
    assert_eq!(g.max_abs(), 0.0);

    net.forward_batch(&x, 2, &mut cache);
    net.backward(&mut cache, BatchTargets::Regression(&out), 0.01, &mut g);
    for (gl, nl) in g.layers.iter().zip(net.layers()) {
        for (gw, w) in gl.weights.iter().zip(&nl.weights) {
            assert_eq!(*gw, 0.01 * w);
        }
        assert!(gl.biases.iter().all(|b| *b == 0.0));
    }
}

/// Forward pass over the augmented input `[a, 1]`, counting every product.
fn instrumented_forward(net: &Mlp, x: &[f64], count: &mut u64) -> Vec<f64> {
    let mut a = x.to_vec();
    let last = net.layers().len() - 1;
    for (l, layer) in net.layers().iter().enumerate() {
        let mut aug = a.clone();
        aug.push(1.0);
        let mut z = vec![0.0; layer.outputs];
        for (o, zo) in z.iter_mut().enumerate() {
            for (i, ai) in aug.iter().enumerate() {
                let w = if i < layer.inputs { layer.weight(i, o) } else { layer.biases[o] };
                *zo += ai * w;
                *count += 1;
            }
        }
        a = if l < last { z.iter().map(|v| mtl_core::mlp::elu(*v)).collect() } else { z };
    }
    a
}

#[test]
fn reference_architecture_count() {
    assert_eq!(count_multiplications(&[16, 128, 128, 128, 2]), 35458);
    let mut rng = SeedSchedule::new(1).stream("count", 0);
    let net = Mlp::init_xavier(&[16, 128, 128, 128, 2], Head::Linear, &mut rng).unwrap();
    let mut n = 0;
    let x: Vec<f64> = (0..16).map(|i| i as f64 * 0.1 - 0.8).collect();
    let out = instrumented_forward(&net, &x, &mut n);
    assert_eq!(n, 35458);
    let fast = net.forward(&x).unwrap();
    for (a, b) in out.iter().zip(&fast) {
        assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn multiplication_count_matches_instrumented_forward(
        dims in proptest::collection::vec(1usize..24, 2..6),
        seed in any::<u64>(),
    ) {
        let mut rng = SeedSchedule::new(seed).stream("arch", 0);
        let net = Mlp::init_xavier(&dims, Head::Linear, &mut rng).unwrap();
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut n = 0;
        instrumented_forward(&net, &x, &mut n);
        prop_assert_eq!(n, count_multiplications(&dims));
        prop_assert_eq!(net.count_multiplications(), n);
    }
}

#[test]
fn adam_first_steps() {
    let mut rng = SeedSchedule::new(8).stream("adam", 0);
    let base = Mlp::init_xavier(&[3, 2], Head::Linear, &mut rng).unwrap();
    let cfg = TrainConfig::default();

    let mut net = base.clone();
    let mut st = AdamState::new(&net);
    let zero = Gradients::zeros_like(&net);
    st.step(&mut net, &zero, &cfg);
    assert_eq!(net, base);

    let mut grads = Gradients::zeros_like(&base);
    for l in &mut grads.layers {
        l.weights.iter_mut().enumerate().for_each(|(i, g)| *g = if i % 2 == 0 { 0.7 } else { -3.0 });
        l.biases.iter_mut().for_each(|g| *g = 0.02);
    }
    let mut net = base.clone();
    let mut st = AdamState::new(&net);
    st.step(&mut net, &grads, &cfg);
    for ((new, old), g) in net.layers()[0].weights.iter().zip(&base.layers()[0].weights).zip(&grads.layers[0].weights) {
        let delta = old - new;
        assert!((delta.abs() - cfg.learning_rate).abs() < 1e-9 * cfg.learning_rate.max(1.0));
        assert_eq!(delta.signum(), g.signum());
    }

    let (mut a, mut b) = (base.clone(), base.clone());
    let (mut sa, mut sb) = (AdamState::new(&a), AdamState::new(&b));
    for _ in 0..2 {
        sa.step(&mut a, &grads, &cfg);
        sb.step(&mut b, &grads, &cfg);
    }
    assert_eq!(a, b);
    assert_eq!(sa, sb);
}

/// Linear net, MSE, full batch: loss must not increase over the first steps.
#[test]
fn convex_toy_loss_non_increasing() {
    let mut rng = SeedSchedule::new(2).stream("convex", 0);
    let n = 32;
    let x: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x.chunks(3).map(|r| 0.5 * r[0] - 1.5 * r[1] + 0.25 * r[2] + 0.1).collect();
    let mut net = Mlp::init_xavier(&[3, 1], Head::Linear, &mut rng).unwrap();
    let cfg = TrainConfig { learning_rate: 1e-3, l2: 0.0, ..TrainConfig::default() };
    let mut st = AdamState::new(&net);
    let mut cache = ForwardCache::default();
    let mut g = Gradients::zeros_like(&net);
    let mut last = f64::INFINITY;
    for _ in 0..10 {
        net.forward_batch(&x, n, &mut cache);
        let loss = net.backward(&mut cache, BatchTargets::Regression(&y), 0.0, &mut g);
        assert!(loss <= last, "{loss} > {last}");
        last = loss;
        st.step(&mut net, &g, &cfg);
    }
}

fn toy_regression(n: usize) -> (TrainingData, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = SeedSchedule::new(10).stream("toy", 0);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ys: Vec<Vec<f64>> =
        xs.iter().map(|x| vec![0.5 + 0.2 * x[0] - 0.1 * x[1], 0.5 + 0.15 * x[2] + 0.05 * x[3]]).collect();
    let data = TrainingData {
        inputs: xs.concat(),
        features: 4,
        targets: TargetData::Regression(ys.concat()),
        output_weights: vec![],
    };
    (data, xs, ys)
}

#[test]
fn overfits_small_linear_problem_and_is_deterministic() {
    let (data, _, _) = toy_regression(10);
    let empty =
        TrainingData { inputs: vec![], features: 4, targets: TargetData::Regression(vec![]), output_weights: vec![] };
    let cfg =
        TrainConfig { epochs: 2000, l2: 0.0, batch_size: 10, learning_rate: 1e-3, seed: 5, ..TrainConfig::default() };
    let run = || {
        let mut rng = SeedSchedule::new(1).stream("init", 0);
        let mut net = Mlp::init_xavier(&[4, 16, 16, 2], Head::Linear, &mut rng).unwrap();
        let hist = train(&mut net, &data, &empty, &cfg).unwrap();
        (net, hist)
    };
    let (net, hist) = run();
    assert_eq!(hist.val_loss.len(), 2000);
    assert_eq!(hist.train_loss.len(), 2000);
    assert!(data.loss(&net) < 1e-3, "train mse {}", data.loss(&net));
    let (net2, hist2) = run();
    assert_eq!(net, net2);
    assert_eq!(hist, hist2);
}

#[test]
fn divergence_is_reported() {
    let (data, _, _) = toy_regression(10);
    let cfg = TrainConfig { epochs: 50, learning_rate: 1e300, batch_size: 5, ..TrainConfig::default() };
    let mut rng = SeedSchedule::new(1).stream("init", 0);
    let mut net = Mlp::init_xavier(&[4, 8, 2], Head::Linear, &mut rng).unwrap();
    let err = train(&mut net, &data, &data, &cfg).unwrap_err();
    assert!(matches!(err, mtl_core::Error::Diverged { .. }), "{err}");
}

#[test]
fn overfit_pipeline_recovers_training_labels() {
    let area = Area::square(20.0).unwrap();
    let mut rng = SeedSchedule::new(77).stream("samples", 0);
    let samples: Vec<Sample> = (0..8)
        .map(|_| Sample {
            rss: (0..4).map(|_| rng.random_range(-70.0..-30.0)).collect(),
            coords: vec![Point2::new(rng.random_range(2.0..18.0), rng.random_range(2.0..18.0))],
        })
        .collect();
    let norm = Normalizer::fit(&samples, area).unwrap();
    let data = Model::regression_data(&norm, &samples);
    let empty =
        TrainingData { inputs: vec![], features: 4, targets: TargetData::Regression(vec![]), output_weights: vec![] };
    let mut init = SeedSchedule::new(2).stream("init", 0);
    let mut net = Mlp::init_xavier(&[4, 32, 32, 2], Head::Linear, &mut init).unwrap();
    let cfg = TrainConfig { epochs: 3000, l2: 0.0, batch_size: 8, learning_rate: 2e-3, ..TrainConfig::default() };
    train(&mut net, &data, &empty, &cfg).unwrap();
    let model = Model { net, norm };
    for s in &samples {
        let est = predict_coordinates(&model, &s.rss, 1).unwrap();
        assert!(est.coords[0].distance(s.coords[0]) < 0.1, "{:?} vs {:?}", est.coords[0], s.coords[0]);
    }
}

#[test]
fn classifier_learns_noiseless_counts() {
    use mtl_core::datasets::{generate_dataset, GenConfig};
    use mtl_core::propagation::{grid_layout, PropagationParams};
    let layout = grid_layout(16, Area::square(20.0).unwrap()).unwrap();
    let params = PropagationParams { shadow_variance_db: 0.0, ..PropagationParams::indoor_defaults() };
    let ds = generate_dataset(
        &layout,
        &params,
        &GenConfig { samples_per_count: 100, max_tx_count: 4 },
        &SeedSchedule::new(6),
        "train",
    )
    .unwrap();
    let norm = Normalizer::fit(&ds.samples, layout.area()).unwrap();
    let data = Model::classification_data(&norm, &ds.samples);
    let empty =
        TrainingData { inputs: vec![], features: 16, targets: TargetData::Classes(vec![]), output_weights: vec![] };
    let mut init = SeedSchedule::new(6).stream("init", 0);
    let mut net = Mlp::init_xavier(&[16, 128, 128, 128, 4], Head::Softmax, &mut init).unwrap();
    let cfg = TrainConfig { epochs: 300, l2: 0.0, learning_rate: 1e-3, ..TrainConfig::default() };
    train(&mut net, &data, &empty, &cfg).unwrap();
    let model = Model { net, norm };
    let correct = ds.samples.iter().filter(|s| predict_count(&model, &s.rss).unwrap().0 == s.tx_count()).count();
    let acc = correct as f64 / ds.len() as f64;
    assert!(acc >= 0.99, "training accuracy {acc}");
}

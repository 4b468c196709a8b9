mod common;

use autobalance_core::balance::{
    differential_identity_gram, differential_identity_neuron, differential_identity_shared, snapshot,
    total_layer_drift,
};
use autobalance_core::flow::{self, Integrator, Meters, RunOptions, StepSchedule};
use autobalance_core::homonet::{Activation, Layer, Network, SharedLayer, Training};
use autobalance_core::rng;
use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn neuron_identity_halves_agree(seed in any::<u64>()) {
        let (net, data) = random_problem(seed);
        for h in 0..net.depth() - 1 {
            for i in 0..net.layers()[h].shape().0 {
                let (l, r) = differential_identity_neuron(&net, &data, h, i).unwrap();
                prop_assert!((l - r).abs() <= 1e-10 * (1.0 + l.abs()), "h={h} i={i}: {l} vs {r}");
            }
        }
    }

    #[test]
    fn gram_identity_vanishes_on_linear_nets(seed in any::<u64>(), depth in 2usize..=4) {
        let mut g = rng::seeded(seed);
        let dims: Vec<usize> = (0..=depth).map(|k| 1 + ((seed >> (4 * k)) % 8) as usize).collect();
        let net = Network::random_dense(&dims, vec![Activation::Linear; depth - 1], &vec![0.6; depth], &mut g).unwrap();
        let data = random_data(&mut g, dims[0], dims[depth], 12);
        for h in 0..depth - 1 {
            let res = differential_identity_gram(&net, &data, h).unwrap();
            let scale = 1.0 + net.layers()[h].param_norm_sq();
            prop_assert!(res.norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn layer_diff_is_sum_of_neuron_diffs(seed in any::<u64>()) {
        let (net, _) = random_problem(seed);
        for j in snapshot(&net).junctions {
            let sum: f64 = j.neuron_diffs.iter().sum();
            prop_assert!((sum - j.layer_diff).abs() <= 1e-12 * (1.0 + j.layer_diff.abs()));
        }
    }

    #[test]
    fn shared_identity_on_convolutional_nets(seed in any::<u64>()) {
        let (net, data) = conv_problem(seed);
        for h in 0..2 {
            let (l, r) = differential_identity_shared(&net, &data, h).unwrap();
            prop_assert!(rel(l, r) <= 1e-10 || (l - r).abs() <= 1e-14);
        }
    }

    #[test]
    fn scalar_chain_one_step_drift_is_exact(w1 in -2.0f64..2.0, w2 in -2.0f64..2.0, x in -2.0f64..2.0, y in -3.0f64..3.0, eta in 1e-4f64..0.05) {
        let net = Network::new(
            vec![Layer::dense(nalgebra::dmatrix![w1]), Layer::dense(nalgebra::dmatrix![w2])],
            vec![Activation::Linear],
        ).unwrap();
        let data = autobalance_core::homonet::Dataset::new(nalgebra::dmatrix![x], nalgebra::dmatrix![y]).unwrap();
        let r = w2 * w1 * x - y;
        let (g1, g2) = (r * w2 * x, r * w1 * x);
        let traj = flow::run(&Training::new(&net, &data), net.weights.clone(), &StepSchedule::constant(eta).unwrap(), RunOptions::new(1, 1), &Meters::none()).unwrap();
        let after = net.with_weights(traj.final_params);
        let drift = snapshot(&after).junctions[0].layer_diff - snapshot(&net).junctions[0].layer_diff;
        let want = eta * eta * (g1 * g1 - g2 * g2);
        prop_assert!((drift - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }
}

#[test]
fn shared_identity_matches_dense_layer_sums() {
    let (net, data) = random_problem(5);
    let layers = net
        .layers()
        .iter()
        .map(|l| Layer::Shared(SharedLayer::dense(&l.matrix())))
        .collect();
    let shared = Network::new(layers, net.activations.clone()).unwrap();
    for h in 0..net.depth() - 1 {
        let (l, r) = differential_identity_shared(&shared, &data, h).unwrap();
        let width = net.layers()[h].shape().0;
        let (mut sl, mut sr) = (0.0, 0.0);
        for i in 0..width {
            let (a, b) = differential_identity_neuron(&net, &data, h, i).unwrap();
            sl += a;
            sr += b;
        }
        assert!(rel(l, sl) <= 1e-12 && rel(r, sr) <= 1e-12);
    }
}

fn endpoint(net: &Network, data: &autobalance_core::homonet::Dataset, eta: f64, total: f64, integrator: Integrator) -> Network {
    let steps = (total / eta).round() as usize;
    let opts = RunOptions::new(steps, steps).with_integrator(integrator);
    let traj = flow::run(&Training::new(net, data), net.weights.clone(), &StepSchedule::constant(eta).unwrap(), opts, &Meters::none()).unwrap();
    net.with_weights(traj.final_params)
}

fn drift_at(net: &Network, data: &autobalance_core::homonet::Dataset, eta: f64, total: f64, integrator: Integrator) -> f64 {
    total_layer_drift(&snapshot(net), &snapshot(&endpoint(net, data, eta, total, integrator)))
}

/// Largest change of any single layer diff.
fn max_junction_drift(net: &Network, data: &autobalance_core::homonet::Dataset, eta: f64, integrator: Integrator) -> f64 {
    let (a, b) = (snapshot(net), snapshot(&endpoint(net, data, eta, 1.0, integrator)));
    a.layer_diffs().iter().zip(b.layer_diffs()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn euler_drift_halves_with_step_size() {
    for seed in 0..5 {
        let (net, data) = linear_problem(seed, &[4, 5, 5, 3], 16);
        let (a, b) = (drift_at(&net, &data, 0.01, 1.0, Integrator::GradientDescent), drift_at(&net, &data, 0.005, 1.0, Integrator::GradientDescent));
        let ratio = a / b;
        assert!((1.6..=2.4).contains(&ratio), "seed {seed}: ratio {ratio}");
    }
}

#[test]
fn rk4_drift_is_tiny_on_linear_nets() {
    for seed in 0..8 {
        let (net, data) = linear_problem_scaled(seed, &[4, 5, 5, 3], 16, 0.5);
        let d = max_junction_drift(&net, &data, 0.01, Integrator::Rk4);
        assert!(d <= 1e-8, "seed {seed}: drift {d}");
        let euler = max_junction_drift(&net, &data, 0.01, Integrator::GradientDescent);
        assert!(d < euler);
    }
}

#[test]
fn balanced_runs_are_deterministic() {
    let (net, data) = random_problem(44);
    let run = || {
        flow::run(&Training::new(&net, &data), net.weights.clone(), &StepSchedule::constant(0.01).unwrap(), RunOptions::new(50, 5), &Meters::none()).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_params, b.final_params);
}

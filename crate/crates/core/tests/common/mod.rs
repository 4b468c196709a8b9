#![allow(dead_code)]

use autobalance_core::homonet::{Activation, Dataset, Layer, Network, SharedLayer};
use autobalance_core::rng::{self, SeededRng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn activation(rng: &mut SeededRng) -> Activation {
    match rng.random_range(0..3) {
        0 => Activation::Linear,
        1 => Activation::Relu,
        _ => Activation::leaky_relu(0.1).unwrap(),
    }
}

/// Random dense net with depth 2..=4, widths 1..=8, and a dataset of up to
/// 16 samples.
pub fn random_problem(seed: u64) -> (Network, Dataset) {
    let mut g = rng::seeded(seed);
    let depth = g.random_range(2..=4);
    let dims: Vec<usize> = (0..=depth).map(|_| g.random_range(1..=8)).collect();
    let acts = (0..depth - 1).map(|_| activation(&mut g)).collect();
    let stds: Vec<f64> = dims.windows(2).map(|w| 1.0 / (w[0] as f64).sqrt()).collect();
    let net = Network::random_dense(&dims, acts, &stds, &mut g).unwrap();
    let m = g.random_range(1..=16);
    let data = random_data(&mut g, dims[0], dims[depth], m);
    (net, data)
}

pub fn linear_problem(seed: u64, dims: &[usize], samples: usize) -> (Network, Dataset) {
    linear_problem_scaled(seed, dims, samples, 1.0)
}

/// Linear net whose inputs have standard deviation `x_std`.
pub fn linear_problem_scaled(seed: u64, dims: &[usize], samples: usize, x_std: f64) -> (Network, Dataset) {
    let mut g = rng::seeded(seed);
    let acts = vec![Activation::Linear; dims.len() - 2];
    let stds: Vec<f64> = dims.windows(2).map(|w| 1.0 / (w[0] as f64).sqrt()).collect();
    let net = Network::random_dense(dims, acts, &stds, &mut g).unwrap();
    let data = Dataset::new(
        rng::gaussian_matrix(dims[0], samples, x_std, &mut g),
        rng::gaussian_matrix(*dims.last().unwrap(), samples, 1.0, &mut g),
    )
    .unwrap();
    (net, data)
}

pub fn random_data(g: &mut SeededRng, d_in: usize, d_out: usize, m: usize) -> Dataset {
    Dataset::new(
        rng::gaussian_matrix(d_in, m, 1.0, g),
        rng::gaussian_matrix(d_out, m, 1.0, g),
    )
    .unwrap()
}

/// Random sparse pattern with `params` shared parameters.
pub fn random_shared(g: &mut SeededRng, out: usize, inp: usize, params: usize) -> SharedLayer {
    let pattern = (0..out * inp).map(|_| g.random_range(0..=params)).collect();
    SharedLayer::new(out, inp, pattern, rng::gaussian_vector(params, 0.7, g)).unwrap()
}

/// A ReLU net whose middle layer is a 1-D convolution.
pub fn conv_problem(seed: u64) -> (Network, Dataset) {
    let mut g = rng::seeded(seed);
    let kernel = rng::gaussian_vector(3, 0.6, &mut g);
    let conv = SharedLayer::conv1d(6, kernel).unwrap();
    let first = Layer::dense(rng::gaussian_matrix(8, 4, 0.5, &mut g));
    let last = Layer::dense(rng::gaussian_matrix(2, 6, 0.5, &mut g));
    let net = Network::new(
        vec![first, Layer::Shared(conv), last],
        vec![Activation::Relu, activation(&mut g)],
    )
    .unwrap();
    let data = random_data(&mut g, 4, 2, 10);
    (net, data)
}

/// Copies a flat parameter vector into every layer of `net`.
pub fn set_flat(net: &Network, flat: &[f64]) -> Network {
    let mut out = net.clone();
    let mut k = 0;
    for layer in &mut out.weights.0 {
        for p in layer.free_params_mut() {
            *p = flat[k];
            k += 1;
        }
    }
    out
}

pub fn flat(net: &Network) -> Vec<f64> {
    net.layers().iter().flat_map(|l| l.free_params().to_vec()).collect()
}

pub fn flat_stack(layers: &[Layer]) -> Vec<f64> {
    layers.iter().flat_map(|l| l.free_params().to_vec()).collect()
}

/// Forward pass by explicit loops with clamping, independent of the
/// library's batched implementation.
pub fn brute_forward(mats: &[DMatrix<f64>], acts: &[Activation], x: &DVector<f64>) -> DVector<f64> {
    let mut a = x.clone();
    for (h, w) in mats.iter().enumerate() {
        let mut z = DVector::zeros(w.nrows());
        for i in 0..w.nrows() {
            let mut s = 0.0;
            for j in 0..w.ncols() {
                s += w[(i, j)] * a[j];
            }
            z[i] = s;
        }
        if h < acts.len() {
            z = z.map(|v| match acts[h] {
                Activation::Linear => v,
                Activation::Relu => v.max(0.0),
                Activation::LeakyRelu(s) => {
                    if v >= 0.0 {
                        v
                    } else {
                        s * v
                    }
                }
            });
        }
        a = z;
    }
    a
}

pub fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

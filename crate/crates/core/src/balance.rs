//! Layer-balance quantities and the pointwise identities behind their
//! conservation under gradient flow.
//!
//! Junction `h` (0-based) sits between layer `h` and layer `h + 1`, i.e.
//! after activation `h`. A network with `N` layers has `N - 1` junctions.

use std::io::Write;

use nalgebra::DMatrix;

use crate::flow::fmt17;
use crate::homonet::{Dataset, Layer, Network};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionBalance {
    pub junction: usize,
    /// `|W^(h)[i,:]|^2 - |W^(h+1)[:,i]|^2` for each hidden neuron `i`.
    pub neuron_diffs: Vec<f64>,
    /// `|W^(h)|_F^2 - |W^(h+1)|_F^2` on the effective matrices.
    pub layer_diff: f64,
    /// `W^(h) W^(h)^T - W^(h+1)^T W^(h+1)`, only at linear junctions.
    pub gram_diff: Option<DMatrix<f64>>,
    /// `|v^(h)|^2 - |v^(h+1)|^2` on the free parameters (dense layers count
    /// every entry as free).
    pub shared_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceSnapshot {
    pub junctions: Vec<JunctionBalance>,
}

impl BalanceSnapshot {
    pub fn layer_diffs(&self) -> Vec<f64> {
        self.junctions.iter().map(|j| j.layer_diff).collect()
    }

    /// One CSV row per junction.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "junction",
            "layer_diff",
            "shared_diff",
            "neuron_diff_min",
            "neuron_diff_max",
            "gram_diff_fro",
        ])?;
        for j in &self.junctions {
            let min = j.neuron_diffs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = j.neuron_diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            w.write_record([
                j.junction.to_string(),
                fmt17(j.layer_diff),
                fmt17(j.shared_diff),
                fmt17(min),
                fmt17(max),
                j.gram_diff.as_ref().map(|g| fmt17(g.norm())).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn snapshot(net: &Network) -> BalanceSnapshot {
    let mats: Vec<DMatrix<f64>> = net.layers().iter().map(|l| l.matrix().into_owned()).collect();
    let junctions = (0..net.depth() - 1)
        .map(|h| {
            let (w_in, w_out) = (&mats[h], &mats[h + 1]);
            let neuron_diffs: Vec<f64> = (0..w_in.nrows())
                .map(|i| w_in.row(i).norm_squared() - w_out.column(i).norm_squared())
                .collect();
            let gram_diff = net.activations[h]
                .is_linear()
                .then(|| w_in * w_in.transpose() - w_out.transpose() * w_out);
            JunctionBalance {
                junction: h,
                layer_diff: w_in.norm_squared() - w_out.norm_squared(),
                neuron_diffs,
                gram_diff,
                shared_diff: net.layers()[h].param_norm_sq() - net.layers()[h + 1].param_norm_sq(),
            }
        })
        .collect();
    BalanceSnapshot { junctions }
}

/// Squared Frobenius norms of the effective layer matrices.
pub fn layer_norms_sq(net: &Network) -> Vec<f64> {
    net.layers().iter().map(|l| l.matrix().norm_squared()).collect()
}

fn check_junction(net: &Network, h: usize) -> Result<()> {
    if h + 1 >= net.depth() {
        Err(Error::Index(format!(
            "junction {h} out of range for a {}-layer network",
            net.depth()
        )))
    } else {
        Ok(())
    }
}

/// `(<W^(h)[i,:], dL/dW^(h)[i,:]>, <W^(h+1)[:,i], dL/dW^(h+1)[:,i]>)`.
///
/// The two halves agree at every parameter point for homogeneous
/// activations; under gradient flow the neuron diff changes at rate
/// `-2 (lhs - rhs)`.
pub fn differential_identity_neuron(
    net: &Network,
    data: &Dataset,
    h: usize,
    i: usize,
) -> Result<(f64, f64)> {
    check_junction(net, h)?;
    let width = net.layers()[h].shape().0;
    if i >= width {
        return Err(Error::Index(format!("neuron {i} out of range for width {width}")));
    }
    let grads = net.dense_grad(data)?;
    let w_in = net.layers()[h].matrix();
    let w_out = net.layers()[h + 1].matrix();
    let lhs = w_in.row(i).dot(&grads[h].row(i));
    let rhs = w_out.column(i).dot(&grads[h + 1].column(i));
    Ok((lhs, rhs))
}

/// `[W G^T + G W^T]_h - [W^T G + G^T W]_{h+1}`; vanishes at linear
/// junctions.
pub fn differential_identity_gram(net: &Network, data: &Dataset, h: usize) -> Result<DMatrix<f64>> {
    check_junction(net, h)?;
    if !net.activations[h].is_linear() {
        return Err(Error::NonlinearJunction(h));
    }
    let grads = net.dense_grad(data)?;
    let w_in = net.layers()[h].matrix();
    let w_out = net.layers()[h + 1].matrix();
    let (g_in, g_out) = (&grads[h], &grads[h + 1]);
    let left = w_in.as_ref() * g_in.transpose() + g_in * w_in.transpose();
    let right = w_out.transpose() * g_out + g_out.transpose() * w_out.as_ref();
    Ok(left - right)
}

/// `(<v^(h), dL/dv^(h)>, <v^(h+1), dL/dv^(h+1)>)` on free parameters.
pub fn differential_identity_shared(net: &Network, data: &Dataset, h: usize) -> Result<(f64, f64)> {
    check_junction(net, h)?;
    let (_, grad) = net.loss_and_grad(data)?;
    let pair = |k: usize| -> f64 {
        let (layer, g) = (&net.layers()[k], &grad.layers()[k]);
        layer
            .free_params()
            .iter()
            .zip(g.free_params())
            .map(|(a, b)| a * b)
            .sum()
    };
    Ok((pair(h), pair(h + 1)))
}

/// Relative gap `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Sum over junctions of `|layer_diff(end) - layer_diff(start)|`.
pub fn total_layer_drift(start: &BalanceSnapshot, end: &BalanceSnapshot) -> f64 {
    start
        .junctions
        .iter()
        .zip(&end.junctions)
        .map(|(a, b)| (b.layer_diff - a.layer_diff).abs())
        .sum()
}

/// True when every layer of the network is dense.
pub fn all_dense(net: &Network) -> bool {
    net.layers().iter().all(|l| matches!(l, Layer::Dense(_)))
}

use std::borrow::Cow;

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Activation, Layer};
use crate::flow::Parameters;
use crate::par::{self, Exec, SAMPLE_CHUNK};
use crate::{Error, Result};

/// Ordered layer weights `W^(1), ..., W^(N)`; also used to carry gradients
/// with the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStack(pub Vec<Layer>);

impl WeightStack {
    pub fn layers(&self) -> &[Layer] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for layer in &mut z.0 {
            layer.free_params_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    fn flat(&self) -> impl Iterator<Item = &f64> {
        self.0.iter().flat_map(|l| l.free_params().iter())
    }
}

impl Parameters for WeightStack {
    fn axpy(&mut self, alpha: f64, x: &Self) {
        for (a, b) in self.0.iter_mut().zip(&x.0) {
            for (p, q) in a.free_params_mut().iter_mut().zip(b.free_params()) {
                *p += alpha * q;
            }
        }
    }

    fn dot(&self, other: &Self) -> f64 {
        self.flat().zip(other.flat()).map(|(a, b)| a * b).sum()
    }

    fn max_abs(&self) -> f64 {
        self.flat().fold(0.0, |m, x| if x.abs() > m || x.is_nan() { x.abs() } else { m })
    }
}

/// Training set stored column-wise: sample `i` is column `i` of both
/// matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if inputs.ncols() == 0 {
            return Err(Error::EmptyDataset);
        }
        if inputs.ncols() != targets.ncols() {
            return Err(Error::Dimension(format!(
                "{} inputs but {} targets",
                inputs.ncols(),
                targets.ncols()
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn from_samples(samples: &[(DVector<f64>, DVector<f64>)]) -> Result<Self> {
        let (x0, y0) = samples.first().ok_or(Error::EmptyDataset)?;
        let inputs = DMatrix::from_fn(x0.len(), samples.len(), |i, j| samples[j].0[i]);
        let targets = DMatrix::from_fn(y0.len(), samples.len(), |i, j| samples[j].1[i]);
        if samples
            .iter()
            .any(|(x, y)| x.len() != x0.len() || y.len() != y0.len())
        {
            return Err(Error::Dimension("samples have inconsistent dimensions".into()));
        }
        Self::new(inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.nrows()
    }

    /// Single-sample dataset holding column `i`.
    pub fn sample(&self, i: usize) -> Dataset {
        Dataset {
            inputs: self.inputs.columns(i, 1).into_owned(),
            targets: self.targets.columns(i, 1).into_owned(),
        }
    }
}

/// Per-sample loss `l(prediction, target)`, evaluated on a block of samples.
pub trait SampleLoss: Sync {
    /// Returns the summed loss over the block's columns and the derivative
    /// of that sum with respect to the predictions.
    fn eval(&self, predictions: &DMatrix<f64>, targets: DMatrixView<'_, f64>) -> (f64, DMatrix<f64>);
}

/// `l(a, b) = 1/2 |a - b|^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quadratic;

impl SampleLoss for Quadratic {
    fn eval(&self, predictions: &DMatrix<f64>, targets: DMatrixView<'_, f64>) -> (f64, DMatrix<f64>) {
        let residual = predictions - targets;
        (0.5 * residual.norm_squared(), residual)
    }
}

/// Pre-activations `x^(1), ..., x^(N)` for one input; the last one is the
/// network output.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub pre_activations: Vec<DVector<f64>>,
}

impl Forward {
    pub fn output(&self) -> &DVector<f64> {
        self.pre_activations.last().expect("network has at least two layers")
    }
}

/// Bias-free homogeneous feed-forward network
/// `x -> W^(N) phi_{N-1}(... phi_1(W^(1) x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub weights: WeightStack,
    pub activations: Vec<Activation>,
}

impl Network {
    pub fn new(layers: Vec<Layer>, activations: Vec<Activation>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "network needs at least 2 layers, got {}",
                layers.len()
            )));
        }
        if activations.len() != layers.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} layers need {} activations, got {}",
                layers.len(),
                layers.len() - 1,
                activations.len()
            )));
        }
        for h in 1..layers.len() {
            let prev_out = layers[h - 1].shape().0;
            let cur_in = layers[h].shape().1;
            if prev_out != cur_in {
                return Err(Error::Shape {
                    layer: h,
                    expected: format!("{prev_out} input columns"),
                    got: format!("{cur_in}"),
                });
            }
        }
        for layer in &layers {
            if !layer.is_finite() {
                return Err(Error::InvalidArgument("weights must be finite".into()));
            }
        }
        Ok(Self {
            weights: WeightStack(layers),
            activations,
        })
    }

    /// Dense network with Gaussian entries; `std_devs[h]` is the entry
    /// standard deviation of layer `h`. `dims = [n_0, n_1, ..., n_N]`.
    pub fn random_dense<R: Rng + ?Sized>(
        dims: &[usize],
        activations: Vec<Activation>,
        std_devs: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 3 || std_devs.len() != dims.len() - 1 {
            return Err(Error::InvalidArgument(
                "dims must list n_0..n_N (N >= 2) with one std per layer".into(),
            ));
        }
        let layers = dims
            .windows(2)
            .zip(std_devs)
            .map(|(w, &s)| {
                let normal = Normal::new(0.0, s)
                    .map_err(|e| Error::InvalidArgument(format!("bad std {s}: {e}")))?;
                Ok(Layer::dense(DMatrix::from_fn(w[1], w[0], |_, _| normal.sample(rng))))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, activations)
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn layers(&self) -> &[Layer] {
        self.weights.layers()
    }

    pub fn input_dim(&self) -> usize {
        self.layers()[0].shape().1
    }

    pub fn output_dim(&self) -> usize {
        self.layers()[self.depth() - 1].shape().0
    }

    /// Layer widths `n_0, ..., n_N`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers().iter().map(|l| l.shape().0))
            .collect()
    }

    /// Copy of this network with different weights of the same layout.
    pub fn with_weights(&self, weights: WeightStack) -> Self {
        Self {
            weights,
            activations: self.activations.clone(),
        }
    }

    fn matrices(&self) -> Vec<Cow<'_, DMatrix<f64>>> {
        self.layers().iter().map(Layer::matrix).collect()
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<Forward> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                layer: 0,
                expected: format!("input of dim {}", self.input_dim()),
                got: format!("{}", x.len()),
            });
        }
        let mut pre = Vec::with_capacity(self.depth());
        let mut z: DVector<f64> = self.layers()[0].matrix().as_ref() * x;
        for (h, layer) in self.layers().iter().enumerate().skip(1) {
            let act = self.activations[h - 1];
            let a = z.map(|v| act.apply(v));
            pre.push(z);
            z = layer.matrix().as_ref() * a;
        }
        pre.push(z);
        Ok(Forward {
            pre_activations: pre,
        })
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data.input_dim() != self.input_dim() {
            return Err(Error::Shape {
                layer: 0,
                expected: format!("inputs of dim {}", self.input_dim()),
                got: format!("{}", data.input_dim()),
            });
        }
        if data.output_dim() != self.output_dim() {
            return Err(Error::Shape {
                layer: self.depth(),
                expected: format!("targets of dim {}", self.output_dim()),
                got: format!("{}", data.output_dim()),
            });
        }
        Ok(())
    }

    /// Summed loss (and optionally summed dense-matrix gradients) over the
    /// samples `start..start + len`.
    fn eval_block<L: SampleLoss>(
        &self,
        mats: &[Cow<'_, DMatrix<f64>>],
        data: &Dataset,
        (start, len): (usize, usize),
        loss: &L,
        want_grad: bool,
    ) -> (f64, Option<Vec<DMatrix<f64>>>) {
        let x = data.inputs.columns(start, len);
        let n = mats.len();
        // acts[h] is the input to layer h; acts[0] = x.
        let mut acts: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        let mut pre: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        acts.push(x.into_owned());
        for h in 0..n {
            let z = mats[h].as_ref() * &acts[h];
            if h + 1 < n {
                let act = self.activations[h];
                acts.push(z.map(|v| act.apply(v)));
            }
            pre.push(z);
        }
        let (value, mut delta) = loss.eval(&pre[n - 1], data.targets.columns(start, len));
        if !want_grad {
            return (value, None);
        }
        let mut grads = vec![DMatrix::zeros(0, 0); n];
        for h in (0..n).rev() {
            grads[h] = &delta * acts[h].transpose();
            if h > 0 {
                let act = self.activations[h - 1];
                let mut back = mats[h].transpose() * &delta;
                back.zip_apply(&pre[h - 1], |b, z| *b *= act.derivative(z));
                delta = back;
            }
        }
        (value, Some(grads))
    }

    fn accumulate<L: SampleLoss>(
        &self,
        data: &Dataset,
        loss: &L,
        want_grad: bool,
        exec: Exec,
    ) -> Result<(f64, Option<Vec<DMatrix<f64>>>)> {
        self.check_data(data)?;
        let mats = self.matrices();
        let blocks = par::chunks(data.len(), SAMPLE_CHUNK);
        let parts = par::map_slice(exec, &blocks, |&b| self.eval_block(&mats, data, b, loss, want_grad));
        let m = data.len() as f64;
        let mut total = 0.0;
        let mut grads: Option<Vec<DMatrix<f64>>> = None;
        for (value, g) in parts {
            total += value;
            if let Some(g) = g {
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                }
            }
        }
        if let Some(g) = grads.as_mut() {
            g.iter_mut().for_each(|x| *x /= m);
        }
        Ok((total / m, grads))
    }

    /// Training loss `(1/m) sum_i l(f(x_i), y_i)` with the quadratic loss.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        self.loss_with(data, &Quadratic, Exec::default())
    }

    pub fn loss_with<L: SampleLoss>(&self, data: &Dataset, loss: &L, exec: Exec) -> Result<f64> {
        Ok(self.accumulate(data, loss, false, exec)?.0)
    }

    /// Gradient with respect to each layer's effective (materialized)
    /// matrix, ignoring weight sharing.
    pub fn dense_grad(&self, data: &Dataset) -> Result<Vec<DMatrix<f64>>> {
        self.dense_grad_with(data, &Quadratic, Exec::default())
    }

    pub fn dense_grad_with<L: SampleLoss>(
        &self,
        data: &Dataset,
        loss: &L,
        exec: Exec,
    ) -> Result<Vec<DMatrix<f64>>> {
        Ok(self
            .accumulate(data, loss, true, exec)?
            .1
            .expect("gradient requested"))
    }

    /// Loss and gradient with respect to the free parameters. Shared layers
    /// receive the pattern-aggregated gradient.
    pub fn loss_and_grad(&self, data: &Dataset) -> Result<(f64, WeightStack)> {
        self.loss_and_grad_with(data, &Quadratic, Exec::default())
    }

    pub fn loss_and_grad_with<L: SampleLoss>(
        &self,
        data: &Dataset,
        loss: &L,
        exec: Exec,
    ) -> Result<(f64, WeightStack)> {
        let (value, dense) = self.accumulate(data, loss, true, exec)?;
        let dense = dense.expect("gradient requested");
        let layers = self
            .layers()
            .iter()
            .zip(dense)
            .map(|(layer, g)| match layer {
                Layer::Dense(_) => Layer::dense(g),
                Layer::Shared(s) => Layer::Shared(s.with_params(s.aggregate(&g))),
            })
            .collect();
        Ok((value, WeightStack(layers)))
    }

    pub fn grad(&self, data: &Dataset) -> Result<WeightStack> {
        Ok(self.loss_and_grad(data)?.1)
    }

    pub fn grad_with(&self, data: &Dataset, exec: Exec) -> Result<WeightStack> {
        Ok(self.loss_and_grad_with(data, &Quadratic, exec)?.1)
    }

    /// Smallest `|x|` over all pre-activations that feed a kinked
    /// activation, across the dataset. `f64::INFINITY` for linear nets.
    pub fn min_kink_distance(&self, data: &Dataset) -> Result<f64> {
        self.check_data(data)?;
        let mut best = f64::INFINITY;
        for i in 0..data.len() {
            let fwd = self.forward(&data.inputs.column(i).into_owned())?;
            for (h, act) in self.activations.iter().enumerate() {
                if act.has_kink() {
                    let m = fwd.pre_activations[h].iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                    best = best.min(m);
                }
            }
        }
        Ok(best)
    }
}

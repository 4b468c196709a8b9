use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Fully connected weight matrix of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: DMatrix<f64>,
}

/// Layer whose matrix entries are drawn from a shared free-parameter vector.
///
/// `pattern` is row-major over `out_dim x in_dim`; entry `0` means the
/// position is structurally zero and entry `k >= 1` means it equals
/// `params[k - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedLayer {
    pub params: DVector<f64>,
    pattern: Vec<usize>,
    out_dim: usize,
    in_dim: usize,
}

impl SharedLayer {
    pub fn new(
        out_dim: usize,
        in_dim: usize,
        pattern: Vec<usize>,
        params: DVector<f64>,
    ) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return Err(Error::Pattern("shared layer dimensions must be positive".into()));
        }
        if pattern.len() != out_dim * in_dim {
            return Err(Error::Pattern(format!(
                "pattern has {} entries, expected {}",
                pattern.len(),
                out_dim * in_dim
            )));
        }
        if let Some(pos) = pattern.iter().position(|&k| k > params.len()) {
            return Err(Error::Pattern(format!(
                "pattern index {} at ({}, {}) exceeds parameter count {}",
                pattern[pos],
                pos / in_dim,
                pos % in_dim,
                params.len()
            )));
        }
        Ok(Self {
            params,
            pattern,
            out_dim,
            in_dim,
        })
    }

    /// Builds a layer from `(row, col, param_index)` triples; unlisted
    /// positions are zero.
    pub fn from_triples(
        out_dim: usize,
        in_dim: usize,
        triples: &[(usize, usize, usize)],
        params: DVector<f64>,
    ) -> Result<Self> {
        let mut pattern = vec![0; out_dim * in_dim];
        for &(r, c, k) in triples {
            if r >= out_dim || c >= in_dim {
                return Err(Error::Pattern(format!(
                    "position ({r}, {c}) outside {out_dim}x{in_dim}"
                )));
            }
            pattern[r * in_dim + c] = k;
        }
        Self::new(out_dim, in_dim, pattern, params)
    }

    /// 1-D valid convolution with `positions` outputs and a kernel of the
    /// given length: row `i` holds the kernel at columns `i..i + kernel`.
    pub fn conv1d(positions: usize, kernel: DVector<f64>) -> Result<Self> {
        let k = kernel.len();
        let in_dim = positions + k - 1;
        let mut triples = Vec::with_capacity(positions * k);
        for i in 0..positions {
            for j in 0..k {
                triples.push((i, i + j, j + 1));
            }
        }
        Self::from_triples(positions, in_dim, &triples, kernel)
    }

    /// Fully free pattern: every entry is its own parameter (row-major).
    pub fn dense(weight: &DMatrix<f64>) -> Self {
        let (out_dim, in_dim) = weight.shape();
        let pattern = (1..=out_dim * in_dim).collect();
        let params = DVector::from_iterator(
            out_dim * in_dim,
            (0..out_dim).flat_map(|i| (0..in_dim).map(move |j| weight[(i, j)])),
        );
        Self {
            params,
            pattern,
            out_dim,
            in_dim,
        }
    }

    pub fn pattern(&self) -> &[usize] {
        &self.pattern
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn pattern_at(&self, row: usize, col: usize) -> usize {
        self.pattern[row * self.in_dim + col]
    }

    /// Dense matrix with entry `(i, j) = params[pattern(i, j) - 1]`, or zero.
    pub fn materialize(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.out_dim, self.in_dim, |i, j| match self.pattern_at(i, j) {
            0 => 0.0,
            k => self.params[k - 1],
        })
    }

    /// Pulls a gradient with respect to the materialized matrix back onto
    /// the free parameters by summing over tied positions.
    pub fn aggregate(&self, dense_grad: &DMatrix<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.params.len());
        for i in 0..self.out_dim {
            for j in 0..self.in_dim {
                let k = self.pattern_at(i, j);
                if k > 0 {
                    g[k - 1] += dense_grad[(i, j)];
                }
            }
        }
        g
    }

    pub(crate) fn with_params(&self, params: DVector<f64>) -> Self {
        Self {
            params,
            pattern: self.pattern.clone(),
            out_dim: self.out_dim,
            in_dim: self.in_dim,
        }
    }
}

/// One layer of weights (or of gradient values with the same layout).
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Shared(SharedLayer),
}

impl Layer {
    pub fn dense(weight: DMatrix<f64>) -> Self {
        Layer::Dense(DenseLayer { weight })
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Layer::Dense(d) => d.weight.shape(),
            Layer::Shared(s) => (s.out_dim, s.in_dim),
        }
    }

    /// The effective weight matrix.
    pub fn matrix(&self) -> std::borrow::Cow<'_, DMatrix<f64>> {
        match self {
            Layer::Dense(d) => std::borrow::Cow::Borrowed(&d.weight),
            Layer::Shared(s) => std::borrow::Cow::Owned(s.materialize()),
        }
    }

    /// Free parameters as a flat slice (row-major layout is not implied for
    /// dense layers; nalgebra's column-major storage is used).
    pub fn free_params(&self) -> &[f64] {
        match self {
            Layer::Dense(d) => d.weight.as_slice(),
            Layer::Shared(s) => s.params.as_slice(),
        }
    }

    pub fn free_params_mut(&mut self) -> &mut [f64] {
        match self {
            Layer::Dense(d) => d.weight.as_mut_slice(),
            Layer::Shared(s) => s.params.as_mut_slice(),
        }
    }

    /// Squared Euclidean norm of the free parameters.
    pub fn param_norm_sq(&self) -> f64 {
        self.free_params().iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.free_params().iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn all_zero_pattern_is_zero_matrix() {
        let layer = SharedLayer::new(2, 3, vec![0; 6], DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(layer.materialize(), DMatrix::zeros(2, 3));
    }

    #[test]
    fn conv1d_is_banded() {
        let layer = SharedLayer::conv1d(3, DVector::from_vec(vec![5.0, 7.0])).unwrap();
        let (a, b) = (5.0, 7.0);
        assert_eq!(
            layer.materialize(),
            dmatrix![a, b, 0.0, 0.0; 0.0, a, b, 0.0; 0.0, 0.0, a, b]
        );
    }

    #[test]
    fn out_of_range_pattern_rejected() {
        let err = SharedLayer::new(1, 2, vec![1, 3], DVector::from_vec(vec![1.0, 2.0]));
        assert!(matches!(err, Err(Error::Pattern(_))));
        let err = SharedLayer::from_triples(1, 2, &[(1, 0, 1)], DVector::from_vec(vec![1.0]));
        assert!(matches!(err, Err(Error::Pattern(_))));
    }

    #[test]
    fn aggregate_sums_tied_entries() {
        let layer = SharedLayer::conv1d(3, DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let g = DMatrix::from_fn(3, 4, |i, j| (10 * i + j) as f64);
        let agg = layer.aggregate(&g);
        // a sits at (0,0),(1,1),(2,2); b at (0,1),(1,2),(2,3)
        assert_eq!(agg[0], 0.0 + 11.0 + 22.0);
        assert_eq!(agg[1], 1.0 + 12.0 + 23.0);
    }

    #[test]
    fn dense_encoding_roundtrips() {
        let w = dmatrix![1.0, 2.0, 3.0; 4.0, 5.0, 6.0];
        assert_eq!(SharedLayer::dense(&w).materialize(), w);
    }
}

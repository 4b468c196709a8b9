use std::fmt;

/// Positively homogeneous pointwise activation: `apply(x) == derivative(x) * x`
/// for every `x`, including the kink at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Linear,
    Relu,
    /// Leaky ReLU with negative-side slope in `(0, 1)`.
    LeakyRelu(f64),
}

impl Activation {
    pub fn leaky_relu(slope: f64) -> crate::Result<Self> {
        if slope > 0.0 && slope < 1.0 {
            Ok(Activation::LeakyRelu(slope))
        } else {
            Err(crate::Error::InvalidArgument(format!(
                "leaky_relu slope must lie in (0, 1), got {slope}"
            )))
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        self.derivative(x) * x
    }

    /// Derivative, with the fixed subgradient choice at zero: `0` for ReLU
    /// and `slope` for leaky ReLU.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, Activation::Linear)
    }

    /// True if the activation has a kink at zero.
    pub fn has_kink(self) -> bool {
        !self.is_linear()
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::LeakyRelu(_) => "leaky_relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::LeakyRelu(slope) => write!(f, "leaky_relu {slope}"),
            other => f.write_str(other.name()),
        }
    }
}

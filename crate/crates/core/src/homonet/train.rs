use crate::flow::Objective;
use crate::par::Exec;
use crate::Result;

use super::{Dataset, Network, Quadratic, WeightStack};

/// Quadratic training loss of a fixed architecture over a dataset, as a
/// function of the weights.
#[derive(Debug, Clone)]
pub struct Training<'a> {
    pub architecture: &'a Network,
    pub data: &'a Dataset,
    pub exec: Exec,
}

impl<'a> Training<'a> {
    pub fn new(architecture: &'a Network, data: &'a Dataset) -> Self {
        Self {
            architecture,
            data,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    fn net(&self, w: &WeightStack) -> Network {
        self.architecture.with_weights(w.clone())
    }
}

impl Objective for Training<'_> {
    type Params = WeightStack;

    fn value(&self, w: &WeightStack) -> Result<f64> {
        self.net(w).loss_with(self.data, &Quadratic, self.exec)
    }

    fn gradient(&self, w: &WeightStack) -> Result<WeightStack> {
        Ok(self.value_and_gradient(w)?.1)
    }

    fn value_and_gradient(&self, w: &WeightStack) -> Result<(f64, WeightStack)> {
        self.net(w).loss_and_grad_with(self.data, &Quadratic, self.exec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{self, Meters, RunOptions, StepSchedule};
    use crate::homonet::{Activation, Layer};
    use nalgebra::dmatrix;

    #[test]
    fn gd_on_scalar_chain_matches_hand_step() {
        let net = Network::new(
            vec![Layer::dense(dmatrix![1.0]), Layer::dense(dmatrix![2.0])],
            vec![Activation::Linear],
        )
        .unwrap();
        let data = Dataset::new(dmatrix![1.0], dmatrix![4.0]).unwrap();
        let problem = Training::new(&net, &data);
        let traj = flow::run(
            &problem,
            net.weights.clone(),
            &StepSchedule::constant(0.01).unwrap(),
            RunOptions::new(1, 1),
            &Meters::none(),
        )
        .unwrap();
        assert_eq!(traj.records[0].objective, 2.0);
        let w = traj.final_params.layers();
        assert!((w[0].free_params()[0] - 1.04).abs() < 1e-15);
        assert!((w[1].free_params()[0] - 2.02).abs() < 1e-15);
    }
}

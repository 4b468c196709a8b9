//! Homogeneous feed-forward networks: dense and weight-shared layers,
//! forward evaluation, training loss and backpropagated gradients.

mod activation;
mod describe;
mod layer;
mod network;
mod train;

pub use activation::Activation;
pub use layer::{DenseLayer, Layer, SharedLayer};
pub use network::{Dataset, Forward, Network, Quadratic, SampleLoss, WeightStack};
pub use train::Training;

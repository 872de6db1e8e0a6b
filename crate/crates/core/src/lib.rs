//! Numerical laboratory for the risk landscapes of shallow and deep ReLU-family
//! networks: exact population risks, generalized gradients, the SGD/Adam
//! optimizer family, trapped-neuron analysis, local-minimum embeddings and
//! Lyapunov bounds for gradient descent.

pub mod ann;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod grad;
pub mod landscape;
pub mod lyapunov;
pub mod measure;
pub mod optim;
pub mod quadrature;
pub mod report;
pub mod risk;
pub mod rng;

pub use error::{Error, Result};

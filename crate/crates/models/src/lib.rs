//! Classifier zoo behind one training and prediction contract.
//!
//! Families: perceptrons (ReLU hidden layers, softmax output, full-batch Adam
//! with early stopping), gradient-boosted trees on the softmax objective,
//! random forests, RBF support vector machines, multinomial logistic
//! regression, CART trees and k-nearest neighbours. Every hyperparameter is
//! pinned explicitly; see [`ModelSpec::hyperparameters`].

pub mod boost;
pub mod data;
pub mod error;
pub mod forest;
pub mod knn;
pub mod logistic;
pub mod mlp;
pub mod rng;
pub mod spec;
pub mod svm;
pub mod tree;

pub use data::{Dataset, Standardizer};
pub use error::{ModelError, Result};
pub use spec::{train, ModelSpec, Params, TrainConfig, TrainMeta, TrainedModel};

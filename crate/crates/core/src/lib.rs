//! Mahalanobis-distance and local-Mahalanobis-distance classifiers built on a
//! penalized additive multinomial-logistic model.

pub mod baselines;
pub mod bench;
pub mod classifier;
pub mod dataset;
pub mod estimators;
pub mod features;
pub mod gam;
pub mod linalg;
pub mod seed;
pub mod simgen;
pub mod textfmt;

pub use classifier::{FittedClassifier, TrainConfig};
pub use dataset::{Dataset, DatasetError};
pub use estimators::{ScatterMode, ScatterModel};
pub use features::{FeatureKind, FeatureMatrix, KernelProfile};
pub use gam::{GamModel, GamOptions};
pub use simgen::{ExampleId, ExampleSpec};

//! Functional-connectivity based diagnosis pipeline.
//!
//! ROI time series are turned into Pearson connectivity matrices, compressed by a
//! small convolutional autoencoder into 225-dimensional features, and classified
//! with interval type-2 fuzzy regression (IT2FR), ANFIS, KNN or an MLP. Fuzzy models
//! can be refined by GA, PSO or GWO. Evaluation is stratified k-fold
//! cross-validation with accuracy / precision / recall / F1 and fold-averaged
//! confusion matrices.
//!
//! Module map:
//!
//! - [`data`]: subjects, manifests, CSV series files, synthetic generator
//! - [`connectivity`]: ROI averaging, Pearson matrices, heatmaps
//! - [`stats`]: one-way ANOVA, chi-square, edge screening, special functions
//! - [`nn`]: tensors, layers, backprop, SGD/Adam, checkpoints
//! - [`cnn_ae`]: the autoencoder, fine-tuned encoder and feature extraction
//! - [`fcm`]: fuzzy c-means and Gaussian membership functions
//! - [`it2fr`]: interval type-2 fuzzy regression and its classifier
//! - [`anfis`]: first-order TSK baseline
//! - [`metaheuristics`]: GA, PSO, GWO and benchmark functions
//! - [`baselines`]: KNN and MLP
//! - [`eval`]: folds, metrics, cross-validation reports
//! - [`pipeline`]: configuration files, staged runner with caching

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod anfis;
pub mod baselines;
pub mod cnn_ae;
pub mod connectivity;
pub mod data;
pub mod error;
pub mod eval;
pub mod fcm;
pub mod features;
pub mod it2fr;
pub mod linalg;
pub mod metaheuristics;
pub mod nn;
pub mod ovr;
pub mod pipeline;
pub mod rng;
pub mod stats;

pub use connectivity::ConnectivityMatrix;
pub use data::{ClassLabel, SubjectRecord};
pub use error::{Error, Result};
pub use eval::{EvalReport, MetricSet};
pub use it2fr::{It2frClassifier, It2frModel};

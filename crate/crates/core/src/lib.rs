//! Bagged generalized membership inference.
//!
//! Every point of a population is allocated to exactly `p` of `k` reference
//! models. Each reference model is trained on its share, the confidence
//! vectors of all models over all points form an `(N, k, C)` tensor, and a
//! weighted logistic regression is fitted per point on its `p` "In" and
//! `k - p` "Out" confidence vectors. The resulting per-point attacks (and a
//! per-class baseline) are validated against complementary half-split target
//! models.
//!
//! Module map:
//!
//! - [`dataset`]: labeled datasets (synthesis, CSV, subsetting)
//! - [`modelkit`]: small softmax classifiers trained with Adam
//! - [`allocator`]: reference and target membership plans
//! - [`farm`]: model-set training and confidence tensors
//! - [`attacks`]: per-point and per-class logistic-regression attacks
//! - [`eval`]: validation protocol, AUC, threshold counts, baselines

pub mod allocator;
pub mod attacks;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod farm;
pub mod modelkit;
pub mod seed;

pub use error::{Error, Result};

//! Desk-scale testbed for feature-inference attacks on Shapley-value model
//! explanations.
//!
//! The crate covers the full loop: train a black-box classifier, serve
//! prediction + Shapley explanation through a simulated pay-per-query
//! service, reconstruct private inputs from the released explanations, and
//! measure how well explanation-side defenses hold up.
//!
//! Module map:
//! - [`data`]: dataset ingestion, normalization, splitting, synthetic
//!   cluster data, correlation statistics
//! - [`models`]: the four black-box model families (MLP, random forest,
//!   gradient-boosted trees, RBF-kernel SVM)
//! - [`explain`]: exact and permutation-sampled Shapley values plus the
//!   Gaussian information diagnostics
//! - [`defense`]: quantization and top-k release countermeasures
//! - [`service`]: line-delimited JSON explanation service with per-key
//!   query budgets, and the matching client
//! - [`attack1`]: inverse-model attack trained on an auxiliary dataset
//! - [`attack2`]: background-free nearest-Shapley interpolation attack
//!   with its Chebyshev/Hoeffding error bound
//! - [`harness`]: metrics, random-guess baselines, experiment orchestration

pub mod attack1;
pub mod attack2;
pub mod data;
pub mod defense;
pub mod explain;
pub mod harness;
pub mod models;
pub mod rng;
pub mod service;

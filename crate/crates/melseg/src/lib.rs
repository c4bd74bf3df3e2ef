//! Melody segmentation from boundary-strength profiles.
//!
//! This library segments monophonic symbolic melodies into phrases. The
//! pipeline estimates how unexpected each note is under a binary n-gram
//! model (a restricted Boltzmann machine), turns those estimates into a
//! per-note information-content curve, optionally smooths the curve with
//! a feed-forward network regressed onto the model's own estimates, and
//! finally thresholds the curve with an adaptive peak picker. Rule-based
//! and digram-statistics baselines plus a cross-validation harness round
//! out the toolkit.
//!
//! The stages are independent modules wired together by value types:
//!
//! - [`corpus`] — parse, validate and serialize melody CSV files
//! - [`encoding`] — one-hot viewpoint encoding of note n-grams
//! - [`rbm`] — the binary-binary RBM, its training, and exact small-model
//!   enumeration oracles
//! - [`sampler`] — Monte-Carlo marginal and clamped-conditional estimates
//! - [`infocontent`] — information content and boundary-strength profiles
//! - [`pseudosup`] — pseudo-supervised smoothing with a feed-forward net
//! - [`peakpick`] — adaptive-threshold peak picking
//! - [`baselines`] — always / never / rest-rule / digram segmenters
//! - [`evalharness`] — folds, metrics, synthetic corpora, reports
//! - [`cli`] — the `melseg` command-line front end
//!
//! Every stage is deterministic given its seed; re-running a command with
//! the same inputs produces byte-identical outputs.
//!
//! # Examples
//!
//! Each major capability has a runnable example under `examples/`:
//!
//! ```bash
//! cargo run --release -p melseg --example parse_corpus
//! cargo run --release -p melseg --example encode_ngrams
//! cargo run --release -p melseg --example exact_vs_sampled
//! cargo run --release -p melseg --example train_rbm
//! cargo run --release -p melseg --example boundary_profile
//! cargo run --release -p melseg --example peak_picking
//! cargo run --release -p melseg --example pseudo_smoothing
//! cargo run --release -p melseg --example baselines_compare
//! cargo run --release -p melseg --example synthetic_corpus
//! cargo run --release -p melseg --example cross_validation
//! cargo run --release -p melseg --example plot_profile
//! ```

pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod encoding;
pub mod evalharness;
pub mod infocontent;
pub mod peakpick;
pub mod pseudosup;
pub mod rbm;
pub mod sampler;

pub use corpus::{Corpus, Melody, NoteEvent};
pub use encoding::{NGramBatch, ViewpointConfig};
pub use infocontent::Bsp;
pub use rbm::{RbmModel, TrainConfig};
pub use sampler::SamplerConfig;

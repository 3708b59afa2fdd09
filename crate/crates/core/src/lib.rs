//! Causal discovery over labelled event sequences.
//!
//! A pretrained conditional estimator is queried once per sequence to find,
//! for every label, the events whose arrival moves the label posterior the
//! most ([`oneshot`]). The per-sequence graphs are then fused into a single
//! label-to-event graph ([`fusion`]).
//!
//! Everything numeric is generic over [`Scalar`]; the aliases at the crate
//! root fix it to `f64`.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod eval;
pub mod fusion;
pub mod graph;
pub mod info;
pub mod io;
pub mod oneshot;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod synthgen;
pub mod types;

pub use eval::{EvalReport, Metrics};
pub use error::{Error, Result};
pub use estimators::ConditionalEstimator;
pub use fusion::{Criterion, CriterionParams};
pub use oneshot::OneShotConfig;
pub use pipeline::RunConfig;
pub use scalar::Scalar;
pub use synthgen::{GeneratorSpec, Rule};
pub use types::{EventId, EventVocab, LabelId, LabelVocab, LabeledSequence};

pub type LocalEdge = graph::LocalEdge<f64>;
pub type LocalGraph = graph::LocalGraph<f64>;
pub type GlobalGraph = graph::GlobalGraph<f64>;
pub type Parent = graph::Parent<f64>;
pub type LabelParents = graph::LabelParents<f64>;
pub type OracleEstimator = estimators::OracleEstimator<f64>;
pub type CmiMatrix = oneshot::CmiMatrix<f64>;
pub type EdgeTally = fusion::EdgeTally<f64>;

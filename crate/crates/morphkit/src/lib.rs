//! Context-aware joint morphological analysis at desk scale.
//!
//! The crate provides the full pipeline: treebank ingestion and encoding
//! ([`corpus`]), a minimal reverse-mode tensor engine ([`autodiff`]), the
//! neural building blocks ([`layers`]), linguistic feature extraction
//! ([`lingfeat`]), GA-based feature selection with a random-forest fitness
//! oracle ([`select`]), the assembled tagger/lemmatizer ([`model`]), joint
//! multi-task training ([`train`]), and the evaluation suite ([`eval`]).

pub mod autodiff;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod layers;
pub mod lingfeat;
pub mod model;
pub mod select;
pub mod train;

pub use error::{Error, Result};

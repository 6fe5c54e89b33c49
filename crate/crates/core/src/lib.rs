//! Semantic classification of source-code snippets.
//!
//! The pipeline is: normalize the code, segment it with a trained byte-pair
//! encoder, weight tokens with TF-IDF, and fit one of the classical
//! estimators (Naive Bayes variants, kernel SVM, NBSVM). On top of that sit
//! two composite strategies, a two-level hierarchy over the class taxonomy
//! and single-round pseudo-labelling, plus cross-validation and random
//! hyperparameter search.

pub mod augment;
pub mod bpe;
pub mod bundle;
pub mod classify;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod lexer;
pub mod normalize;
pub mod par;
pub mod pipeline;
pub mod strategies;
pub mod synthetic;

pub use error::{Error, Result};

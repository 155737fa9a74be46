//! Diagnostics for the multilingual penalty in lexical disambiguation.
//!
//! The crate ingests minimal-pair relatedness datasets ([`corpus`]), reads
//! per-sentence activation traces ([`trace`]), computes geometry and
//! attention metrics per layer ([`geometry`], [`attention`]), and attributes
//! probing performance to those metrics with linear mixed models fitted by
//! maximum likelihood ([`stats`], [`pipeline`]). Figure tables and SVG plots
//! come from [`report`]; [`commands`] wires everything to the CLI.
//!
//! Numeric kernels are generic over [`Scalar`]; the aliases below fix the
//! analysis precision to `f64`.

pub mod attention;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod geometry;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod sim;
pub mod stats;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::{Scalar, EPS_NORM};

/// Precision used by the analysis engine.
pub type Real = f64;

pub type OlsFit = stats::OlsFit<Real>;
pub type OlsMultiFit = stats::OlsMultiFit<Real>;
pub type LmmFit = stats::LmmFit<Real>;
pub type Table = stats::Table<Real>;
pub type AicLadder = stats::AicLadder<Real>;
pub type IsotropyScores = geometry::IsotropyScores<Real>;
pub type PooledEmbedding = geometry::PooledEmbedding<Real>;
pub type AttentionToCue = attention::AttentionToCue<Real>;

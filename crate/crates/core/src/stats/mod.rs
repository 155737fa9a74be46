//! Least squares, linear mixed models and AIC model comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod aic;
pub mod design;
pub mod linalg;
pub mod lmm;
pub mod ols;
pub mod optim;
pub mod table;

pub use aic::{compare_aic, AicLadder, LadderEntry};
pub use design::{build_design, Design, MixedModelSpec};
pub use lmm::{fit_lmm, Estimation, FitOptions, LmmFit, LmmProblem, VarianceComponent};
pub use ols::{ols_multiple, ols_simple, OlsFit, OlsMultiFit};
pub use table::{Column, Table};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("predictor has zero variance")]
    ConstantPredictor,
    #[error("too few observations: {n} (need at least {needed})")]
    TooFewObservations { n: usize, needed: usize },
    #[error("design matrix is rank deficient at term {0}")]
    RankDeficientDesign(String),
    #[error("grouping factor {factor} has {levels} level(s); at least 2 required")]
    SingularFactor { factor: String, levels: usize },
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("column {0} is not numeric")]
    NotNumeric(String),
    #[error("column {0} is not categorical")]
    NotCategorical(String),
    #[error("duplicate term {0}")]
    DuplicateTerm(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("fit {label} uses different observations than baseline {baseline}")]
    MismatchedObservations { label: String, baseline: String },
    #[error("optimizer did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("response is fitted exactly; likelihood unbounded")]
    PerfectFit,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// One fixed-effect estimate with its Wald (or t) inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient<T> {
    pub term: String,
    pub estimate: T,
    pub std_error: T,
    pub statistic: T,
    pub p_value: T,
}

//! Lasso regression and its evaluation protocol.
//!
//! The objective is `(1/n)‖y − Xβ‖² + α‖β‖₁` on standardized columns and a
//! centered target, solved by cyclic coordinate descent. The penalty is picked
//! by repeated k-fold cross-validation over a log-spaced grid, the selected
//! variables are refit by ordinary least squares, and performance is reported
//! as leave-one-out R².

mod cv;
mod evaluate;
mod lasso;
mod ols;

use thiserror::Error;

pub use cv::{select_alpha, CvPlan, CvResult};
pub use evaluate::{
    evaluate_model, fit_model, loocv_r2, normalized_coefficients, r2_score, select_and_fit, CoefficientScale, CoefficientSource,
    EvaluationReport, LoocvPolicy, LoocvResult, ModelConfig, ModelResult, NormalizedCoefficient, Selection,
    SelectionConfig, UnitPrediction,
};
pub use lasso::{alpha_grid, lasso_fit, lasso_path, soft_threshold, AlphaGrid, LassoFit, LassoOptions};
pub use ols::{ols_refit, OlsFit};

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{n} rows, need at least {need}")]
    TooFewRows { n: usize, need: usize },
    #[error("non-finite value in the design or target")]
    NonFinite,
    #[error("penalty must be finite and >= 0, got {0}")]
    BadAlpha(f64),
    #[error("alpha grid needs count >= 2 and 0 < ratio < 1 (count {count}, ratio {ratio})")]
    BadGrid { count: usize, ratio: f64 },
    #[error("invalid cross-validation plan: {0}")]
    BadPlan(String),
    #[error("target has zero variance")]
    ConstantTarget,
    #[error("no column correlates with the target (alpha_max = 0)")]
    NoSignal,
    #[error("every cross-validation repeat was dropped")]
    AllRepeatsDropped,
    #[error("singular least-squares system")]
    Singular,
    #[error("all coefficients are zero")]
    ZeroCoefficients,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RegressError>;

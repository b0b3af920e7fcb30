//! Fine-grained socioeconomic mapping from advertising audience estimates.
//!
//! The crate is organised as a pipeline:
//!
//! - [`geometry`] samples a city with a grid of circles and computes the
//!   fraction of every circle that falls inside every administrative unit.
//! - [`audience`] models the audience-estimate queries (targeting catalog,
//!   censoring at the platform floor, replicate averaging) and ships a
//!   deterministic replay client.
//! - [`featurize`] projects circle-level audiences onto units, normalizes by
//!   the total audience and builds the filtered design matrix.
//! - [`regress`] fits the Lasso by coordinate descent, selects the penalty by
//!   repeated k-fold cross-validation, refits OLS on the support and reports
//!   leave-one-out R².
//! - [`synth`] generates synthetic cities with a planted sparse model, plus a
//!   brute-force Lasso oracle used for verification.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audience;
pub mod featurize;
pub mod geometry;
pub mod regress;
pub mod synth;

pub use audience::{AgeGroup, AudienceError, AudiencePanel, LocationId};
pub use featurize::{DesignMatrix, FeatureKey, FeaturizeError, TargetVector, UnitPanel};
pub use geometry::{AreaWeightMatrix, CircleGrid, GeoPolygon, GeometryError, LocalFrame};
pub use regress::{EvaluationReport, LassoFit, RegressError};
pub use synth::{SynthCity, SynthConfig, SynthError};

//! From circle-level audiences to the regression design matrix.
//!
//! Circle panels are projected onto administrative units with the area
//! weights (`MAU_j = Σ_i MAU_i a_ij`), normalized by each unit's total
//! audience, and filtered: features that are zero in every unit are dropped,
//! then units with any zero share are dropped, repeated to a fixed point.

mod design;
mod project;
mod target;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audience::AgeGroup;

pub use design::{
    build_design, AlternativeShape, ColumnRule, DesignMatrix, DesignOptions, FilterAxis, FilterEvent, FilterLog, FilterOrder,
    FilterRule,
};
pub use project::{normalize, passthrough_units, project_to_units, ProjectionReport, ShareMatrix, UnitPanel};
pub use target::{IndicatorMeta, Orientation, TargetVector};

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("panel location `{0}` is not a circle id of the weight matrix")]
    UnknownCircle(String),
    #[error("no TOTAL column for age group {0}")]
    MissingTotal(AgeGroup),
    #[error("target: {0}")]
    Target(String),
    #[error("unit ids of features and target do not overlap")]
    NoCommonUnits,
    #[error("design matrix collapsed to {rows} rows x {cols} columns after filtering (need >= 3 rows, >= 1 column)")]
    Degenerate { rows: usize, cols: usize },
    #[error("bad feature name `{0}`, expected `attribute:AGE`")]
    FeatureName(String),
    #[error("design csv: {0}")]
    DesignCsv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, FeaturizeError>;

/// A design-matrix column: one targeting attribute at one age group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureKey {
    pub attribute: String,
    pub age_group: AgeGroup,
}

impl FeatureKey {
    pub fn new(attribute: &str, age_group: AgeGroup) -> Self {
        Self { attribute: attribute.to_string(), age_group }
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.attribute, self.age_group)
    }
}

impl FromStr for FeatureKey {
    type Err = FeaturizeError;

    fn from_str(s: &str) -> Result<Self> {
        let (a, g) = s.rsplit_once(':').ok_or_else(|| FeaturizeError::FeatureName(s.to_string()))?;
        let g = g.parse::<AgeGroup>().map_err(|_| FeaturizeError::FeatureName(s.to_string()))?;
        Ok(Self::new(a, g))
    }
}

//! Audience-estimate data model and acquisition.
//!
//! Estimates are monthly-active-user (MAU) counts for a location and a
//! targeting spec. The platform never reports fewer than [`CENSOR_FLOOR`]
//! users, so that value is treated as zero; replicate queries are censored
//! first and averaged second.

mod catalog;
mod client;
mod estimate;
mod panel;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{catalog, lookup, Attribute, Category, TargetingSpec, CATALOG_SIZE, TOTAL};
pub use client::{
    AudienceClient, Clock, ClientError, FixtureRecord, MissingKeyPolicy, QueryKey, RateLimiter, ReplayClient,
    ReplayNoise, ReplayOptions, RetryPolicy, SimulatedClock, SystemClock, read_fixture, write_fixture,
};
pub use estimate::{average_replicates, censor, CensoredEstimate, RawEstimate, CENSOR_FLOOR};
pub use panel::{fetch_panel, AudiencePanel, CellKey, FetchOptions, PanelRow};

#[derive(Debug, Error)]
pub enum AudienceError {
    #[error("negative audience estimate {0}")]
    NegativeEstimate(i64),
    #[error("no replicates to average")]
    NoReplicates,
    #[error("{got} replicates supplied, at most {expected} expected")]
    TooManyReplicates { got: usize, expected: usize },
    #[error("unknown targeting attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown age group `{0}`")]
    UnknownAgeGroup(String),
    #[error("replicate count must be at least 1")]
    ZeroReplicates,
    #[error("fixture line {line}: {message}")]
    Fixture { line: usize, message: String },
    #[error("panel: {0}")]
    Panel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AudienceError>;

/// The two audience panels: every platform user (13+) and adults over 25.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeGroup {
    #[serde(rename = "ALL")]
    All,
    #[serde(rename = "ADULT")]
    Adult,
}

impl AgeGroup {
    pub const BOTH: [AgeGroup; 2] = [AgeGroup::All, AgeGroup::Adult];

    pub fn as_str(self) -> &'static str {
        match self {
            AgeGroup::All => "ALL",
            AgeGroup::Adult => "ADULT",
        }
    }

    /// Minimum age passed to the platform.
    pub fn min_age(self) -> u32 {
        match self {
            AgeGroup::All => 13,
            AgeGroup::Adult => 25,
        }
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgeGroup {
    type Err = AudienceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ALL" => Ok(AgeGroup::All),
            "ADULT" => Ok(AgeGroup::Adult),
            _ => Err(AudienceError::UnknownAgeGroup(s.to_string())),
        }
    }
}

/// A query location: a circle index or an administrative unit id.
///
/// Ordering is "natural": ids that parse as integers sort numerically and
/// before any non-numeric id, so circle `10` follows circle `9`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocationId(pub String);

impl LocationId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<usize> for LocationId {
    fn from(v: usize) -> Self {
        LocationId(v.to_string())
    }
}

impl From<&str> for LocationId {
    fn from(v: &str) -> Self {
        LocationId(v.to_string())
    }
}

impl From<String> for LocationId {
    fn from(v: String) -> Self {
        LocationId(v)
    }
}

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Ord for LocationId {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for LocationId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Numeric strings first (by value), then everything else lexicographically.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn location_ids_sort_naturally() {
        let mut ids: Vec<LocationId> = ["10", "2", "b", "a", "1"].iter().map(|s| LocationId::from(*s)).collect();
        ids.sort();
        let got: Vec<&str> = ids.iter().map(|l| l.as_str()).collect();
        assert_eq!(got, ["1", "2", "10", "a", "b"]);
    }

    #[test]
    fn age_group_parsing() {
        assert_eq!("adult".parse::<AgeGroup>().unwrap(), AgeGroup::Adult);
        assert_eq!(AgeGroup::All.to_string(), "ALL");
        assert!("teen".parse::<AgeGroup>().is_err());
    }
}

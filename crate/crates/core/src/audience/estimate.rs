use serde::{Deserialize, Serialize};

use super::catalog::TargetingSpec;
use super::{AudienceError, LocationId, Result};

/// The platform reports this value for any audience at or below it.
pub const CENSOR_FLOOR: i64 = 1000;

/// One replicate response as returned by a client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEstimate {
    pub location: LocationId,
    pub targeting: TargetingSpec,
    /// 1-based replicate index.
    pub replicate: u32,
    pub mau: u64,
    /// Seconds on the client's clock.
    pub retrieved_at: f64,
}

/// Censored, replicate-averaged audience for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredEstimate {
    pub mau_mean: f64,
    pub replicates: usize,
    /// Every replicate came back at the floor.
    pub all_censored: bool,
}

/// Maps the floor value to zero; everything else passes through.
pub fn censor(raw: i64) -> Result<f64> {
    match raw {
        r if r < 0 => Err(AudienceError::NegativeEstimate(r)),
        CENSOR_FLOOR => Ok(0.0),
        r => Ok(r as f64),
    }
}

/// Censors each replicate, then averages. Accepts between 1 and `expected`
/// replicates (missing replicates from failed queries are simply absent).
pub fn average_replicates(replicates: &[i64], expected: usize) -> Result<CensoredEstimate> {
    if replicates.is_empty() {
        return Err(AudienceError::NoReplicates);
    }
    if replicates.len() > expected {
        return Err(AudienceError::TooManyReplicates { got: replicates.len(), expected });
    }
    // integer accumulation keeps the mean independent of replicate order
    let mut sum: i128 = 0;
    for &r in replicates {
        sum += censor(r)? as i128;
    }
    let all_censored = replicates.iter().all(|&r| r == CENSOR_FLOOR);
    Ok(CensoredEstimate { mau_mean: sum as f64 / replicates.len() as f64, replicates: replicates.len(), all_censored })
}

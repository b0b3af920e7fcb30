//! Audience clients: the abstract query interface, a token-bucket rate
//! limiter with pluggable clocks, and a replay client serving recorded
//! fixtures.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::estimate::CENSOR_FLOOR;
use super::{AgeGroup, AudienceError, LocationId, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryKey {
    pub location: LocationId,
    pub attribute: String,
    pub age_group: AgeGroup,
    pub replicate: u32,
}

impl fmt::Display for QueryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}#{}", self.location, self.attribute, self.age_group, self.replicate)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClientError {
    /// Worth retrying (throttling, network hiccup).
    #[error("transient failure for {key}: {message}")]
    Transient { key: String, message: String },
    #[error("no recorded response for {0}")]
    UnknownKey(String),
}

/// Something that answers audience queries.
pub trait AudienceClient: Send + Sync {
    fn query(&self, key: &QueryKey) -> std::result::Result<u64, ClientError>;

    /// Seconds on the client's clock, used to timestamp responses.
    fn now(&self) -> f64 {
        0.0
    }

    /// Blocks (or advances a simulated clock) between retries.
    fn wait(&self, _secs: f64) {}
}

pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
    fn sleep(&self, secs: f64);
}

/// A clock that only moves when slept on. Makes rate limiting testable and
/// runs reproducible.
#[derive(Debug, Default)]
pub struct SimulatedClock {
    t: Mutex<f64>,
}

impl SimulatedClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for SimulatedClock {
    fn now(&self) -> f64 {
        *self.t.lock().unwrap()
    }

    fn sleep(&self, secs: f64) {
        if secs > 0.0 {
            *self.t.lock().unwrap() += secs;
        }
    }
}

#[derive(Debug)]
pub struct SystemClock {
    start: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { start: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn sleep(&self, secs: f64) {
        if secs > 0.0 {
            std::thread::sleep(std::time::Duration::from_secs_f64(secs));
        }
    }
}

/// Token bucket: `rate` tokens per second, at most `burst` stored. Callers
/// are serialized through an internal lock.
pub struct RateLimiter {
    rate: f64,
    burst: f64,
    state: Mutex<(f64, f64)>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    /// A non-positive or infinite rate disables limiting.
    pub fn new(rate: f64, burst: f64, clock: Arc<dyn Clock>) -> Self {
        let burst = burst.max(1.0);
        let t0 = clock.now();
        Self { rate, burst, state: Mutex::new((burst, t0)), clock }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn acquire(&self) {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return;
        }
        let mut state = self.state.lock().unwrap();
        loop {
            let now = self.clock.now();
            let (tokens, last) = *state;
            let tokens = (tokens + (now - last) * self.rate).min(self.burst);
            if tokens >= 1.0 - 1e-12 {
                *state = ((tokens - 1.0).max(0.0), now);
                return;
            }
            *state = (tokens, now);
            self.clock.sleep((1.0 - tokens) / self.rate);
        }
    }
}

impl fmt::Debug for RateLimiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateLimiter").field("rate", &self.rate).field("burst", &self.burst).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingKeyPolicy {
    #[default]
    Error,
    /// Answer with the platform floor, as the live API does for tiny audiences.
    Floor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_secs: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, backoff_secs: 1.0 }
    }
}

/// Multiplicative lognormal noise applied on top of recorded values,
/// seeded per query key so results do not depend on query order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayNoise {
    pub sigma: f64,
    pub floor: bool,
    pub seed: u64,
}

#[derive(Clone)]
pub struct ReplayOptions {
    /// Queries per second; `0` disables limiting.
    pub rate_limit: f64,
    pub burst: f64,
    pub missing: MissingKeyPolicy,
    pub noise: Option<ReplayNoise>,
    pub clock: Arc<dyn Clock>,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self { rate_limit: 0.0, burst: 1.0, missing: MissingKeyPolicy::Error, noise: None, clock: Arc::new(SimulatedClock::new()) }
    }
}

/// One line of a JSON Lines fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub location_id: String,
    pub attribute: String,
    pub age_group: AgeGroup,
    pub replicate: u32,
    pub mau: u64,
}

impl FixtureRecord {
    pub fn key(&self) -> QueryKey {
        QueryKey {
            location: LocationId(self.location_id.clone()),
            attribute: self.attribute.clone(),
            age_group: self.age_group,
            replicate: self.replicate,
        }
    }
}

pub fn write_fixture<W: Write>(records: &[FixtureRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Serves recorded responses keyed by location, attribute, age group and
/// replicate.
pub struct ReplayClient {
    records: HashMap<QueryKey, u64>,
    limiter: RateLimiter,
    missing: MissingKeyPolicy,
    noise: Option<ReplayNoise>,
}

impl ReplayClient {
    pub fn from_records(records: Vec<FixtureRecord>, opts: ReplayOptions) -> Result<Self> {
        let mut map = HashMap::with_capacity(records.len());
        for (line, r) in records.into_iter().enumerate() {
            if map.insert(r.key(), r.mau).is_some() {
                return Err(AudienceError::Fixture { line: line + 1, message: format!("duplicate key {}", r.key()) });
            }
        }
        Ok(Self {
            records: map,
            limiter: RateLimiter::new(opts.rate_limit, opts.burst, opts.clock),
            missing: opts.missing,
            noise: opts.noise,
        })
    }

    pub fn from_reader<R: Read>(r: R, opts: ReplayOptions) -> Result<Self> {
        Self::from_records(read_fixture(r)?, opts)
    }

    pub fn from_path(path: impl AsRef<Path>, opts: ReplayOptions) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?, opts)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn perturb(&self, key: &QueryKey, value: u64) -> u64 {
        let Some(noise) = self.noise else { return value };
        let mut v = value as f64;
        if noise.sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(key_seed(noise.seed, key));
            let z: f64 = StandardNormal.sample(&mut rng);
            v = (v * (noise.sigma * z).exp()).round();
        }
        let v = v as u64;
        if noise.floor {
            v.max(CENSOR_FLOOR as u64)
        } else {
            v
        }
    }
}

pub fn read_fixture<R: Read>(r: R) -> Result<Vec<FixtureRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FixtureRecord =
            serde_json::from_str(&line).map_err(|e| AudienceError::Fixture { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// FNV-1a over the key fields; stable across platforms and toolchains.
fn key_seed(seed: u64, key: &QueryKey) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    };
    eat(key.location.as_str().as_bytes());
    eat(key.attribute.as_bytes());
    eat(key.age_group.as_str().as_bytes());
    eat(&key.replicate.to_le_bytes());
    h
}

impl AudienceClient for ReplayClient {
    fn query(&self, key: &QueryKey) -> std::result::Result<u64, ClientError> {
        self.limiter.acquire();
        match self.records.get(key) {
            Some(&v) => Ok(self.perturb(key, v)),
            None => match self.missing {
                MissingKeyPolicy::Error => Err(ClientError::UnknownKey(key.to_string())),
                MissingKeyPolicy::Floor => Ok(CENSOR_FLOOR as u64),
            },
        }
    }

    fn now(&self) -> f64 {
        self.limiter.clock().now()
    }

    fn wait(&self, secs: f64) {
        self.limiter.clock().sleep(secs);
    }
}

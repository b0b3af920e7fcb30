use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::catalog::{TargetingSpec, TOTAL};
use super::client::{AudienceClient, ClientError, QueryKey, RetryPolicy};
use super::estimate::{average_replicates, CensoredEstimate};
use super::{AgeGroup, AudienceError, LocationId, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub location: LocationId,
    pub attribute: String,
    pub age_group: AgeGroup,
}

impl CellKey {
    pub fn new(location: impl Into<LocationId>, attribute: &str, age_group: AgeGroup) -> Self {
        Self { location: location.into(), attribute: attribute.to_string(), age_group }
    }
}

/// One row of the panel CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub location_id: String,
    pub attribute: String,
    pub age_group: AgeGroup,
    pub mau_mean: f64,
    pub replicates: usize,
    pub all_censored: bool,
}

/// Averaged, censored audiences per (location, attribute, age group),
/// including the [`TOTAL`] pseudo-attribute. Iteration order is canonical:
/// location (natural order), attribute key, age group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AudiencePanel {
    cells: BTreeMap<CellKey, CensoredEstimate>,
    /// Cells for which no replicate could be fetched.
    pub missing: Vec<CellKey>,
    /// First and last response timestamps, client clock seconds.
    pub retrieval_window: Option<(f64, f64)>,
}

impl AudiencePanel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: CellKey, estimate: CensoredEstimate) {
        self.cells.insert(key, estimate);
    }

    /// Convenience for tests and synthetic data: a single exact value.
    pub fn insert_value(&mut self, location: impl Into<LocationId>, attribute: &str, age_group: AgeGroup, mau: f64) {
        let est = CensoredEstimate { mau_mean: mau, replicates: 1, all_censored: false };
        self.cells.insert(CellKey::new(location, attribute, age_group), est);
    }

    pub fn get(&self, location: &LocationId, attribute: &str, age_group: AgeGroup) -> Option<&CensoredEstimate> {
        // BTreeMap lookup needs an owned key
        self.cells.get(&CellKey { location: location.clone(), attribute: attribute.to_string(), age_group })
    }

    pub fn value(&self, location: &LocationId, attribute: &str, age_group: AgeGroup) -> Option<f64> {
        self.get(location, attribute, age_group).map(|e| e.mau_mean)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellKey, &CensoredEstimate)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn locations(&self) -> Vec<LocationId> {
        let set: BTreeSet<&LocationId> = self.cells.keys().map(|k| &k.location).collect();
        set.into_iter().cloned().collect()
    }

    /// Attribute keys present (including [`TOTAL`] if queried), sorted.
    pub fn attributes(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.cells.keys().map(|k| &k.attribute).collect();
        set.into_iter().cloned().collect()
    }

    pub fn age_groups(&self) -> Vec<AgeGroup> {
        let set: BTreeSet<AgeGroup> = self.cells.keys().map(|k| k.age_group).collect();
        set.into_iter().collect()
    }

    pub fn all_censored_count(&self) -> usize {
        self.cells.values().filter(|e| e.all_censored).count()
    }

    /// Locations lacking a [`TOTAL`] value for `age_group`.
    pub fn locations_missing_total(&self, age_group: AgeGroup) -> Vec<LocationId> {
        self.locations().into_iter().filter(|l| self.get(l, TOTAL, age_group).is_none()).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = PanelRow> + '_ {
        self.cells.iter().map(|(k, e)| PanelRow {
            location_id: k.location.0.clone(),
            attribute: k.attribute.clone(),
            age_group: k.age_group,
            mau_mean: e.mau_mean,
            replicates: e.replicates,
            all_censored: e.all_censored,
        })
    }

    /// Writes `location_id,attribute,age_group,mau_mean,replicates,all_censored`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in self.rows() {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut panel = Self::new();
        for row in rdr.deserialize() {
            let row: PanelRow = row?;
            if !(row.mau_mean >= 0.0 && row.mau_mean.is_finite()) {
                return Err(AudienceError::Panel(format!("invalid mau_mean {} at {}", row.mau_mean, row.location_id)));
            }
            panel.insert(
                CellKey::new(row.location_id, &row.attribute, row.age_group),
                CensoredEstimate { mau_mean: row.mau_mean, replicates: row.replicates, all_censored: row.all_censored },
            );
        }
        Ok(panel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FetchOptions {
    /// Identical queries per cell.
    pub replicates: usize,
    pub retry: RetryPolicy,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self { replicates: 3, retry: RetryPolicy::default() }
    }
}

/// Queries every (location, attribute, age group) cell plus the per-location
/// total, `replicates` times each, and averages the censored responses.
///
/// Failed queries are retried on transient errors. A cell whose replicates
/// all fail is recorded in [`AudiencePanel::missing`] instead of aborting.
pub fn fetch_panel(
    locations: &[LocationId],
    attributes: &[String],
    age_groups: &[AgeGroup],
    client: &dyn AudienceClient,
    opts: FetchOptions,
) -> Result<AudiencePanel> {
    if opts.replicates == 0 {
        return Err(AudienceError::ZeroReplicates);
    }
    let mut specs = Vec::new();
    for g in age_groups {
        for a in attributes.iter().filter(|a| a.as_str() != TOTAL) {
            specs.push(TargetingSpec::new(a, *g)?);
        }
        specs.push(TargetingSpec::total(*g));
    }

    let mut panel = AudiencePanel::new();
    let mut window: Option<(f64, f64)> = None;
    for loc in locations {
        for spec in &specs {
            let mut values = Vec::with_capacity(opts.replicates);
            for rep in 1..=opts.replicates as u32 {
                let key = QueryKey { location: loc.clone(), attribute: spec.attribute.clone(), age_group: spec.age_group, replicate: rep };
                match query_with_retry(client, &key, opts.retry) {
                    Ok(v) => {
                        let t = client.now();
                        window = Some(window.map_or((t, t), |(a, b)| (a.min(t), b.max(t))));
                        values.push(v as i64);
                    }
                    Err(e) => debug!("query {key} failed: {e}"),
                }
            }
            let cell = CellKey { location: loc.clone(), attribute: spec.attribute.clone(), age_group: spec.age_group };
            if values.is_empty() {
                panel.missing.push(cell);
            } else {
                panel.insert(cell, average_replicates(&values, opts.replicates)?);
            }
        }
    }
    if !panel.missing.is_empty() {
        warn!("{} panel cells could not be fetched", panel.missing.len());
    }
    panel.missing.sort();
    panel.retrieval_window = window;
    Ok(panel)
}

fn query_with_retry(client: &dyn AudienceClient, key: &QueryKey, retry: RetryPolicy) -> std::result::Result<u64, ClientError> {
    let attempts = retry.max_attempts.max(1);
    let mut last = None;
    for attempt in 0..attempts {
        match client.query(key) {
            Ok(v) => return Ok(v),
            Err(e @ ClientError::UnknownKey(_)) => return Err(e),
            Err(e) => {
                last = Some(e);
                if attempt + 1 < attempts {
                    client.wait(retry.backoff_secs * 2f64.powi(attempt as i32));
                }
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audience::client::{FixtureRecord, MissingKeyPolicy, ReplayClient, ReplayOptions};
    use std::sync::atomic::{AtomicU32, Ordering};

    fn constant_fixture(locations: usize, attrs: &[&str], value: impl Fn(&str) -> u64) -> Vec<FixtureRecord> {
        let mut out = Vec::new();
        for l in 0..locations {
            for a in attrs.iter().chain(std::iter::once(&TOTAL)) {
                for g in AgeGroup::BOTH {
                    for rep in 1..=3 {
                        out.push(FixtureRecord { location_id: l.to_string(), attribute: a.to_string(), age_group: g, replicate: rep, mau: value(a) });
                    }
                }
            }
        }
        out
    }

    fn locs(n: usize) -> Vec<LocationId> {
        (0..n).map(LocationId::from).collect()
    }

    #[test]
    fn constant_replay_gives_constant_panel() {
        let attrs = ["ios", "married"];
        let client = ReplayClient::from_records(constant_fixture(4, &attrs, |_| 2000), ReplayOptions::default()).unwrap();
        let attrs: Vec<String> = attrs.iter().map(|s| s.to_string()).collect();
        let panel = fetch_panel(&locs(4), &attrs, &AgeGroup::BOTH, &client, FetchOptions::default()).unwrap();
        assert_eq!(panel.len(), 4 * 3 * 2);
        assert!(panel.cells().all(|(_, e)| e.mau_mean == 2000.0 && e.replicates == 3));
        assert!(panel.locations_missing_total(AgeGroup::Adult).is_empty());
    }

    #[test]
    fn floor_everywhere_zeroes_column() {
        let attrs = ["casino", "ios"];
        let fx = constant_fixture(3, &attrs, |a| if a == "casino" { 1000 } else { 5000 });
        let client = ReplayClient::from_records(fx, ReplayOptions::default()).unwrap();
        let attrs: Vec<String> = attrs.iter().map(|s| s.to_string()).collect();
        let panel = fetch_panel(&locs(3), &attrs, &[AgeGroup::All], &client, FetchOptions::default()).unwrap();
        for l in locs(3) {
            let e = panel.get(&l, "casino", AgeGroup::All).unwrap();
            assert_eq!(e.mau_mean, 0.0);
            assert!(e.all_censored);
        }
        assert_eq!(panel.all_censored_count(), 3);
    }

    #[test]
    fn replay_is_deterministic_and_csv_stable() {
        let attrs = ["ios"];
        let fx = constant_fixture(12, &attrs, |_| 3100);
        let attrs: Vec<String> = vec!["ios".into()];
        let run = || {
            let client = ReplayClient::from_records(fx.clone(), ReplayOptions { rate_limit: 5.0, ..Default::default() }).unwrap();
            let p = fetch_panel(&locs(12), &attrs, &AgeGroup::BOTH, &client, FetchOptions::default()).unwrap();
            let mut buf = Vec::new();
            p.write_csv(&mut buf).unwrap();
            (p, buf)
        };
        let (p1, b1) = run();
        let (p2, b2) = run();
        assert_eq!(p1, p2);
        assert_eq!(b1, b2);
        let text = String::from_utf8(b1.clone()).unwrap();
        assert!(text.starts_with("location_id,attribute,age_group,mau_mean,replicates,all_censored\n"));
        // natural order: 0,1,2,...,10,11
        let order: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(order.last(), Some(&"11"));
        assert_eq!(AudiencePanel::read_csv(b1.as_slice()).unwrap().cells().count(), p1.len());
    }

    #[test]
    fn missing_cells_are_recorded_not_fatal() {
        let mut fx = constant_fixture(2, &["ios"], |_| 4000);
        fx.retain(|r| !(r.location_id == "1" && r.attribute == "ios"));
        let client = ReplayClient::from_records(fx, ReplayOptions { missing: MissingKeyPolicy::Error, ..Default::default() }).unwrap();
        let panel = fetch_panel(&locs(2), &["ios".to_string()], &[AgeGroup::All], &client, FetchOptions::default()).unwrap();
        assert_eq!(panel.missing, vec![CellKey::new("1", "ios", AgeGroup::All)]);
        assert!(panel.value(&"1".into(), TOTAL, AgeGroup::All).is_some());
    }

    struct Flaky {
        failures_left: AtomicU32,
    }

    impl AudienceClient for Flaky {
        fn query(&self, key: &QueryKey) -> std::result::Result<u64, ClientError> {
            if self.failures_left.load(Ordering::SeqCst) > 0 {
                self.failures_left.fetch_sub(1, Ordering::SeqCst);
                return Err(ClientError::Transient { key: key.to_string(), message: "throttled".into() });
            }
            Ok(1500)
        }
    }

    #[test]
    fn transient_errors_are_retried() {
        let client = Flaky { failures_left: AtomicU32::new(2) };
        let opts = FetchOptions { replicates: 1, retry: RetryPolicy { max_attempts: 3, backoff_secs: 0.0 } };
        let panel = fetch_panel(&locs(1), &[], &[AgeGroup::All], &client, opts).unwrap();
        assert_eq!(panel.value(&"0".into(), TOTAL, AgeGroup::All), Some(1500.0));

        let client = Flaky { failures_left: AtomicU32::new(5) };
        let panel = fetch_panel(&locs(1), &[], &[AgeGroup::All], &client, opts).unwrap();
        assert_eq!(panel.missing.len(), 1);
    }

    #[test]
    fn rejects_unknown_attribute_and_zero_replicates() {
        let client = Flaky { failures_left: AtomicU32::new(0) };
        assert!(fetch_panel(&locs(1), &["yachts".into()], &[AgeGroup::All], &client, FetchOptions::default()).is_err());
        let opts = FetchOptions { replicates: 0, ..Default::default() };
        assert!(matches!(fetch_panel(&locs(1), &[], &[AgeGroup::All], &client, opts), Err(AudienceError::ZeroReplicates)));
    }
}

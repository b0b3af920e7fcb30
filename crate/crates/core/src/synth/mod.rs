//! Synthetic cities with a planted sparse linear model.
//!
//! A square city is tiled by `m × m` units and sampled by the same circle
//! grid the pipeline uses. Every circle gets a total audience and a share per
//! attribute; the target of each unit is a sparse linear function of the
//! unit-level shares obtained by the pipeline's own projection. Audience
//! responses are written as a replay fixture, optionally with multiplicative
//! query noise and the platform's reporting floor.

mod oracle;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map};
use thiserror::Error;

use crate::audience::{catalog, write_fixture, AgeGroup, AudiencePanel, FixtureRecord, CENSOR_FLOOR, TOTAL};
use crate::featurize::{normalize, project_to_units, FeatureKey, IndicatorMeta, Orientation, TargetVector};
use crate::geometry::{
    build_local_frame, build_weight_matrix, generate_grid, geojson, AreaWeightMatrix, CircleGrid, GeoPolygon, Lattice,
    LocalFrame, WeightOptions,
};

pub use oracle::{oracle_lasso, ORACLE_MAX_N, ORACLE_MAX_P};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    Invalid(String),
    #[error("oracle handles n <= {} and p <= {}, got n = {n}, p = {p}", ORACLE_MAX_N, ORACLE_MAX_P)]
    OracleSize { n: usize, p: usize },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Featurize(#[from] crate::featurize::FeaturizeError),
    #[error(transparent)]
    Audience(#[from] crate::audience::AudienceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Per-replicate query noise: `round(v · exp(σ_q·ε))`, `ε ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub sigma_q: f64,
    /// Report 1000 for anything below 1000.
    pub floor: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { sigma_q: 0.05, floor: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Units per side.
    pub m: usize,
    pub unit_size_m: f64,
    /// City centre, `[lon, lat]`.
    pub origin: [f64; 2],
    /// Interior tiling vertices are moved by up to this fraction of a unit.
    pub perturb: f64,
    pub attributes: usize,
    pub sparsity: usize,
    /// Standard deviation of the target noise.
    pub sigma: f64,
    pub intercept: f64,
    pub noise: NoiseModel,
    pub replicates: u32,
    pub seed: u64,
    pub radius_m: f64,
    pub spacing_m: f64,
    pub lattice: Lattice,
    pub segments: usize,
    /// Median circle total audience (all ages).
    pub total_median: f64,
    pub total_log_sd: f64,
    /// Per-circle attribute shares are uniform on this range.
    pub share_range: [f64; 2],
    /// Lower bound for every true count, in both age groups. The default
    /// keeps every cell above the censoring floor.
    pub min_count: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            m: 6,
            unit_size_m: 3000.0,
            origin: [10.0, 45.0],
            perturb: 0.0,
            attributes: 20,
            sparsity: 3,
            sigma: 0.0,
            intercept: 10.0,
            noise: NoiseModel::default(),
            replicates: 3,
            seed: 0,
            radius_m: 1000.0,
            spacing_m: 2000.0,
            lattice: Lattice::Square,
            segments: crate::geometry::DEFAULT_SEGMENTS,
            total_median: 60_000.0,
            total_log_sd: 0.4,
            share_range: [0.02, 0.5],
            min_count: CENSOR_FLOOR as u64 + 1,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.m < 3 {
            return bad(format!("m = {} (need >= 3)", self.m));
        }
        if self.attributes > catalog().len() {
            return bad(format!("{} attributes requested, catalog has {}", self.attributes, catalog().len()));
        }
        if self.sparsity < 1 || self.sparsity > self.attributes {
            return bad(format!("need 1 <= sparsity <= attributes, got s = {}, p = {}", self.sparsity, self.attributes));
        }
        if !(self.sigma >= 0.0) || !(self.noise.sigma_q >= 0.0) {
            return bad("noise standard deviations must be >= 0".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if !(0.0..0.25).contains(&self.perturb) {
            return bad(format!("perturb = {} (need 0 <= perturb < 0.25)", self.perturb));
        }
        let [lo, hi] = self.share_range;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return bad(format!("share range [{lo}, {hi}]"));
        }
        if !(self.unit_size_m > 0.0 && self.total_median > 0.0 && self.total_log_sd >= 0.0) {
            return bad("unit size, total median and total spread must be positive".into());
        }
        Ok(())
    }
}

/// Everything a synthetic run needs, plus the ground truth.
#[derive(Debug, Clone)]
pub struct SynthCity {
    pub config: SynthConfig,
    pub units: Vec<GeoPolygon>,
    pub frame: LocalFrame,
    pub grid: CircleGrid,
    pub weights: AreaWeightMatrix,
    pub attributes: Vec<String>,
    /// True all-ages totals per circle.
    pub circle_totals: Vec<u64>,
    /// True all-ages counts, `circle_counts[circle][attribute]`.
    pub circle_counts: Vec<Vec<u64>>,
    /// Adult audience as a fraction of the all-ages audience, per attribute.
    pub adult_factors: Vec<f64>,
    /// Planted coefficients on the all-ages shares.
    pub beta: Vec<f64>,
    /// Noise-free target.
    pub truth: TargetVector,
    pub target: TargetVector,
    pub fixture: Vec<FixtureRecord>,
}

const ADULT_TOTAL_FACTOR: f64 = 0.5;
/// Counts stay multiples of this so the adult factors give integers.
const COUNT_QUANTUM: u64 = 4;

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

fn quantize(v: f64) -> u64 {
    ((v / COUNT_QUANTUM as f64).round().max(1.0) as u64) * COUNT_QUANTUM
}

/// Smallest admissible count `>= c`: at least `min_count` after scaling by
/// each factor, and never exactly the floor value, which reads as zero.
fn admissible(mut c: u64, factors: &[f64], min_count: u64) -> u64 {
    loop {
        let ok = factors.iter().all(|&f| {
            let v = (c as f64 * f) as u64;
            v >= min_count && v != CENSOR_FLOOR as u64
        });
        if ok {
            return c;
        }
        c += COUNT_QUANTUM;
    }
}

fn tiling(cfg: &SynthConfig) -> Result<Vec<GeoPolygon>> {
    let m = cfg.m;
    let half = cfg.unit_size_m * m as f64 / 2.0;
    let mut rng = stream(cfg.seed, 1);
    let mut nodes = vec![[0.0f64; 2]; (m + 1) * (m + 1)];
    for r in 0..=m {
        for c in 0..=m {
            let mut p = [c as f64 * cfg.unit_size_m - half, r as f64 * cfg.unit_size_m - half];
            if cfg.perturb > 0.0 && r > 0 && r < m && c > 0 && c < m {
                let d = cfg.perturb * cfg.unit_size_m;
                p[0] += rng.gen_range(-d..=d);
                p[1] += rng.gen_range(-d..=d);
            }
            nodes[r * (m + 1) + c] = p;
        }
    }
    let frame = LocalFrame::equirectangular(cfg.origin);
    let mut units = Vec::with_capacity(m * m);
    for r in 0..m {
        for c in 0..m {
            let corner = |rr: usize, cc: usize| frame.inverse(nodes[rr * (m + 1) + cc]);
            let ring = vec![corner(r, c), corner(r, c + 1), corner(r + 1, c + 1), corner(r + 1, c), corner(r, c)];
            units.push(GeoPolygon::new((r * m + c + 1).to_string(), ring, vec![])?);
        }
    }
    Ok(units)
}

/// Builds a synthetic city; every random draw comes from `cfg.seed`.
pub fn generate_city(cfg: &SynthConfig) -> Result<SynthCity> {
    cfg.validate()?;
    // geometry exactly as the pipeline will see it after a GeoJSON round trip
    let doc = geojson::units_to_value(&tiling(cfg)?, |_| Map::new());
    let units = geojson::parse_units(&serde_json::from_str(&doc.to_string())?)?;
    let frame = build_local_frame(&units)?;
    let grid = generate_grid(&units, &frame, cfg.radius_m, cfg.spacing_m, cfg.lattice)?;
    let weights = build_weight_matrix(&grid, &units, &frame, WeightOptions { segments: cfg.segments })?;

    let attributes: Vec<String> = catalog().iter().take(cfg.attributes).map(|a| a.key.to_string()).collect();
    let p = attributes.len();

    let mut rng = stream(cfg.seed, 2);
    let adult_factors: Vec<f64> = (0..p).map(|_| if rng.gen_bool(0.5) { 0.5 } else { 0.25 }).collect();
    let totals = LogNormal::new(cfg.total_median.ln(), cfg.total_log_sd).expect("validated spread");
    let [lo, hi] = cfg.share_range;
    let mut circle_totals = Vec::with_capacity(grid.len());
    let mut circle_counts = Vec::with_capacity(grid.len());
    for _ in &grid.circles {
        let t = admissible(quantize(totals.sample(&mut rng)), &[1.0, ADULT_TOTAL_FACTOR], cfg.min_count);
        let counts: Vec<u64> = (0..p)
            .map(|f| {
                let share = if hi > lo { rng.gen_range(lo..hi) } else { lo };
                admissible(quantize(t as f64 * share), &[1.0, adult_factors[f]], cfg.min_count)
            })
            .collect();
        circle_totals.push(t);
        circle_counts.push(counts);
    }

    // noise-free unit shares through the pipeline's projection
    let mut panel = AudiencePanel::new();
    for (i, circle) in grid.circles.iter().enumerate() {
        panel.insert_value(circle.id, TOTAL, AgeGroup::All, circle_totals[i] as f64);
        for (f, a) in attributes.iter().enumerate() {
            panel.insert_value(circle.id, a, AgeGroup::All, circle_counts[i][f] as f64);
        }
    }
    let (unit_panel, _) = project_to_units(&panel, &weights)?;
    let shares = normalize(&unit_panel, AgeGroup::All)?;
    if !shares.zero_total.is_empty() {
        return Err(SynthError::Invalid(format!("units {:?} are not reached by any circle", shares.zero_total)));
    }
    let col = |f: usize| -> usize {
        shares.features.iter().position(|k| *k == FeatureKey::new(&attributes[f], AgeGroup::All)).expect("projected")
    };

    let mut rng = stream(cfg.seed, 3);
    let mut beta = vec![0.0; p];
    for f in sample(&mut rng, p, cfg.sparsity).into_vec() {
        let c = col(f);
        let n = shares.units.len() as f64;
        let mean = shares.values.iter().map(|r| r[c]).sum::<f64>() / n;
        let sd = (shares.values.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n).sqrt();
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        beta[f] = sign * rng.gen_range(0.5..1.5) / sd.max(1e-12);
    }
    let truth_values: Vec<f64> = shares
        .values
        .iter()
        .map(|row| cfg.intercept + (0..p).map(|f| beta[f] * row[col(f)]).sum::<f64>())
        .collect();
    let meta = IndicatorMeta { name: "synthetic_index".into(), unit: "index".into(), orientation: Orientation::HigherIsWealthier };
    let truth = TargetVector::new(shares.units.clone(), truth_values.clone(), meta.clone())?;
    let mut rng = stream(cfg.seed, 4);
    let eps = Normal::new(0.0, cfg.sigma).expect("validated sigma");
    let noisy: Vec<f64> = truth_values.iter().map(|v| if cfg.sigma > 0.0 { v + eps.sample(&mut rng) } else { *v }).collect();
    let target = TargetVector::new(shares.units.clone(), noisy, meta)?;

    let fixture = fixture_records(cfg, &grid, &attributes, &circle_totals, &circle_counts, &adult_factors);
    Ok(SynthCity {
        config: cfg.clone(),
        units,
        frame,
        grid,
        weights,
        attributes,
        circle_totals,
        circle_counts,
        adult_factors,
        beta,
        truth,
        target,
        fixture,
    })
}

fn fixture_records(
    cfg: &SynthConfig,
    grid: &CircleGrid,
    attributes: &[String],
    totals: &[u64],
    counts: &[Vec<u64>],
    adult_factors: &[f64],
) -> Vec<FixtureRecord> {
    let mut rng = stream(cfg.seed, 5);
    let eps = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::new();
    for (i, circle) in grid.circles.iter().enumerate() {
        let mut cells: Vec<(&str, f64)> = attributes.iter().enumerate().map(|(f, a)| (a.as_str(), counts[i][f] as f64)).collect();
        cells.push((TOTAL, totals[i] as f64));
        for age in AgeGroup::BOTH {
            for (f, &(attr, all)) in cells.iter().enumerate() {
                let factor = match (age, f < attributes.len()) {
                    (AgeGroup::All, _) => 1.0,
                    (AgeGroup::Adult, true) => adult_factors[f],
                    (AgeGroup::Adult, false) => ADULT_TOTAL_FACTOR,
                };
                let truth = all * factor;
                for replicate in 1..=cfg.replicates {
                    let mut v = if cfg.noise.sigma_q > 0.0 {
                        (truth * (cfg.noise.sigma_q * eps.sample(&mut rng)).exp()).round()
                    } else {
                        truth
                    };
                    if cfg.noise.floor && v < CENSOR_FLOOR as f64 {
                        v = CENSOR_FLOOR as f64;
                    }
                    out.push(FixtureRecord {
                        location_id: circle.id.to_string(),
                        attribute: attr.to_string(),
                        age_group: age,
                        replicate,
                        mau: v as u64,
                    });
                }
            }
        }
    }
    out
}

/// Paths written by [`SynthCity::write`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFiles {
    pub units: PathBuf,
    pub fixture: PathBuf,
    pub target: PathBuf,
    pub truth: PathBuf,
    pub manifest: PathBuf,
}

impl SynthCity {
    /// Feature names of the planted support, `attribute:ALL`.
    pub fn support(&self) -> Vec<String> {
        (0..self.beta.len())
            .filter(|&f| self.beta[f] != 0.0)
            .map(|f| FeatureKey::new(&self.attributes[f], AgeGroup::All).to_string())
            .collect()
    }

    /// Writes `units.geojson`, `fixture.jsonl`, `target.csv`, `truth.csv` and
    /// `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<SynthFiles> {
        std::fs::create_dir_all(dir)?;
        let files = SynthFiles {
            units: dir.join("units.geojson"),
            fixture: dir.join("fixture.jsonl"),
            target: dir.join("target.csv"),
            truth: dir.join("truth.csv"),
            manifest: dir.join("manifest.json"),
        };
        geojson::write_units(&self.units, BufWriter::new(File::create(&files.units)?))?;
        write_fixture(&self.fixture, BufWriter::new(File::create(&files.fixture)?))?;
        self.target.write_csv(File::create(&files.target)?)?;
        self.truth.write_csv(File::create(&files.truth)?)?;
        let coefficients: Map<String, serde_json::Value> = (0..self.beta.len())
            .filter(|&f| self.beta[f] != 0.0)
            .map(|f| (self.attributes[f].clone(), json!(self.beta[f])))
            .collect();
        let manifest = json!({
            "config": self.config,
            "attributes": self.attributes,
            "adult_factors": self.adult_factors,
            "adult_total_factor": ADULT_TOTAL_FACTOR,
            "intercept": self.config.intercept,
            "coefficients": coefficients,
            "support": self.support(),
            "circles": self.grid.len(),
            "units": self.target.len(),
            "fixture_records": self.fixture.len(),
        });
        let mut w = BufWriter::new(File::create(&files.manifest)?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audience::{fetch_panel, FetchOptions, LocationId, ReplayClient, ReplayOptions};

    fn small() -> SynthConfig {
        SynthConfig { m: 3, attributes: 6, sparsity: 2, ..Default::default() }
    }

    #[test]
    fn tiling_covers_city_without_overlap() {
        let cfg = SynthConfig { perturb: 0.2, ..small() };
        let city = generate_city(&cfg).unwrap();
        assert_eq!(city.units.len(), 9);
        let planar: Vec<f64> = city.units.iter().map(|u| city.frame.project_polygon(u).area()).collect();
        let total: f64 = planar.iter().sum();
        let side = 3.0 * cfg.unit_size_m;
        assert!((total / (side * side) - 1.0).abs() < 1e-2, "{total}");
    }

    #[test]
    fn planted_model_shape() {
        let city = generate_city(&small()).unwrap();
        assert_eq!(city.beta.iter().filter(|&&b| b != 0.0).count(), 2);
        assert_eq!(city.support().len(), 2);
        assert_eq!(city.target.len(), 9);
        assert_eq!(city.fixture.len(), city.grid.len() * 7 * 2 * 3);
        assert!(city.circle_counts.iter().flatten().all(|c| c % COUNT_QUANTUM == 0));
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig { sigma: 0.1, ..small() };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = generate_city(&cfg).unwrap().write(a.path()).unwrap();
        let fb = generate_city(&cfg).unwrap().write(b.path()).unwrap();
        for (x, y) in [(&fa.fixture, &fb.fixture), (&fa.target, &fb.target), (&fa.units, &fb.units), (&fa.manifest, &fb.manifest)] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let other = generate_city(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(other.fixture, generate_city(&small()).unwrap().fixture);
    }

    #[test]
    fn floor_inactive_above_threshold() {
        let on = SynthConfig { noise: NoiseModel { sigma_q: 0.0, floor: true }, min_count: 2000, ..small() };
        let off = SynthConfig { noise: NoiseModel { sigma_q: 0.0, floor: false }, ..on.clone() };
        assert_eq!(generate_city(&on).unwrap().fixture, generate_city(&off).unwrap().fixture);
        assert!(generate_city(&on).unwrap().fixture.iter().all(|r| r.mau >= 2000));
    }

    #[test]
    fn adult_design_is_a_column_rescaling() {
        let cfg = SynthConfig { noise: NoiseModel { sigma_q: 0.0, floor: false }, ..small() };
        let city = generate_city(&cfg).unwrap();
        let client = ReplayClient::from_records(city.fixture.clone(), ReplayOptions::default()).unwrap();
        let locs: Vec<LocationId> = city.grid.circles.iter().map(|c| LocationId::from(c.id)).collect();
        let panel = fetch_panel(&locs, &city.attributes, &AgeGroup::BOTH, &client, FetchOptions::default()).unwrap();
        assert_eq!(panel.all_censored_count(), 0);
        let (up, _) = project_to_units(&panel, &city.weights).unwrap();
        let all = normalize(&up, AgeGroup::All).unwrap();
        let adult = normalize(&up, AgeGroup::Adult).unwrap();
        let col = |s: &crate::featurize::ShareMatrix, a: &str| s.features.iter().position(|k| k.attribute == a).unwrap();
        for (f, factor) in city.adult_factors.iter().enumerate() {
            let (ca, cd) = (col(&all, &city.attributes[f]), col(&adult, &city.attributes[f]));
            for r in 0..all.units.len() {
                assert_eq!(adult.values[r][cd], all.values[r][ca] * factor / ADULT_TOTAL_FACTOR);
            }
        }
        // the noiseless target is exactly the planted function of these shares
        for (r, row) in all.values.iter().enumerate() {
            let y = cfg.intercept
                + (0..city.beta.len()).map(|f| row[col(&all, &city.attributes[f])] * city.beta[f]).sum::<f64>();
            assert!((y - city.truth.values[r]).abs() < 1e-9 * y.abs());
        }
    }

    fn design_after_fetch(cfg: &SynthConfig) -> (usize, Vec<FeatureKey>) {
        let city = generate_city(cfg).unwrap();
        let client = ReplayClient::from_records(city.fixture.clone(), ReplayOptions::default()).unwrap();
        let locs: Vec<LocationId> = city.grid.circles.iter().map(|c| LocationId::from(c.id)).collect();
        let panel = fetch_panel(&locs, &city.attributes, &[AgeGroup::All], &client, FetchOptions::default()).unwrap();
        let (up, _) = project_to_units(&panel, &city.weights).unwrap();
        let shares = normalize(&up, AgeGroup::All).unwrap();
        let columns = crate::featurize::build_design(&shares, &city.target, Default::default())
            .map(|(d, _)| d.columns)
            .unwrap_or_default();
        (panel.all_censored_count(), columns)
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(8))]
        #[test]
        fn floor_censors_more_and_only_removes_columns(seed in 0u64..1000) {
            // small audiences put many cells under the floor
            let base = SynthConfig { seed, total_median: 3000.0, min_count: 0, noise: NoiseModel { sigma_q: 0.0, floor: false }, ..small() };
            let on = SynthConfig { noise: NoiseModel { sigma_q: 0.0, floor: true }, ..base.clone() };
            let (censored_off, cols_off) = design_after_fetch(&base);
            let (censored_on, cols_on) = design_after_fetch(&on);
            proptest::prop_assert!(censored_on > censored_off);
            proptest::prop_assert!(cols_on.iter().all(|c| cols_off.contains(c)));
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(generate_city(&SynthConfig { m: 2, ..small() }).is_err());
        assert!(generate_city(&SynthConfig { sparsity: 0, ..small() }).is_err());
        assert!(generate_city(&SynthConfig { sparsity: 7, ..small() }).is_err());
        assert!(generate_city(&SynthConfig { attributes: 60, sparsity: 2, ..small() }).is_err());
    }
}

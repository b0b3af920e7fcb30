//! Run configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sesmap_core::audience::{catalog, MissingKeyPolicy, RetryPolicy};
use sesmap_core::featurize::{DesignOptions, IndicatorMeta};
use sesmap_core::geometry::{Lattice, DEFAULT_SEGMENTS, MIN_SEGMENTS};
use sesmap_core::regress::ModelConfig;
use sesmap_core::synth::SynthConfig;
use sesmap_core::AgeGroup;

use crate::render::ColorScale;

/// How audience locations relate to the administrative units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Query circles on a grid and project them onto units.
    #[default]
    Circles,
    /// Query the units directly (e.g. postal codes).
    Passthrough,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Recorded responses replayed from `fixture`.
    #[default]
    Fixture,
    /// The live platform; not available in this build.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub radius_m: f64,
    /// Centre-to-centre distance; defaults to twice the radius.
    pub spacing_m: Option<f64>,
    pub lattice: Lattice,
    pub segments: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { radius_m: 1000.0, spacing_m: None, lattice: Lattice::Square, segments: DEFAULT_SEGMENTS }
    }
}

impl GridConfig {
    pub fn spacing(&self) -> f64 {
        self.spacing_m.unwrap_or(2.0 * self.radius_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchConfig {
    pub source: Source,
    pub replicates: usize,
    /// Queries per second on a simulated clock; `0` disables limiting.
    pub rate_limit: f64,
    pub missing: MissingKeyPolicy,
    pub retry: RetryPolicy,
}

impl Default for FetchConfig {
    fn default() -> Self {
        Self {
            source: Source::Fixture,
            replicates: 3,
            rate_limit: 0.0,
            missing: MissingKeyPolicy::Error,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub scale: ColorScale,
    /// Attribute drawn on the circle map; the first attribute when unset.
    pub circle_attribute: Option<String>,
    pub circle_age_group: AgeGroup,
    pub width: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { scale: ColorScale::Linear, circle_attribute: None, circle_age_group: AgeGroup::All, width: 640.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub city: String,
    pub boundary: PathBuf,
    pub target: PathBuf,
    pub fixture: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub mode: Mode,
    pub models: Vec<AgeGroup>,
    /// Targeting attributes to query; all catalog attributes when empty.
    pub attributes: Vec<String>,
    pub indicator: IndicatorMeta,
    pub grid: GridConfig,
    pub fetch: FetchConfig,
    pub design: DesignOptions,
    pub model: ModelConfig,
    pub report: ReportConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            city: "city".into(),
            boundary: "units.geojson".into(),
            target: "target.csv".into(),
            fixture: "fixture.jsonl".into(),
            out: "out".into(),
            seed: 0,
            mode: Mode::Circles,
            models: AgeGroup::BOTH.to_vec(),
            attributes: Vec::new(),
            indicator: IndicatorMeta { name: "ses".into(), unit: String::new(), orientation: Default::default() },
            grid: GridConfig::default(),
            fetch: FetchConfig::default(),
            design: DesignOptions::default(),
            model: ModelConfig::default(),
            report: ReportConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.boundary, &mut self.target, &mut self.fixture, &mut self.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.models.is_empty() {
            return bad("at least one age model is required".into());
        }
        if !(self.grid.radius_m > 0.0) || !(self.grid.spacing() > 0.0) {
            return bad("grid radius and spacing must be positive".into());
        }
        if self.grid.segments < MIN_SEGMENTS {
            return bad(format!("grid.segments must be >= {MIN_SEGMENTS}"));
        }
        if self.fetch.replicates == 0 {
            return bad("fetch.replicates must be >= 1".into());
        }
        for a in &self.attributes {
            if sesmap_core::audience::lookup(a).is_none() {
                return bad(format!("unknown attribute `{a}`"));
            }
        }
        Ok(())
    }

    pub fn attribute_keys(&self) -> Vec<String> {
        if self.attributes.is_empty() {
            catalog().iter().map(|a| a.key.to_string()).collect()
        } else {
            self.attributes.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.grid.spacing(), 2000.0);
        assert_eq!(cfg.model.selection.folds, 5);
        assert_eq!(cfg.model.selection.repeats, 30);
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: RunConfig = toml::from_str("city = \"x\"\nmodels = [\"ADULT\"]\n[grid]\nradius_m = 500.0\n").unwrap();
        assert_eq!(cfg.models, vec![AgeGroup::Adult]);
        assert_eq!(cfg.grid.spacing(), 1000.0);
        assert!(cfg.validate().is_ok());
        assert!(toml::from_str::<RunConfig>("[grid]\nradius = 1.0\n").is_err());
        let none = RunConfig { models: vec![], ..cfg };
        assert!(none.validate().is_err());
    }
}

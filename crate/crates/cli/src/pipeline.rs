//! The pipeline stages. Each stage reads its inputs from the run directory,
//! so any stage can be rerun on its own once its predecessors have run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sesmap_core::audience::{
    catalog, fetch_panel, natural_cmp, read_fixture, AgeGroup, AudiencePanel, CellKey, FetchOptions, LocationId,
    ReplayClient, ReplayOptions, TOTAL,
};
use sesmap_core::featurize::{
    build_design, normalize, passthrough_units, project_to_units, DesignMatrix, FeatureKey, IndicatorMeta,
    TargetVector, UnitPanel,
};
use sesmap_core::geometry::geojson::{self, FrameMetadata};
use sesmap_core::geometry::{
    build_local_frame, build_weight_matrix, generate_grid, AreaWeightMatrix, CircleGrid, GeoPolygon, WeightOptions,
};
use sesmap_core::regress::{
    evaluate_model, ols_refit, select_and_fit, EvaluationReport, ModelConfig, OlsFit, Selection,
};
use sesmap_core::synth::generate_city;

use crate::config::{FetchConfig, GridConfig, Mode, RunConfig, Source};
use crate::render::{choropleth_geojson, render_choropleth, render_circle_map, MapOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Grid,
    Fetch,
    Project,
    Featurize,
    Fit,
    Evaluate,
    Report,
    Synth,
}

impl Stage {
    pub const PIPELINE: [Stage; 7] =
        [Stage::Grid, Stage::Fetch, Stage::Project, Stage::Featurize, Stage::Fit, Stage::Evaluate, Stage::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Grid => "grid",
            Stage::Fetch => "fetch",
            Stage::Project => "project",
            Stage::Featurize => "featurize",
            Stage::Fit => "fit",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
            Stage::Synth => "synth",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A failed stage, with the files it was reading.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub inputs: Vec<PathBuf>,
    pub error: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {:#}", self.stage, self.error)?;
        if !self.inputs.is_empty() {
            let list: Vec<String> = self.inputs.iter().map(|p| p.display().to_string()).collect();
            write!(f, " (inputs: {})", list.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for StageError {}

/// File names inside the run directory.
pub struct RunDir(pub PathBuf);

impl RunDir {
    pub fn file(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn model(&self, prefix: &str, g: AgeGroup, ext: &str) -> PathBuf {
        self.0.join(format!("{prefix}_{}.{ext}", g.as_str().to_lowercase()))
    }
}

type AResult<T> = anyhow::Result<T>;

fn run_stage<T>(cfg: &RunConfig, stage: Stage, inputs: Vec<PathBuf>, f: impl FnOnce() -> AResult<T>) -> Result<T, StageError> {
    info!("stage {stage}");
    f().map_err(|error| {
        let err = StageError { stage, inputs, error };
        write_failure(cfg, &err);
        err
    })
}

fn write_failure(cfg: &RunConfig, err: &StageError) {
    let dir = RunDir(cfg.out.clone());
    let logs: Vec<String> = fs::read_dir(&dir.0)
        .map(|rd| {
            let mut v: Vec<String> = rd
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.starts_with("filter_") || n.starts_with("model_") || n == "fetch.json" || n == "projection.json")
                .collect();
            v.sort();
            v
        })
        .unwrap_or_default();
    let doc = json!({
        "stage": err.stage,
        "error": format!("{:#}", err.error),
        "inputs": err.inputs,
        "logs": logs,
    });
    if fs::create_dir_all(&dir.0).is_ok() {
        let _ = write_json(&dir.file("failure.json"), &doc);
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> AResult<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> AResult<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn open(path: &Path) -> AResult<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> AResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_units(cfg: &RunConfig) -> AResult<Vec<GeoPolygon>> {
    Ok(geojson::read_units(open(&cfg.boundary)?)?)
}

fn load_target(cfg: &RunConfig) -> AResult<TargetVector> {
    Ok(TargetVector::read_csv(open(&cfg.target)?, cfg.indicator.clone())?)
}

fn unit_ids(units: &[GeoPolygon]) -> Vec<String> {
    let mut ids: Vec<String> = units.iter().map(|u| u.id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    ids.sort_by(|a, b| natural_cmp(a, b));
    ids
}

fn load_grid(dir: &RunDir) -> AResult<CircleGrid> {
    let meta: FrameMetadata = read_json(&dir.file("weights.json"))?;
    Ok(geojson::read_grid(open(&dir.file("grid.geojson"))?, &meta.frame, meta.lattice, meta.spacing_m)?)
}

fn model_config(cfg: &RunConfig) -> ModelConfig {
    let mut m = cfg.model;
    m.selection.seed = cfg.seed;
    m
}

/// Circle grid and area weights. A no-op in passthrough mode.
pub fn grid(cfg: &RunConfig) -> Result<(), StageError> {
    let dir = RunDir(cfg.out.clone());
    run_stage(cfg, Stage::Grid, vec![cfg.boundary.clone()], || {
        fs::create_dir_all(&dir.0)?;
        if cfg.mode == Mode::Passthrough {
            info!("passthrough mode: no circle grid");
            return Ok(());
        }
        let units = load_units(cfg)?;
        let frame = build_local_frame(&units)?;
        let g = &cfg.grid;
        let grid = generate_grid(&units, &frame, g.radius_m, g.spacing(), g.lattice)?;
        let weights = build_weight_matrix(&grid, &units, &frame, WeightOptions { segments: g.segments })?;
        if !weights.overlap_warnings.is_empty() {
            warn!("{} circles cover overlapping units", weights.overlap_warnings.len());
        }
        geojson::write_grid(&grid, create(&dir.file("grid.geojson"))?)?;
        weights.write_csv(create(&dir.file("weights.csv"))?)?;
        let meta = FrameMetadata {
            frame,
            unit: "m".into(),
            radius_m: g.radius_m,
            spacing_m: g.spacing(),
            lattice: g.lattice,
            segments: g.segments,
            circles: grid.len(),
            units: weights.unit_ids.len(),
            overlap_warnings: weights.overlap_warnings.clone(),
        };
        write_json(&dir.file("weights.json"), &meta)?;
        info!("{} circles over {} units", grid.len(), weights.unit_ids.len());
        Ok(())
    })
}

fn query_attributes(cfg: &RunConfig) -> AResult<Vec<String>> {
    if !cfg.attributes.is_empty() || cfg.fetch.source != Source::Fixture {
        return Ok(cfg.attribute_keys());
    }
    let present: BTreeSet<String> = read_fixture(open(&cfg.fixture)?)?.into_iter().map(|r| r.attribute).collect();
    let keys: Vec<String> = catalog().iter().map(|a| a.key.to_string()).filter(|k| present.contains(k)).collect();
    if keys.is_empty() {
        bail!("fixture {} has no catalog attributes", cfg.fixture.display());
    }
    Ok(keys)
}

fn replay_client(fetch: &FetchConfig, fixture: &Path) -> AResult<ReplayClient> {
    match fetch.source {
        Source::Live => bail!("the live audience client is not available; set fetch.source = \"fixture\""),
        Source::Fixture => {
            let opts = ReplayOptions { rate_limit: fetch.rate_limit, missing: fetch.missing, ..Default::default() };
            Ok(ReplayClient::from_path(fixture, opts)?)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FetchLog {
    locations: usize,
    attributes: Vec<String>,
    age_groups: Vec<AgeGroup>,
    replicates: usize,
    cells: usize,
    all_censored: usize,
    missing: Vec<CellKey>,
    retrieval_window: Option<(f64, f64)>,
}

/// Audience estimates for every location, attribute and model age group.
pub fn fetch(cfg: &RunConfig) -> Result<(), StageError> {
    let dir = RunDir(cfg.out.clone());
    let inputs = match cfg.mode {
        Mode::Circles => vec![dir.file("weights.json"), dir.file("grid.geojson"), cfg.fixture.clone()],
        Mode::Passthrough => vec![cfg.boundary.clone(), cfg.fixture.clone()],
    };
    run_stage(cfg, Stage::Fetch, inputs, || {
        let locations: Vec<LocationId> = match cfg.mode {
            Mode::Circles => load_grid(&dir)?.circles.iter().map(|c| LocationId::from(c.id)).collect(),
            Mode::Passthrough => unit_ids(&load_units(cfg)?).into_iter().map(LocationId).collect(),
        };
        let attributes = query_attributes(cfg)?;
        let client = replay_client(&cfg.fetch, &cfg.fixture)?;
        let opts = FetchOptions { replicates: cfg.fetch.replicates, retry: cfg.fetch.retry };
        let panel = fetch_panel(&locations, &attributes, &cfg.models, &client, opts)?;
        panel.write_csv(create(&dir.file("panel.csv"))?)?;
        let log = FetchLog {
            locations: locations.len(),
            attributes,
            age_groups: cfg.models.clone(),
            replicates: cfg.fetch.replicates,
            cells: panel.len(),
            all_censored: panel.all_censored_count(),
            missing: panel.missing.clone(),
            retrieval_window: panel.retrieval_window,
        };
        write_json(&dir.file("fetch.json"), &log)?;
        Ok(())
    })
}

/// Circle estimates onto units (or passed through in passthrough mode).
pub fn project(cfg: &RunConfig) -> Result<(), StageError> {
    let dir = RunDir(cfg.out.clone());
    let mut inputs = vec![dir.file("panel.csv")];
    if cfg.mode == Mode::Circles {
        inputs.push(dir.file("weights.csv"));
    }
    run_stage(cfg, Stage::Project, inputs, || {
        let panel = AudiencePanel::read_csv(open(&dir.file("panel.csv"))?)?;
        let (units, missing) = match cfg.mode {
            Mode::Circles => {
                let weights = AreaWeightMatrix::read_csv(open(&dir.file("weights.csv"))?)?;
                let (u, report) = project_to_units(&panel, &weights)?;
                (u, report.missing_values)
            }
            Mode::Passthrough => (passthrough_units(&panel), 0),
        };
        units.write_csv(create(&dir.file("unit_panel.csv"))?)?;
        write_json(
            &dir.file("projection.json"),
            &json!({"mode": cfg.mode, "units": units.units.len(), "features": units.features.len(), "missing_values": missing}),
        )?;
        Ok(())
    })
}

/// Share matrix and filtered design matrix per age model.
pub fn featurize(cfg: &RunConfig) -> Result<(), StageError> {
    let dir = RunDir(cfg.out.clone());
    run_stage(cfg, Stage::Featurize, vec![dir.file("unit_panel.csv"), cfg.target.clone()], || {
        let units = UnitPanel::read_csv(open(&dir.file("unit_panel.csv"))?)?;
        let target = load_target(cfg)?;
        for &g in &cfg.models {
            let shares = normalize(&units, g)?;
            let (design, y) = build_design(&shares, &target, cfg.design)
                .with_context(|| format!("building the {g} design"))?;
            write_json(&dir.model("filter", g, "json"), &design.log)?;
            design.write_csv(create(&dir.model("design", g, "csv"))?, &y)?;
            info!("{g}: {} units x {} features", design.n(), design.p());
        }
        Ok(())
    })
}

/// Everything needed to evaluate or apply a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub model: AgeGroup,
    pub columns: Vec<String>,
    pub config: ModelConfig,
    pub selection: Selection,
    pub ols: OlsFit,
}

fn read_design(cfg: &RunConfig, dir: &RunDir, g: AgeGroup) -> AResult<(DesignMatrix, TargetVector)> {
    Ok(DesignMatrix::read_csv(open(&dir.model("design", g, "csv"))?, cfg.indicator.clone())?)
}

/// Lasso with cross-validated penalty, then OLS on the selected variables.
pub fn fit(cfg: &RunConfig) -> Result<(), StageError> {
    let dir = RunDir(cfg.out.clone());
    let inputs = cfg.models.iter().map(|&g| dir.model("design", g, "csv")).collect();
    run_stage(cfg, Stage::Fit, inputs, || {
        let mcfg = model_config(cfg);
        for &g in &cfg.models {
            let (design, y) = read_design(cfg, &dir, g)?;
            let selection = select_and_fit(&design.x, &y.values, &mcfg.selection).with_context(|| format!("{g} model"))?;
            if !selection.fit.converged {
                warn!("{g} Lasso stopped after {} sweeps without converging", selection.fit.sweeps);
            }
            let ols = ols_refit(&design.x, &y.values, &selection.fit.support())?;
            let artifact = ModelArtifact {
                model: g,
                columns: design.columns.iter().map(|c| c.to_string()).collect(),
                config: mcfg,
                selection,
                ols,
            };
            write_json(&dir.model("model", g, "json"), &artifact)?;
        }
        Ok(())
    })
}

fn write_predictions(path: &Path, report: &EvaluationReport) -> AResult<()> {
    let mut w = create(path)?;
    report.write_predictions_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Leave-one-out predictions and the coefficient table per model.
pub fn evaluate(cfg: &RunConfig) -> Result<(), StageError> {
    let dir = RunDir(cfg.out.clone());
    let inputs = cfg.models.iter().flat_map(|&g| [dir.model("design", g, "csv"), dir.model("model", g, "json")]).collect();
    run_stage(cfg, Stage::Evaluate, inputs, || {
        for &g in &cfg.models {
            let (design, y) = read_design(cfg, &dir, g)?;
            let m: ModelArtifact = read_json(&dir.model("model", g, "json"))?;
            let columns: Vec<String> = design.columns.iter().map(|c| c.to_string()).collect();
            if columns != m.columns {
                bail!("{g} model columns do not match the design; rerun fit");
            }
            let report = evaluate_model(&design, &y, &m.selection, &m.ols, &m.config)?;
            write_predictions(&dir.model("eval", g, "csv"), &report)?;
            let mut w = create(&dir.model("coefficients", g, "csv"))?;
            report.write_coefficients_csv(&mut w)?;
            w.flush()?;
            write_json(&dir.model("report", g, "json"), &report)?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    /// Features entering the Lasso.
    pub features: usize,
    pub units: usize,
    pub alpha: f64,
    pub cv_r2: f64,
    pub loocv_r2: f64,
    pub loocv_r2_honest: Option<f64>,
    pub selected: usize,
    pub converged: bool,
    pub support: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeComparison {
    /// ADULT minus ALL leave-one-out R².
    pub delta: f64,
    /// `delta / |R²_ALL|`; absent when the ALL score is zero.
    pub relative: Option<f64>,
    pub delta_honest: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub city: String,
    pub indicator: IndicatorMeta,
    pub mode: Mode,
    pub target_units: usize,
    pub locations: usize,
    pub models: BTreeMap<AgeGroup, ModelSummary>,
    pub adult_vs_all: Option<AgeComparison>,
}

impl Summary {
    pub fn from_reports(cfg: &RunConfig, target_units: usize, locations: usize, reports: &[EvaluationReport]) -> Self {
        let models: BTreeMap<AgeGroup, ModelSummary> = reports
            .iter()
            .map(|r| {
                let s = ModelSummary {
                    features: r.features,
                    units: r.units,
                    alpha: r.alpha,
                    cv_r2: r.cv_r2,
                    loocv_r2: r.loocv_r2,
                    loocv_r2_honest: r.loocv_r2_honest,
                    selected: r.support.len(),
                    converged: r.converged,
                    support: r.support.clone(),
                };
                (r.model, s)
            })
            .collect();
        let adult_vs_all = match (models.get(&AgeGroup::All), models.get(&AgeGroup::Adult)) {
            (Some(all), Some(adult)) => {
                let delta = adult.loocv_r2 - all.loocv_r2;
                Some(AgeComparison {
                    delta,
                    relative: (all.loocv_r2 != 0.0).then(|| delta / all.loocv_r2.abs()),
                    delta_honest: adult.loocv_r2_honest.zip(all.loocv_r2_honest).map(|(a, b)| a - b),
                })
            }
            _ => None,
        };
        Self {
            city: cfg.city.clone(),
            indicator: cfg.indicator.clone(),
            mode: cfg.mode,
            target_units,
            locations,
            models,
            adult_vs_all,
        }
    }
}

fn map_options(cfg: &RunConfig, title: String) -> MapOptions {
    MapOptions { title, scale: cfg.report.scale, width: cfg.report.width }
}

fn write_map(dir: &RunDir, name: &str, units: &[GeoPolygon], values: &BTreeMap<String, f64>, opts: &MapOptions) -> AResult<()> {
    fs::write(dir.file(&format!("{name}.svg")), render_choropleth(units, values, opts)?)?;
    write_json(&dir.file(&format!("{name}.geojson")), &choropleth_geojson(units, values, opts.scale)?)?;
    Ok(())
}

/// Attribute share per location: the attribute's audience over the total.
fn location_shares(panel: &AudiencePanel, attribute: &str, g: AgeGroup) -> BTreeMap<String, f64> {
    panel
        .locations()
        .into_iter()
        .filter_map(|loc| {
            let total = panel.value(&loc, TOTAL, g)?;
            let v = panel.value(&loc, attribute, g)?;
            (total > 0.0).then(|| (loc.0.clone(), v / total))
        })
        .collect()
}

fn attribute_map(cfg: &RunConfig, dir: &RunDir, units: &[GeoPolygon]) -> AResult<()> {
    let panel = AudiencePanel::read_csv(open(&dir.file("panel.csv"))?)?;
    let g = cfg.report.circle_age_group;
    let attribute = match &cfg.report.circle_attribute {
        Some(a) => a.clone(),
        None => match panel.attributes().into_iter().find(|a| a != TOTAL) {
            Some(a) => a,
            None => {
                warn!("panel has no attributes; skipping the attribute map");
                return Ok(());
            }
        },
    };
    if !panel.age_groups().contains(&g) {
        warn!("panel has no {g} estimates; skipping the attribute map");
        return Ok(());
    }
    let shares = location_shares(&panel, &attribute, g);
    if shares.is_empty() {
        warn!("no {attribute} shares to map");
        return Ok(());
    }
    let opts = map_options(cfg, format!("{}: {} share", cfg.city, FeatureKey::new(&attribute, g)));
    match cfg.mode {
        Mode::Circles => {
            let grid = load_grid(dir)?;
            let values: BTreeMap<usize, f64> = shares.iter().filter_map(|(k, v)| Some((k.parse().ok()?, *v))).collect();
            fs::write(dir.file("map_attribute.svg"), render_circle_map(&grid, units, &values, &opts)?)?;
        }
        Mode::Passthrough => write_map(dir, "map_attribute", units, &shares, &opts)?,
    }
    Ok(())
}

/// `summary.json`, maps and the run manifest.
pub fn report(cfg: &RunConfig) -> Result<Summary, StageError> {
    let dir = RunDir(cfg.out.clone());
    let mut inputs: Vec<PathBuf> = cfg.models.iter().map(|&g| dir.model("report", g, "json")).collect();
    inputs.extend([cfg.target.clone(), cfg.boundary.clone(), dir.file("panel.csv")]);
    run_stage(cfg, Stage::Report, inputs, || {
        let reports: Vec<EvaluationReport> =
            cfg.models.iter().map(|&g| read_json(&dir.model("report", g, "json"))).collect::<AResult<_>>()?;
        let target = load_target(cfg)?;
        let units = load_units(cfg)?;
        let fetch_log: FetchLog = read_json(&dir.file("fetch.json"))?;
        let summary = Summary::from_reports(cfg, target.len(), fetch_log.locations, &reports);
        write_json(&dir.file("summary.json"), &summary)?;

        let truth: BTreeMap<String, f64> = target.ids.iter().cloned().zip(target.values.iter().copied()).collect();
        let name = if cfg.indicator.name.is_empty() { "indicator".to_string() } else { cfg.indicator.name.clone() };
        write_map(&dir, "map_truth", &units, &truth, &map_options(cfg, format!("{}: {name}", cfg.city)))?;
        for r in &reports {
            let pred: BTreeMap<String, f64> = r.predictions.iter().map(|p| (p.unit_id.clone(), p.loocv)).collect();
            let title = format!("{}: {name} predicted from {} audiences", cfg.city, r.model);
            let file = format!("map_pred_{}", r.model.as_str().to_lowercase());
            write_map(&dir, &file, &units, &pred, &map_options(cfg, title))?;
        }
        attribute_map(cfg, &dir, &units)?;

        let mut artifacts: Vec<String> = fs::read_dir(&dir.0)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n != "run_manifest.json" && n != "failure.json")
            .collect();
        artifacts.sort();
        let manifest = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
            "effective_model": model_config(cfg),
            "artifacts": artifacts,
        });
        write_json(&dir.file("run_manifest.json"), &manifest)?;
        Ok(summary)
    })
}

/// Runs every stage in order and returns the run directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PathBuf, StageError> {
    run_stage(cfg, Stage::Config, Vec::new(), || {
        cfg.validate()?;
        for (what, p) in [("boundary", &cfg.boundary), ("target", &cfg.target)] {
            if !p.exists() {
                bail!("{what} file {} does not exist", p.display());
            }
        }
        if cfg.fetch.source == Source::Fixture && !cfg.fixture.exists() {
            bail!("fixture file {} does not exist", cfg.fixture.display());
        }
        // stale failures from an earlier run would be misleading
        let _ = fs::remove_file(cfg.out.join("failure.json"));
        Ok(())
    })?;
    for stage in Stage::PIPELINE {
        run_one(cfg, stage)?;
    }
    Ok(cfg.out.clone())
}

/// Runs a single pipeline stage.
pub fn run_one(cfg: &RunConfig, stage: Stage) -> Result<(), StageError> {
    match stage {
        Stage::Grid => grid(cfg),
        Stage::Fetch => fetch(cfg),
        Stage::Project => project(cfg),
        Stage::Featurize => featurize(cfg),
        Stage::Fit => fit(cfg),
        Stage::Evaluate => evaluate(cfg),
        Stage::Report => report(cfg).map(|_| ()),
        Stage::Config => run_stage(cfg, Stage::Config, Vec::new(), || Ok(cfg.validate()?)),
        Stage::Synth => synth(cfg, &cfg.out).map(|_| ()),
    }
}

/// Writes a synthetic city from `cfg.synth` into `dir`, together with a
/// `config.toml` that runs the pipeline on it. Returns the config path.
pub fn synth(cfg: &RunConfig, dir: &Path) -> Result<PathBuf, StageError> {
    run_stage(cfg, Stage::Synth, Vec::new(), || {
        let city = generate_city(&cfg.synth)?;
        city.write(dir)?;
        let s = &city.config;
        let run = RunConfig {
            city: format!("synthetic-{}", s.seed),
            boundary: "units.geojson".into(),
            target: "target.csv".into(),
            fixture: "fixture.jsonl".into(),
            out: "out".into(),
            seed: cfg.seed,
            mode: Mode::Circles,
            models: cfg.models.clone(),
            attributes: city.attributes.clone(),
            indicator: IndicatorMeta { name: "synthetic index".into(), unit: String::new(), orientation: Default::default() },
            grid: GridConfig { radius_m: s.radius_m, spacing_m: Some(s.spacing_m), lattice: s.lattice, segments: s.segments },
            fetch: FetchConfig { replicates: s.replicates as usize, ..cfg.fetch.clone() },
            design: cfg.design,
            model: cfg.model,
            report: cfg.report.clone(),
            synth: city.config.clone(),
        };
        let path = dir.join("config.toml");
        fs::write(&path, run.to_toml()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    })
}


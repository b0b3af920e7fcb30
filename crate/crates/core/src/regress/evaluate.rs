use std::io::Write;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{select_alpha, CvPlan, CvResult};
use super::lasso::{alpha_grid, lasso_fit, AlphaGrid, LassoFit, LassoOptions};
use super::ols::{ols_refit, OlsFit};
use super::{RegressError, Result};
use crate::audience::{lookup, AgeGroup};
use crate::featurize::{DesignMatrix, FeatureKey, Orientation, TargetVector};

/// `1 − SSE/SST`. Negative when the predictions are worse than the mean.
pub fn r2_score(y: &[f64], pred: &[f64]) -> Result<f64> {
    if y.len() != pred.len() || y.is_empty() {
        return Err(RegressError::Shape(format!("{} targets, {} predictions", y.len(), pred.len())));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if sst == 0.0 {
        return Err(RegressError::ConstantTarget);
    }
    let sse: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - sse / sst)
}

/// Settings for Lasso selection: grid, folds and solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub grid_count: usize,
    pub grid_ratio: f64,
    pub lasso: LassoOptions,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { folds: 5, repeats: 30, seed: 0, grid_count: 100, grid_ratio: 1e-4, lasso: LassoOptions::default() }
    }
}

/// Grid, cross-validated penalty and the full-data fit at that penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub grid: AlphaGrid,
    pub cv: CvResult,
    pub fit: LassoFit,
}

pub fn select_and_fit(x: &DMatrix<f64>, y: &[f64], cfg: &SelectionConfig) -> Result<Selection> {
    let grid = alpha_grid(x, y, cfg.grid_count, cfg.grid_ratio)?;
    let plan = CvPlan::new(y.len(), cfg.folds, cfg.repeats, cfg.seed)?;
    let cv = select_alpha(x, y, &grid, &plan, cfg.lasso)?;
    let fit = lasso_fit(x, y, cv.alpha, cfg.lasso)?;
    Ok(Selection { grid, cv, fit })
}

/// Whether variable selection is repeated inside each leave-one-out fold.
#[derive(Debug, Clone, PartialEq)]
pub enum LoocvPolicy {
    /// OLS on a support chosen once from all rows.
    FixedSupport(Vec<usize>),
    /// Lasso selection re-run on every n − 1 training set, then OLS.
    Nested(SelectionConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvResult {
    pub r2: f64,
    pub predictions: Vec<f64>,
}

fn drop_row(x: &DMatrix<f64>, y: &[f64], i: usize) -> (DMatrix<f64>, Vec<f64>) {
    (x.clone().remove_row(i), y.iter().enumerate().filter(|&(r, _)| r != i).map(|(_, v)| *v).collect())
}

fn nested_prediction(x: &DMatrix<f64>, y: &[f64], i: usize, cfg: &SelectionConfig) -> Result<f64> {
    let (xt, yt) = drop_row(x, y, i);
    let row: Vec<f64> = x.row(i).iter().copied().collect();
    let support = match select_and_fit(&xt, &yt, cfg) {
        Ok(sel) => sel.fit.support(),
        Err(RegressError::ConstantTarget | RegressError::NoSignal | RegressError::AllRepeatsDropped) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(ols_refit(&xt, &yt, &support)?.predict_row(&row))
}

/// Leave-one-out R² of select-then-OLS.
pub fn loocv_r2(x: &DMatrix<f64>, y: &[f64], policy: &LoocvPolicy) -> Result<LoocvResult> {
    let n = y.len();
    if n < 3 {
        return Err(RegressError::TooFewRows { n, need: 3 });
    }
    if x.nrows() != n {
        return Err(RegressError::Shape(format!("X has {} rows, y has {n}", x.nrows())));
    }
    let predictions: Vec<f64> = match policy {
        LoocvPolicy::FixedSupport(support) => (0..n)
            .map(|i| {
                let (xt, yt) = drop_row(x, y, i);
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                Ok(ols_refit(&xt, &yt, support)?.predict_row(&row))
            })
            .collect::<Result<_>>()?,
        LoocvPolicy::Nested(cfg) => {
            if n - 1 < cfg.folds {
                return Err(RegressError::TooFewRows { n, need: cfg.folds + 1 });
            }
            (0..n).into_par_iter().map(|i| nested_prediction(x, y, i, cfg)).collect::<Result<_>>()?
        }
    };
    Ok(LoocvResult { r2: r2_score(y, &predictions)?, predictions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCoefficient {
    pub variable: String,
    pub beta: f64,
    /// `β_i / ‖β‖₁`
    pub value: f64,
}

/// Nonzero coefficients divided by the L1 norm, largest first.
pub fn normalized_coefficients(names: &[String], beta: &[f64]) -> Result<Vec<NormalizedCoefficient>> {
    if names.len() != beta.len() {
        return Err(RegressError::Shape(format!("{} names, {} coefficients", names.len(), beta.len())));
    }
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    if l1 == 0.0 {
        return Err(RegressError::ZeroCoefficients);
    }
    let mut out: Vec<NormalizedCoefficient> = names
        .iter()
        .zip(beta)
        .filter(|(_, &b)| b != 0.0)
        .map(|(n, &b)| NormalizedCoefficient { variable: n.clone(), beta: b, value: b / l1 })
        .collect();
    out.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.variable.cmp(&b.variable)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSource {
    #[default]
    Lasso,
    Ols,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientScale {
    #[default]
    Original,
    Standardized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub selection: SelectionConfig,
    /// Also compute leave-one-out R² with selection nested in each fold.
    pub honest: bool,
    /// Cross-validation repeats inside each nested fold.
    pub honest_repeats: usize,
    pub coefficient_source: CoefficientSource,
    pub coefficient_scale: CoefficientScale,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            selection: SelectionConfig::default(),
            honest: true,
            honest_repeats: 30,
            coefficient_source: CoefficientSource::default(),
            coefficient_scale: CoefficientScale::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitPrediction {
    pub unit_id: String,
    pub y: f64,
    pub loocv: f64,
    pub loocv_honest: Option<f64>,
}

/// Headline numbers for one age-group model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: AgeGroup,
    /// Features entering the Lasso, before selection.
    pub features: usize,
    pub units: usize,
    pub alpha: f64,
    pub alpha_index: usize,
    pub cv_r2: f64,
    pub loocv_r2: f64,
    pub loocv_r2_honest: Option<f64>,
    pub support: Vec<String>,
    pub coefficients: Vec<NormalizedCoefficient>,
    pub orientation: Orientation,
    pub converged: bool,
    pub predictions: Vec<UnitPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub columns: Vec<FeatureKey>,
    pub config: ModelConfig,
    pub selection: Selection,
    pub ols: OlsFit,
    pub report: EvaluationReport,
}

/// Full protocol for one design: penalty selection by repeated k-fold CV,
/// Lasso at the chosen penalty, OLS on its support, leave-one-out R².
pub fn fit_model(design: &DesignMatrix, target: &TargetVector, cfg: &ModelConfig) -> Result<ModelResult> {
    check_alignment(design, target)?;
    let selection = select_and_fit(&design.x, &target.values, &cfg.selection)?;
    let ols = ols_refit(&design.x, &target.values, &selection.fit.support())?;
    let report = evaluate_model(design, target, &selection, &ols, cfg)?;
    Ok(ModelResult { columns: design.columns.clone(), config: *cfg, selection, ols, report })
}

fn check_alignment(design: &DesignMatrix, target: &TargetVector) -> Result<()> {
    if design.rows != target.ids {
        return Err(RegressError::Shape("design rows and target ids differ".into()));
    }
    Ok(())
}

/// Leave-one-out evaluation and coefficient report for an existing fit.
pub fn evaluate_model(
    design: &DesignMatrix,
    target: &TargetVector,
    selection: &Selection,
    ols: &OlsFit,
    cfg: &ModelConfig,
) -> Result<EvaluationReport> {
    check_alignment(design, target)?;
    let x = &design.x;
    let y = &target.values;
    let support = selection.fit.support();
    let fixed = loocv_r2(x, y, &LoocvPolicy::FixedSupport(support.clone()))?;
    let honest = if cfg.honest {
        let nested = SelectionConfig { repeats: cfg.honest_repeats, ..cfg.selection };
        Some(loocv_r2(x, y, &LoocvPolicy::Nested(nested))?)
    } else {
        None
    };

    let names: Vec<String> = design.columns.iter().map(|c| c.to_string()).collect();
    let beta = match (cfg.coefficient_source, cfg.coefficient_scale) {
        (CoefficientSource::Lasso, CoefficientScale::Original) => selection.fit.beta.clone(),
        (CoefficientSource::Lasso, CoefficientScale::Standardized) => selection.fit.beta_std.clone(),
        (CoefficientSource::Ols, CoefficientScale::Original) => ols.beta(),
        (CoefficientSource::Ols, CoefficientScale::Standardized) => {
            ols.beta().iter().zip(&selection.fit.x_scale).map(|(b, s)| b * s).collect()
        }
    };
    let coefficients = if support.is_empty() {
        warn!("{} model selected no variables", design.age_group);
        Vec::new()
    } else {
        normalized_coefficients(&names, &beta)?
    };

    let predictions = (0..y.len())
        .map(|i| UnitPrediction {
            unit_id: design.rows[i].clone(),
            y: y[i],
            loocv: fixed.predictions[i],
            loocv_honest: honest.as_ref().map(|h| h.predictions[i]),
        })
        .collect();
    Ok(EvaluationReport {
        model: design.age_group,
        features: design.p(),
        units: design.n(),
        alpha: selection.cv.alpha,
        alpha_index: selection.cv.index,
        cv_r2: selection.cv.mean_r2[selection.cv.index],
        loocv_r2: fixed.r2,
        loocv_r2_honest: honest.map(|h| h.r2),
        support: support.iter().map(|&j| names[j].clone()).collect(),
        coefficients,
        orientation: target.meta.orientation,
        converged: selection.fit.converged,
        predictions,
    })
}

impl EvaluationReport {
    /// `unit_id,y,yhat_loocv,yhat_loocv_honest`
    pub fn write_predictions_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["unit_id", "y", "yhat_loocv", "yhat_loocv_honest"])?;
        for p in &self.predictions {
            let honest = p.loocv_honest.map(|v| v.to_string()).unwrap_or_default();
            out.write_record([p.unit_id.as_str(), &p.y.to_string(), &p.loocv.to_string(), &honest])?;
        }
        out.flush()?;
        Ok(())
    }

    /// `variable,attribute,age_group,label,beta,beta_over_l1`
    pub fn write_coefficients_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["variable", "attribute", "age_group", "label", "beta", "beta_over_l1"])?;
        for c in &self.coefficients {
            let key: Option<FeatureKey> = c.variable.parse().ok();
            let (attr, age) = key.as_ref().map_or((c.variable.as_str(), ""), |k| (k.attribute.as_str(), k.age_group.as_str()));
            let label = lookup(attr).map_or("", |a| a.label);
            out.write_record([c.variable.as_str(), attr, age, label, &c.beta.to_string(), &c.value.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

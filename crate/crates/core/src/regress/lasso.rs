use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{RegressError, Result};

/// `sign(z) · max(|z| − γ, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoOptions {
    /// Convergence threshold on the largest coefficient change in a full
    /// sweep, in units of the target's standard deviation.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { tol: 1e-5, max_sweeps: 10_000 }
    }
}

/// A Lasso solution for `(1/n)‖y − Xβ‖² + α‖β‖₁` on standardized columns
/// and centered target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub alpha: f64,
    /// Coefficients on the original column scale.
    pub beta: Vec<f64>,
    /// Coefficients on the standardized scale (what the penalty sees).
    pub beta_std: Vec<f64>,
    pub intercept: f64,
    pub x_mean: Vec<f64>,
    /// Population standard deviation per column; 0 for dropped columns.
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
    /// Zero-variance columns excluded from the fit.
    pub dropped: Vec<usize>,
    pub sweeps: usize,
    pub converged: bool,
    pub objective: f64,
    /// Objective after every sweep.
    pub objective_trace: Vec<f64>,
    /// Largest KKT violation on the standardized problem.
    pub kkt_violation: f64,
}

impl LassoFit {
    pub fn support(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.beta).map(|(x, b)| x * b).sum::<f64>()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| self.intercept + (0..x.ncols()).map(|j| x[(i, j)] * self.beta[j]).sum::<f64>())
            .collect()
    }
}

/// Standardized copy of a regression problem, shared by every α of a path.
pub(crate) struct Standardized {
    pub n: usize,
    pub p: usize,
    /// Kept columns, column-major.
    pub z: Vec<f64>,
    pub keep: Vec<usize>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
    pub yc: Vec<f64>,
    /// `(2/n)·z_jᵀz_j`
    pub d: Vec<f64>,
}

fn check_inputs(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(RegressError::Shape(format!("X has {} rows, y has {}", x.nrows(), y.len())));
    }
    if y.len() < 2 {
        return Err(RegressError::TooFewRows { n: y.len(), need: 2 });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RegressError::NonFinite);
    }
    Ok(())
}

impl Standardized {
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        check_inputs(x, y)?;
        let (n, p) = x.shape();
        let nf = n as f64;
        let y_mean = y.iter().sum::<f64>() / nf;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let y_scale = (yc.iter().map(|v| v * v).sum::<f64>() / nf).sqrt();

        let mut mean = vec![0.0; p];
        let mut scale = vec![0.0; p];
        let mut keep = Vec::with_capacity(p);
        let mut z = Vec::with_capacity(n * p);
        let mut d = Vec::with_capacity(p);
        for j in 0..p {
            let col = x.column(j);
            let m = col.sum() / nf;
            let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf).sqrt();
            mean[j] = m;
            if !(s > 1e-12 * (1.0 + m.abs())) {
                warn!("column {j} has zero variance; excluded from the fit");
                continue;
            }
            scale[j] = s;
            keep.push(j);
            let start = z.len();
            z.extend(col.iter().map(|v| (v - m) / s));
            d.push(2.0 / nf * z[start..].iter().map(|v| v * v).sum::<f64>());
        }
        Ok(Self { n, p, z, keep, mean, scale, y_mean, y_scale, yc, d })
    }

    fn col(&self, k: usize) -> &[f64] {
        &self.z[k * self.n..(k + 1) * self.n]
    }

    /// `(2/n)·z_kᵀv`
    fn grad(&self, k: usize, v: &[f64]) -> f64 {
        2.0 / self.n as f64 * self.col(k).iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn alpha_max(&self) -> f64 {
        (0..self.keep.len()).map(|k| self.grad(k, &self.yc).abs()).fold(0.0, f64::max)
    }

    fn objective(&self, r: &[f64], beta: &[f64], alpha: f64) -> f64 {
        r.iter().map(|v| v * v).sum::<f64>() / self.n as f64 + alpha * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// One cyclic pass over `coords`; returns the largest coefficient change.
    fn sweep(&self, coords: &[usize], alpha: f64, beta: &mut [f64], r: &mut [f64]) -> f64 {
        let mut max_change: f64 = 0.0;
        for &k in coords {
            let old = beta[k];
            let zk = self.grad(k, r) + self.d[k] * old;
            let new = soft_threshold(zk, alpha) / self.d[k];
            if new != old {
                let delta = new - old;
                for (ri, zi) in r.iter_mut().zip(self.col(k)) {
                    *ri -= zi * delta;
                }
                beta[k] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    /// Coordinate descent from `beta` (indexed over kept columns).
    pub fn solve(&self, alpha: f64, beta: &mut [f64], opts: LassoOptions) -> LassoFit {
        let mut r = self.yc.clone();
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (ri, zi) in r.iter_mut().zip(self.col(k)) {
                    *ri -= zi * b;
                }
            }
        }
        let threshold = opts.tol * if self.y_scale > 0.0 { self.y_scale } else { 1.0 };
        let all: Vec<usize> = (0..self.keep.len()).collect();
        let mut trace = Vec::new();
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < opts.max_sweeps {
            let change = self.sweep(&all, alpha, beta, &mut r);
            sweeps += 1;
            trace.push(self.objective(&r, beta, alpha));
            if change < threshold {
                converged = true;
                break;
            }
            let active: Vec<usize> = all.iter().copied().filter(|&k| beta[k] != 0.0).collect();
            while sweeps < opts.max_sweeps {
                let change = self.sweep(&active, alpha, beta, &mut r);
                sweeps += 1;
                trace.push(self.objective(&r, beta, alpha));
                if change < threshold {
                    break;
                }
            }
        }
        if !converged {
            warn!("lasso did not converge in {} sweeps at alpha {alpha:e}", opts.max_sweeps);
        }

        // fresh residual for the reported objective and certificate
        let mut r = self.yc.clone();
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (ri, zi) in r.iter_mut().zip(self.col(k)) {
                    *ri -= zi * b;
                }
            }
        }
        let kkt_violation = (0..beta.len())
            .map(|k| {
                let g = self.grad(k, &r);
                if beta[k] != 0.0 {
                    (g - alpha * beta[k].signum()).abs()
                } else {
                    (g.abs() - alpha).max(0.0)
                }
            })
            .fold(0.0, f64::max);

        let mut beta_full = vec![0.0; self.p];
        let mut beta_std = vec![0.0; self.p];
        for (k, &j) in self.keep.iter().enumerate() {
            beta_std[j] = beta[k];
            beta_full[j] = beta[k] / self.scale[j];
        }
        let intercept = self.y_mean - beta_full.iter().zip(&self.mean).map(|(b, m)| b * m).sum::<f64>();
        LassoFit {
            alpha,
            beta: beta_full,
            beta_std,
            intercept,
            x_mean: self.mean.clone(),
            x_scale: self.scale.clone(),
            y_mean: self.y_mean,
            y_scale: self.y_scale,
            dropped: (0..self.p).filter(|j| !self.keep.contains(j)).collect(),
            sweeps,
            converged,
            objective: self.objective(&r, beta, alpha),
            objective_trace: trace,
            kkt_violation,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(RegressError::BadAlpha(alpha));
    }
    Ok(())
}

/// Cyclic coordinate descent for a single penalty, from a cold start.
pub fn lasso_fit(x: &DMatrix<f64>, y: &[f64], alpha: f64, opts: LassoOptions) -> Result<LassoFit> {
    check_alpha(alpha)?;
    let s = Standardized::new(x, y)?;
    let mut beta = vec![0.0; s.keep.len()];
    Ok(s.solve(alpha, &mut beta, opts))
}

/// Fits along `alphas` in the given order, warm-starting each fit from the
/// previous solution.
pub fn lasso_path(x: &DMatrix<f64>, y: &[f64], alphas: &[f64], opts: LassoOptions) -> Result<Vec<LassoFit>> {
    for &a in alphas {
        check_alpha(a)?;
    }
    let s = Standardized::new(x, y)?;
    Ok(path_on(&s, alphas, opts))
}

pub(crate) fn path_on(s: &Standardized, alphas: &[f64], opts: LassoOptions) -> Vec<LassoFit> {
    let mut beta = vec![0.0; s.keep.len()];
    alphas.iter().map(|&a| s.solve(a, &mut beta, opts)).collect()
}

/// Descending, log-spaced penalties from `α_max` to `ratio·α_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    pub alphas: Vec<f64>,
    pub alpha_max: f64,
    pub ratio: f64,
}

impl AlphaGrid {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

pub fn alpha_grid(x: &DMatrix<f64>, y: &[f64], count: usize, ratio: f64) -> Result<AlphaGrid> {
    if count < 2 || !(ratio > 0.0 && ratio < 1.0) {
        return Err(RegressError::BadGrid { count, ratio });
    }
    let s = Standardized::new(x, y)?;
    if s.y_scale == 0.0 {
        return Err(RegressError::ConstantTarget);
    }
    let alpha_max = s.alpha_max();
    if alpha_max == 0.0 {
        return Err(RegressError::NoSignal);
    }
    let last = (count - 1) as f64;
    let mut alphas: Vec<f64> = (0..count).map(|i| alpha_max * (ratio.ln() * i as f64 / last).exp()).collect();
    alphas[0] = alpha_max;
    alphas[count - 1] = alpha_max * ratio;
    Ok(AlphaGrid { alphas, alpha_max, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-2.0..2.0));
        let y = (0..n).map(|i| 1.5 * x[(i, 0)] - 0.7 * x[(i, p - 1)] + rng.gen_range(-0.5..0.5)).collect();
        (x, y)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.5, 0.0), -2.5);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    #[test]
    fn zero_at_alpha_max() {
        for seed in 0..20 {
            let (x, y) = random_problem(seed, 15, 4);
            let grid = alpha_grid(&x, &y, 100, 1e-4).unwrap();
            let fit = lasso_fit(&x, &y, grid.alphas[0], LassoOptions::default()).unwrap();
            assert!(fit.beta.iter().all(|&b| b == 0.0));
            let below = lasso_fit(&x, &y, grid.alphas[1], LassoOptions::default()).unwrap();
            assert!(below.beta.iter().any(|&b| b != 0.0));
        }
    }

    #[test]
    fn grid_shape() {
        let (x, y) = random_problem(3, 12, 3);
        let g = alpha_grid(&x, &y, 100, 1e-4).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g.alphas[99], g.alpha_max * 1e-4);
        let q = g.alphas[1] / g.alphas[0];
        for w in g.alphas.windows(2) {
            assert!(w[1] < w[0]);
            assert!((w[1] / w[0] - q).abs() < 1e-12);
        }
        let flat = vec![2.0; 12];
        assert!(matches!(alpha_grid(&x, &flat, 100, 1e-4), Err(RegressError::ConstantTarget)));
    }

    #[test]
    fn univariate_closed_form() {
        let (x, y) = random_problem(5, 10, 1);
        let s = Standardized::new(&x, &y).unwrap();
        let zy: f64 = s.col(0).iter().zip(&s.yc).map(|(a, b)| a * b).sum();
        let zz: f64 = s.col(0).iter().map(|a| a * a).sum();
        let n = 10.0;
        for alpha in [0.0, 0.1, 0.5, 1.0, 5.0] {
            let expect = soft_threshold(2.0 / n * zy, alpha) / (2.0 / n * zz);
            let fit = lasso_fit(&x, &y, alpha, LassoOptions::default()).unwrap();
            assert!((fit.beta_std[0] - expect).abs() < 1e-12, "{alpha}");
        }
    }

    #[test]
    fn alpha_zero_is_ols() {
        // tall full-rank design: unique least-squares solution
        let (x, y) = random_problem(11, 12, 3);
        let fit = lasso_fit(&x, &y, 0.0, LassoOptions { tol: 1e-12, max_sweeps: 100_000 }).unwrap();
        let mut a = DMatrix::from_element(12, 4, 1.0);
        a.view_mut((0, 1), (12, 3)).copy_from(&x);
        let ols = a.clone().svd(true, true).solve(&nalgebra::DVector::from_column_slice(&y), 1e-12).unwrap();
        assert!((fit.intercept - ols[0]).abs() < 1e-6);
        for j in 0..3 {
            assert!((fit.beta[j] - ols[j + 1]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_variance_column_dropped() {
        let (mut x, y) = random_problem(2, 10, 3);
        x.column_mut(1).fill(4.0);
        let fit = lasso_fit(&x, &y, 0.01, LassoOptions::default()).unwrap();
        assert_eq!(fit.dropped, vec![1]);
        assert_eq!(fit.beta[1], 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn bad_inputs() {
        let (mut x, y) = random_problem(2, 6, 2);
        assert!(matches!(lasso_fit(&x, &y, -1.0, LassoOptions::default()), Err(RegressError::BadAlpha(_))));
        assert!(matches!(lasso_fit(&x, &y[..5], 1.0, LassoOptions::default()), Err(RegressError::Shape(_))));
        x[(0, 0)] = f64::NAN;
        assert!(matches!(lasso_fit(&x, &y, 1.0, LassoOptions::default()), Err(RegressError::NonFinite)));
    }

    #[test]
    fn warm_path_matches_cold_fits() {
        let (x, y) = random_problem(9, 20, 5);
        let g = alpha_grid(&x, &y, 20, 1e-3).unwrap();
        let path = lasso_path(&x, &y, &g.alphas, LassoOptions::default()).unwrap();
        for (a, warm) in g.alphas.iter().zip(&path) {
            let cold = lasso_fit(&x, &y, *a, LassoOptions::default()).unwrap();
            assert!((warm.objective - cold.objective).abs() < 1e-9 * (1.0 + cold.objective));
        }
    }

    /// Subgradient conditions recomputed from scratch on the original data.
    fn kkt_on_original(x: &DMatrix<f64>, y: &[f64], fit: &LassoFit) -> f64 {
        let n = y.len() as f64;
        let r: Vec<f64> = fit.predict(x).iter().zip(y).map(|(p, y)| y - p).collect();
        let mut worst: f64 = 0.0;
        for j in 0..x.ncols() {
            if fit.x_scale[j] == 0.0 {
                continue;
            }
            let g: f64 = 2.0 / n
                * (0..y.len()).map(|i| (x[(i, j)] - fit.x_mean[j]) / fit.x_scale[j] * r[i]).sum::<f64>();
            let v = if fit.beta[j] != 0.0 { (g - fit.alpha * fit.beta[j].signum()).abs() } else { (g.abs() - fit.alpha).max(0.0) };
            worst = worst.max(v);
        }
        worst
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn kkt_and_monotone_objective(seed in any::<u64>(), n in 5usize..30, p in 1usize..8, frac in 0.0f64..1.0) {
            let (x, y) = random_problem(seed, n, p);
            let g = alpha_grid(&x, &y, 10, 1e-3).unwrap();
            let alpha = g.alpha_max * frac;
            let opts = LassoOptions::default();
            let fit = lasso_fit(&x, &y, alpha, opts).unwrap();
            prop_assert!(fit.converged);
            let bound = 10.0 * opts.tol * fit.y_scale;
            prop_assert!(fit.kkt_violation <= bound, "{} > {}", fit.kkt_violation, bound);
            prop_assert!(kkt_on_original(&x, &y, &fit) <= bound);
            for w in fit.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
            }
        }

        #[test]
        fn scale_equivariance(seed in any::<u64>(), c in 0.01f64..100.0) {
            let (x, y) = random_problem(seed, 15, 4);
            let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
            let g = alpha_grid(&x, &y, 10, 1e-3).unwrap();
            let gc = alpha_grid(&x, &yc, 10, 1e-3).unwrap();
            prop_assert!((gc.alpha_max - c * g.alpha_max).abs() <= 1e-12 * gc.alpha_max);
            let a = 0.3 * g.alpha_max;
            let f = lasso_fit(&x, &y, a, LassoOptions::default()).unwrap();
            let fc = lasso_fit(&x, &yc, a * c, LassoOptions::default()).unwrap();
            prop_assert_eq!(f.support(), fc.support());
            for j in 0..4 {
                prop_assert!((fc.beta_std[j] - c * f.beta_std[j]).abs() <= 1e-5 * c * (1.0 + f.beta_std[j].abs()));
            }
        }
    }
}

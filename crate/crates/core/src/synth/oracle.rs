use nalgebra::{DMatrix, DVector};

use super::{Result, SynthError};

pub const ORACLE_MAX_P: usize = 3;
pub const ORACLE_MAX_N: usize = 8;

struct Quadratic {
    n: f64,
    yy: f64,
    b: DVector<f64>,
    g: DMatrix<f64>,
    alpha: f64,
}

impl Quadratic {
    /// `(1/n)‖y − Xβ‖² + α‖β‖₁` expanded through the Gram matrix.
    fn eval(&self, beta: &[f64]) -> f64 {
        let p = beta.len();
        let mut quad = 0.0;
        let mut lin = 0.0;
        for j in 0..p {
            lin += self.b[j] * beta[j];
            for k in 0..p {
                quad += beta[j] * self.g[(j, k)] * beta[k];
            }
        }
        (self.yy - 2.0 * lin + quad) / self.n + self.alpha * beta.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Best point of a `(2h+1)^p` lattice with step `step` around `center`.
    fn scan(&self, center: &[f64], half: i64, step: f64) -> (Vec<f64>, f64, bool) {
        let p = center.len();
        let side = (2 * half + 1) as usize;
        let total = side.pow(p as u32);
        let mut best = center.to_vec();
        let mut best_val = self.eval(center);
        let mut best_idx = vec![half; p];
        let mut point = vec![0.0; p];
        for flat in 0..total {
            let mut rest = flat;
            let mut idx = vec![0i64; p];
            for j in 0..p {
                idx[j] = (rest % side) as i64;
                rest /= side;
                point[j] = center[j] + (idx[j] - half) as f64 * step;
            }
            let v = self.eval(&point);
            if v < best_val {
                best_val = v;
                best.copy_from_slice(&point);
                best_idx = idx;
            }
        }
        let on_edge = best_idx.iter().any(|&i| i == 0 || i == 2 * half);
        (best, best_val, on_edge)
    }
}

/// Brute-force minimizer of `(1/n)‖y − Xβ‖² + α‖β‖₁` (no intercept, no
/// standardization) for tiny problems.
///
/// A 41-point-per-axis lattice covers the box `[−B, B]^p`, where `B` bounds
/// any β with objective no larger than at β = 0. The best lattice point is
/// then refined on successively finer lattices, shrinking the step by 5 only
/// once the optimum is interior to the current window.
pub fn oracle_lasso(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    if p == 0 || p > ORACLE_MAX_P || n > ORACLE_MAX_N {
        return Err(SynthError::OracleSize { n, p });
    }
    if n != y.len() || n == 0 {
        return Err(SynthError::Invalid(format!("X has {n} rows, y has {}", y.len())));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(SynthError::Invalid(format!("alpha {alpha}")));
    }
    let yv = DVector::from_column_slice(y);
    let g = x.transpose() * x;
    let q = Quadratic { n: n as f64, yy: yv.norm_squared(), b: x.transpose() * &yv, g: g.clone(), alpha };

    let ynorm = yv.norm();
    if ynorm == 0.0 {
        return Ok(vec![0.0; p]);
    }
    let mut bound = f64::INFINITY;
    if alpha > 0.0 {
        bound = ynorm * ynorm / (q.n * alpha);
    }
    let lambda_min = g.clone().symmetric_eigen().eigenvalues.min();
    if lambda_min > 1e-12 * (1.0 + g.norm()) {
        bound = bound.min(2.0 * ynorm / lambda_min.sqrt());
    }
    if !bound.is_finite() {
        return Err(SynthError::Invalid("unbounded problem: alpha = 0 with rank-deficient X".into()));
    }

    let mut step = bound / 20.0;
    let (mut best, mut best_val, _) = q.scan(&vec![0.0; p], 20, step);
    let floor = 1e-12 * (1.0 + bound);
    let mut guard = 0;
    while step > floor && guard < 10_000 {
        guard += 1;
        let (cand, val, on_edge) = q.scan(&best, 10, step);
        if val < best_val {
            best = cand;
            best_val = val;
        }
        if !on_edge {
            step /= 5.0;
        }
    }
    Ok(best)
}

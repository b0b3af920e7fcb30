use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{RegressError, Result};

/// Least-squares fit with intercept on a subset of the columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// Column count of the full design.
    pub p: usize,
    pub support: Vec<usize>,
    /// One coefficient per support column.
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Ridge penalty used when the restricted design was rank deficient.
    pub ridge: Option<f64>,
}

impl OlsFit {
    pub fn beta(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.p];
        for (&j, &c) in self.support.iter().zip(&self.coef) {
            b[j] = c;
        }
        b
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.support.iter().zip(&self.coef).map(|(&j, c)| row[j] * c).sum::<f64>()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.predict_row(x.row(i).iter().copied().collect::<Vec<_>>().as_slice())).collect()
    }
}

/// Refits `y` on the columns in `support` by Householder QR on the centered
/// data. Rank-deficient designs fall back to a tiny ridge penalty; an empty
/// support gives the mean-only model.
pub fn ols_refit(x: &DMatrix<f64>, y: &[f64], support: &[usize]) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(RegressError::Shape(format!("X has {n} rows, y has {}", y.len())));
    }
    if n == 0 {
        return Err(RegressError::TooFewRows { n, need: 1 });
    }
    if let Some(&j) = support.iter().find(|&&j| j >= p) {
        return Err(RegressError::Shape(format!("support column {j} out of range for {p} columns")));
    }
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    if support.is_empty() {
        warn!("empty support; using the mean-only model");
        return Ok(OlsFit { p, support: Vec::new(), coef: Vec::new(), intercept: y_mean, ridge: None });
    }

    let s = support.len();
    let means: Vec<f64> = support.iter().map(|&j| x.column(j).sum() / nf).collect();
    let xc = DMatrix::from_fn(n, s, |i, k| x[(i, support[k])] - means[k]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let mut ridge = None;
    let coef = {
        let qr = xc.clone().qr();
        let r = qr.r();
        let diag: Vec<f64> = (0..r.nrows().min(s)).map(|k| r[(k, k)].abs()).collect();
        let top = diag.iter().copied().fold(0.0, f64::max);
        let full_rank = n > s && top > 0.0 && diag.iter().all(|&d| d > 1e-10 * top);
        if full_rank {
            let rhs = qr.q().transpose() * &yc;
            r.solve_upper_triangular(&rhs).ok_or(RegressError::Singular)?
        } else {
            let gram = xc.transpose() * &xc;
            let lambda = 1e-8 * (gram.trace() / s as f64).max(f64::MIN_POSITIVE);
            warn!("restricted design is rank deficient; ridge fallback with lambda {lambda:e}");
            ridge = Some(lambda);
            let reg = gram + DMatrix::identity(s, s) * lambda;
            reg.cholesky().ok_or(RegressError::Singular)?.solve(&(xc.transpose() * &yc))
        }
    };
    let coef: Vec<f64> = coef.iter().copied().collect();
    let intercept = y_mean - coef.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    Ok(OlsFit { p, support: support.to_vec(), coef, intercept, ridge })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.0..1.0));
        let y = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn interpolates_when_square_after_centering() {
        let (x, y) = random(5, 4, 1);
        let fit = ols_refit(&x, &y, &[0, 1, 2, 3]).unwrap();
        assert!(fit.ridge.is_none());
        for (p, t) in fit.predict(&x).iter().zip(&y) {
            assert!((p - t).abs() < 1e-10);
        }
    }

    #[test]
    fn orthonormal_columns_give_inner_products() {
        let (x, y) = random(12, 3, 2);
        let xc = DMatrix::from_fn(12, 3, |i, j| x[(i, j)] - x.column(j).mean());
        let q = xc.qr().q();
        let fit = ols_refit(&q, &y, &[0, 1, 2]).unwrap();
        let expect = q.transpose() * DVector::from_column_slice(&y);
        for k in 0..3 {
            assert!((fit.coef[k] - expect[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn residuals_orthogonal_to_support() {
        let (x, y) = random(30, 6, 3);
        let fit = ols_refit(&x, &y, &[1, 3, 4]).unwrap();
        let pred = fit.predict(&x);
        let r: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        assert!(r.iter().sum::<f64>().abs() < 1e-10);
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for &j in &fit.support {
            let dot: f64 = (0..30).map(|i| x[(i, j)] * r[i]).sum();
            let xnorm = x.column(j).norm();
            assert!(dot.abs() <= 1e-8 * xnorm * ynorm);
        }
        assert_eq!(fit.beta()[0], 0.0);
    }

    #[test]
    fn empty_support_is_mean_model() {
        let (x, y) = random(8, 2, 4);
        let fit = ols_refit(&x, &y, &[]).unwrap();
        let mean = y.iter().sum::<f64>() / 8.0;
        assert!(fit.predict(&x).iter().all(|&p| p == mean));
    }

    #[test]
    fn collinear_support_uses_ridge() {
        let (mut x, y) = random(10, 3, 5);
        let c0: Vec<f64> = x.column(0).iter().map(|v| 2.0 * v).collect();
        x.column_mut(2).copy_from_slice(&c0);
        let fit = ols_refit(&x, &y, &[0, 2]).unwrap();
        assert!(fit.ridge.is_some());
        assert!(fit.coef.iter().all(|c| c.is_finite()));
    }
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeParams {
    pub l2: f64,
}

impl Default for RidgeParams {
    fn default() -> Self {
        Self { l2: 1.0 }
    }
}

/// Minimizes `(1/2n)||y - Xw - b||^2 + penalty * (l1_ratio ||w||_1 + (1 - l1_ratio)/2 ||w||^2)`.
///
/// With `l1_ratio = 0` this is ridge with `l2 = n * penalty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElasticNetParams {
    pub penalty: f64,
    pub l1_ratio: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ElasticNetParams {
    fn default() -> Self {
        Self {
            penalty: 0.001,
            l1_ratio: 0.5,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Coordinate-descent sweeps used (zero for closed-form fits).
    pub iterations: usize,
}

struct Centered {
    x: DMatrix<f64>,
    y: DVector<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn center(features: &[Vec<f64>], targets: &[f64]) -> Centered {
    let n = features.len();
    let p = features.first().map_or(0, Vec::len);
    let x_mean: Vec<f64> = (0..p)
        .map(|c| features.iter().map(|r| r[c]).sum::<f64>() / n as f64)
        .collect();
    let y_mean = super::mean(targets);
    let x = DMatrix::from_fn(n, p, |r, c| features[r][c] - x_mean[c]);
    let y = DVector::from_iterator(n, targets.iter().map(|&t| t - y_mean));
    Centered { x, y, x_mean, y_mean }
}

impl LinearModel {
    fn from_centered(w: Vec<f64>, c: &Centered, iterations: usize) -> Self {
        let intercept = c.y_mean - w.iter().zip(&c.x_mean).map(|(a, b)| a * b).sum::<f64>();
        Self {
            coefficients: w,
            intercept,
            iterations,
        }
    }

    /// Closed-form ridge on mean-centred data. `l2 = 0` gives the
    /// minimum-norm least-squares solution (pseudo-inverse).
    pub fn fit_ridge(params: RidgeParams, features: &[Vec<f64>], targets: &[f64]) -> Self {
        let c = center(features, targets);
        let p = c.x.ncols();
        let w = if params.l2 > 0.0 {
            let mut gram = c.x.transpose() * &c.x;
            for d in 0..p {
                gram[(d, d)] += params.l2;
            }
            let rhs = c.x.transpose() * &c.y;
            match gram.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => pinv_solve(gram, &rhs),
            }
        } else {
            pinv_solve(c.x.clone(), &c.y)
        };
        Self::from_centered(w.iter().copied().collect(), &c, 0)
    }

    /// Cyclic coordinate descent with soft-thresholding, stopped when the
    /// largest coefficient change in a sweep drops below `tol`.
    pub fn fit_elastic_net(params: ElasticNetParams, features: &[Vec<f64>], targets: &[f64]) -> Self {
        let c = center(features, targets);
        let (n, p) = c.x.shape();
        let nf = n as f64;
        let l1 = params.penalty * params.l1_ratio;
        let l2 = params.penalty * (1.0 - params.l1_ratio);
        let col_sq: Vec<f64> = (0..p).map(|j| c.x.column(j).norm_squared() / nf).collect();

        let mut w = vec![0.0; p];
        let mut resid: Vec<f64> = c.y.iter().copied().collect();
        let mut sweeps = 0;
        while sweeps < params.max_iter {
            sweeps += 1;
            let mut max_delta: f64 = 0.0;
            for j in 0..p {
                let denom = col_sq[j] + l2;
                if denom <= 0.0 {
                    continue;
                }
                let col = c.x.column(j);
                let rho = col.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / nf + col_sq[j] * w[j];
                let new = soft_threshold(rho, l1) / denom;
                let delta = new - w[j];
                if delta != 0.0 {
                    for (r, x) in resid.iter_mut().zip(col.iter()) {
                        *r -= delta * x;
                    }
                    w[j] = new;
                }
                max_delta = max_delta.max(delta.abs());
            }
            if max_delta < params.tol {
                break;
            }
        }
        Self::from_centered(w, &c, sweeps)
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Least-squares solve through the SVD, dropping singular values below a
/// relative cutoff.
fn pinv_solve(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let p = a.ncols();
    if p == 0 {
        return DVector::zeros(0);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = smax * 1e-12 * (svd.singular_values.len() as f64);
    svd.solve(b, cutoff).unwrap_or_else(|_| DVector::zeros(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand::Rng;

    fn random_design(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn unpenalized_ridge_recovers_linear_law() {
        let x = random_design(40, 4, 1);
        let w = [1.5, -2.0, 0.25, 3.0];
        let y: Vec<f64> = x.iter().map(|r| 0.7 + r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()).collect();
        let m = LinearModel::fit_ridge(RidgeParams { l2: 0.0 }, &x, &y);
        for (a, b) in m.coefficients.iter().zip(&w) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((m.intercept - 0.7).abs() < 1e-6);
        let q = [0.3, 0.1, -0.9, 2.0];
        let expect = 0.7 + q.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        assert!((m.predict_one(&q) - expect).abs() < 1e-6);
    }

    #[test]
    fn singular_design_uses_pseudo_inverse() {
        // duplicated column: infinitely many solutions, min-norm splits evenly
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        let m = LinearModel::fit_ridge(RidgeParams { l2: 0.0 }, &x, &y);
        assert!((m.coefficients[0] - 1.0).abs() < 1e-9);
        assert!((m.coefficients[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn elastic_net_without_l1_matches_ridge() {
        let x = random_design(60, 5, 2);
        let mut rng = rng_from_seed(3);
        let y: Vec<f64> = x.iter().map(|r| r[0] - 0.5 * r[3] + rng.gen_range(-0.1..0.1)).collect();
        let penalty = 0.05;
        let en = LinearModel::fit_elastic_net(
            ElasticNetParams {
                penalty,
                l1_ratio: 0.0,
                max_iter: 10_000,
                tol: 1e-10,
            },
            &x,
            &y,
        );
        let ridge = LinearModel::fit_ridge(RidgeParams { l2: 60.0 * penalty }, &x, &y);
        for row in &x {
            assert!((en.predict_one(row) - ridge.predict_one(row)).abs() < 1e-4);
        }
    }

    #[test]
    fn lasso_zeroes_irrelevant_features() {
        let x = random_design(80, 6, 4);
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[1]).collect();
        let m = LinearModel::fit_elastic_net(
            ElasticNetParams {
                penalty: 0.1,
                l1_ratio: 1.0,
                ..ElasticNetParams::default()
            },
            &x,
            &y,
        );
        for (j, &c) in m.coefficients.iter().enumerate() {
            if j == 1 {
                assert!(c > 2.5);
            } else {
                assert_eq!(c, 0.0);
            }
        }
        assert!(m.iterations < 1000);
    }
}

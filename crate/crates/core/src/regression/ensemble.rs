//! Tree ensembles: bagged random forests and least-squares gradient boosting.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeParams};
use crate::metrics::round_half_up;
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of features considered at each split.
    pub feature_subsample: f64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 12,
            min_leaf: 2,
            feature_subsample: 1.0 / 3.0,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn fit(params: ForestParams, x: &[Vec<f64>], y: &[f64], seed: u64) -> Self {
        let n = y.len();
        let p = x[0].len();
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            max_features: round_half_up(params.feature_subsample * p as f64).clamp(1, p.max(1)),
        };
        let trees = (0..params.trees)
            .map(|t| {
                let mut rng = rng_from_seed(derive_seed(&[seed, t as u64]));
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit(tree_params, x, y, &rows, &mut rng)
            })
            .collect();
        Self { trees }
    }

    pub fn predict_one(&self, q: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_one(q)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub stages: usize,
    pub depth: usize,
    pub learning_rate: f64,
    /// Row fraction drawn without replacement for each stage.
    pub subsample: f64,
    pub min_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            stages: 100,
            depth: 3,
            learning_rate: 0.1,
            subsample: 1.0,
            min_leaf: 1,
        }
    }
}

/// Prediction is `mean(y) + learning_rate * sum(tree outputs)`, each tree
/// fit to the residuals left by the previous stages.
#[derive(Debug, Clone)]
pub struct GradientBoosting {
    base: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
}

impl GradientBoosting {
    pub fn fit(params: BoostParams, x: &[Vec<f64>], y: &[f64], seed: u64) -> Self {
        let n = y.len();
        let p = x[0].len();
        let base = super::mean(y);
        let tree_params = TreeParams {
            max_depth: params.depth,
            min_leaf: params.min_leaf,
            max_features: p,
        };
        let n_sub = round_half_up(params.subsample * n as f64).clamp(1, n);
        let mut rng = rng_from_seed(seed);
        let mut current = vec![base; n];
        let mut trees = Vec::with_capacity(params.stages);
        for _ in 0..params.stages {
            let resid: Vec<f64> = y.iter().zip(&current).map(|(a, b)| a - b).collect();
            if resid.iter().all(|&r| r == 0.0) {
                break;
            }
            let rows: Vec<usize> = if n_sub < n {
                let mut s = sample(&mut rng, n, n_sub).into_vec();
                s.sort_unstable();
                s
            } else {
                (0..n).collect()
            };
            let tree = RegressionTree::fit(tree_params, x, &resid, &rows, &mut rng);
            for (c, row) in current.iter_mut().zip(x) {
                *c += params.learning_rate * tree.predict_one(row);
            }
            trees.push(tree);
        }
        Self {
            base,
            learning_rate: params.learning_rate,
            trees,
        }
    }

    pub fn predict_one(&self, q: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict_one(q)).sum::<f64>()
    }

    pub fn n_stages(&self) -> usize {
        self.trees.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wiggly(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 * 0.37 % 1.0, (i as f64 * 0.61).sin()]).collect();
        let y: Vec<f64> = x.iter().map(|r| (3.0 * r[0]).sin() + r[1] * r[1]).collect();
        (x, y)
    }

    #[test]
    fn boosting_with_unit_rate_interpolates_small_sets() {
        for n in [4usize, 7, 11, 16] {
            let (x, y) = wiggly(n);
            let depth = (n as f64).log2().ceil() as usize;
            let m = GradientBoosting::fit(
                BoostParams {
                    stages: 100,
                    depth,
                    learning_rate: 1.0,
                    subsample: 1.0,
                    min_leaf: 1,
                },
                &x,
                &y,
                0,
            );
            let mse = x
                .iter()
                .zip(&y)
                .map(|(r, &t)| (m.predict_one(r) - t).powi(2))
                .sum::<f64>()
                / n as f64;
            assert!(mse.sqrt() < 1e-8, "n = {n}, rmse = {}", mse.sqrt());
        }
    }

    #[test]
    fn forest_is_seed_deterministic() {
        let (x, y) = wiggly(60);
        let a = RandomForest::fit(ForestParams::default(), &x, &y, 9);
        let b = RandomForest::fit(ForestParams::default(), &x, &y, 9);
        let c = RandomForest::fit(ForestParams::default(), &x, &y, 10);
        let q = [0.42, -0.3];
        assert_eq!(a.predict_one(&q), b.predict_one(&q));
        assert_eq!(a.trees, b.trees);
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn forest_fits_a_smooth_signal() {
        let (x, y) = wiggly(200);
        let m = RandomForest::fit(ForestParams::default(), &x, &y, 1);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let ss_res: f64 = x.iter().zip(&y).map(|(r, &t)| (m.predict_one(r) - t).powi(2)).sum();
        assert!(1.0 - ss_res / ss_tot > 0.9);
    }

    #[test]
    fn subsampled_boosting_is_deterministic() {
        let (x, y) = wiggly(50);
        let p = BoostParams {
            subsample: 0.5,
            ..BoostParams::default()
        };
        let a = GradientBoosting::fit(p, &x, &y, 3);
        let b = GradientBoosting::fit(p, &x, &y, 3);
        assert_eq!(a.predict_one(&[0.1, 0.2]), b.predict_one(&[0.1, 0.2]));
        assert_eq!(a.n_stages(), 100);
    }
}

//! Regression families used to predict the reliability score from profile
//! prefixes, together with evaluation metrics and best-model selection.
//!
//! All five families are implemented here; nothing is delegated to an
//! external ML library. Feature matrices are row-major `Vec<Vec<f64>>`.

mod knn;
mod linear;
mod tree;
mod ensemble;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::SplitKind;
use crate::error::{Error, Result};

pub use ensemble::{BoostParams, ForestParams, GradientBoosting, RandomForest};
pub use knn::{KnnParams, KnnRegressor};
pub use linear::{ElasticNetParams, LinearModel, RidgeParams};
pub use tree::{RegressionTree, TreeParams};

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Knn,
    Ridge,
    ElasticNet,
    RandomForest,
    GradBoost,
}

impl Family {
    /// Fixed order, also used to break ties.
    pub const ALL: [Family; 5] = [
        Family::Knn,
        Family::Ridge,
        Family::ElasticNet,
        Family::RandomForest,
        Family::GradBoost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Knn => "knn",
            Family::Ridge => "ridge",
            Family::ElasticNet => "elastic_net",
            Family::RandomForest => "random_forest",
            Family::GradBoost => "grad_boost",
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, Family::Ridge | Family::ElasticNet)
    }

    pub(crate) fn rank(self) -> usize {
        Family::ALL.iter().position(|&f| f == self).unwrap_or(usize::MAX)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::config(format!("unknown model family `{s}`")))
    }
}

/// Family plus its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    Knn(KnnParams),
    Ridge(RidgeParams),
    ElasticNet(ElasticNetParams),
    RandomForest(ForestParams),
    GradBoost(BoostParams),
}

impl ModelParams {
    pub fn family(&self) -> Family {
        match self {
            ModelParams::Knn(_) => Family::Knn,
            ModelParams::Ridge(_) => Family::Ridge,
            ModelParams::ElasticNet(_) => Family::ElasticNet,
            ModelParams::RandomForest(_) => Family::RandomForest,
            ModelParams::GradBoost(_) => Family::GradBoost,
        }
    }

    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Knn => ModelParams::Knn(KnnParams::default()),
            Family::Ridge => ModelParams::Ridge(RidgeParams::default()),
            Family::ElasticNet => ModelParams::ElasticNet(ElasticNetParams::default()),
            Family::RandomForest => ModelParams::RandomForest(ForestParams::default()),
            Family::GradBoost => ModelParams::GradBoost(BoostParams::default()),
        }
    }

    /// The five families with default hyperparameters, in fixed order.
    pub fn defaults() -> Vec<ModelParams> {
        Family::ALL.into_iter().map(Self::default_for).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::config(format!("{}: {msg}", self.family())));
        match *self {
            ModelParams::Knn(p) if p.k == 0 => bad("k must be at least 1"),
            ModelParams::Ridge(p) if !(p.l2 >= 0.0) => bad("l2 must be nonnegative"),
            ModelParams::ElasticNet(p)
                if !(p.penalty >= 0.0 && (0.0..=1.0).contains(&p.l1_ratio) && p.tol > 0.0 && p.max_iter > 0) =>
            {
                bad("needs penalty >= 0, l1_ratio in [0, 1], tol > 0, max_iter > 0")
            }
            ModelParams::RandomForest(p)
                if p.trees == 0
                    || p.max_depth == 0
                    || p.min_leaf == 0
                    || !(p.feature_subsample > 0.0 && p.feature_subsample <= 1.0) =>
            {
                bad("needs trees, max_depth, min_leaf >= 1 and feature_subsample in (0, 1]")
            }
            ModelParams::GradBoost(p)
                if p.stages == 0
                    || p.depth == 0
                    || p.min_leaf == 0
                    || !(p.learning_rate > 0.0)
                    || !(p.subsample > 0.0 && p.subsample <= 1.0) =>
            {
                bad("needs stages, depth, min_leaf >= 1, learning_rate > 0, subsample in (0, 1]")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub params: ModelParams,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(params: ModelParams, seed: u64) -> Self {
        Self { params, seed }
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }
}

#[derive(Debug, Clone)]
enum ModelState {
    Knn(KnnRegressor),
    Linear(LinearModel),
    Forest(RandomForest),
    Boost(GradientBoosting),
}

/// A trained model; prediction is a pure function of the stored state.
#[derive(Debug, Clone)]
pub struct FittedModel {
    family: Family,
    n_features: usize,
    state: ModelState,
    pub fit_seconds: f64,
}

impl FittedModel {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Coefficients and intercept of the linear families.
    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.state {
            ModelState::Linear(m) => Some(m),
            _ => None,
        }
    }
}

fn check_matrix(features: &[Vec<f64>]) -> Result<usize> {
    let p = features.first().map_or(0, Vec::len);
    for row in features {
        if row.len() != p {
            return Err(Error::Dimension {
                expected: p,
                actual: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("feature matrix contains non-finite values"));
        }
    }
    Ok(p)
}

pub fn fit(spec: &ModelSpec, features: &[Vec<f64>], targets: &[f64]) -> Result<FittedModel> {
    spec.params.validate()?;
    if features.len() != targets.len() {
        return Err(Error::Dimension {
            expected: features.len(),
            actual: targets.len(),
        });
    }
    if features.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 training rows, got {}",
            features.len()
        )));
    }
    let n_features = check_matrix(features)?;
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("targets contain non-finite values"));
    }

    let start = Instant::now();
    let state = match spec.params {
        ModelParams::Knn(p) => ModelState::Knn(KnnRegressor::fit(p, features, targets)),
        ModelParams::Ridge(p) => ModelState::Linear(LinearModel::fit_ridge(p, features, targets)),
        ModelParams::ElasticNet(p) => ModelState::Linear(LinearModel::fit_elastic_net(p, features, targets)),
        ModelParams::RandomForest(p) => ModelState::Forest(RandomForest::fit(p, features, targets, spec.seed)),
        ModelParams::GradBoost(p) => ModelState::Boost(GradientBoosting::fit(p, features, targets, spec.seed)),
    };
    Ok(FittedModel {
        family: spec.family(),
        n_features,
        state,
        fit_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn predict(model: &FittedModel, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    if let Some(row) = features.iter().find(|r| r.len() != model.n_features) {
        return Err(Error::Dimension {
            expected: model.n_features,
            actual: row.len(),
        });
    }
    Ok(features
        .iter()
        .map(|x| match &model.state {
            ModelState::Knn(m) => m.predict_one(x),
            ModelState::Linear(m) => m.predict_one(x),
            ModelState::Forest(m) => m.predict_one(x),
            ModelState::Boost(m) => m.predict_one(x),
        })
        .collect())
}

/// MAE, RMSE and coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mae: f64,
    pub rmse: f64,
    /// `-inf` when the truth is constant but the prediction is not.
    pub r2: f64,
}

pub fn evaluate(y_true: &[f64], y_pred: &[f64]) -> Result<Scores> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::InsufficientData("cannot score an empty test set".into()));
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let (abs, ss_res, ss_tot) = y_true
        .iter()
        .zip(y_pred)
        .fold((0.0, 0.0, 0.0), |(a, r, t), (&y, &p)| {
            let e = y - p;
            (a + e.abs(), r + e * e, t + (y - mean) * (y - mean))
        });
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok(Scores {
        mae: abs / n,
        rmse: (ss_res / n).sqrt(),
        r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub split: SplitKind,
    pub family: Family,
    pub horizon: usize,
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub fit_seconds: f64,
    pub test_seconds: f64,
    pub test_per_sample_seconds: f64,
}

/// Fits on the training rows, predicts the test rows and scores them.
pub fn train_and_evaluate(
    spec: &ModelSpec,
    split: SplitKind,
    horizon: usize,
    train: (&[Vec<f64>], &[f64]),
    test: (&[Vec<f64>], &[f64]),
) -> Result<(EvalRecord, Vec<f64>)> {
    let model = fit(spec, train.0, train.1)?;
    let start = Instant::now();
    let pred = predict(&model, test.0)?;
    let test_seconds = start.elapsed().as_secs_f64();
    let scores = evaluate(test.1, &pred)?;
    let record = EvalRecord {
        split,
        family: spec.family(),
        horizon,
        mae: scores.mae,
        rmse: scores.rmse,
        r2: scores.r2,
        fit_seconds: model.fit_seconds,
        test_seconds,
        test_per_sample_seconds: test_seconds / test.1.len() as f64,
    };
    Ok((record, pred))
}

/// Winner of one `(split, T)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRow {
    pub split: SplitKind,
    pub horizon: usize,
    pub family: Family,
    pub r2: f64,
    pub mae: f64,
    pub rmse: f64,
    pub fit_seconds: f64,
    pub test_seconds: f64,
    pub test_per_sample_seconds: f64,
}

/// Highest-R² family per `(split, T)`; ties go to the earlier family in
/// [`Family::ALL`]. Rows come out sorted by split then horizon.
pub fn best_by_horizon(records: &[EvalRecord]) -> Vec<BestRow> {
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.split, a.horizon)
            .cmp(&(b.split, b.horizon))
            .then(b.r2.total_cmp(&a.r2))
            .then(a.family.rank().cmp(&b.family.rank()))
    });
    let mut rows: Vec<BestRow> = Vec::new();
    for r in sorted {
        if rows.last().is_some_and(|b| (b.split, b.horizon) == (r.split, r.horizon)) {
            continue;
        }
        rows.push(BestRow {
            split: r.split,
            horizon: r.horizon,
            family: r.family,
            r2: r.r2,
            mae: r.mae,
            rmse: r.rmse,
            fit_seconds: r.fit_seconds,
            test_seconds: r.test_seconds,
            test_per_sample_seconds: r.test_per_sample_seconds,
        });
    }
    rows
}

/// Arithmetic mean; callers guarantee a non-empty slice.
pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

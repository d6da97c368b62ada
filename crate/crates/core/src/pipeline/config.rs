use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::HorizonSchedule;
use crate::error::{Error, Result};
use crate::metrics::{IndexOrigin, MetricWindow};
use crate::profiler::EmbeddingConfig;
use crate::regression::ModelParams;
use crate::solver::{InitStrategy, ParamGrid, StabilizationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub random_test_fraction: f64,
    pub center_train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            random_test_fraction: 0.40,
            center_train_fraction: 0.60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub tol: f64,
    pub asymptotic_entry: f64,
    pub strategies: Vec<InitStrategy>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            alpha: -0.1,
            beta: 4.0,
            iterations: 20,
            tol: 1e-10,
            asymptotic_entry: 0.1,
            strategies: vec![InitStrategy::NEAR_ROOT, InitStrategy::MODERATE, InitStrategy::RANDOM_BOX],
        }
    }
}

/// Everything a run depends on. Defaults reproduce the full-scale sweep;
/// [`PipelineConfig::desk`] is a laptop-sized preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub global_seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub grid: ParamGrid,
    /// Degree of the roots-of-unity test polynomial.
    pub problem_degree: usize,
    pub n_runs: usize,
    pub k_iters: usize,
    pub init_strategy: InitStrategy,
    pub stabilization: StabilizationConfig,
    pub embedding: EmbeddingConfig,
    pub smooth_window: usize,
    pub metric_window: MetricWindow,
    pub good_fraction: f64,
    pub histogram_bin_width: usize,
    pub index_origin: IndexOrigin,
    pub horizons: HorizonSchedule,
    pub splits: SplitConfig,
    pub models: Vec<ModelParams>,
    /// Overrides the curve marker otherwise taken from the timing summary.
    pub curve_marker: Option<usize>,
    pub validation: ValidationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            global_seed: 20_240_601,
            output_dir: PathBuf::from("runs/default"),
            workers: None,
            grid: ParamGrid::default(),
            problem_degree: 7,
            n_runs: 1000,
            k_iters: 200,
            init_strategy: InitStrategy::RANDOM_BOX,
            stabilization: StabilizationConfig::default(),
            embedding: EmbeddingConfig::default(),
            smooth_window: 4,
            metric_window: MetricWindow::default(),
            good_fraction: 0.2,
            histogram_bin_width: 5,
            index_origin: IndexOrigin::default(),
            horizons: HorizonSchedule::default(),
            splits: SplitConfig::default(),
            models: ModelParams::defaults(),
            curve_marker: None,
            validation: ValidationConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// 20 x 20 grid, 64 runs per point, 120 iterations.
    pub fn desk() -> Self {
        Self::default().into_desk()
    }

    pub fn into_desk(mut self) -> Self {
        self.grid.n_alpha = 20;
        self.grid.n_beta = 20;
        self.n_runs = 64;
        self.k_iters = 120;
        if self.output_dir == Path::new("runs/default") {
            self.output_dir = PathBuf::from("runs/desk");
        }
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn profile_len(&self) -> usize {
        self.embedding.profile_len(self.k_iters)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.stabilization.validate()?;
        self.embedding.validate()?;
        self.metric_window.validate()?;
        if self.problem_degree == 0 {
            return Err(Error::config("problem_degree must be at least 1"));
        }
        if self.n_runs < 2 {
            return Err(Error::config("n_runs must be at least 2 for the kNN proxy"));
        }
        if self.profile_len() == 0 {
            return Err(Error::config(format!(
                "k_iters = {} leaves no proxy profile (needs at least lookback + h_max = {})",
                self.k_iters,
                self.embedding.lookback + self.embedding.h_max
            )));
        }
        if self.smooth_window == 0 {
            return Err(Error::config("smooth_window must be at least 1"));
        }
        if !(self.good_fraction > 0.0 && self.good_fraction < 1.0) {
            return Err(Error::config("good_fraction must lie in (0, 1)"));
        }
        if self.histogram_bin_width == 0 {
            return Err(Error::config("histogram_bin_width must be positive"));
        }
        if self.horizons.start == 0 || self.horizons.step == 0 {
            return Err(Error::config("horizon schedule needs start >= 1 and step >= 1"));
        }
        for (name, f) in [
            ("random_test_fraction", self.splits.random_test_fraction),
            ("center_train_fraction", self.splits.center_train_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.models.is_empty() {
            return Err(Error::config("at least one model family is required"));
        }
        for m in &self.models {
            m.validate()?;
        }
        let mut families: Vec<_> = self.models.iter().map(ModelParams::family).collect();
        families.sort();
        families.dedup();
        if families.len() != self.models.len() {
            return Err(Error::config("each model family may appear only once"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.validation.strategies.is_empty() || self.validation.iterations == 0 {
            return Err(Error::config("validation needs strategies and at least one iteration"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_experimental_protocol() {
        let c = PipelineConfig::default();
        assert_eq!(c.grid.alpha_range, [-3.0, 5.0]);
        assert_eq!(c.grid.beta_range, [-2.0, 4.0]);
        assert_eq!((c.grid.n_alpha, c.grid.n_beta), (60, 60));
        assert_eq!((c.n_runs, c.k_iters), (1000, 200));
        assert_eq!((c.embedding.lookback, c.embedding.h_min, c.embedding.h_max), (5, 1, 5));
        assert_eq!(c.embedding.k_neighbors, 3);
        assert_eq!(c.embedding.internal_train_fraction, 0.60);
        assert_eq!(c.smooth_window, 4);
        assert_eq!((c.metric_window.t_start, c.metric_window.t_stop), (10, 200));
        assert_eq!((c.horizons.start, c.horizons.step, c.horizons.max_t), (1, 2, 35));
        assert_eq!(c.splits.random_test_fraction, 0.40);
        assert_eq!(c.profile_len(), 191);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let c = PipelineConfig::desk();
        let text = c.to_toml_string().unwrap();
        let back = PipelineConfig::from_toml_str(&text).unwrap();
        assert_eq!(c, back);
        let partial = PipelineConfig::from_toml_str("n_runs = 32\n[grid]\nn_alpha = 4\n").unwrap();
        assert_eq!(partial.n_runs, 32);
        assert_eq!(partial.grid.n_alpha, 4);
        assert_eq!(partial.grid.n_beta, 60);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = PipelineConfig::desk();
        c.k_iters = 9;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(PipelineConfig::from_toml_str("n_runs = \"many\"").is_err());
        let mut c = PipelineConfig::desk();
        c.models.push(c.models[0]);
        assert!(c.validate().is_err());
    }
}

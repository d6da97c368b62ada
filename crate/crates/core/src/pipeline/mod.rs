//! Staged experiment runner.
//!
//! Each stage reads the persisted outputs of its upstream stages and writes
//! plain-text artifacts under the output directory. `manifest.json` records
//! per stage a fingerprint (stage name, the config fields it reads and the
//! hashes of its upstream outputs) together with the hash of every file it
//! wrote. A stage whose fingerprint matches and whose outputs are intact is
//! skipped.

pub mod config;
pub mod io;
pub mod plot;
mod stages;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{PipelineConfig, SplitConfig, ValidationConfig};
pub use stages::{read_best_rows, read_eval_records, read_metrics_grid, GridMetricsRow};

use crate::error::{Error, Result};
use io::{read_json, sha256_bytes, sha256_file, write_json, write_text};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_SNAPSHOT_FILE: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Profile,
    Metrics,
    Dataset,
    Train,
    Evaluate,
    Heatmap,
    Curves,
    Cost,
    Validate,
}

impl Stage {
    /// Execution order of a full run.
    pub const ALL: [Stage; 9] = [
        Stage::Profile,
        Stage::Metrics,
        Stage::Dataset,
        Stage::Train,
        Stage::Evaluate,
        Stage::Heatmap,
        Stage::Curves,
        Stage::Cost,
        Stage::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Profile => "profile",
            Stage::Metrics => "metrics",
            Stage::Dataset => "dataset",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Heatmap => "heatmap",
            Stage::Curves => "curves",
            Stage::Cost => "cost",
            Stage::Validate => "validate",
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Profile | Stage::Validate => &[],
            Stage::Metrics => &[Stage::Profile],
            Stage::Dataset => &[Stage::Profile, Stage::Metrics],
            Stage::Train => &[Stage::Dataset],
            Stage::Evaluate => &[Stage::Train],
            Stage::Heatmap => &[Stage::Metrics, Stage::Dataset, Stage::Train, Stage::Evaluate],
            Stage::Curves => &[Stage::Metrics, Stage::Evaluate],
            Stage::Cost => &[Stage::Evaluate],
        }
    }

    /// The config fields this stage reads, as JSON.
    fn config_slice(self, c: &PipelineConfig) -> Result<String> {
        let v = match self {
            Stage::Profile => serde_json::json!({
                "global_seed": c.global_seed,
                "grid": c.grid,
                "problem_degree": c.problem_degree,
                "n_runs": c.n_runs,
                "k_iters": c.k_iters,
                "init_strategy": c.init_strategy,
                "stabilization": c.stabilization,
                "embedding": c.embedding,
                "smooth_window": c.smooth_window,
            }),
            Stage::Metrics => serde_json::json!({
                "metric_window": c.metric_window,
                "embedding": c.embedding,
                "good_fraction": c.good_fraction,
                "histogram_bin_width": c.histogram_bin_width,
                "index_origin": c.index_origin,
            }),
            Stage::Dataset => serde_json::json!({
                "global_seed": c.global_seed,
                "horizons": c.horizons,
                "splits": c.splits,
            }),
            Stage::Train => serde_json::json!({ "global_seed": c.global_seed, "models": c.models }),
            Stage::Evaluate | Stage::Heatmap => serde_json::json!({}),
            Stage::Curves => serde_json::json!({ "curve_marker": c.curve_marker }),
            Stage::Cost => serde_json::json!({ "embedding": c.embedding, "k_iters": c.k_iters }),
            Stage::Validate => serde_json::json!({
                "global_seed": c.global_seed,
                "problem_degree": c.problem_degree,
                "stabilization": c.stabilization,
                "validation": c.validation,
            }),
        };
        serde_json::to_string(&v).map_err(|e| Error::Serde(e.to_string()))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub role: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Cached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub fingerprint: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub outputs: Vec<ArtifactEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub config: PipelineConfig,
    /// `config.toml`, which reproduces the run when passed back via `--config`.
    pub config_snapshot: Option<ArtifactEntry>,
    /// In execution order; only stages that completed are present.
    pub stages: Vec<StageRecord>,
}

impl ArtifactManifest {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    /// Every file the runs recorded, the config snapshot included.
    pub fn files(&self) -> impl Iterator<Item = &ArtifactEntry> {
        self.config_snapshot.iter().chain(self.stages.iter().flat_map(|r| &r.outputs))
    }

    pub fn load(out_dir: &Path) -> Result<Self> {
        read_json(&out_dir.join(MANIFEST_FILE))
    }

    /// Checks that every listed file exists with its recorded hash.
    pub fn verify(&self, out_dir: &Path) -> Result<()> {
        for e in self.files() {
            let path = out_dir.join(&e.path);
            let actual = sha256_file(&path)?;
            if actual != e.sha256 {
                return Err(Error::artifact(path, "content hash differs from manifest"));
            }
        }
        Ok(())
    }

    fn upsert(&mut self, record: StageRecord) {
        self.stages.retain(|r| r.stage != record.stage);
        self.stages.push(record);
        self.stages.sort_by_key(|r| r.stage);
    }
}

fn rel_path(out_dir: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(out_dir).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn outputs_intact(out_dir: &Path, record: &StageRecord) -> bool {
    record
        .outputs
        .iter()
        .all(|e| sha256_file(&out_dir.join(&e.path)).is_ok_and(|h| h == e.sha256))
}

/// Owns the output directory and the manifest while stages execute.
pub struct Runner {
    config: PipelineConfig,
    out_dir: PathBuf,
    manifest: ArtifactManifest,
    pool: rayon::ThreadPool,
}

impl Runner {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let out_dir = config.output_dir.clone();
        std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = config.workers {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
        let previous = ArtifactManifest::load(&out_dir).ok();
        let manifest = ArtifactManifest {
            config: config.clone(),
            config_snapshot: None,
            stages: previous.map(|m| m.stages).unwrap_or_default(),
        };
        Ok(Self {
            config,
            out_dir,
            manifest,
            pool,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn manifest(&self) -> &ArtifactManifest {
        &self.manifest
    }

    fn fingerprint(&self, stage: Stage) -> Result<String> {
        let mut text = format!("{}\n{}\n", stage.name(), stage.config_slice(&self.config)?);
        for &up in stage.upstream() {
            let record = self.manifest.stage(up).ok_or_else(|| {
                Error::artifact(&self.out_dir, format!("stage `{stage}` needs outputs of `{up}`; run it first"))
            })?;
            if !outputs_intact(&self.out_dir, record) {
                return Err(Error::artifact(
                    &self.out_dir,
                    format!("outputs of `{up}` are missing or modified; rerun it before `{stage}`"),
                ));
            }
            for e in &record.outputs {
                text.push_str(&e.path);
                text.push(' ');
                text.push_str(&e.sha256);
                text.push('\n');
            }
        }
        Ok(sha256_bytes(text.as_bytes()))
    }

    /// Runs one stage unless its recorded outputs are still valid.
    pub fn run_stage(&mut self, stage: Stage) -> Result<&StageRecord> {
        self.write_config_snapshot()?;
        let fingerprint = self.fingerprint(stage)?;
        let cached = self
            .manifest
            .stage(stage)
            .is_some_and(|r| r.fingerprint == fingerprint && outputs_intact(&self.out_dir, r));
        let record = if cached {
            let mut r = self.manifest.stage(stage).cloned().expect("checked above");
            r.status = StageStatus::Cached;
            r.seconds = 0.0;
            r
        } else {
            let start = Instant::now();
            let ctx = stages::Ctx {
                config: &self.config,
                out_dir: &self.out_dir,
            };
            let written = self.pool.install(|| stages::run(stage, &ctx))?;
            let outputs = written
                .into_iter()
                .map(|(path, role)| {
                    Ok(ArtifactEntry {
                        sha256: sha256_file(&path)?,
                        path: rel_path(&self.out_dir, &path),
                        role,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            StageRecord {
                stage,
                fingerprint,
                status: StageStatus::Ran,
                seconds: start.elapsed().as_secs_f64(),
                outputs,
            }
        };
        self.manifest.upsert(record);
        self.save_manifest()?;
        Ok(self.manifest.stage(stage).expect("just inserted"))
    }

    pub fn run_all(&mut self) -> Result<()> {
        for stage in Stage::ALL {
            self.run_stage(stage)?;
        }
        Ok(())
    }

    fn write_config_snapshot(&mut self) -> Result<()> {
        let path = self.out_dir.join(CONFIG_SNAPSHOT_FILE);
        let text = self.config.to_toml_string()?;
        write_text(&path, &text)?;
        self.manifest.config_snapshot = Some(ArtifactEntry {
            path: CONFIG_SNAPSHOT_FILE.to_string(),
            role: "config_snapshot".to_string(),
            sha256: sha256_bytes(text.as_bytes()),
        });
        Ok(())
    }

    fn save_manifest(&self) -> Result<()> {
        write_json(&self.out_dir.join(MANIFEST_FILE), &self.manifest)
    }
}

/// Runs every stage in order, reusing valid persisted outputs.
pub fn run_pipeline(config: &PipelineConfig) -> Result<ArtifactManifest> {
    let mut runner = Runner::new(config.clone())?;
    runner.run_all()?;
    Ok(runner.manifest)
}

/// Runs a single stage; its upstream outputs must already exist.
pub fn run_single_stage(config: &PipelineConfig, stage: Stage) -> Result<ArtifactManifest> {
    let mut runner = Runner::new(config.clone())?;
    runner.run_stage(stage)?;
    Ok(runner.manifest)
}

//! Stage bodies. Each returns the files it wrote with their roles; writes
//! happen on the calling thread in deterministic key order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::io::{
    fmt_f64, fmt_opt, parse_f64, parse_opt_usize, parse_usize, profile_path, read_csv, read_csv_prefix, read_json,
    read_profile, write_csv, write_json, write_profile,
};
use super::plot::{emit_curves, emit_heatmap, value_range};
use super::Stage;
use crate::dataset::{
    build_horizon_dataset, center_split, horizon_list, random_split, HorizonDataset, PointRecord, SplitKind,
    SplitManifest,
};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, good_subset_threshold, required_iterations, timing_summary, HistBin};
use crate::metrics::{ProfileMetrics, TimingSummary};
use crate::profiler::{micro_series, proxy_profile, MicroSeries, ProxyProfile};
use crate::regression::{best_by_horizon, evaluate, train_and_evaluate, BestRow, EvalRecord, Family, ModelSpec};
use crate::seed::{derive_seed, tag};
use crate::solver::{run_ensemble, IterationParams, PolynomialProblem, WeierstrassFamily};
use crate::validation::{run_validation_suite, ValidationRun, ValidationSettings};

pub(super) struct Ctx<'a> {
    pub config: &'a PipelineConfig,
    pub out_dir: &'a Path,
}

type Written = Vec<(PathBuf, String)>;

pub(super) fn run(stage: Stage, ctx: &Ctx<'_>) -> Result<Written> {
    match stage {
        Stage::Profile => profile_stage(ctx),
        Stage::Metrics => metrics_stage(ctx),
        Stage::Dataset => dataset_stage(ctx),
        Stage::Train => train_stage(ctx),
        Stage::Evaluate => evaluate_stage(ctx),
        Stage::Heatmap => heatmap_stage(ctx),
        Stage::Curves => curves_stage(ctx),
        Stage::Cost => cost_stage(ctx),
        Stage::Validate => validate_stage(ctx),
    }
}

const SUMMARY_COLUMNS: [&str; 5] = ["i", "j", "alpha", "beta", "diverged_fraction"];
const METRICS_COLUMNS: [&str; 12] = [
    "i",
    "j",
    "alpha",
    "beta",
    "s_min",
    "s_mom",
    "t_min",
    "y_min",
    "t_enter_neg",
    "m0",
    "t_bar",
    "diverged_fraction",
];
const HIST_COLUMNS: [&str; 3] = ["bin_left", "count_good", "count_rest"];
const PREDICTION_COLUMNS: [&str; 6] = ["split", "family", "T", "point_id", "y_true", "y_pred"];
const TIMING_COLUMNS: [&str; 6] = ["split", "family", "T", "fit_s", "test_s", "test_per_sample_s"];
const EVAL_COLUMNS: [&str; 9] = ["split", "family", "T", "mae", "rmse", "r2", "fit_s", "test_s", "test_per_sample_s"];
const BEST_COLUMNS: [&str; 9] = ["split", "T", "family", "r2", "mae", "rmse", "fit_s", "test_s", "test_per_sample_s"];
const SPLITS: [SplitKind; 2] = [SplitKind::Random, SplitKind::Center];

fn summary_path(out: &Path) -> PathBuf {
    out.join("profiles").join("summary.csv")
}

fn metrics_path(out: &Path) -> PathBuf {
    out.join("metrics_grid.csv")
}

fn timing_summary_path(out: &Path) -> PathBuf {
    out.join("timing_summary.json")
}

fn dataset_index_path(out: &Path) -> PathBuf {
    out.join("datasets").join("index.json")
}

fn dataset_path(out: &Path, horizon: usize) -> PathBuf {
    out.join("datasets").join(format!("T{horizon:03}.csv"))
}

fn split_path(out: &Path, kind: SplitKind) -> PathBuf {
    out.join("splits").join(format!("{}.json", kind.name()))
}

fn predictions_path(out: &Path) -> PathBuf {
    out.join("predictions.csv")
}

fn train_timing_path(out: &Path) -> PathBuf {
    out.join("train_timing.csv")
}

fn eval_path(out: &Path) -> PathBuf {
    out.join("eval_records.csv")
}

fn best_path(out: &Path) -> PathBuf {
    out.join("best_by_T.csv")
}

fn profile_stage(ctx: &Ctx<'_>) -> Result<Written> {
    let c = ctx.config;
    let problem = PolynomialProblem::roots_of_unity(c.problem_degree)?;
    let points = c.grid.points(c.global_seed);
    let results: Vec<(ProxyProfile, f64)> = points
        .par_iter()
        .map(|p| {
            let trajectories = run_ensemble(p, &problem, c.n_runs, c.k_iters, &c.stabilization, c.init_strategy)?;
            let diverged = trajectories.iter().filter(|t| t.diverged).count() as f64 / c.n_runs as f64;
            let ensemble: Vec<MicroSeries> = trajectories.iter().map(|t| micro_series(t, &c.stabilization)).collect();
            let profile = proxy_profile(&ensemble, &c.embedding, c.smooth_window, p.seed)?;
            Ok((profile, diverged))
        })
        .collect::<Result<_>>()?;

    let mut written = Written::new();
    let mut summary = Vec::with_capacity(points.len());
    for (p, (profile, diverged)) in points.iter().zip(&results) {
        let path = profile_path(ctx.out_dir, p.i, p.j);
        write_profile(&path, profile)?;
        written.push((path, "profile".into()));
        summary.push(vec![
            p.i.to_string(),
            p.j.to_string(),
            fmt_f64(p.alpha),
            fmt_f64(p.beta),
            fmt_f64(*diverged),
        ]);
    }
    let path = summary_path(ctx.out_dir);
    write_csv(&path, Some(&SUMMARY_COLUMNS), &summary)?;
    written.push((path, "profile_summary".into()));
    Ok(written)
}

struct SummaryRow {
    i: usize,
    j: usize,
    alpha: f64,
    beta: f64,
    diverged_fraction: f64,
}

fn read_summary(ctx: &Ctx<'_>) -> Result<Vec<SummaryRow>> {
    let path = summary_path(ctx.out_dir);
    let rows = read_csv(&path, &SUMMARY_COLUMNS)?;
    let grid = &ctx.config.grid;
    if rows.len() != grid.len() {
        return Err(Error::artifact(&path, format!("{} rows for a grid of {}", rows.len(), grid.len())));
    }
    rows.iter()
        .enumerate()
        .map(|(id, r)| {
            let row = SummaryRow {
                i: parse_usize(&r[0], &path)?,
                j: parse_usize(&r[1], &path)?,
                alpha: parse_f64(&r[2], &path)?,
                beta: parse_f64(&r[3], &path)?,
                diverged_fraction: parse_f64(&r[4], &path)?,
            };
            if grid.id(row.i, row.j) != id {
                return Err(Error::artifact(&path, "rows are not in row-major grid order"));
            }
            Ok(row)
        })
        .collect()
}

fn read_profiles(ctx: &Ctx<'_>, ids: &[(usize, usize)]) -> Result<Vec<ProxyProfile>> {
    ids.par_iter()
        .map(|&(i, j)| read_profile(&profile_path(ctx.out_dir, i, j), ctx.config.smooth_window))
        .collect()
}

/// One row of `metrics_grid.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMetricsRow {
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
    pub beta: f64,
    pub metrics: ProfileMetrics,
    pub diverged_fraction: f64,
}

/// Reads `metrics_grid.csv` from an output directory.
pub fn read_metrics_grid(out_dir: &Path) -> Result<Vec<GridMetricsRow>> {
    let path = metrics_path(out_dir);
    read_csv(&path, &METRICS_COLUMNS)?
        .iter()
        .map(|r| {
            Ok(GridMetricsRow {
                i: parse_usize(&r[0], &path)?,
                j: parse_usize(&r[1], &path)?,
                alpha: parse_f64(&r[2], &path)?,
                beta: parse_f64(&r[3], &path)?,
                metrics: ProfileMetrics {
                    s_min: parse_f64(&r[4], &path)?,
                    s_mom: parse_f64(&r[5], &path)?,
                    t_min: parse_usize(&r[6], &path)?,
                    y_min: parse_f64(&r[7], &path)?,
                    t_enter_neg: parse_opt_usize(&r[8], &path)?,
                    m0: parse_f64(&r[9], &path)?,
                    t_bar: parse_f64(&r[10], &path)?,
                },
                diverged_fraction: parse_f64(&r[11], &path)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TimingReport {
    good_fraction: f64,
    good_threshold: f64,
    good_selected: usize,
    #[serde(flatten)]
    summary: TimingSummary,
}

fn hist_rows(bins: &[HistBin]) -> Vec<Vec<String>> {
    bins.iter()
        .map(|b| vec![b.bin_left.to_string(), b.count_good.to_string(), b.count_rest.to_string()])
        .collect()
}

fn metrics_stage(ctx: &Ctx<'_>) -> Result<Written> {
    let c = ctx.config;
    let summary = read_summary(ctx)?;
    let ids: Vec<(usize, usize)> = summary.iter().map(|r| (r.i, r.j)).collect();
    let profiles = read_profiles(ctx, &ids)?;
    let window = c.metric_window.effective(&c.embedding);
    let metrics: Vec<ProfileMetrics> = profiles
        .par_iter()
        .map(|p| compute_metrics(p, &window))
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = metrics.iter().map(|m| m.s_mom).collect();
    let good = good_subset_threshold(&scores, c.good_fraction)?;
    let timing = timing_summary(&metrics, &good.mask, c.histogram_bin_width, c.index_origin, &c.embedding)?;

    let rows: Vec<Vec<String>> = summary
        .iter()
        .zip(&metrics)
        .map(|(s, m)| {
            vec![
                s.i.to_string(),
                s.j.to_string(),
                fmt_f64(s.alpha),
                fmt_f64(s.beta),
                fmt_f64(m.s_min),
                fmt_f64(m.s_mom),
                m.t_min.to_string(),
                fmt_f64(m.y_min),
                fmt_opt(m.t_enter_neg),
                fmt_f64(m.m0),
                fmt_f64(m.t_bar),
                fmt_f64(s.diverged_fraction),
            ]
        })
        .collect();
    let mut written = Written::new();
    let path = metrics_path(ctx.out_dir);
    write_csv(&path, Some(&METRICS_COLUMNS), &rows)?;
    written.push((path, "metrics_grid".into()));

    let flags: Vec<Vec<String>> = summary
        .iter()
        .zip(&good.mask)
        .map(|(s, &g)| vec![s.i.to_string(), s.j.to_string(), u8::from(g).to_string()])
        .collect();
    let path = ctx.out_dir.join("good_subset.csv");
    write_csv(&path, Some(&["i", "j", "good"]), &flags)?;
    written.push((path, "good_subset".into()));

    let path = ctx.out_dir.join("timing_t_min.csv");
    write_csv(&path, Some(&HIST_COLUMNS), &hist_rows(&timing.t_min_hist))?;
    written.push((path, "timing_histogram".into()));
    let path = ctx.out_dir.join("timing_t_enter_neg.csv");
    write_csv(&path, Some(&HIST_COLUMNS), &hist_rows(&timing.t_enter_neg_hist))?;
    written.push((path, "timing_histogram".into()));

    let path = timing_summary_path(ctx.out_dir);
    write_json(
        &path,
        &TimingReport {
            good_fraction: c.good_fraction,
            good_threshold: good.threshold,
            good_selected: good.selected_count,
            summary: timing,
        },
    )?;
    written.push((path, "timing_summary".into()));
    Ok(written)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetIndex {
    horizons: Vec<usize>,
    n_points: usize,
}

fn dataset_stage(ctx: &Ctx<'_>) -> Result<Written> {
    let c = ctx.config;
    let rows = read_metrics_grid(ctx.out_dir)?;
    let ids: Vec<(usize, usize)> = rows.iter().map(|r| (r.i, r.j)).collect();
    let profiles = read_profiles(ctx, &ids)?;
    let shortest = profiles.iter().map(ProxyProfile::len).min().unwrap_or(0);
    let horizons = horizon_list(&c.horizons, shortest);
    if horizons.is_empty() {
        return Err(Error::config(format!(
            "horizon schedule starting at {} yields no horizon for profiles of length {shortest}",
            c.horizons.start
        )));
    }
    let points: Vec<PointRecord<'_>> = rows
        .iter()
        .zip(&profiles)
        .map(|(r, p)| PointRecord {
            i: r.i,
            j: r.j,
            profile: p,
            metrics: &r.metrics,
        })
        .collect();

    let mut written = Written::new();
    for &t in &horizons {
        let ds = build_horizon_dataset(&points, t)?;
        let mut header: Vec<String> = ["point_id", "i", "j"].map(String::from).to_vec();
        header.extend((1..=t).map(|k| format!("x{k}")));
        header.push("target".into());
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let body: Vec<Vec<String>> = ds
            .features
            .iter()
            .zip(&ds.targets)
            .zip(&ds.point_ids)
            .enumerate()
            .map(|(id, ((x, y), (i, j)))| {
                let mut row = vec![id.to_string(), i.to_string(), j.to_string()];
                row.extend(x.iter().map(|&v| fmt_f64(v)));
                row.push(fmt_f64(*y));
                row
            })
            .collect();
        let path = dataset_path(ctx.out_dir, t);
        write_csv(&path, Some(&header_refs), &body)?;
        written.push((path, "dataset".into()));
    }
    let path = dataset_index_path(ctx.out_dir);
    write_json(
        &path,
        &DatasetIndex {
            horizons,
            n_points: rows.len(),
        },
    )?;
    written.push((path, "dataset_index".into()));

    let n = rows.len();
    let random = random_split(n, c.splits.random_test_fraction, derive_seed(&[c.global_seed, tag::SPLIT]))?;
    let center = center_split(&c.grid, c.splits.center_train_fraction)?;
    for manifest in [random, center] {
        let path = split_path(ctx.out_dir, manifest.kind);
        write_json(&path, &manifest)?;
        written.push((path, "split".into()));
    }
    Ok(written)
}

fn read_dataset(out: &Path, horizon: usize) -> Result<HorizonDataset> {
    let path = dataset_path(out, horizon);
    let (header, rows) = read_csv_prefix(&path, &["point_id", "i", "j"])?;
    if header.len() != horizon + 4 {
        return Err(Error::artifact(&path, format!("expected {} feature columns", horizon)));
    }
    let mut ds = HorizonDataset {
        horizon,
        features: Vec::with_capacity(rows.len()),
        targets: Vec::with_capacity(rows.len()),
        point_ids: Vec::with_capacity(rows.len()),
    };
    for (id, r) in rows.iter().enumerate() {
        if parse_usize(&r[0], &path)? != id {
            return Err(Error::artifact(&path, "point ids must equal row positions"));
        }
        ds.point_ids.push((parse_usize(&r[1], &path)?, parse_usize(&r[2], &path)?));
        ds.features
            .push(r[3..3 + horizon].iter().map(|v| parse_f64(v, &path)).collect::<Result<_>>()?);
        ds.targets.push(parse_f64(&r[3 + horizon], &path)?);
    }
    Ok(ds)
}

fn read_split(out: &Path, kind: SplitKind, n: usize) -> Result<SplitManifest> {
    let path = split_path(out, kind);
    let m: SplitManifest = read_json(&path)?;
    if m.kind != kind || !m.is_partition_of(n) {
        return Err(Error::artifact(&path, format!("not a {kind} partition of {n} points")));
    }
    Ok(m)
}

fn read_index(out: &Path) -> Result<DatasetIndex> {
    read_json(&dataset_index_path(out))
}

struct JobResult {
    record: EvalRecord,
    test_ids: Vec<usize>,
    y_true: Vec<f64>,
    y_pred: Vec<f64>,
}

fn train_stage(ctx: &Ctx<'_>) -> Result<Written> {
    let c = ctx.config;
    let index = read_index(ctx.out_dir)?;
    let datasets: Vec<HorizonDataset> = index
        .horizons
        .iter()
        .map(|&t| read_dataset(ctx.out_dir, t))
        .collect::<Result<_>>()?;
    let splits: Vec<SplitManifest> = SPLITS
        .iter()
        .map(|&k| read_split(ctx.out_dir, k, index.n_points))
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    for split in &splits {
        for ds in &datasets {
            for params in &c.models {
                jobs.push((split, ds, *params));
            }
        }
    }
    let results: Vec<JobResult> = jobs
        .par_iter()
        .map(|&(split, ds, params)| {
            let seed = derive_seed(&[c.global_seed, tag::MODEL, ds.horizon as u64, params.family().rank() as u64]);
            let spec = ModelSpec::new(params, seed);
            let mut test_ids = split.test_ids.clone();
            test_ids.sort_unstable();
            let (train_x, train_y) = ds.select(&split.train_ids);
            let (test_x, test_y) = ds.select(&test_ids);
            let (record, y_pred) =
                train_and_evaluate(&spec, split.kind, ds.horizon, (&train_x, &train_y), (&test_x, &test_y))?;
            Ok(JobResult {
                record,
                test_ids,
                y_true: test_y,
                y_pred,
            })
        })
        .collect::<Result<_>>()?;

    let mut predictions = Vec::new();
    let mut timings = Vec::new();
    for job in &results {
        let r = &job.record;
        let key = [r.split.to_string(), r.family.to_string(), r.horizon.to_string()];
        for ((id, yt), yp) in job.test_ids.iter().zip(&job.y_true).zip(&job.y_pred) {
            let mut row = key.to_vec();
            row.extend([id.to_string(), fmt_f64(*yt), fmt_f64(*yp)]);
            predictions.push(row);
        }
        let mut row = key.to_vec();
        row.extend([r.fit_seconds, r.test_seconds, r.test_per_sample_seconds].map(fmt_f64));
        timings.push(row);
    }
    let mut written = Written::new();
    let path = predictions_path(ctx.out_dir);
    write_csv(&path, Some(&PREDICTION_COLUMNS), &predictions)?;
    written.push((path, "predictions".into()));
    let path = train_timing_path(ctx.out_dir);
    write_csv(&path, Some(&TIMING_COLUMNS), &timings)?;
    written.push((path, "train_timing".into()));
    Ok(written)
}

type JobKey = (SplitKind, usize, usize, Family);

/// Predictions grouped by `(split, T, family rank)`.
/// Point ids, truths and predictions per job.
type PredictionGroups = BTreeMap<JobKey, (Vec<usize>, Vec<f64>, Vec<f64>)>;

fn read_predictions(out: &Path) -> Result<PredictionGroups> {
    let path = predictions_path(out);
    let mut groups = PredictionGroups::new();
    for r in read_csv(&path, &PREDICTION_COLUMNS)? {
        let family: Family = r[1].parse()?;
        let key = (r[0].parse()?, parse_usize(&r[2], &path)?, family.rank(), family);
        let g = groups.entry(key).or_default();
        g.0.push(parse_usize(&r[3], &path)?);
        g.1.push(parse_f64(&r[4], &path)?);
        g.2.push(parse_f64(&r[5], &path)?);
    }
    Ok(groups)
}

fn evaluate_stage(ctx: &Ctx<'_>) -> Result<Written> {
    let groups = read_predictions(ctx.out_dir)?;
    let tpath = train_timing_path(ctx.out_dir);
    let mut timings: BTreeMap<(String, String, String), [f64; 3]> = BTreeMap::new();
    for r in read_csv(&tpath, &TIMING_COLUMNS)? {
        let t = [parse_f64(&r[3], &tpath)?, parse_f64(&r[4], &tpath)?, parse_f64(&r[5], &tpath)?];
        timings.insert((r[0].clone(), r[1].clone(), r[2].clone()), t);
    }
    let mut records = Vec::with_capacity(groups.len());
    for (&(split, horizon, _, family), (_, y_true, y_pred)) in &groups {
        let scores = evaluate(y_true, y_pred)?;
        let t = timings
            .get(&(split.to_string(), family.to_string(), horizon.to_string()))
            .copied()
            .unwrap_or([f64::NAN; 3]);
        records.push(EvalRecord {
            split,
            family,
            horizon,
            mae: scores.mae,
            rmse: scores.rmse,
            r2: scores.r2,
            fit_seconds: t[0],
            test_seconds: t[1],
            test_per_sample_seconds: t[2],
        });
    }
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![r.split.to_string(), r.family.to_string(), r.horizon.to_string()];
            row.extend(
                [r.mae, r.rmse, r.r2, r.fit_seconds, r.test_seconds, r.test_per_sample_seconds].map(fmt_f64),
            );
            row
        })
        .collect();
    let mut written = Written::new();
    let path = eval_path(ctx.out_dir);
    write_csv(&path, Some(&EVAL_COLUMNS), &rows)?;
    written.push((path, "eval_records".into()));

    let best: Vec<Vec<String>> = best_by_horizon(&records)
        .iter()
        .map(|b| {
            let mut row = vec![b.split.to_string(), b.horizon.to_string(), b.family.to_string()];
            row.extend(
                [b.r2, b.mae, b.rmse, b.fit_seconds, b.test_seconds, b.test_per_sample_seconds].map(fmt_f64),
            );
            row
        })
        .collect();
    let path = best_path(ctx.out_dir);
    write_csv(&path, Some(&BEST_COLUMNS), &best)?;
    written.push((path, "best_by_T".into()));
    Ok(written)
}

/// Reads `eval_records.csv`; an empty R² field stands for negative infinity.
pub fn read_eval_records(out_dir: &Path) -> Result<Vec<EvalRecord>> {
    let path = eval_path(out_dir);
    read_csv(&path, &EVAL_COLUMNS)?
        .iter()
        .map(|r| {
            Ok(EvalRecord {
                split: r[0].parse()?,
                family: r[1].parse()?,
                horizon: parse_usize(&r[2], &path)?,
                mae: parse_f64(&r[3], &path)?,
                rmse: parse_f64(&r[4], &path)?,
                r2: neg_inf_if_empty(parse_f64(&r[5], &path)?),
                fit_seconds: parse_f64(&r[6], &path)?,
                test_seconds: parse_f64(&r[7], &path)?,
                test_per_sample_seconds: parse_f64(&r[8], &path)?,
            })
        })
        .collect()
}

pub fn read_best_rows(out_dir: &Path) -> Result<Vec<BestRow>> {
    let path = best_path(out_dir);
    read_csv(&path, &BEST_COLUMNS)?
        .iter()
        .map(|r| {
            Ok(BestRow {
                split: r[0].parse()?,
                horizon: parse_usize(&r[1], &path)?,
                family: r[2].parse()?,
                r2: neg_inf_if_empty(parse_f64(&r[3], &path)?),
                mae: parse_f64(&r[4], &path)?,
                rmse: parse_f64(&r[5], &path)?,
                fit_seconds: parse_f64(&r[6], &path)?,
                test_seconds: parse_f64(&r[7], &path)?,
                test_per_sample_seconds: parse_f64(&r[8], &path)?,
            })
        })
        .collect()
}

fn neg_inf_if_empty(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// `{1, 3, 11, largest}` restricted to the horizons that were trained.
fn heatmap_horizons(available: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = [1, 3, 11]
        .into_iter()
        .filter(|t| available.contains(t))
        .chain(available.iter().max().copied())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn heatmap_stage(ctx: &Ctx<'_>) -> Result<Written> {
    let grid = &ctx.config.grid;
    let rows = read_metrics_grid(ctx.out_dir)?;
    if rows.len() != grid.len() {
        return Err(Error::artifact(metrics_path(ctx.out_dir), "row count differs from grid size"));
    }
    let dir = ctx.out_dir.join("heatmaps");
    let mut written = Written::new();
    let mut push = |files: Vec<PathBuf>| written.extend(files.into_iter().map(|p| (p, "heatmap".to_string())));

    let s_mom: Vec<f64> = rows.iter().map(|r| r.metrics.s_mom).collect();
    let maps: [(&str, Vec<f64>); 4] = [
        ("s_mom", s_mom.clone()),
        ("s_min", rows.iter().map(|r| r.metrics.s_min).collect()),
        ("t_min", rows.iter().map(|r| r.metrics.t_min as f64).collect()),
        ("diverged_fraction", rows.iter().map(|r| r.diverged_fraction).collect()),
    ];
    for (name, values) in &maps {
        push(emit_heatmap(grid, values, None, None, name, &dir.join(name))?);
    }

    let scale = value_range(&s_mom);
    let best = read_best_rows(ctx.out_dir)?;
    let groups = read_predictions(ctx.out_dir)?;
    let index = read_index(ctx.out_dir)?;
    for kind in SPLITS {
        let split = read_split(ctx.out_dir, kind, grid.len())?;
        for t in heatmap_horizons(&index.horizons) {
            let Some(b) = best.iter().find(|b| b.split == kind && b.horizon == t) else {
                continue;
            };
            let Some((ids, _, pred)) = groups.get(&(kind, t, b.family.rank(), b.family)) else {
                continue;
            };
            let mut values = vec![f64::NAN; grid.len()];
            for (&id, &p) in ids.iter().zip(pred) {
                values[id] = p;
            }
            let name = format!("{kind}_T{t:03}_pred");
            let title = format!("predicted S_mom, {kind} split, T = {t}, {}", b.family);
            push(emit_heatmap(grid, &values, Some(&split.train_ids), Some(scale), &title, &dir.join(&name))?);
        }
        let name = format!("{kind}_truth");
        let title = format!("S_mom on {kind} test points");
        push(emit_heatmap(grid, &s_mom, Some(&split.train_ids), Some(scale), &title, &dir.join(&name))?);
    }
    Ok(written)
}

fn curves_stage(ctx: &Ctx<'_>) -> Result<Written> {
    let marker = match ctx.config.curve_marker {
        Some(m) => m,
        None => read_json::<TimingReport>(&timing_summary_path(ctx.out_dir))?.summary.t_min_index,
    };
    let records = read_eval_records(ctx.out_dir)?;
    let dir = ctx.out_dir.join("curves");
    let mut written = Written::new();
    for kind in SPLITS {
        let subset: Vec<EvalRecord> = records.iter().filter(|r| r.split == kind).cloned().collect();
        if subset.is_empty() {
            continue;
        }
        let files = emit_curves(&subset, marker, &format!("{kind} split"), &dir.join(kind.name()))?;
        written.extend(files.into_iter().map(|p| (p, "curve".to_string())));
    }
    Ok(written)
}

fn cost_stage(ctx: &Ctx<'_>) -> Result<Written> {
    let c = ctx.config;
    let best = read_best_rows(ctx.out_dir)?;
    let mut horizons: Vec<usize> = best.iter().map(|b| b.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let r2_of = |kind: SplitKind, t: usize| {
        best.iter()
            .find(|b| b.split == kind && b.horizon == t)
            .map(|b| fmt_f64(b.r2))
            .unwrap_or_default()
    };
    let rows: Vec<Vec<String>> = horizons
        .iter()
        .map(|&t| {
            let e = required_iterations(t, c.embedding.lookback, c.embedding.h_max, c.k_iters);
            vec![
                t.to_string(),
                e.k_req.to_string(),
                fmt_f64(e.speedup),
                r2_of(SplitKind::Center, t),
                r2_of(SplitKind::Random, t),
            ]
        })
        .collect();
    let path = ctx.out_dir.join("cost_table.csv");
    write_csv(&path, Some(&["T", "k_req", "speedup", "r2_center", "r2_random"]), &rows)?;
    Ok(vec![(path, "cost_table".into())])
}

fn validate_stage(ctx: &Ctx<'_>) -> Result<Written> {
    let c = ctx.config;
    let v = &c.validation;
    let problem = PolynomialProblem::roots_of_unity(c.problem_degree)?;
    let settings = ValidationSettings {
        iterations: v.iterations,
        tol: v.tol,
        asymptotic_entry: v.asymptotic_entry,
        seed: derive_seed(&[c.global_seed, tag::VALIDATION]),
    };
    let methods = [
        ("family", IterationParams::new(v.alpha, v.beta)),
        ("durand_kerner", IterationParams::new(0.0, 0.0)),
    ];
    let mut runs: Vec<(&str, ValidationRun)> = Vec::new();
    for (name, params) in methods {
        let suite = run_validation_suite(
            &WeierstrassFamily::new(params),
            &problem,
            &v.strategies,
            &settings,
            &c.stabilization,
        )?;
        runs.extend(suite.into_iter().map(|r| (name, r)));
    }

    let mut errors = Vec::new();
    for (name, r) in &runs {
        for (k, e) in r.errors.iter().enumerate() {
            errors.push(vec![name.to_string(), r.strategy.clone(), k.to_string(), fmt_f64(*e)]);
        }
    }
    let summary: Vec<Vec<String>> = runs
        .iter()
        .map(|(name, r)| {
            vec![
                name.to_string(),
                r.strategy.clone(),
                fmt_opt(r.iterations_to_tol),
                r.observed_order.map(fmt_f64).unwrap_or_default(),
                r.diverged.to_string(),
            ]
        })
        .collect();
    let mut header = vec!["k".to_string()];
    header.extend(runs.iter().map(|(name, r)| format!("{name}/{}", r.strategy)));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let table: Vec<Vec<String>> = (0..=v.iterations)
        .map(|k| {
            let mut row = vec![k.to_string()];
            row.extend(runs.iter().map(|(_, r)| fmt_f64(r.errors[k])));
            row
        })
        .collect();

    let mut written = Written::new();
    let path = ctx.out_dir.join("validation_errors.csv");
    write_csv(&path, Some(&["method", "strategy", "k", "max_error"]), &errors)?;
    written.push((path, "validation_errors".into()));
    let path = ctx.out_dir.join("validation_summary.csv");
    write_csv(
        &path,
        Some(&["method", "strategy", "iterations_to_tol", "observed_order", "diverged"]),
        &summary,
    )?;
    written.push((path, "validation_summary".into()));
    let path = ctx.out_dir.join("validation_table.csv");
    write_csv(&path, Some(&header_refs), &table)?;
    written.push((path, "validation_table".into()));
    Ok(written)
}

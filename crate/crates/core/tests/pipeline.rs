use std::fs;
use std::path::Path;

use rootscan::pipeline::io::sha256_file;
use rootscan::pipeline::{
    read_metrics_grid, run_pipeline, run_single_stage, ArtifactManifest, PipelineConfig, Stage, StageStatus,
    CONFIG_SNAPSHOT_FILE,
};

fn tiny(out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.grid.n_alpha = 5;
    c.grid.n_beta = 4;
    c.n_runs = 12;
    c.k_iters = 30;
    c.horizons.max_t = 7;
    c.workers = Some(2);
    c.output_dir = out.to_path_buf();
    c
}

fn hash(out: &Path, rel: &str) -> String {
    sha256_file(&out.join(rel)).unwrap()
}

#[test]
fn full_run_writes_a_complete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let manifest = run_pipeline(&cfg).unwrap();
    assert_eq!(manifest.stages.len(), Stage::ALL.len());
    manifest.verify(dir.path()).unwrap();
    assert_eq!(read_metrics_grid(dir.path()).unwrap().len(), 20);

    let listed: std::collections::BTreeSet<String> = manifest.files().map(|e| e.path.clone()).collect();
    let mut on_disk = Vec::new();
    collect_files(dir.path(), dir.path(), &mut on_disk);
    for f in on_disk.iter().filter(|f| f.as_str() != "manifest.json") {
        assert!(listed.contains(f), "{f} missing from manifest");
    }
    for stem in ["random_r2", "center_mae"] {
        assert!(dir.path().join("curves").join(format!("{stem}.svg")).exists());
    }
    assert!(dir.path().join("heatmaps/center_T001_pred.svg").exists());
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            let rel = path.strip_prefix(root).unwrap();
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
}

#[test]
fn second_run_is_served_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    run_pipeline(&cfg).unwrap();
    let again = run_pipeline(&cfg).unwrap();
    assert!(again.stages.iter().all(|r| r.status == StageStatus::Cached));
}

#[test]
fn deleting_training_outputs_reruns_only_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = tiny(out);
    run_pipeline(&cfg).unwrap();
    let before = ["predictions.csv", "datasets/T003.csv", "profiles/2_3.csv", "metrics_grid.csv"].map(|p| hash(out, p));
    let profile_mtime = fs::metadata(out.join("profiles/2_3.csv")).unwrap().modified().unwrap();

    fs::remove_file(out.join("predictions.csv")).unwrap();
    fs::remove_file(out.join("train_timing.csv")).unwrap();
    let m = run_pipeline(&cfg).unwrap();
    let status = |s| m.stage(s).unwrap().status;
    assert_eq!(status(Stage::Profile), StageStatus::Cached);
    assert_eq!(status(Stage::Metrics), StageStatus::Cached);
    assert_eq!(status(Stage::Dataset), StageStatus::Cached);
    assert_eq!(status(Stage::Train), StageStatus::Ran);
    assert_eq!(status(Stage::Validate), StageStatus::Cached);

    let after = ["predictions.csv", "datasets/T003.csv", "profiles/2_3.csv", "metrics_grid.csv"].map(|p| hash(out, p));
    assert_eq!(before, after);
    assert_eq!(fs::metadata(out.join("profiles/2_3.csv")).unwrap().modified().unwrap(), profile_mtime);
}

#[test]
fn config_change_invalidates_only_affected_stages() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    run_pipeline(&cfg).unwrap();
    cfg.curve_marker = Some(2);
    let m = run_pipeline(&cfg).unwrap();
    assert_eq!(m.stage(Stage::Train).unwrap().status, StageStatus::Cached);
    assert_eq!(m.stage(Stage::Curves).unwrap().status, StageStatus::Ran);
}

#[test]
fn tampered_upstream_blocks_a_single_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    run_pipeline(&cfg).unwrap();
    fs::write(dir.path().join("datasets/T001.csv"), "garbage").unwrap();
    let err = run_single_stage(&cfg, Stage::Train).unwrap_err();
    assert!(!err.is_config());
    assert!(err.to_string().contains("dataset"), "{err}");
}

#[test]
fn stage_without_upstream_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let err = run_single_stage(&cfg, Stage::Metrics).unwrap_err();
    assert!(!err.is_config());
    run_single_stage(&cfg, Stage::Validate).unwrap();
}

#[test]
fn config_snapshot_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir.path().join("a"));
    run_pipeline(&cfg).unwrap();
    let text = fs::read_to_string(dir.path().join("a").join(CONFIG_SNAPSHOT_FILE)).unwrap();
    let mut replay = PipelineConfig::from_toml_str(&text).unwrap();
    assert_eq!(replay, cfg);
    replay.output_dir = dir.path().join("b");
    run_pipeline(&replay).unwrap();
    for f in ["metrics_grid.csv", "predictions.csv", "splits/random.json", "validation_table.csv"] {
        assert_eq!(hash(&dir.path().join("a"), f), hash(&dir.path().join("b"), f), "{f}");
    }
    let m = ArtifactManifest::load(&dir.path().join("a")).unwrap();
    assert_eq!(m.config, cfg);
}

#[test]
fn worker_count_does_not_change_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut one = tiny(&dir.path().join("one"));
    one.workers = Some(1);
    let mut four = one.clone();
    four.workers = Some(4);
    four.output_dir = dir.path().join("four");
    run_pipeline(&one).unwrap();
    run_pipeline(&four).unwrap();
    for f in ["profiles/4_3.csv", "metrics_grid.csv", "datasets/T007.csv", "predictions.csv", "eval_records.csv"] {
        if f == "eval_records.csv" {
            // timing columns differ between runs
            let strip = |d: &Path| -> Vec<String> {
                fs::read_to_string(d.join(f))
                    .unwrap()
                    .lines()
                    .map(|l| l.split(',').take(6).collect::<Vec<_>>().join(","))
                    .collect()
            };
            assert_eq!(strip(&one.output_dir), strip(&four.output_dir));
        } else {
            assert_eq!(hash(&one.output_dir, f), hash(&four.output_dir, f), "{f}");
        }
    }
}

#[test]
fn center_split_heatmap_blanks_a_central_block() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.grid.n_alpha = 9;
    cfg.grid.n_beta = 9;
    run_pipeline(&cfg).unwrap();
    let csv = fs::read_to_string(dir.path().join("heatmaps/center_truth.csv")).unwrap();
    let cells: Vec<Vec<bool>> = csv.lines().map(|l| l.split(',').map(str::is_empty).collect()).collect();
    assert!(cells[4][4], "centre must be a training cell");
    for corner in [(0, 0), (0, 8), (8, 0), (8, 8)] {
        assert!(!cells[corner.0][corner.1]);
    }
    // blank cells form one 4-connected region
    let mut seen = vec![vec![false; 9]; 9];
    let mut stack = vec![(4usize, 4usize)];
    let mut reached = 0;
    while let Some((i, j)) = stack.pop() {
        if seen[i][j] || !cells[i][j] {
            continue;
        }
        seen[i][j] = true;
        reached += 1;
        for (di, dj) in [(0i32, 1i32), (1, 0), (0, -1), (-1, 0)] {
            let (a, b) = (i as i32 + di, j as i32 + dj);
            if (0..9).contains(&a) && (0..9).contains(&b) {
                stack.push((a as usize, b as usize));
            }
        }
    }
    let blank = cells.iter().flatten().filter(|&&b| b).count();
    assert_eq!(reached, blank);
}

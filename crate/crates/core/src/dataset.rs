//! Multi-horizon prefix datasets and train/test split manifests.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{round_half_up, ProfileMetrics};
use crate::profiler::ProxyProfile;
use crate::seed::rng_from_seed;
use crate::solver::ParamGrid;

/// Features are the first `horizon` raw proxy values of each point; the
/// target is the smoothed-profile `S_mom`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonDataset {
    pub horizon: usize,
    /// Row-major, `n_points x horizon`.
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub point_ids: Vec<(usize, usize)>,
}

impl HorizonDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Rows selected by position.
    pub fn select(&self, rows: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            rows.iter().map(|&r| self.features[r].clone()).collect(),
            rows.iter().map(|&r| self.targets[r]).collect(),
        )
    }
}

/// One entry per grid point, in the order the caller wants rows emitted.
pub struct PointRecord<'a> {
    pub i: usize,
    pub j: usize,
    pub profile: &'a ProxyProfile,
    pub metrics: &'a ProfileMetrics,
}

pub fn build_horizon_dataset(points: &[PointRecord<'_>], horizon: usize) -> Result<HorizonDataset> {
    if horizon == 0 {
        return Err(Error::config("horizon must be at least 1"));
    }
    let mut features = Vec::with_capacity(points.len());
    let mut targets = Vec::with_capacity(points.len());
    let mut point_ids = Vec::with_capacity(points.len());
    for p in points {
        if p.profile.len() < horizon {
            return Err(Error::ProfileTooShort {
                i: p.i,
                j: p.j,
                len: p.profile.len(),
                horizon,
            });
        }
        features.push(p.profile.raw[..horizon].to_vec());
        targets.push(p.metrics.s_mom);
        point_ids.push((p.i, p.j));
    }
    Ok(HorizonDataset {
        horizon,
        features,
        targets,
        point_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Random,
    Center,
}

impl SplitKind {
    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Random => "random",
            SplitKind::Center => "center",
        }
    }
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SplitKind::Random),
            "center" => Ok(SplitKind::Center),
            _ => Err(Error::config(format!("unknown split `{s}`"))),
        }
    }
}

impl std::fmt::Display for SplitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub kind: SplitKind,
    /// Test fraction for random splits, train fraction for center splits.
    pub fraction: f64,
    pub seed: Option<u64>,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

impl SplitManifest {
    pub fn n_points(&self) -> usize {
        self.train_ids.len() + self.test_ids.len()
    }

    /// Every id in `0..n` appears exactly once across train and test.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &id in self.train_ids.iter().chain(&self.test_ids) {
            if id >= n || seen[id] {
                return false;
            }
            seen[id] = true;
        }
        seen.into_iter().all(|s| s)
    }

    pub fn train_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &id in &self.train_ids {
            if id < n {
                mask[id] = true;
            }
        }
        mask
    }
}

fn check_fraction(fraction: f64, what: &str) -> Result<()> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{what} must lie in (0, 1), got {fraction}")))
    }
}

/// Shuffles ids `0..n`; the last `round(test_fraction * n)` become test.
pub fn random_split(n: usize, test_fraction: f64, seed: u64) -> Result<SplitManifest> {
    check_fraction(test_fraction, "test fraction")?;
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng_from_seed(seed));
    let n_test = round_half_up(test_fraction * n as f64).min(n);
    let test_ids = ids.split_off(n - n_test);
    Ok(SplitManifest {
        kind: SplitKind::Random,
        fraction: test_fraction,
        seed: Some(seed),
        train_ids: ids,
        test_ids,
    })
}

/// Squared distance to the grid centre with each axis scaled by its range.
pub fn center_distance(grid: &ParamGrid, alpha: f64, beta: f64) -> f64 {
    let [a0, a1] = grid.alpha_range;
    let [b0, b1] = grid.beta_range;
    let da = (alpha - 0.5 * (a0 + a1)) / (a1 - a0);
    let db = (beta - 0.5 * (b0 + b1)) / (b1 - b0);
    da * da + db * db
}

/// The `round(train_fraction * n)` most central points train, the
/// periphery tests. Ids are row-major grid ids.
pub fn center_split(grid: &ParamGrid, train_fraction: f64) -> Result<SplitManifest> {
    check_fraction(train_fraction, "train fraction")?;
    grid.validate()?;
    let mut keyed: Vec<(f64, usize)> = grid
        .points(0)
        .iter()
        .map(|p| (center_distance(grid, p.alpha, p.beta), grid.id(p.i, p.j)))
        .collect();
    // ids are row-major, so ordering by id is ordering by (i, j)
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = keyed.len();
    let n_train = round_half_up(train_fraction * n as f64).min(n);
    let mut ids: Vec<usize> = keyed.into_iter().map(|(_, id)| id).collect();
    let test_ids = ids.split_off(n_train);
    Ok(SplitManifest {
        kind: SplitKind::Center,
        fraction: train_fraction,
        seed: None,
        train_ids: ids,
        test_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HorizonSchedule {
    pub start: usize,
    pub step: usize,
    pub max_t: usize,
}

impl Default for HorizonSchedule {
    fn default() -> Self {
        Self {
            start: 1,
            step: 2,
            max_t: 35,
        }
    }
}

/// `start, start + step, ...` capped at `min(max_t, profile_len)`.
pub fn horizon_list(schedule: &HorizonSchedule, profile_len: usize) -> Vec<usize> {
    let cap = schedule.max_t.min(profile_len);
    let step = schedule.step.max(1);
    (schedule.start.max(1)..=cap).step_by(step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_metrics(s_mom: f64) -> ProfileMetrics {
        ProfileMetrics {
            t_min: 10,
            y_min: 0.0,
            s_min: 0.0,
            m0: 0.0,
            t_bar: 0.0,
            s_mom,
            t_enter_neg: None,
        }
    }

    #[test]
    fn prefix_rows() {
        let prof = ProxyProfile::from_raw(vec![1.0, 2.0, 3.0, 4.0, 5.0], 5, 4);
        let m = dummy_metrics(0.25);
        let pts = [PointRecord {
            i: 0,
            j: 1,
            profile: &prof,
            metrics: &m,
        }];
        let d = build_horizon_dataset(&pts, 3).unwrap();
        assert_eq!(d.features, vec![vec![1.0, 2.0, 3.0]]);
        assert_eq!(d.targets, vec![0.25]);
        assert_eq!(d.point_ids, vec![(0, 1)]);
        let full = build_horizon_dataset(&pts, 5).unwrap();
        assert_eq!(full.features[0], prof.raw);
        match build_horizon_dataset(&pts, 6) {
            Err(Error::ProfileTooShort { i: 0, j: 1, len: 5, horizon: 6 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn random_split_counts() {
        let s = random_split(10, 0.4, 1).unwrap();
        assert_eq!((s.train_ids.len(), s.test_ids.len()), (6, 4));
        assert!(s.is_partition_of(10));
        let s = random_split(3600, 0.4, 7).unwrap();
        assert_eq!(s.test_ids.len(), 1440);
        assert_eq!(s, random_split(3600, 0.4, 7).unwrap());
        assert_ne!(s, random_split(3600, 0.4, 8).unwrap());
        assert!(random_split(10, 1.0, 1).is_err());
    }

    fn grid(n: usize) -> ParamGrid {
        ParamGrid {
            n_alpha: n,
            n_beta: n,
            ..ParamGrid::default()
        }
    }

    #[test]
    fn center_split_small_grids() {
        let g = grid(3);
        let s = center_split(&g, 1.0 / 9.0).unwrap();
        assert_eq!(s.train_ids, vec![g.id(1, 1)]);

        // Brute force: the centre and its four axis neighbours share the
        // smallest normalized distances on a 5x5 grid.
        let g = grid(5);
        let s = center_split(&g, 0.2).unwrap();
        let mut expected: Vec<(f64, usize)> = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .map(|(i, j)| {
                let di = (i as f64 - 2.0) / 4.0;
                let dj = (j as f64 - 2.0) / 4.0;
                (di * di + dj * dj, i * 5 + j)
            })
            .collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want: Vec<usize> = expected[..5].iter().map(|e| e.1).collect();
        assert_eq!(s.train_ids, want);
        let mut sorted = s.train_ids.clone();
        sorted.sort();
        assert_eq!(sorted, vec![g.id(1, 2), g.id(2, 1), g.id(2, 2), g.id(2, 3), g.id(3, 2)]);
        assert!(s.is_partition_of(25));
    }

    #[test]
    fn horizon_lists() {
        let h = horizon_list(&HorizonSchedule::default(), 191);
        assert_eq!(h, (1..=35).step_by(2).collect::<Vec<_>>());
        assert_eq!(horizon_list(&HorizonSchedule::default(), 4), vec![1, 3]);
        let s = HorizonSchedule {
            start: 1,
            step: 1,
            max_t: 3,
        };
        assert_eq!(horizon_list(&s, 100), vec![1, 2, 3]);
    }
}

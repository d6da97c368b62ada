//! kNN forecast-error proxy for the largest Lyapunov exponent.
//!
//! Each solver run contributes a micro-series `y_t = log ||z_t - z_{t-1}||`
//! (indexed from 1 here, so `y_t` belongs to solver step `t`). At a window
//! end `t_end` every run yields one delay vector of the last `L` values and
//! the targets `y_{t_end + h}`. Runs are split into an internal train/test
//! set, test targets are forecast from the `k` nearest train vectors and the
//! slope of `log RMSE(h)` against `h` is the proxy value. Negative slopes mean
//! nearby states drift together (contraction), positive slopes mean they
//! separate.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, tag};
use crate::solver::{StabilizationConfig, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct MicroSeries {
    pub values: Vec<f64>,
    pub frozen_from: Option<usize>,
}

impl MicroSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at 1-based step `t`.
    fn at(&self, t: usize) -> f64 {
        self.values[t - 1]
    }

    /// First `len` entries, as if the run had been stopped early.
    pub fn truncated(&self, len: usize) -> MicroSeries {
        let len = len.min(self.values.len());
        MicroSeries {
            values: self.values[..len].to_vec(),
            frozen_from: self.frozen_from.filter(|&f| f < len),
        }
    }
}

/// Log step norms of a trajectory, pinned to the floor once frozen.
pub fn micro_series(traj: &Trajectory, stab: &StabilizationConfig) -> MicroSeries {
    let frozen = traj.frozen_from.unwrap_or(usize::MAX);
    let values = traj
        .step_norms
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            if k >= frozen {
                stab.tail_floor_log
            } else {
                s.ln().max(stab.tail_floor_log)
            }
        })
        .collect();
    MicroSeries {
        values,
        frozen_from: traj.frozen_from,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub lookback: usize,
    pub h_min: usize,
    pub h_max: usize,
    pub k_neighbors: usize,
    pub internal_train_fraction: f64,
    pub error_floor: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            lookback: 5,
            h_min: 1,
            h_max: 5,
            k_neighbors: 3,
            internal_train_fraction: 0.60,
            error_floor: 1e-12,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 {
            return Err(Error::config("lookback must be at least 1"));
        }
        if self.h_min == 0 || self.h_max < self.h_min {
            return Err(Error::config("horizons must satisfy 1 <= h_min <= h_max"));
        }
        if self.k_neighbors == 0 {
            return Err(Error::config("k_neighbors must be at least 1"));
        }
        if !(self.internal_train_fraction > 0.0 && self.internal_train_fraction < 1.0) {
            return Err(Error::config("internal_train_fraction must lie in (0, 1)"));
        }
        if !(self.error_floor > 0.0) {
            return Err(Error::config("error_floor must be positive"));
        }
        Ok(())
    }

    /// Profile length for micro-series of length `k_iters`.
    pub fn profile_len(&self, k_iters: usize) -> usize {
        (k_iters + 1).saturating_sub(self.h_max + self.lookback)
    }

    /// Solver iterations needed for the first `t` profile values.
    pub fn required_len(&self, t: usize) -> usize {
        t + self.lookback + self.h_max - 1
    }
}

/// Least-squares slope of `y` against `x`; zero for fewer than two points.
pub(crate) fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (sxy, sxx) = x
        .iter()
        .zip(y)
        .fold((0.0, 0.0), |(sxy, sxx), (&a, &b)| (sxy + (a - mx) * (b - my), sxx + (a - mx) * (a - mx)));
    sxy / sxx
}

/// Slope of `log max(e(h), floor)` against `h`.
pub fn error_slope(horizons: &[usize], errors: &[f64], error_floor: f64) -> f64 {
    let x: Vec<f64> = horizons.iter().map(|&h| h as f64).collect();
    let y: Vec<f64> = errors.iter().map(|&e| e.max(error_floor).ln()).collect();
    ls_slope(&x, &y)
}

/// Forecast RMSE per horizon at window end `t_end` (1-based step index).
pub fn forecast_errors<R: Rng + ?Sized>(
    ensemble: &[MicroSeries],
    t_end: usize,
    cfg: &EmbeddingConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "kNN proxy needs at least 2 runs, got {n}"
        )));
    }
    let len = ensemble.iter().map(MicroSeries::len).min().unwrap_or(0);
    let l = cfg.lookback;
    if t_end < l || t_end + cfg.h_max > len {
        return Err(Error::config(format!(
            "window end {t_end} outside [{l}, {}] for series of length {len}",
            len.saturating_sub(cfg.h_max)
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = ((cfg.internal_train_fraction * n as f64).ceil() as usize).min(n);
    let (train, test) = order.split_at(n_train);
    if test.is_empty() {
        return Err(Error::config(format!(
            "internal split of {n} runs leaves no test runs"
        )));
    }
    let k = cfg.k_neighbors.min(train.len());

    let embed = |r: usize| -> Vec<f64> { (t_end + 1 - l..=t_end).map(|t| ensemble[r].at(t)).collect() };
    let train_vecs: Vec<(usize, Vec<f64>)> = train.iter().map(|&r| (r, embed(r))).collect();

    let horizons: Vec<usize> = (cfg.h_min..=cfg.h_max).collect();
    let mut sq_err = vec![0.0; horizons.len()];
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    for &r in test {
        let x = embed(r);
        dists.clear();
        dists.extend(train_vecs.iter().map(|(idx, v)| {
            let d2: f64 = v.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, *idx)
        }));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, cmp);
        }
        let neighbours = &dists[..k];
        for (slot, &h) in sq_err.iter_mut().zip(&horizons) {
            let pred = neighbours.iter().map(|&(_, idx)| ensemble[idx].at(t_end + h)).sum::<f64>() / k as f64;
            let e = ensemble[r].at(t_end + h) - pred;
            *slot += e * e;
        }
    }
    Ok(sq_err
        .into_iter()
        .map(|s| (s / test.len() as f64).sqrt())
        .collect())
}

/// Proxy value at window end `t_end`.
pub fn lle_proxy_at<R: Rng + ?Sized>(
    ensemble: &[MicroSeries],
    t_end: usize,
    cfg: &EmbeddingConfig,
    rng: &mut R,
) -> Result<f64> {
    let errors = forecast_errors(ensemble, t_end, cfg, rng)?;
    let horizons: Vec<usize> = (cfg.h_min..=cfg.h_max).collect();
    Ok(error_slope(&horizons, &errors, cfg.error_floor))
}

/// Raw and trailing-mean smoothed proxy profile of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyProfile {
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    /// Solver iteration of the first entry; entry `j` (1-based) sits at
    /// `t_end = first_t_end + j - 1`.
    pub first_t_end: usize,
    pub smooth_window: usize,
}

impl ProxyProfile {
    pub fn from_raw(raw: Vec<f64>, first_t_end: usize, smooth_window: usize) -> Self {
        let smoothed = smooth_profile(&raw, smooth_window);
        Self {
            raw,
            smoothed,
            first_t_end,
            smooth_window,
        }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Solver iteration of 1-based profile index `j`.
    pub fn t_end_of(&self, j: usize) -> usize {
        self.first_t_end + j - 1
    }

    /// 1-based profile index holding `t_end`, if inside the profile.
    pub fn index_of(&self, t_end: usize) -> Option<usize> {
        (t_end >= self.first_t_end && t_end - self.first_t_end < self.len())
            .then(|| t_end - self.first_t_end + 1)
    }

    /// `(t_end, raw, smoothed)` triples in profile order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.raw
            .iter()
            .zip(&self.smoothed)
            .enumerate()
            .map(move |(idx, (&r, &s))| (self.first_t_end + idx, r, s))
    }
}

/// Seed for the internal split at one window end.
pub fn window_seed(profile_seed: u64, t_end: usize) -> u64 {
    derive_seed(&[profile_seed, tag::PROFILE, t_end as u64])
}

/// Proxy profile over every admissible window end. The internal shuffle at
/// each window end is seeded from `(profile_seed, t_end)` only, so a prefix
/// of the profile never depends on iterations past its own windows.
pub fn proxy_profile(
    ensemble: &[MicroSeries],
    cfg: &EmbeddingConfig,
    smooth_window: usize,
    profile_seed: u64,
) -> Result<ProxyProfile> {
    cfg.validate()?;
    if smooth_window == 0 {
        return Err(Error::config("smoothing window must be at least 1"));
    }
    let first = ensemble
        .first()
        .ok_or_else(|| Error::InsufficientData("empty ensemble".into()))?;
    let k_iters = first.len();
    if ensemble.iter().any(|s| s.len() != k_iters) {
        return Err(Error::config("micro-series lengths differ within the ensemble"));
    }
    let w = cfg.profile_len(k_iters);
    if w == 0 {
        return Err(Error::config(format!(
            "K = {k_iters} is too short for lookback {} and h_max {}",
            cfg.lookback, cfg.h_max
        )));
    }
    let raw = (0..w)
        .map(|idx| {
            let t_end = cfg.lookback + idx;
            let mut rng = rng_from_seed(window_seed(profile_seed, t_end));
            lle_proxy_at(ensemble, t_end, cfg, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProxyProfile::from_raw(raw, cfg.lookback, smooth_window))
}

/// Trailing mean over the last `window` entries (fewer at the start).
pub fn smooth_profile(raw: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..raw.len())
        .map(|j| {
            let lo = (j + 1).saturating_sub(window);
            let slice = &raw[lo..=j];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn series(values: Vec<f64>) -> MicroSeries {
        MicroSeries {
            values,
            frozen_from: None,
        }
    }

    #[test]
    fn micro_series_logs_and_freezes() {
        let stab = StabilizationConfig::default();
        let t = Trajectory {
            step_norms: vec![1.0, 1.0, 1.0],
            diverged: false,
            frozen_from: None,
        };
        assert_eq!(micro_series(&t, &stab).values, vec![0.0, 0.0, 0.0]);

        let e = std::f64::consts::E;
        let t = Trajectory {
            step_norms: vec![e, e * e],
            diverged: false,
            frozen_from: None,
        };
        let y = micro_series(&t, &stab).values;
        assert_relative_eq!(y[0], 1.0);
        assert_relative_eq!(y[1], 2.0);

        let floor = stab.floor_value();
        let t = Trajectory {
            step_norms: vec![1.0, 0.1, 1e-5, floor, floor, floor],
            diverged: false,
            frozen_from: Some(3),
        };
        let m = micro_series(&t, &stab);
        assert!(m.values[3..].iter().all(|&v| v == stab.tail_floor_log));
        assert_relative_eq!(m.values[2], 1e-5f64.ln());
    }

    #[test]
    fn identical_runs_give_zero_slope() {
        let ens: Vec<_> = (0..10).map(|_| series(vec![0.7; 20])).collect();
        let cfg = EmbeddingConfig::default();
        let mut rng = rng_from_seed(1);
        assert_eq!(lle_proxy_at(&ens, 8, &cfg, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn slope_of_exact_log_linear_errors() {
        let errors: Vec<f64> = (1..=5).map(|h| (0.5 * h as f64).exp()).collect();
        let s = error_slope(&[1, 2, 3, 4, 5], &errors, 1e-12);
        assert_relative_eq!(s, 0.5, epsilon = 1e-12);
        assert_eq!(error_slope(&[3], &[2.0], 1e-12), 0.0);
    }

    #[test]
    fn contracting_geometric_ensemble_has_negative_slope() {
        let ens: Vec<_> = (0..40)
            .map(|r| series((1..=40).map(|k| (1.0 + 0.1 * r as f64) * 0.5f64.powi(k)).collect()))
            .collect();
        let cfg = EmbeddingConfig::default();
        let mut rng = rng_from_seed(5);
        let s = lle_proxy_at(&ens, 10, &cfg, &mut rng).unwrap();
        assert!(s < 0.0, "slope {s}");
        assert_relative_eq!(s, 0.5f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn window_and_split_errors() {
        let ens: Vec<_> = (0..2).map(|_| series(vec![0.0; 20])).collect();
        let cfg = EmbeddingConfig::default();
        let mut rng = rng_from_seed(1);
        // ceil(0.6 * 2) = 2 leaves no test runs
        assert!(matches!(lle_proxy_at(&ens, 8, &cfg, &mut rng), Err(Error::Config(_))));
        let ens: Vec<_> = (0..5).map(|_| series(vec![0.0; 20])).collect();
        assert!(lle_proxy_at(&ens, 4, &cfg, &mut rng).is_err());
        assert!(lle_proxy_at(&ens, 16, &cfg, &mut rng).is_err());
        assert!(lle_proxy_at(&ens, 15, &cfg, &mut rng).is_ok());
    }

    #[test]
    fn k_shrinks_to_train_size() {
        let cfg = EmbeddingConfig {
            k_neighbors: 50,
            ..EmbeddingConfig::default()
        };
        let ens: Vec<_> = (0..6)
            .map(|r| series((0..20).map(|k| (r * k) as f64 * 0.01).collect()))
            .collect();
        let mut rng = rng_from_seed(2);
        assert!(lle_proxy_at(&ens, 10, &cfg, &mut rng).unwrap().is_finite());
    }

    #[test]
    fn profile_length_and_index_map() {
        let cfg = EmbeddingConfig::default();
        assert_eq!(cfg.profile_len(200), 191);
        assert_eq!(cfg.profile_len(11), 2);
        assert_eq!(cfg.profile_len(9), 0);
        let ens: Vec<_> = (0..8)
            .map(|r| series((0..11).map(|k| ((r + 1) * (k + 1)) as f64).collect()))
            .collect();
        let p = proxy_profile(&ens, &cfg, 4, 9).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.t_end_of(1), 5);
        assert_eq!(p.t_end_of(2), 6);
        assert_eq!(p.index_of(6), Some(2));
        assert_eq!(p.index_of(7), None);
        let short: Vec<_> = ens.iter().map(|s| s.truncated(9)).collect();
        assert!(matches!(proxy_profile(&short, &cfg, 4, 9), Err(Error::Config(_))));
    }

    #[test]
    fn smoothing_examples() {
        let out = smooth_profile(&[1.0, 2.0, 3.0, 4.0, 5.0], 4);
        assert_eq!(out, vec![1.0, 1.5, 2.0, 2.5, 3.5]);
        let raw = [0.3, -1.0, 2.5];
        assert_eq!(smooth_profile(&raw, 1), raw.to_vec());
        assert_eq!(smooth_profile(&[0.25; 6], 4), vec![0.25; 6]);
        assert!(smooth_profile(&[], 4).is_empty());
    }
}

//! Reliability scores derived from the smoothed proxy profile, timing
//! statistics of the contractive region and the diagnostic cost model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiler::{EmbeddingConfig, ProxyProfile};

/// Evaluation window on the solver-iteration (`t_end`) axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricWindow {
    pub t_start: usize,
    pub t_stop: usize,
    pub epsilon: f64,
}

impl Default for MetricWindow {
    fn default() -> Self {
        Self {
            t_start: 10,
            t_stop: 200,
            epsilon: 1e-8,
        }
    }
}

impl MetricWindow {
    /// Raises `t_start` to the shortest micro-series the embedding can use.
    pub fn effective(&self, cfg: &EmbeddingConfig) -> MetricWindow {
        MetricWindow {
            t_start: self.t_start.max(cfg.lookback + cfg.h_max),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_stop <= self.t_start {
            return Err(Error::config("metric window needs t_stop > t_start"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("metric epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileMetrics {
    pub t_min: usize,
    pub y_min: f64,
    pub s_min: f64,
    pub m0: f64,
    pub t_bar: f64,
    pub s_mom: f64,
    pub t_enter_neg: Option<usize>,
}

/// Depth-over-delay and negative-mass moment scores over the window.
pub fn compute_metrics(profile: &ProxyProfile, window: &MetricWindow) -> Result<ProfileMetrics> {
    let eps = window.epsilon;
    let mut points = profile
        .rows()
        .filter(|&(t, _, _)| t >= window.t_start && t <= window.t_stop)
        .map(|(t, _, s)| (t, s))
        .peekable();
    if points.peek().is_none() {
        return Err(Error::config(format!(
            "metric window [{}, {}] does not overlap profile t_end range [{}, {}]",
            window.t_start,
            window.t_stop,
            profile.first_t_end,
            profile.first_t_end + profile.len().saturating_sub(1)
        )));
    }

    let mut t_min = 0;
    let mut y_min = f64::INFINITY;
    let mut m0 = 0.0;
    let mut weighted = 0.0;
    let mut t_enter_neg = None;
    for (t, v) in points {
        if v < y_min {
            y_min = v;
            t_min = t;
        }
        let neg = (-v).max(0.0);
        m0 += neg;
        weighted += t as f64 * neg;
        if v < 0.0 && t_enter_neg.is_none() {
            t_enter_neg = Some(t);
        }
    }
    let s_min = -y_min / (t_min as f64 + eps);
    let (t_bar, s_mom) = if m0 > 0.0 {
        let t_bar = weighted / (m0 + eps);
        (t_bar, m0 / (t_bar + eps))
    } else {
        (0.0, 0.0)
    };
    Ok(ProfileMetrics {
        t_min,
        y_min,
        s_min,
        m0,
        t_bar,
        s_mom,
        t_enter_neg,
    })
}

/// `round(x)` with halves rounded up, for fraction-to-count conversions.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodSubset {
    pub threshold: f64,
    pub selected_count: usize,
    pub mask: Vec<bool>,
}

/// Top `fraction` of scores; ties at the threshold go to earlier indices.
pub fn good_subset_threshold(scores: &[f64], fraction: f64) -> Result<GoodSubset> {
    if scores.is_empty() {
        return Err(Error::InsufficientData("no scores to threshold".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config("good-subset fraction must lie in (0, 1)"));
    }
    let n = scores.len();
    let count = round_half_up(fraction * n as f64).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut mask = vec![false; n];
    for &idx in &order[..count] {
        mask[idx] = true;
    }
    Ok(GoodSubset {
        threshold: scores[order[count - 1]],
        selected_count: count,
        mask,
    })
}

/// Which profile-index convention maps `t_min` to a prefix length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexOrigin {
    /// `T = t - L + 1`: profile entry 1 sits at `t_end = L`.
    #[default]
    Embedding,
    /// `T = t - (L + h_max - 1)`: counts from the first fully observed window.
    FirstFullWindow,
}

impl IndexOrigin {
    pub fn profile_index(self, t: usize, cfg: &EmbeddingConfig) -> usize {
        let offset = match self {
            IndexOrigin::Embedding => cfg.lookback - 1,
            IndexOrigin::FirstFullWindow => cfg.lookback + cfg.h_max - 1,
        };
        t.saturating_sub(offset).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistBin {
    pub bin_left: usize,
    pub count_good: usize,
    pub count_rest: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub t_min_hist: Vec<HistBin>,
    pub t_enter_neg_hist: Vec<HistBin>,
    pub median_t_min_good: f64,
    /// Profile index of the good-subset median `t_min`.
    pub t_min_index: usize,
    pub good_count: usize,
}

fn histogram(good: &[usize], rest: &[usize], bin_width: usize) -> Vec<HistBin> {
    let all = good.iter().chain(rest);
    let (Some(&lo), Some(&hi)) = (all.clone().min(), all.max()) else {
        return Vec::new();
    };
    let first = lo / bin_width * bin_width;
    let n_bins = (hi - first) / bin_width + 1;
    let mut bins: Vec<HistBin> = (0..n_bins)
        .map(|b| HistBin {
            bin_left: first + b * bin_width,
            count_good: 0,
            count_rest: 0,
        })
        .collect();
    for &v in good {
        bins[(v - first) / bin_width].count_good += 1;
    }
    for &v in rest {
        bins[(v - first) / bin_width].count_rest += 1;
    }
    bins
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Histograms of `t_min` and `t_enter_neg` for good vs remaining points and
/// the good-subset median minimum location.
pub fn timing_summary(
    metrics: &[ProfileMetrics],
    good_mask: &[bool],
    bin_width: usize,
    origin: IndexOrigin,
    cfg: &EmbeddingConfig,
) -> Result<TimingSummary> {
    if metrics.len() != good_mask.len() {
        return Err(Error::Dimension {
            expected: metrics.len(),
            actual: good_mask.len(),
        });
    }
    if bin_width == 0 {
        return Err(Error::config("histogram bin width must be positive"));
    }
    let split = |f: &dyn Fn(&ProfileMetrics) -> Option<usize>| {
        let mut good = Vec::new();
        let mut rest = Vec::new();
        for (m, &g) in metrics.iter().zip(good_mask) {
            if let Some(v) = f(m) {
                if g { good.push(v) } else { rest.push(v) }
            }
        }
        (good, rest)
    };
    let (good_tmin, rest_tmin) = split(&|m| Some(m.t_min));
    let (good_neg, rest_neg) = split(&|m| m.t_enter_neg);
    if good_tmin.is_empty() {
        return Err(Error::InsufficientData("good subset is empty".into()));
    }
    let mut vals: Vec<f64> = good_tmin.iter().map(|&t| t as f64).collect();
    let med = median(&mut vals);
    Ok(TimingSummary {
        t_min_hist: histogram(&good_tmin, &rest_tmin, bin_width),
        t_enter_neg_hist: histogram(&good_neg, &rest_neg, bin_width),
        median_t_min_good: med,
        t_min_index: origin.profile_index(round_half_up(med), cfg),
        good_count: good_tmin.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub horizon: usize,
    pub k_req: usize,
    pub speedup: f64,
}

/// Solver iterations per trajectory needed for a length-`t` profile prefix.
pub fn required_iterations(t: usize, lookback: usize, h_max: usize, k_iters: usize) -> CostEstimate {
    let k_req = t + lookback + h_max - 1;
    CostEstimate {
        horizon: t,
        k_req,
        speedup: k_iters as f64 / k_req as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn profile_at(first: usize, smoothed: Vec<f64>) -> ProxyProfile {
        ProxyProfile {
            raw: smoothed.clone(),
            smoothed,
            first_t_end: first,
            smooth_window: 1,
        }
    }

    #[test]
    fn hand_evaluated_metrics() {
        let p = profile_at(10, vec![0.5, -0.2, -0.4, 0.1]);
        let m = compute_metrics(&p, &MetricWindow::default()).unwrap();
        assert_eq!(m.t_min, 12);
        assert_relative_eq!(m.y_min, -0.4);
        assert_relative_eq!(m.s_min, 0.4 / 12.0, epsilon = 1e-9);
        assert_relative_eq!(m.s_min, 0.033333, epsilon = 1e-6);
        assert_relative_eq!(m.m0, 0.6, epsilon = 1e-15);
        assert_relative_eq!(m.t_bar, 11.6667, epsilon = 1e-4);
        assert_relative_eq!(m.s_mom, 0.051429, epsilon = 1e-6);
        assert_eq!(m.t_enter_neg, Some(11));
    }

    #[test]
    fn nonnegative_profile_has_no_mass() {
        let p = profile_at(10, vec![0.3, 0.0, 0.2, 0.1]);
        let m = compute_metrics(&p, &MetricWindow::default()).unwrap();
        assert_eq!((m.m0, m.s_mom, m.t_bar), (0.0, 0.0, 0.0));
        assert_eq!(m.t_enter_neg, None);
        assert!(m.s_min <= 0.0);
    }

    #[test]
    fn constant_negative_profile_takes_earliest_minimum() {
        let p = profile_at(12, vec![-0.7; 6]);
        let m = compute_metrics(&p, &MetricWindow::default()).unwrap();
        assert_eq!(m.t_min, 12);
        assert_eq!(m.y_min, -0.7);
    }

    #[test]
    fn window_clips_profile_and_rejects_disjoint() {
        // entries before t = 10 are outside the window
        let p = profile_at(5, vec![-5.0, -5.0, -5.0, -5.0, -5.0, 0.1, -0.1]);
        let m = compute_metrics(&p, &MetricWindow::default()).unwrap();
        assert_eq!(m.t_min, 11);
        let w = MetricWindow {
            t_start: 50,
            t_stop: 60,
            epsilon: 1e-8,
        };
        assert!(matches!(compute_metrics(&p, &w), Err(Error::Config(_))));
        let eff = MetricWindow::default().effective(&EmbeddingConfig {
            lookback: 8,
            ..EmbeddingConfig::default()
        });
        assert_eq!(eff.t_start, 13);
    }

    #[test]
    fn good_subset_counts() {
        let scores: Vec<f64> = (0..3600).map(|i| ((i * 7919) % 3600) as f64).collect();
        let g = good_subset_threshold(&scores, 0.2).unwrap();
        assert_eq!(g.selected_count, 720);
        assert_eq!(g.mask.iter().filter(|&&m| m).count(), 720);

        let scores: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let g = good_subset_threshold(&scores, 0.2).unwrap();
        assert_eq!((g.threshold, g.selected_count), (0.9, 2));

        let g = good_subset_threshold(&[1.0; 8], 0.5).unwrap();
        assert_eq!(g.mask, vec![true, true, true, true, false, false, false, false]);
    }

    fn metric_with(t_min: usize, t_enter_neg: Option<usize>) -> ProfileMetrics {
        ProfileMetrics {
            t_min,
            y_min: -1.0,
            s_min: 0.0,
            m0: 0.0,
            t_bar: 0.0,
            s_mom: 0.0,
            t_enter_neg,
        }
    }

    #[test]
    fn timing_median_and_index_origins() {
        let cfg = EmbeddingConfig::default();
        let ms = vec![metric_with(21, Some(15)); 4];
        let s = timing_summary(&ms, &[true; 4], 5, IndexOrigin::Embedding, &cfg).unwrap();
        assert_eq!(s.median_t_min_good, 21.0);
        assert_eq!(s.t_min_index, 17);
        let s = timing_summary(&ms, &[true; 4], 5, IndexOrigin::FirstFullWindow, &cfg).unwrap();
        assert_eq!(s.t_min_index, 12);

        let s = timing_summary(&[metric_with(33, None)], &[true], 5, IndexOrigin::Embedding, &cfg).unwrap();
        assert_eq!(s.median_t_min_good, 33.0);
        assert!(s.t_enter_neg_hist.is_empty());

        let ms = vec![metric_with(12, None), metric_with(14, Some(11)), metric_with(31, Some(22))];
        let s = timing_summary(&ms, &[true, false, false], 5, IndexOrigin::Embedding, &cfg).unwrap();
        let total: usize = s.t_enter_neg_hist.iter().map(|b| b.count_good + b.count_rest).sum();
        assert_eq!(total, 2);
        assert_eq!(s.t_min_hist[0].bin_left, 10);
        assert_eq!(s.t_min_hist[0].count_good + s.t_min_hist[0].count_rest, 2);

        assert!(timing_summary(&ms, &[false; 3], 5, IndexOrigin::Embedding, &cfg).is_err());
    }

    #[test]
    fn cost_table_rows() {
        let rows = [(1, 10, 20.0), (3, 12, 16.7), (11, 20, 10.0), (35, 44, 4.5)];
        for (t, k_req, speedup) in rows {
            let c = required_iterations(t, 5, 5, 200);
            assert_eq!(c.k_req, k_req);
            assert_eq!(format!("{:.1}", c.speedup), format!("{speedup:.1}"));
        }
    }
}

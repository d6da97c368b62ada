use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k: usize,
    /// Inverse-distance weights instead of a plain mean.
    pub distance_weighted: bool,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 5,
            distance_weighted: false,
        }
    }
}

/// Brute-force nearest-neighbour regressor with Euclidean distance.
/// Ties in distance go to the lower training index.
#[derive(Debug, Clone)]
pub struct KnnRegressor {
    params: KnnParams,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl KnnRegressor {
    pub fn fit(params: KnnParams, x: &[Vec<f64>], y: &[f64]) -> Self {
        Self {
            params,
            x: x.to_vec(),
            y: y.to_vec(),
        }
    }

    pub fn predict_one(&self, q: &[f64]) -> f64 {
        let k = self.params.k.min(self.y.len());
        let mut dists: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(idx, row)| {
                let d2: f64 = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, idx)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, cmp);
        }
        let nearest = &dists[..k];

        if self.params.distance_weighted {
            let exact: Vec<f64> = nearest.iter().filter(|d| d.0 == 0.0).map(|d| self.y[d.1]).collect();
            if !exact.is_empty() {
                return super::mean(&exact);
            }
            let (num, den) = nearest.iter().fold((0.0, 0.0), |(n, d), &(d2, idx)| {
                let w = 1.0 / d2.sqrt();
                (n + w * self.y[idx], d + w)
            });
            return num / den;
        }
        nearest.iter().map(|&(_, idx)| self.y[idx]).sum::<f64>() / k as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..15).map(|i| vec![(i as f64 * 0.7).sin(), i as f64 * 0.3]).collect();
        let y: Vec<f64> = (0..15).map(|i| (i * i) as f64 * 0.01 - 0.5).collect();
        (x, y)
    }

    #[test]
    fn one_neighbour_interpolates() {
        let (x, y) = data();
        let m = KnnRegressor::fit(KnnParams { k: 1, distance_weighted: false }, &x, &y);
        for (row, &t) in x.iter().zip(&y) {
            assert_eq!(m.predict_one(row), t);
        }
    }

    #[test]
    fn full_neighbourhood_is_the_mean() {
        let (x, y) = data();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let m = KnnRegressor::fit(KnnParams { k: y.len(), distance_weighted: false }, &x, &y);
        for q in [vec![0.0, 0.0], vec![10.0, -3.0]] {
            assert!((m.predict_one(&q) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        let x = vec![vec![1.0], vec![-1.0], vec![3.0]];
        let y = vec![10.0, 20.0, 30.0];
        let m = KnnRegressor::fit(KnnParams { k: 1, distance_weighted: false }, &x, &y);
        assert_eq!(m.predict_one(&[0.0]), 10.0);
    }

    #[test]
    fn weighted_prediction_favours_closer_points() {
        let x = vec![vec![0.0], vec![3.0]];
        let y = vec![0.0, 1.0];
        let m = KnnRegressor::fit(KnnParams { k: 2, distance_weighted: true }, &x, &y);
        assert!((m.predict_one(&[1.0]) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.predict_one(&[3.0]), 1.0);
    }
}

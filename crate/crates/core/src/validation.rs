//! Solver-level validation: maximum per-root error per iteration under
//! different starting strategies and the empirical convergence order.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, tag};
use crate::solver::{sample_initialization, InitStrategy, IterationMap, PolynomialProblem, StabilizationConfig};

/// Largest distance between iterates and roots after pairing them greedily,
/// closest pairs first. Iterates may arrive in any order.
pub fn max_root_error(z: &[Complex64], roots: &[Complex64]) -> Result<f64> {
    if z.len() != roots.len() {
        return Err(Error::Dimension {
            expected: roots.len(),
            actual: z.len(),
        });
    }
    let n = z.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, &zi) in z.iter().enumerate() {
        for (j, &rj) in roots.iter().enumerate() {
            pairs.push(((zi - rj).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_z = vec![false; n];
    let mut used_r = vec![false; n];
    let mut worst: f64 = 0.0;
    let mut assigned = 0;
    for (d, i, j) in pairs {
        if used_z[i] || used_r[j] {
            continue;
        }
        used_z[i] = true;
        used_r[j] = true;
        worst = worst.max(d);
        assigned += 1;
        if assigned == n {
            break;
        }
    }
    Ok(worst)
}

/// Mean of `log(E_{k+1}/E_k) / log(E_k/E_{k-1})` over consecutive triples.
///
/// The input must hold at least three strictly positive, strictly
/// decreasing errors. Triples whose ratios underflow are skipped.
pub fn empirical_order(errors: &[f64]) -> Result<f64> {
    if errors.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "order estimate needs at least 3 errors, got {}",
            errors.len()
        )));
    }
    if errors.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InsufficientData("errors must be finite and strictly positive".into()));
    }
    if errors.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InsufficientData("errors must be strictly decreasing".into()));
    }
    let estimates: Vec<f64> = errors
        .windows(3)
        .filter_map(|w| {
            let num = (w[2] / w[1]).ln();
            let den = (w[1] / w[0]).ln();
            let p = num / den;
            (num.is_finite() && den.is_finite() && den != 0.0 && p.is_finite()).then_some(p)
        })
        .collect();
    if estimates.is_empty() {
        return Err(Error::InsufficientData("no usable error triples".into()));
    }
    Ok(estimates.iter().sum::<f64>() / estimates.len() as f64)
}

/// Errors in the asymptotic regime: the strictly decreasing run that starts
/// at the first error below `entry` and stops before the floor.
pub fn asymptotic_segment(errors: &[f64], entry: f64, floor: f64) -> &[f64] {
    let Some(start) = errors.iter().position(|&e| e < entry && e > floor) else {
        return &[];
    };
    let mut end = start + 1;
    while end < errors.len() && errors[end] > floor && errors[end] < errors[end - 1] {
        end += 1;
    }
    &errors[start..end]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRun {
    pub strategy: String,
    /// `E^(k)` for `k = 0..=K`.
    pub errors: Vec<f64>,
    pub iterations_to_tol: Option<usize>,
    pub observed_order: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationSettings {
    pub iterations: usize,
    pub tol: f64,
    /// Errors below this value enter the order estimate.
    pub asymptotic_entry: f64,
    pub seed: u64,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            iterations: 20,
            tol: 1e-10,
            asymptotic_entry: 0.1,
            seed: 0,
        }
    }
}

pub fn run_validation_suite<M: IterationMap + ?Sized>(
    map: &M,
    problem: &PolynomialProblem,
    strategies: &[InitStrategy],
    settings: &ValidationSettings,
    stab: &StabilizationConfig,
) -> Result<Vec<ValidationRun>> {
    if strategies.is_empty() {
        return Err(Error::config("validation needs at least one initialization strategy"));
    }
    strategies
        .iter()
        .enumerate()
        .map(|(idx, &strategy)| {
            let mut rng = rng_from_seed(derive_seed(&[settings.seed, tag::VALIDATION, idx as u64]));
            let mut z = sample_initialization(strategy, problem, &mut rng);
            let mut errors = vec![max_root_error(&z, problem.roots())?];
            let mut diverged = false;
            for _ in 0..settings.iterations {
                let (next, flags) = map.step(&z, problem, stab, diverged);
                diverged |= flags.diverged;
                z = next;
                errors.push(max_root_error(&z, problem.roots())?);
            }
            let iterations_to_tol = if diverged {
                None
            } else {
                errors.iter().position(|&e| e < settings.tol)
            };
            let segment = asymptotic_segment(&errors, settings.asymptotic_entry, stab.floor_value());
            Ok(ValidationRun {
                strategy: strategy.name().to_string(),
                observed_order: empirical_order(segment).ok(),
                errors,
                iterations_to_tol,
                diverged,
            })
        })
        .collect()
}

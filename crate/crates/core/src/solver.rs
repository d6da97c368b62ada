//! Simultaneous polynomial root-finding: problems, the two-parameter
//! iteration family, stabilized trajectories and seeded ensembles.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, tag};

/// A monic polynomial with known roots. The roots are ground truth for
/// validation only; the iteration evaluates the polynomial through its
/// coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialProblem {
    roots: Vec<Complex64>,
    /// Monic coefficients, highest degree first (`coefficients[0] == 1`).
    coefficients: Vec<Complex64>,
}

impl PolynomialProblem {
    pub fn from_roots(roots: Vec<Complex64>) -> Result<Self> {
        if roots.is_empty() {
            return Err(Error::config("polynomial needs at least one root"));
        }
        if roots.iter().any(|r| !r.is_finite()) {
            return Err(Error::config("polynomial roots must be finite"));
        }
        let mut coefficients = vec![Complex64::new(1.0, 0.0)];
        for &root in &roots {
            // multiply by (z - root)
            coefficients.push(Complex64::new(0.0, 0.0));
            for k in (1..coefficients.len()).rev() {
                let prev = coefficients[k - 1];
                coefficients[k] -= root * prev;
            }
        }
        Ok(Self {
            roots,
            coefficients,
        })
    }

    /// `z^n - 1`, roots at the n-th roots of unity.
    pub fn roots_of_unity(degree: usize) -> Result<Self> {
        let roots = (0..degree)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / degree as f64))
            .collect();
        Self::from_roots(roots)
    }

    pub fn degree(&self) -> usize {
        self.roots.len()
    }

    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Horner evaluation.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coefficients
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationParams {
    pub alpha: f64,
    pub beta: f64,
}

impl IterationParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }
}

/// Numerical guards applied while iterating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilizationConfig {
    /// Natural-log floor on step norms; the micro-series freezes once reached.
    pub tail_floor_log: f64,
    /// Magnitude bound on iterates that engages stabilization.
    pub divergence_bound: f64,
    /// Maximum stacked step norm while stabilization is engaged.
    pub step_cap: f64,
    /// Guard for near-zero denominators and coincident iterates.
    pub guard_eps: f64,
}

impl Default for StabilizationConfig {
    fn default() -> Self {
        Self {
            tail_floor_log: 1e-14_f64.ln(),
            divergence_bound: 1e8,
            step_cap: 1e4,
            guard_eps: 1e-12,
        }
    }
}

impl StabilizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tail_floor_log < 0.0) {
            return Err(Error::config("tail_floor_log must be negative"));
        }
        if !(self.step_cap > 0.0 && self.divergence_bound > self.step_cap) {
            return Err(Error::config(
                "stabilization requires divergence_bound > step_cap > 0",
            ));
        }
        if !(self.guard_eps > 0.0) {
            return Err(Error::config("guard_eps must be positive"));
        }
        Ok(())
    }

    /// The step norm recorded once the tail floor engages.
    pub fn floor_value(&self) -> f64 {
        self.tail_floor_log.exp()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepFlags {
    /// Stabilization clamped this step.
    pub diverged: bool,
    /// At least one correction fell back to the plain Weierstrass step.
    pub guarded: bool,
    /// Coincident iterates were separated before the step.
    pub separated: bool,
}

/// One application of a parallel root-finding scheme to all iterates.
///
/// `latched` is true once an earlier step of the same trajectory engaged
/// stabilization; implementations must keep clamping in that case.
pub trait IterationMap: Sync {
    fn step(
        &self,
        z: &[Complex64],
        problem: &PolynomialProblem,
        stab: &StabilizationConfig,
        latched: bool,
    ) -> (Vec<Complex64>, StepFlags);
}

/// `z_i <- z_i - W_i (1 + beta W_i) / (1 + alpha W_i)` with the Weierstrass
/// correction `W_i`. Reduces to Durand-Kerner at `alpha = beta = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeierstrassFamily {
    pub params: IterationParams,
}

impl WeierstrassFamily {
    pub fn new(params: IterationParams) -> Self {
        Self { params }
    }
}

impl IterationMap for WeierstrassFamily {
    fn step(
        &self,
        z: &[Complex64],
        problem: &PolynomialProblem,
        stab: &StabilizationConfig,
        latched: bool,
    ) -> (Vec<Complex64>, StepFlags) {
        let mut flags = StepFlags::default();
        let mut work = z.to_vec();
        flags.separated = separate_coincident(&mut work, stab.guard_eps);

        let one = Complex64::new(1.0, 0.0);
        let mut steps: Vec<Complex64> = weierstrass_corrections(&work, problem)
            .into_iter()
            .map(|w| {
                let denom = one + self.params.alpha * w;
                if denom.norm() < stab.guard_eps {
                    flags.guarded = true;
                    w
                } else {
                    w * (one + self.params.beta * w) / denom
                }
            })
            .collect();

        let out_of_bounds = work
            .iter()
            .zip(&steps)
            .any(|(&v, &s)| !s.is_finite() || v.norm() > stab.divergence_bound || (v - s).norm() > stab.divergence_bound);
        if latched || out_of_bounds {
            flags.diverged = true;
            clamp_steps(&mut steps, &work, stab.step_cap);
        }

        let mut next: Vec<Complex64> = work.iter().zip(&steps).map(|(&v, &s)| v - s).collect();
        if flags.diverged {
            // separation nudges count towards the capped displacement
            let disp = stacked_norm(next.iter().zip(z).map(|(&a, &b)| a - b));
            if disp > stab.step_cap {
                let scale = stab.step_cap / disp;
                for (n, &v) in next.iter_mut().zip(z) {
                    *n = v + (*n - v) * scale;
                }
            }
        }
        (next, flags)
    }
}

/// `W_i = f(z_i) / prod_{j != i} (z_i - z_j)`.
pub fn weierstrass_corrections(z: &[Complex64], problem: &PolynomialProblem) -> Vec<Complex64> {
    z.iter()
        .enumerate()
        .map(|(i, &zi)| {
            let denom = z
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(Complex64::new(1.0, 0.0), |acc, (_, &zj)| acc * (zi - zj));
            problem.eval(zi) / denom
        })
        .collect()
}

/// Nudges later duplicates of an iterate apart. Returns whether anything moved.
fn separate_coincident(z: &mut [Complex64], eps: f64) -> bool {
    let mut moved = false;
    for i in 1..z.len() {
        let mut attempts = 0;
        while attempts < z.len() && (0..i).any(|j| (z[i] - z[j]).norm() < eps) {
            z[i] += Complex64::new(eps, eps);
            moved = true;
            attempts += 1;
        }
    }
    moved
}

/// Replaces non-finite corrections by an outward push of length `cap` and
/// rescales the stacked step vector to norm at most `cap`.
fn clamp_steps(steps: &mut [Complex64], z: &[Complex64], cap: f64) {
    for (s, &v) in steps.iter_mut().zip(z) {
        if !s.is_finite() {
            let r = v.norm();
            *s = if r > 0.0 && r.is_finite() {
                -v / r * cap
            } else {
                Complex64::new(-cap, 0.0)
            };
        }
    }
    let norm = stacked_norm(steps.iter().copied());
    if norm > cap {
        let scale = cap / norm;
        steps.iter_mut().for_each(|s| *s *= scale);
    }
}

fn stacked_norm(values: impl Iterator<Item = Complex64>) -> f64 {
    values.map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Single step of the default family.
pub fn weierstrass_step(
    z: &[Complex64],
    params: IterationParams,
    problem: &PolynomialProblem,
    stab: &StabilizationConfig,
) -> (Vec<Complex64>, StepFlags) {
    WeierstrassFamily::new(params).step(z, problem, stab, false)
}

/// Recorded step norms of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `||z_{k+1} - z_k||` for `k = 0..K`.
    pub step_norms: Vec<f64>,
    pub diverged: bool,
    /// Iteration index at which the tail floor first engaged.
    pub frozen_from: Option<usize>,
}

/// Runs the default family for `k_iters` iterations.
pub fn run_trajectory(
    init: &[Complex64],
    params: IterationParams,
    problem: &PolynomialProblem,
    k_iters: usize,
    stab: &StabilizationConfig,
) -> Result<Trajectory> {
    run_trajectory_with(&WeierstrassFamily::new(params), init, problem, k_iters, stab)
}

pub fn run_trajectory_with<M: IterationMap + ?Sized>(
    map: &M,
    init: &[Complex64],
    problem: &PolynomialProblem,
    k_iters: usize,
    stab: &StabilizationConfig,
) -> Result<Trajectory> {
    if k_iters == 0 {
        return Err(Error::config("trajectory length K must be at least 1"));
    }
    if init.len() != problem.degree() {
        return Err(Error::Dimension {
            expected: problem.degree(),
            actual: init.len(),
        });
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("initial iterates must be finite"));
    }

    let floor = stab.floor_value();
    let mut step_norms = Vec::with_capacity(k_iters);
    let mut z = init.to_vec();
    let mut diverged = false;
    let mut frozen_from = None;

    for k in 0..k_iters {
        let (next, flags) = map.step(&z, problem, stab, diverged);
        diverged |= flags.diverged;
        let mut norm = stacked_norm(next.iter().zip(&z).map(|(&a, &b)| a - b));
        if !norm.is_finite() {
            // a map without its own clamp produced garbage
            diverged = true;
            norm = stab.step_cap;
        }
        if norm <= 0.0 || norm.ln() <= stab.tail_floor_log {
            frozen_from = Some(k);
            step_norms.resize(k_iters, floor);
            break;
        }
        step_norms.push(norm);
        if next.iter().all(|v| v.is_finite()) {
            z = next;
        } else {
            diverged = true;
        }
    }

    Ok(Trajectory {
        step_norms,
        diverged,
        frozen_from,
    })
}

/// How starting iterates are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    /// Each true root perturbed by `scale * U[-1, 1]` in both components.
    NearRoot { scale: f64 },
    /// Equally spaced points on a circle of the given radius.
    Moderate { radius: f64 },
    /// Uniform over the square `[-h, h] + i[-h, h]`.
    RandomBox { half_width: f64 },
}

impl InitStrategy {
    pub const NEAR_ROOT: InitStrategy = InitStrategy::NearRoot { scale: 1e-2 };
    pub const MODERATE: InitStrategy = InitStrategy::Moderate { radius: 5.0 };
    pub const RANDOM_BOX: InitStrategy = InitStrategy::RandomBox { half_width: 10.0 };

    pub fn name(&self) -> &'static str {
        match self {
            InitStrategy::NearRoot { .. } => "near_root",
            InitStrategy::Moderate { .. } => "moderate",
            InitStrategy::RandomBox { .. } => "random_box",
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "near_root" => Ok(Self::NEAR_ROOT),
            "moderate" => Ok(Self::MODERATE),
            "random_box" | "random" => Ok(Self::RANDOM_BOX),
            other => Err(Error::config(format!("unknown initialization strategy `{other}`"))),
        }
    }
}

pub fn sample_initialization<R: Rng + ?Sized>(
    strategy: InitStrategy,
    problem: &PolynomialProblem,
    rng: &mut R,
) -> Vec<Complex64> {
    let n = problem.degree();
    match strategy {
        InitStrategy::NearRoot { scale } => problem
            .roots()
            .iter()
            .map(|&root| {
                let eps = Complex64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
                root + eps * scale
            })
            .collect(),
        InitStrategy::Moderate { radius } => (0..n)
            .map(|k| Complex64::from_polar(radius, 2.0 * PI * k as f64 / n as f64))
            .collect(),
        InitStrategy::RandomBox { half_width } => (0..n)
            .map(|_| {
                Complex64::new(
                    rng.gen_range(-half_width..=half_width),
                    rng.gen_range(-half_width..=half_width),
                )
            })
            .collect(),
    }
}

/// One cell of the parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl GridPoint {
    pub fn params(&self) -> IterationParams {
        IterationParams::new(self.alpha, self.beta)
    }
}

/// Uniform `n_alpha x n_beta` grid with inclusive endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamGrid {
    pub alpha_range: [f64; 2],
    pub beta_range: [f64; 2],
    pub n_alpha: usize,
    pub n_beta: usize,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            alpha_range: [-3.0, 5.0],
            beta_range: [-2.0, 4.0],
            n_alpha: 60,
            n_beta: 60,
        }
    }
}

fn linspace(range: [f64; 2], n: usize, idx: usize) -> f64 {
    if n == 1 {
        return 0.5 * (range[0] + range[1]);
    }
    range[0] + (range[1] - range[0]) * idx as f64 / (n - 1) as f64
}

impl ParamGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_alpha == 0 || self.n_beta == 0 {
            return Err(Error::config("grid dimensions must be positive"));
        }
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] < r[1];
        if !ok(self.alpha_range) || !ok(self.beta_range) {
            return Err(Error::config("grid ranges must be finite with lo < hi"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_alpha * self.n_beta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major id of cell `(i, j)`.
    pub fn id(&self, i: usize, j: usize) -> usize {
        i * self.n_beta + j
    }

    pub fn indices(&self, id: usize) -> (usize, usize) {
        (id / self.n_beta, id % self.n_beta)
    }

    pub fn point(&self, i: usize, j: usize, global_seed: u64) -> GridPoint {
        GridPoint {
            i,
            j,
            alpha: linspace(self.alpha_range, self.n_alpha, i),
            beta: linspace(self.beta_range, self.n_beta, j),
            seed: derive_seed(&[global_seed, i as u64, j as u64]),
        }
    }

    /// All cells in row-major `(i, j)` order.
    pub fn points(&self, global_seed: u64) -> Vec<GridPoint> {
        (0..self.n_alpha)
            .flat_map(|i| (0..self.n_beta).map(move |j| (i, j)))
            .map(|(i, j)| self.point(i, j, global_seed))
            .collect()
    }
}

/// Seed of run `r` at a grid point.
pub fn run_seed(point_seed: u64, run: usize) -> u64 {
    derive_seed(&[point_seed, tag::RUN, run as u64])
}

pub fn run_ensemble(
    point: &GridPoint,
    problem: &PolynomialProblem,
    n_runs: usize,
    k_iters: usize,
    stab: &StabilizationConfig,
    init_strategy: InitStrategy,
) -> Result<Vec<Trajectory>> {
    run_ensemble_with(
        &WeierstrassFamily::new(point.params()),
        point,
        problem,
        n_runs,
        k_iters,
        stab,
        init_strategy,
    )
}

pub fn run_ensemble_with<M: IterationMap + ?Sized>(
    map: &M,
    point: &GridPoint,
    problem: &PolynomialProblem,
    n_runs: usize,
    k_iters: usize,
    stab: &StabilizationConfig,
    init_strategy: InitStrategy,
) -> Result<Vec<Trajectory>> {
    if n_runs == 0 {
        return Err(Error::config("ensemble needs at least one run"));
    }
    (0..n_runs)
        .map(|r| {
            let mut rng = rng_from_seed(run_seed(point.seed, r));
            let init = sample_initialization(init_strategy, problem, &mut rng);
            run_trajectory_with(map, &init, problem, k_iters, stab)
        })
        .collect()
}

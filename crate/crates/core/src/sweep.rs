//! Grid search over coupler stiffness and damping.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{simulate, IntegratorConfig, Trajectory};
use crate::model::{single_wheel_limit_rate, HybridState, NondimParams};
use crate::poincare::{
    band_entry, convergence_check, fit_linear_map, phase_metrics, section_samples, FixedPointEstimate, PoincareSample,
    ReturnMapFit,
};

/// Section tolerance on `|theta2|` for a trial to count as converged [deg].
pub const CONVERGENCE_TOLERANCE_DEG: f64 = 1.0;

/// Fraction of `alpha` spanned by the seeded `theta2(0)` values.
pub const SEED_SPREAD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub k_hat_values: Vec<f64>,
    pub b_hat_values: Vec<f64>,
    /// Shared slope, geometry and rest lengths; its coupler is replaced per cell.
    pub base: NondimParams,
}

impl SweepGrid {
    pub fn log_spaced(base: NondimParams, k_range: (f64, f64), nk: usize, b_range: (f64, f64), nb: usize) -> Result<Self> {
        let grid = SweepGrid { k_hat_values: log_space(k_range, nk)?, b_hat_values: log_space(b_range, nb)?, base };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in [("k_hat", &self.k_hat_values), ("b_hat", &self.b_hat_values)] {
            if values.is_empty() {
                return Err(Error::InvalidParameter(format!("{name} grid is empty")));
            }
            if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter(format!("{name} grid values must be positive")));
            }
            if values.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidParameter(format!("{name} grid must be strictly ascending")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.k_hat_values.len() * self.b_hat_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points ordered by `k_hat`, then `b_hat`.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.k_hat_values
            .iter()
            .flat_map(|&k| self.b_hat_values.iter().map(move |&b| (k, b)))
            .collect()
    }
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_space((lo, hi): (f64, f64), n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(Error::InvalidParameter(format!("bad log range [{lo}, {hi}] with {n} points")));
    }
    if n == 1 || lo == hi {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n)
        .map(|i| match i {
            0 => lo,
            i if i == n - 1 => hi,
            i => 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64),
        })
        .collect())
}

/// A seed with wheel 1 just after its heel strike and both wheels rolling at
/// the uncoupled limit-cycle rate.
pub fn initial_condition(p: &NondimParams, theta2: f64) -> Result<HybridState> {
    let omega = single_wheel_limit_rate(p.gamma, p.alpha)?;
    HybridState { theta1: -p.alpha, dtheta1: omega, theta2, dtheta2: omega, d_hat: 0.0, n1: 1, n2: 0 }
        .with_geometric_length(p)
}

/// `n_trials` seeds with `theta2(0)` at the centres of equal bins spanning
/// `(-0.9 alpha, 0.9 alpha)`.
pub fn default_initial_conditions(p: &NondimParams, n_trials: usize) -> Result<Vec<HybridState>> {
    if n_trials < 4 {
        return Err(Error::InvalidParameter(format!("need at least 4 trials, got {n_trials}")));
    }
    let span = 2.0 * SEED_SPREAD * p.alpha;
    (0..n_trials)
        .map(|i| initial_condition(p, -SEED_SPREAD * p.alpha + (i as f64 + 0.5) * span / n_trials as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k_hat: f64,
    pub b_hat: f64,
    /// Every trial ended inside the convergence band.
    pub valid: bool,
    pub dominant_abs: Option<f64>,
    pub dominant: Option<Complex64>,
    pub n_converged: usize,
    pub n_failed: usize,
    pub fit: Option<ReturnMapFit>,
    /// Why a valid cell has no fit (degenerate seed sets).
    pub fit_error: Option<String>,
}

/// Outcome of one trial inside a cell.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trajectory: Option<Trajectory>,
    pub samples: Vec<PoincareSample>,
    pub converged: bool,
    pub failed: bool,
}

pub fn run_trial(p: &NondimParams, seed: &HybridState, cfg: &IntegratorConfig, trial_id: usize) -> TrialOutcome {
    match simulate(seed, p, cfg) {
        Ok(traj) => {
            let samples = section_samples(&traj, trial_id);
            let failed = traj.is_failed();
            let converged = !failed && convergence_check(&samples, CONVERGENCE_TOLERANCE_DEG);
            TrialOutcome { trajectory: Some(traj), samples, converged, failed }
        }
        Err(_) => TrialOutcome { trajectory: None, samples: Vec::new(), converged: false, failed: true },
    }
}

/// Simulate every seed with the given coupler and fit the return map if all
/// of them converge.
pub fn run_cell(k_hat: f64, b_hat: f64, base: &NondimParams, ics: &[HybridState], cfg: &IntegratorConfig) -> SweepCell {
    let p = base.with_coupler(k_hat, b_hat);
    // cells only need the event log
    let cfg = IntegratorConfig { sample_stride: usize::MAX, ..*cfg };
    let outcomes: Vec<TrialOutcome> = ics.iter().enumerate().map(|(i, s)| run_trial(&p, s, &cfg, i)).collect();
    let n_converged = outcomes.iter().filter(|o| o.converged).count();
    let n_failed = outcomes.iter().filter(|o| o.failed).count();
    let valid = !ics.is_empty() && n_converged == ics.len();

    let mut cell = SweepCell {
        k_hat,
        b_hat,
        valid,
        dominant_abs: None,
        dominant: None,
        n_converged,
        n_failed,
        fit: None,
        fit_error: None,
    };
    if valid {
        let trials: Vec<Vec<PoincareSample>> = outcomes.into_iter().map(|o| o.samples).collect();
        match fit_linear_map(&trials, FixedPointEstimate::Affine) {
            Ok(fit) => {
                cell.dominant_abs = Some(fit.dominant_abs);
                cell.dominant = Some(fit.dominant());
                cell.fit = Some(fit);
            }
            Err(e) => cell.fit_error = Some(e.to_string()),
        }
    }
    cell
}

/// Evaluate every grid cell on up to `workers` threads. The result is ordered
/// by `(k_hat, b_hat)` whatever the scheduling.
pub fn run_sweep(grid: &SweepGrid, ics: &[HybridState], cfg: &IntegratorConfig, workers: usize) -> Result<Vec<SweepCell>> {
    grid.validate()?;
    cfg.validate()?;
    let points = grid.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(|| points.par_iter().map(|&(k, b)| run_cell(k, b, &grid.base, ics, cfg)).collect()))
}

/// Valid cell with the smallest dominant eigenvalue magnitude; ties go to
/// the lighter damping, then the softer spring.
pub fn select_best(cells: &[SweepCell]) -> Result<&SweepCell> {
    cells
        .iter()
        .filter(|c| c.valid && c.dominant_abs.is_some())
        .min_by(|x, y| {
            let (dx, dy) = (x.dominant_abs.unwrap_or(f64::INFINITY), y.dominant_abs.unwrap_or(f64::INFINITY));
            dx.total_cmp(&dy).then(x.b_hat.total_cmp(&y.b_hat)).then(x.k_hat.total_cmp(&y.k_hat))
        })
        .ok_or(Error::NoValidCell)
}

/// Number of 4-connected groups of valid cells on the grid.
pub fn valid_regions(grid: &SweepGrid, cells: &[SweepCell]) -> usize {
    let (nk, nb) = (grid.k_hat_values.len(), grid.b_hat_values.len());
    let valid: Vec<bool> = cells.iter().map(|c| c.valid).collect();
    count_regions(&valid, nk, nb)
}

/// Connected components among `true` entries of a row-major `rows x cols` mask.
pub fn count_regions(mask: &[bool], rows: usize, cols: usize) -> usize {
    let mut seen = vec![false; mask.len()];
    let mut regions = 0;
    for start in 0..mask.len().min(rows * cols) {
        if !mask[start] || seen[start] {
            continue;
        }
        regions += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (r, c) = (i / cols, i % cols);
            let mut neighbours = Vec::with_capacity(4);
            if r > 0 {
                neighbours.push(i - cols);
            }
            if r + 1 < rows {
                neighbours.push(i + cols);
            }
            if c > 0 {
                neighbours.push(i - 1);
            }
            if c + 1 < cols {
                neighbours.push(i + 1);
            }
            for j in neighbours {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    regions
}

/// Worst band-entry step over all seeds, `None` if any seed fails to settle.
pub fn worst_band_entry(p: &NondimParams, ics: &[HybridState], cfg: &IntegratorConfig, tol_deg: f64) -> Option<usize> {
    ics.iter()
        .enumerate()
        .map(|(i, s)| {
            let o = run_trial(p, s, cfg, i);
            if o.failed {
                None
            } else {
                band_entry(&o.samples, tol_deg)
            }
        })
        .try_fold(0, |acc, e| e.map(|e| acc.max(e)))
}

/// Phase of the first complete step when starting from `seed(theta2)`.
fn first_phase(p: &NondimParams, cfg: &IntegratorConfig, theta2: f64) -> Result<Option<f64>> {
    let seed = initial_condition(p, theta2)?;
    let traj = simulate(&seed, p, cfg)?;
    Ok(phase_metrics(&traj).first().and_then(|s| s.phase_pct))
}

/// Seed whose first wheel-1 step sees wheel 2 strike at `target_pct` percent
/// of the step, found by bisection on `theta2(0)`.
pub fn seed_with_initial_phase(p: &NondimParams, cfg: &IntegratorConfig, target_pct: f64) -> Result<HybridState> {
    if !(target_pct > 0.0 && target_pct < 100.0) {
        return Err(Error::InvalidParameter(format!("initial phase must lie in (0, 100), got {target_pct}")));
    }
    // two steps are enough to time the first one
    let omega = single_wheel_limit_rate(p.gamma, p.alpha)?;
    let horizon = 2.0 * (4.0 * p.alpha / omega).max(1.0);
    let cfg = IntegratorConfig { t_max: horizon.min(cfg.t_max), sample_stride: usize::MAX, ..*cfg };
    // larger theta2(0) puts wheel 2 closer to its strike, so earlier in the step
    let (mut lo, mut hi) = (-SEED_SPREAD * p.alpha, SEED_SPREAD * p.alpha);
    let phase_at = |t: f64| -> Result<f64> {
        first_phase(p, &cfg, t)?.ok_or_else(|| Error::InsufficientData(format!("no complete step from theta2 = {t}")))
    };
    let (f_lo, f_hi) = (phase_at(lo)? - target_pct, phase_at(hi)? - target_pct);
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::InvalidParameter(format!("initial phase {target_pct}% is not reachable")));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f_mid = phase_at(mid)? - target_pct;
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    initial_condition(p, 0.5 * (lo + hi))
}

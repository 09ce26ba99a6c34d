//! Return-map identification on the wheel-1 heel-strike section.
//!
//! Each wheel-1 impact yields a reduced state `(theta1', theta2, theta2', D)`
//! taken after the jump. A linear map about the fixed point is fitted to all
//! consecutive sample pairs of all trials by least squares, and its spectrum
//! measures how fast the gait settles.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{EventKind, EventRecord, Trajectory};
use crate::model::Wheel;

/// Fewest sample-to-sample transitions accepted by [`fit_linear_map`].
pub const MIN_TRANSITIONS: usize = 20;

/// Reciprocal condition number below which the regression is refused.
pub const RANK_TOLERANCE: f64 = 1e-14;

const SCHUR_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareSample {
    /// `(theta1', theta2, theta2', D)` just after the wheel-1 impact.
    pub x_p: [f64; 4],
    pub trial_id: usize,
    pub index_m: usize,
    pub tau: f64,
}

impl PoincareSample {
    pub fn theta2(&self) -> f64 {
        self.x_p[1]
    }

    fn vector(&self) -> Vector4<f64> {
        Vector4::from(self.x_p)
    }
}

/// How the fixed point of the map is estimated before regressing deviations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointEstimate {
    /// Joint affine least squares `x[m+1] = A x[m] + c`, then `(I - A)^-1 c`.
    #[default]
    Affine,
    /// Mean of the last two samples of every trial.
    TerminalMean,
    /// Regress raw states through the origin.
    Origin,
}

impl FixedPointEstimate {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "affine" => Some(Self::Affine),
            "terminal" | "terminal_mean" => Some(Self::TerminalMean),
            "origin" => Some(Self::Origin),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnMapFit {
    /// Row-major linear map acting on deviations from `fixed_point`.
    pub a: [[f64; 4]; 4],
    pub fixed_point: [f64; 4],
    /// Spectrum of `a`, sorted by decreasing magnitude.
    pub eigenvalues: Vec<Complex64>,
    pub dominant_abs: f64,
    pub n_trials: usize,
    pub n_samples: usize,
    pub n_transitions: usize,
    /// Root-mean-square one-step prediction error over all transitions.
    pub residual_rms: f64,
    pub fixed_point_estimate: FixedPointEstimate,
}

impl ReturnMapFit {
    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.a[i][j])
    }

    /// Eigenvalue of largest magnitude, with non-negative imaginary part.
    pub fn dominant(&self) -> Complex64 {
        let d = self.eigenvalues[0];
        Complex64::new(d.re, d.im.abs())
    }
}

/// Section samples at every wheel-1 impact. When wheel 2 strikes at the same
/// instant its jump is included, so the sample is the state that launches
/// the next orbit.
pub fn section_samples(traj: &Trajectory, trial_id: usize) -> Vec<PoincareSample> {
    section_events(traj)
        .enumerate()
        .map(|(index_m, (first, last))| {
            let s = last.state_post;
            PoincareSample { x_p: [s.dtheta1, s.theta2, s.dtheta2, s.d_hat], trial_id, index_m, tau: first.tau }
        })
        .collect()
}

/// Pairs of (wheel-1 impact, last impact at the same instant).
fn section_events(traj: &Trajectory) -> impl Iterator<Item = (&EventRecord, &EventRecord)> + '_ {
    let events = &traj.events;
    events.iter().enumerate().filter_map(move |(i, e)| {
        if e.kind != EventKind::Impact || e.wheel != Some(Wheel::One) {
            return None;
        }
        let last = events[i..]
            .iter()
            .take_while(|f| f.kind == EventKind::Impact && f.tau == e.tau)
            .last()
            .unwrap_or(e);
        Some((e, last))
    })
}

pub fn eigenvalues_4x4(a: &Matrix4<f64>) -> Result<[Complex64; 4]> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("in eigenvalue input".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(*a, f64::EPSILON, SCHUR_MAX_ITERATIONS)
        .ok_or(Error::EigenNonConvergence)?;
    let ev = schur.complex_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2], ev[3]];
    out.sort_by(|x, y| y.norm().total_cmp(&x.norm()).then(y.im.total_cmp(&x.im)));
    Ok(out)
}

fn transitions(trials: &[Vec<PoincareSample>]) -> impl Iterator<Item = (Vector4<f64>, Vector4<f64>)> + '_ {
    trials.iter().flat_map(|t| t.windows(2).map(|w| (w[0].vector(), w[1].vector())))
}

fn reciprocal_condition(m: &Matrix4<f64>) -> f64 {
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if max > 0.0 {
        min / max
    } else {
        0.0
    }
}

/// Solve `A * gram = cross` for `A` with `gram` symmetric positive definite.
fn solve_normal(cross: &Matrix4<f64>, gram: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let rcond = reciprocal_condition(gram);
    if !(rcond > RANK_TOLERANCE) {
        return Err(Error::RankDeficient(rcond));
    }
    let chol = gram.cholesky().ok_or(Error::RankDeficient(rcond))?;
    Ok(chol.solve(&cross.transpose()).transpose())
}

fn estimate_fixed_point(trials: &[Vec<PoincareSample>], how: FixedPointEstimate) -> Result<Vector4<f64>> {
    match how {
        FixedPointEstimate::Origin => Ok(Vector4::zeros()),
        FixedPointEstimate::TerminalMean => {
            let mut sum = Vector4::zeros();
            let mut count = 0.0;
            for t in trials.iter().filter(|t| t.len() >= 2) {
                sum += (t[t.len() - 1].vector() + t[t.len() - 2].vector()) * 0.5;
                count += 1.0;
            }
            Ok(sum / count)
        }
        FixedPointEstimate::Affine => {
            let n = transitions(trials).count() as f64;
            let (sx, sy) = transitions(trials).fold((Vector4::zeros(), Vector4::zeros()), |(sx, sy), (x, y)| (sx + x, sy + y));
            let mean_x = sx / n;
            let mean_y = sy / n;
            let mut gram = Matrix4::zeros();
            let mut cross = Matrix4::zeros();
            for (x, y) in transitions(trials) {
                let dx = x - mean_x;
                gram += dx * dx.transpose();
                cross += (y - mean_y) * dx.transpose();
            }
            let a = solve_normal(&cross, &gram)?;
            let offset = mean_y - a * mean_x;
            let lhs = Matrix4::identity() - a;
            lhs.lu().solve(&offset).ok_or(Error::RankDeficient(0.0))
        }
    }
}

/// Least-squares linear return map over every transition of every trial.
///
/// Deviations `dx = x_p - x_bar` are accumulated into `P^-1 = sum dx dx^T`
/// and `B = sum dx[m+1] dx[m]^T`, and the map is `A = B P`.
pub fn fit_linear_map(trials: &[Vec<PoincareSample>], how: FixedPointEstimate) -> Result<ReturnMapFit> {
    let n_transitions = transitions(trials).count();
    if n_transitions < MIN_TRANSITIONS {
        return Err(Error::InsufficientData(format!(
            "{n_transitions} section transitions, need at least {MIN_TRANSITIONS}"
        )));
    }
    let x_bar = estimate_fixed_point(trials, how)?;

    let mut p_inv = Matrix4::zeros();
    let mut b = Matrix4::zeros();
    for (x, y) in transitions(trials) {
        let dx = x - x_bar;
        let dy = y - x_bar;
        p_inv += dx * dx.transpose();
        b += dy * dx.transpose();
    }
    let a = solve_normal(&b, &p_inv)?;

    let sq: f64 = transitions(trials)
        .map(|(x, y)| (y - x_bar - a * (x - x_bar)).norm_squared())
        .sum();
    let residual_rms = (sq / n_transitions as f64).sqrt();

    let eigenvalues = eigenvalues_4x4(&a)?;
    let dominant_abs = eigenvalues[0].norm();
    Ok(ReturnMapFit {
        a: std::array::from_fn(|i| std::array::from_fn(|j| a[(i, j)])),
        fixed_point: x_bar.into(),
        eigenvalues: eigenvalues.to_vec(),
        dominant_abs,
        n_trials: trials.iter().filter(|t| !t.is_empty()).count(),
        n_samples: trials.iter().map(Vec::len).sum(),
        n_transitions,
        residual_rms,
        fixed_point_estimate: how,
    })
}

/// Linearized prediction `x_bar + A^m (x0 - x_bar)`.
pub fn predict(fit: &ReturnMapFit, x0: [f64; 4], m: usize) -> [f64; 4] {
    let a = fit.matrix();
    let x_bar = Vector4::from(fit.fixed_point);
    let mut dev = Vector4::from(x0) - x_bar;
    for _ in 0..m {
        dev = a * dev;
    }
    (x_bar + dev).into()
}

/// Index of the first sample after which `|theta2|` stays below `tol_deg`.
pub fn band_entry(samples: &[PoincareSample], tol_deg: f64) -> Option<usize> {
    let tol = tol_deg.to_radians();
    let outside = samples.iter().rposition(|s| !(s.theta2().abs() < tol));
    match outside {
        None if samples.is_empty() => None,
        None => Some(0),
        Some(i) if i + 1 < samples.len() => Some(i + 1),
        Some(_) => None,
    }
}

/// Whether the trial ends inside the `|theta2| < tol_deg` band.
pub fn convergence_check(samples: &[PoincareSample], tol_deg: f64) -> bool {
    band_entry(samples, tol_deg).is_some()
}

/// Gait timing for one wheel-1 step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseStep {
    pub step: usize,
    pub tau_start: f64,
    /// Start of the next step; absent for the last, unfinished step.
    pub tau_end: Option<f64>,
    /// Where wheel 2 struck within the step, in percent of its duration.
    pub phase_pct: Option<f64>,
    /// `theta1 - theta2` just before the wheel-1 impact [deg].
    pub phi_deg: f64,
    /// `theta2` at the section sample [deg].
    pub theta2_deg: f64,
}

/// Phase of wheel-2 impacts within each wheel-1 step. Steps are half-open,
/// so a simultaneous impact reads as 0 %.
pub fn phase_metrics(traj: &Trajectory) -> Vec<PhaseStep> {
    let sections: Vec<(&EventRecord, &EventRecord)> = section_events(traj).collect();
    let wheel2: Vec<f64> = traj.impacts_of(Wheel::Two).map(|e| e.tau).collect();
    sections
        .iter()
        .enumerate()
        .map(|(step, (first, last))| {
            let start = first.tau;
            let end = sections.get(step + 1).map(|(f, _)| f.tau);
            let phase_pct = end.and_then(|end| {
                wheel2
                    .iter()
                    .find(|&&t| t >= start && t < end)
                    .map(|&t| 100.0 * (t - start) / (end - start))
            });
            let pre = first.state_pre;
            PhaseStep {
                step,
                tau_start: start,
                tau_end: end,
                phase_pct,
                phi_deg: (pre.theta1 - pre.theta2).to_degrees(),
                theta2_deg: last.state_post.theta2.to_degrees(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trials_from_map(a0: &Matrix4<f64>, x_bar: Vector4<f64>, starts: &[[f64; 4]], len: usize) -> Vec<Vec<PoincareSample>> {
        starts
            .iter()
            .enumerate()
            .map(|(trial_id, s)| {
                let mut x = Vector4::from(*s);
                (0..len)
                    .map(|index_m| {
                        let sample = PoincareSample { x_p: x.into(), trial_id, index_m, tau: index_m as f64 };
                        x = x_bar + a0 * (x - x_bar);
                        sample
                    })
                    .collect()
            })
            .collect()
    }

    const STARTS: [[f64; 4]; 5] = [
        [1.0, 0.2, -0.3, 0.5],
        [-0.4, 1.0, 0.1, -0.2],
        [0.3, -0.6, 1.0, 0.4],
        [0.2, 0.3, -0.5, 1.0],
        [-0.7, -0.2, 0.6, -0.9],
    ];

    fn max_abs_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn recovers_diagonal_linear_map() {
        let a0 = Matrix4::from_diagonal(&Vector4::new(0.9, 0.5, 0.3, 0.1));
        let trials = trials_from_map(&a0, Vector4::zeros(), &STARTS, 10);
        for how in [FixedPointEstimate::Affine, FixedPointEstimate::Origin] {
            let fit = fit_linear_map(&trials, how).unwrap();
            assert!(max_abs_diff(&fit.matrix(), &a0) < 1e-10, "{how:?}");
            assert!((fit.dominant_abs - 0.9).abs() < 1e-10);
            assert!(fit.residual_rms < 1e-12);
        }
    }

    #[test]
    fn recovers_affine_map_and_fixed_point() {
        let a0 = Matrix4::new(
            0.6, 0.2, 0.0, 0.1, //
            -0.1, 0.5, 0.3, 0.0, //
            0.0, -0.2, 0.4, 0.1, //
            0.05, 0.0, 0.1, 0.3,
        );
        let x_bar = Vector4::new(0.3, -0.01, 0.2, 1.27);
        let trials = trials_from_map(&a0, x_bar, &STARTS, 10);
        let fit = fit_linear_map(&trials, FixedPointEstimate::Affine).unwrap();
        assert!(max_abs_diff(&fit.matrix(), &a0) < 1e-8);
        for i in 0..4 {
            assert!((fit.fixed_point[i] - x_bar[i]).abs() < 1e-8);
        }
        // through the origin the offset leaks into the map
        let raw = fit_linear_map(&trials, FixedPointEstimate::Origin).unwrap();
        assert!(max_abs_diff(&raw.matrix(), &a0) > 1e-3);
    }

    #[test]
    fn terminal_mean_uses_final_samples() {
        let a0 = Matrix4::from_diagonal(&Vector4::new(0.5, 0.4, 0.3, 0.2));
        let x_bar = Vector4::new(0.3, 0.0, 0.2, 1.2);
        let trials = trials_from_map(&a0, x_bar, &STARTS, 60);
        let fit = fit_linear_map(&trials, FixedPointEstimate::TerminalMean).unwrap();
        assert!(max_abs_diff(&fit.matrix(), &a0) < 1e-8);
    }

    #[test]
    fn too_few_transitions() {
        let a0 = Matrix4::from_diagonal(&Vector4::new(0.9, 0.5, 0.3, 0.1));
        let trials = trials_from_map(&a0, Vector4::zeros(), &STARTS[..2], 10);
        assert!(matches!(fit_linear_map(&trials, FixedPointEstimate::Affine), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn unexcited_direction_is_rank_deficient() {
        let a0 = Matrix4::from_diagonal(&Vector4::new(0.9, 0.5, 0.3, 0.1));
        let starts: Vec<[f64; 4]> = STARTS.iter().map(|s| [s[0], s[1], s[2], 0.0]).collect();
        let trials = trials_from_map(&a0, Vector4::zeros(), &starts, 10);
        assert!(matches!(fit_linear_map(&trials, FixedPointEstimate::Origin), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn eigenvalues_of_diagonal_and_rotation() {
        let d = Matrix4::from_diagonal(&Vector4::new(0.9, 0.2, 0.1, 0.05));
        let ev = eigenvalues_4x4(&d).unwrap();
        for (e, want) in ev.iter().zip([0.9, 0.2, 0.1, 0.05]) {
            assert!((e.re - want).abs() < 1e-12 && e.im.abs() < 1e-12);
        }

        let (r, th) = (0.8_f64, 0.7_f64);
        let mut m = Matrix4::zeros();
        m[(0, 0)] = r * th.cos();
        m[(0, 1)] = -r * th.sin();
        m[(1, 0)] = r * th.sin();
        m[(1, 1)] = r * th.cos();
        m[(2, 2)] = 0.3;
        m[(3, 3)] = -0.1;
        let ev = eigenvalues_4x4(&m).unwrap();
        assert!((ev[0] - Complex64::from_polar(r, th)).norm() < 1e-12);
        assert!((ev[1] - Complex64::from_polar(r, -th)).norm() < 1e-12);
        assert!((ev[2].re - 0.3).abs() < 1e-12);
        assert!((ev[3].re + 0.1).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_reject_non_finite() {
        let mut m = Matrix4::identity();
        m[(1, 2)] = f64::NAN;
        assert!(eigenvalues_4x4(&m).is_err());
    }

    #[test]
    fn prediction_identities() {
        let a0 = Matrix4::from_diagonal(&Vector4::new(0.5, 0.5, 0.5, 0.5));
        let trials = trials_from_map(&a0, Vector4::zeros(), &STARTS, 10);
        let fit = fit_linear_map(&trials, FixedPointEstimate::Affine).unwrap();
        let x0 = [1.0, -2.0, 0.5, 3.0];
        assert_eq!(predict(&fit, x0, 0), x0);
        let p3 = predict(&fit, [1.0, 0.0, 0.0, 0.0], 3);
        assert!((p3[0] - 0.125).abs() < 1e-12);
        let far = predict(&fit, x0, 200);
        for i in 0..4 {
            assert!((far[i] - fit.fixed_point[i]).abs() < 1e-12);
        }
    }

    fn samples_with_theta2(deg: &[f64]) -> Vec<PoincareSample> {
        deg.iter()
            .enumerate()
            .map(|(m, d)| PoincareSample { x_p: [0.3, d.to_radians(), 0.2, 1.0], trial_id: 0, index_m: m, tau: m as f64 })
            .collect()
    }

    #[test]
    fn convergence_band() {
        assert!(convergence_check(&samples_with_theta2(&[5.0, 2.0, 0.5, 0.3]), 1.0));
        assert!(!convergence_check(&samples_with_theta2(&[0.5, 0.3, 5.0]), 1.0));
        assert!(!convergence_check(&[], 1.0));
        assert_eq!(band_entry(&samples_with_theta2(&[5.0, 0.5, 1.5, 0.2, -0.1]), 1.0), Some(3));
        assert_eq!(band_entry(&samples_with_theta2(&[0.1, 0.2]), 1.0), Some(0));
    }
}

//! Fixed-step hybrid integration with impact localization.
//!
//! The continuous flow is advanced with the classical fourth-order
//! Runge-Kutta method on a fixed grid. When a step carries a wheel across its
//! impact surface the crossing is bracketed by bisection on the sub-step
//! length, the jump is applied, and integration resumes from the event
//! instant back onto the grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{coupler_geometry, dynamics, impact_map, HybridState, NondimParams, Wheel};

/// Bisection iterations allowed when bracketing a crossing.
const MAX_BISECTIONS: usize = 200;

/// Remaining step lengths below this are treated as already on the grid.
const GRID_SNAP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    /// Nominal step in nondimensional time.
    pub dt: f64,
    /// Angular tolerance on the located impact surface.
    pub event_tol: f64,
    /// Simulation horizon.
    pub t_max: f64,
    /// Maximum number of impacts before the run is cut.
    pub max_events: usize,
    /// Minimum flow time between two impacts of the same wheel.
    pub min_flow_time: f64,
    /// Keep every n-th grid sample; event instants are always kept.
    pub sample_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 1e-3,
            event_tol: 1e-10,
            t_max: 200.0,
            max_events: 100_000,
            min_flow_time: 1e-3,
            sample_stride: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("dt", self.dt), ("event_tol", self.event_tol), ("t_max", self.t_max)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.min_flow_time >= 0.0) {
            return Err(Error::InvalidParameter("min_flow_time must be non-negative".into()));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidParameter("sample_stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Heel strike of one wheel.
    Impact,
    /// A wheel's rate reversed before it reached its impact surface.
    Stall,
    /// A wheel rolled back past its trailing spoke.
    Backward,
    /// Two impacts of the same wheel closer than the minimum flow time.
    Zeno,
    /// The impact budget was exhausted.
    EventCap,
    /// The horizon was reached.
    Horizon,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Impact => "impact",
            EventKind::Stall => "stall",
            EventKind::Backward => "backward",
            EventKind::Zeno => "zeno",
            EventKind::EventCap => "event_cap",
            EventKind::Horizon => "horizon",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        Some(match s {
            "impact" => EventKind::Impact,
            "stall" => EventKind::Stall,
            "backward" => EventKind::Backward,
            "zeno" => EventKind::Zeno,
            "event_cap" => EventKind::EventCap,
            "horizon" => EventKind::Horizon,
            _ => return None,
        })
    }

    /// Kinds that disqualify a run from return-map fitting.
    pub fn is_failure(self) -> bool {
        matches!(self, EventKind::Stall | EventKind::Backward | EventKind::Zeno)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tau: f64,
    pub wheel: Option<Wheel>,
    pub kind: EventKind,
    pub state_pre: HybridState,
    pub state_post: HybridState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub tau: f64,
    pub state: HybridState,
}

/// A simulated run. `samples` holds the state after every kept grid step and
/// after every impact instant; the initial state is kept separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: HybridState,
    pub samples: Vec<Sample>,
    pub events: Vec<EventRecord>,
    /// Largest gap between the integrated and geometric coupler length.
    pub max_closure_error: f64,
}

impl Trajectory {
    pub fn impacts(&self) -> impl Iterator<Item = &EventRecord> + '_ {
        self.events.iter().filter(|e| e.kind == EventKind::Impact)
    }

    pub fn impacts_of(&self, wheel: Wheel) -> impl Iterator<Item = &EventRecord> + '_ {
        self.impacts().filter(move |e| e.wheel == Some(wheel))
    }

    /// The event that ended the run.
    pub fn terminal(&self) -> Option<&EventRecord> {
        self.events.last().filter(|e| e.kind != EventKind::Impact)
    }

    pub fn failure(&self) -> Option<&EventRecord> {
        self.terminal().filter(|e| e.kind.is_failure())
    }

    pub fn is_failed(&self) -> bool {
        self.failure().is_some()
    }

    pub fn final_state(&self) -> HybridState {
        self.samples.last().map_or(self.initial, |s| s.state)
    }

    pub fn final_tau(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.tau)
    }
}

/// One classical RK4 step of length `h`.
pub fn integrate_step(state: &HybridState, h: f64, p: &NondimParams) -> Result<HybridState> {
    let k1 = dynamics(state, p)?;
    let k2 = dynamics(&state.advanced(&k1, 0.5 * h), p)?;
    let k3 = dynamics(&state.advanced(&k2, 0.5 * h), p)?;
    let k4 = dynamics(&state.advanced(&k3, h), p)?;
    let slope = k1.add_scaled(&k2, 2.0).add_scaled(&k3, 2.0).add_scaled(&k4, 1.0);
    let next = state.advanced(&slope, h / 6.0);
    if !next.is_finite() {
        return Err(Error::NonFinite(format!("after a step of {h} from {state:?}")));
    }
    Ok(next)
}

/// Bracket the root of `f` on `[0, h]` given `f(0) < 0 <= f(h)`.
///
/// Returns the offset and the payload evaluated at the upper end of the final
/// bracket, which satisfies `0 <= f < tol`.
pub fn bisect_crossing<T, F>(mut f: F, h: f64, upper: (f64, T), tol: f64) -> Result<(f64, T)>
where
    F: FnMut(f64) -> Result<(f64, T)>,
{
    let (mut f_hi, mut hi_payload) = upper;
    if f_hi < 0.0 {
        return Err(Error::NoCrossing);
    }
    let mut lo = 0.0;
    let mut hi = h;
    for _ in 0..MAX_BISECTIONS {
        if f_hi < tol || hi - lo <= f64::EPSILON * h {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (f_mid, payload) = f(mid)?;
        if f_mid >= 0.0 {
            hi = mid;
            f_hi = f_mid;
            hi_payload = payload;
        } else {
            lo = mid;
        }
    }
    Ok((hi, hi_payload))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    /// Offset from the start of the step.
    pub offset: f64,
    pub state: HybridState,
    pub wheel: Wheel,
}

/// Locate the earliest impact-surface crossing inside the step `state_a ->
/// state_b` of length `h`. Crossings closer than `event_tol` in time count as
/// simultaneous and resolve to wheel 1.
pub fn locate_event(
    state_a: &HybridState,
    state_b: &HybridState,
    h: f64,
    p: &NondimParams,
    event_tol: f64,
) -> Result<Crossing> {
    let mut best: Option<Crossing> = None;
    for wheel in [Wheel::One, Wheel::Two] {
        if !(state_a.theta(wheel) < p.alpha && state_b.theta(wheel) >= p.alpha) {
            continue;
        }
        let surface = |s: &HybridState| s.theta(wheel) - p.alpha;
        let (offset, state) = bisect_crossing(
            |s| {
                let x = integrate_step(state_a, s, p)?;
                Ok((surface(&x), x))
            },
            h,
            (surface(state_b), *state_b),
            event_tol,
        )?;
        let candidate = Crossing { offset, state, wheel };
        best = match best {
            Some(b) if b.offset <= candidate.offset + event_tol => Some(b),
            _ => Some(candidate),
        };
    }
    best.ok_or(Error::NoCrossing)
}

fn due_for_impact(state: &HybridState, wheel: Wheel, p: &NondimParams, tol: f64) -> bool {
    state.theta(wheel) >= p.alpha - tol
}

/// First rate reversal, if any, classified as a stall or a backward roll.
fn rolling_failure(state: &HybridState, p: &NondimParams) -> Option<(Wheel, EventKind)> {
    [Wheel::One, Wheel::Two].into_iter().find_map(|w| {
        if state.dtheta(w) < 0.0 {
            let kind = if state.theta(w) < -p.alpha { EventKind::Backward } else { EventKind::Stall };
            Some((w, kind))
        } else {
            None
        }
    })
}

struct Run<'a> {
    p: &'a NondimParams,
    cfg: &'a IntegratorConfig,
    traj: Trajectory,
    last_impact: [Option<f64>; 2],
    n_impacts: usize,
}

impl Run<'_> {
    fn finish(&mut self, tau: f64, wheel: Option<Wheel>, kind: EventKind, state: HybridState) {
        self.traj.events.push(EventRecord { tau, wheel, kind, state_pre: state, state_post: state });
    }

    /// Apply every impact due at `tau`, wheel 1 first. Returns the terminal
    /// event kind if the run must stop.
    fn apply_impacts(&mut self, tau: f64, state: &mut HybridState) -> Result<Option<EventKind>> {
        let mut any = false;
        for wheel in [Wheel::One, Wheel::Two] {
            if !due_for_impact(state, wheel, self.p, self.cfg.event_tol) {
                continue;
            }
            let slot = usize::from(wheel.index() - 1);
            if let Some(last) = self.last_impact[slot] {
                if tau - last < self.cfg.min_flow_time {
                    self.finish(tau, Some(wheel), EventKind::Zeno, *state);
                    return Ok(Some(EventKind::Zeno));
                }
            }
            let post = impact_map(state, wheel, self.p)?;
            self.traj.events.push(EventRecord {
                tau,
                wheel: Some(wheel),
                kind: EventKind::Impact,
                state_pre: *state,
                state_post: post,
            });
            self.last_impact[slot] = Some(tau);
            self.n_impacts += 1;
            *state = post;
            any = true;
            if self.n_impacts >= self.cfg.max_events {
                self.traj.samples.push(Sample { tau, state: *state });
                self.finish(tau, None, EventKind::EventCap, *state);
                return Ok(Some(EventKind::EventCap));
            }
        }
        if any {
            self.traj.samples.push(Sample { tau, state: *state });
        }
        Ok(None)
    }

    fn track_closure(&mut self, state: &HybridState) -> Result<()> {
        let geom = coupler_geometry(state, self.p)?;
        let gap = (state.d_hat - geom.d).abs();
        if gap > self.traj.max_closure_error {
            self.traj.max_closure_error = gap;
        }
        Ok(())
    }
}

/// Integrate the hybrid system from `x0` until the horizon, the impact
/// budget, or a rolling failure. Failures are recorded as terminal events,
/// not returned as errors; errors are reserved for invalid input, degenerate
/// geometry and non-finite states.
pub fn simulate(x0: &HybridState, p: &NondimParams, cfg: &IntegratorConfig) -> Result<Trajectory> {
    p.validate()?;
    cfg.validate()?;
    if !x0.is_finite() {
        return Err(Error::NonFinite("in the initial state".into()));
    }
    for w in [Wheel::One, Wheel::Two] {
        if x0.theta(w).abs() > p.alpha + cfg.event_tol {
            return Err(Error::InvalidParameter(format!(
                "initial angle of wheel {w} is outside [-alpha, alpha]: {}",
                x0.theta(w)
            )));
        }
    }

    let mut run = Run {
        p,
        cfg,
        traj: Trajectory { initial: *x0, samples: Vec::new(), events: Vec::new(), max_closure_error: 0.0 },
        last_impact: [None, None],
        n_impacts: 0,
    };
    run.track_closure(x0)?;

    let mut x = *x0;
    let mut tau = 0.0;
    let mut grid_index: u64 = 0;
    if run.apply_impacts(tau, &mut x)?.is_some() {
        return Ok(run.traj);
    }

    loop {
        let target = ((grid_index + 1) as f64 * cfg.dt).min(cfg.t_max);
        let h = target - tau;
        if h > GRID_SNAP {
            let next = integrate_step(&x, h, p)?;
            let crossed = [Wheel::One, Wheel::Two]
                .iter()
                .any(|&w| x.theta(w) < p.alpha && next.theta(w) >= p.alpha);
            if crossed {
                let hit = locate_event(&x, &next, h, p, cfg.event_tol)?;
                tau += hit.offset;
                x = hit.state;
                run.track_closure(&x)?;
                if run.apply_impacts(tau, &mut x)?.is_some() {
                    return Ok(run.traj);
                }
                continue;
            }
            x = next;
            tau = target;
            grid_index += 1;
            run.track_closure(&x)?;
            if let Some((wheel, kind)) = rolling_failure(&x, p) {
                run.traj.samples.push(Sample { tau, state: x });
                run.finish(tau, Some(wheel), kind, x);
                return Ok(run.traj);
            }
            if grid_index % cfg.sample_stride as u64 == 0 || tau >= cfg.t_max {
                run.traj.samples.push(Sample { tau, state: x });
            }
            if run.apply_impacts(tau, &mut x)?.is_some() {
                return Ok(run.traj);
            }
        } else {
            // An impact landed on the grid point itself.
            tau = target;
            grid_index += 1;
        }
        if tau >= cfg.t_max {
            if run.traj.samples.last().map_or(true, |s| s.tau < tau) {
                run.traj.samples.push(Sample { tau, state: x });
            }
            run.finish(tau, None, EventKind::Horizon, x);
            return Ok(run.traj);
        }
    }
}

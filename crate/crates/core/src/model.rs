//! Closed-form mechanics of two rimless wheels joined by a spring-damper.
//!
//! Each wheel is a point mass on a massless spoke of length `ell` pivoting
//! about its current stance foot on a slope of angle `gamma`. Angles are
//! measured from the slope normal, positive downhill. A spoke strikes the
//! ground when its stance angle reaches `alpha`; the wheel then pivots onto
//! the next spoke at `-alpha`.
//!
//! Everything here works in nondimensional units: lengths are scaled by
//! `ell`, time by `sqrt(ell / g)` (so `tau = t * sqrt(g / ell)`), forces by
//! `m * g`. Wheel 1 is the front (downhill) wheel.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coupler lengths below this are treated as coincident endpoints.
pub const MIN_COUPLER_LENGTH: f64 = 1e-12;

/// Slack allowed on `theta >= alpha` when applying an impact.
pub const IMPACT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Wheel {
    One,
    Two,
}

impl Wheel {
    pub fn index(self) -> u8 {
        match self {
            Wheel::One => 1,
            Wheel::Two => 2,
        }
    }

    pub fn from_index(i: u8) -> Option<Wheel> {
        match i {
            1 => Some(Wheel::One),
            2 => Some(Wheel::Two),
            _ => None,
        }
    }

    pub fn other(self) -> Wheel {
        match self {
            Wheel::One => Wheel::Two,
            Wheel::Two => Wheel::One,
        }
    }
}

impl fmt::Display for Wheel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Dimensional description of the physical pair. Both wheels share mass and
/// spoke length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Point mass of each wheel [kg].
    pub m: f64,
    /// Spoke length [m].
    pub ell: f64,
    /// Gravitational acceleration [m/s^2].
    pub g: f64,
    /// Slope angle [rad].
    pub gamma: f64,
    /// Half inter-spoke angle [rad].
    pub alpha: f64,
    /// Coupler stiffness [N/m].
    pub k: f64,
    /// Coupler damping [N s/m].
    pub b: f64,
    /// Spring rest length [m].
    pub d0: f64,
    /// Stance-foot separation at equal step counts [m].
    pub s0: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        validate_scales(self.m, self.ell, self.g)?;
        if !(self.d0 > 0.0) {
            return Err(Error::InvalidParameter(format!("rest length must be positive, got {}", self.d0)));
        }
        validate_angles(self.gamma, self.alpha)?;
        validate_coupler(self.k, self.b)
    }

    /// Step length `2 ell sin(alpha)` in metres.
    pub fn step_length(&self) -> f64 {
        2.0 * self.ell * self.alpha.sin()
    }
}

/// Dimensionless model parameters; the continuous flow depends only on these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondimParams {
    pub gamma: f64,
    pub alpha: f64,
    pub k_hat: f64,
    pub b_hat: f64,
    pub d0_hat: f64,
    pub s0_hat: f64,
}

impl NondimParams {
    pub fn validate(&self) -> Result<()> {
        validate_angles(self.gamma, self.alpha)?;
        validate_coupler(self.k_hat, self.b_hat)?;
        if !(self.d0_hat > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rest length must be positive, got {}",
                self.d0_hat
            )));
        }
        if !self.s0_hat.is_finite() {
            return Err(Error::InvalidParameter("stance separation must be finite".into()));
        }
        Ok(())
    }

    /// Nondimensional step length `2 sin(alpha)`.
    pub fn step_length(&self) -> f64 {
        2.0 * self.alpha.sin()
    }

    pub fn with_coupler(self, k_hat: f64, b_hat: f64) -> Self {
        NondimParams { k_hat, b_hat, ..self }
    }
}

fn validate_scales(m: f64, ell: f64, g: f64) -> Result<()> {
    for (name, v) in [("mass", m), ("length", ell), ("gravity", g)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

fn validate_angles(gamma: f64, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, pi/2), got {alpha}")));
    }
    if !(gamma.abs() < alpha) {
        return Err(Error::InvalidParameter(format!("|gamma| must be below alpha, got {gamma}")));
    }
    Ok(())
}

fn validate_coupler(k: f64, b: f64) -> Result<()> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("stiffness must be non-negative, got {k}")));
    }
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::InvalidParameter(format!("damping must be non-negative, got {b}")));
    }
    Ok(())
}

/// Continuous state plus the discrete step counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub theta1: f64,
    pub dtheta1: f64,
    pub theta2: f64,
    pub dtheta2: f64,
    pub d_hat: f64,
    pub n1: u32,
    pub n2: u32,
}

impl HybridState {
    pub fn theta(&self, wheel: Wheel) -> f64 {
        match wheel {
            Wheel::One => self.theta1,
            Wheel::Two => self.theta2,
        }
    }

    pub fn dtheta(&self, wheel: Wheel) -> f64 {
        match wheel {
            Wheel::One => self.dtheta1,
            Wheel::Two => self.dtheta2,
        }
    }

    pub fn steps(&self, wheel: Wheel) -> u32 {
        match wheel {
            Wheel::One => self.n1,
            Wheel::Two => self.n2,
        }
    }

    /// Relative step count `n1 - n2`.
    pub fn step_difference(&self) -> i64 {
        i64::from(self.n1) - i64::from(self.n2)
    }

    pub fn is_finite(&self) -> bool {
        [self.theta1, self.dtheta1, self.theta2, self.dtheta2, self.d_hat]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Advance the continuous part by `h * rate`, keeping the counters.
    pub fn advanced(&self, rate: &StateDerivative, h: f64) -> HybridState {
        HybridState {
            theta1: self.theta1 + h * rate.dtheta1,
            dtheta1: self.dtheta1 + h * rate.ddtheta1,
            theta2: self.theta2 + h * rate.dtheta2,
            dtheta2: self.dtheta2 + h * rate.ddtheta2,
            d_hat: self.d_hat + h * rate.dd_hat,
            ..*self
        }
    }

    /// Replace `d_hat` by the length implied by the angles and step counts.
    pub fn with_geometric_length(self, p: &NondimParams) -> Result<HybridState> {
        let geom = coupler_geometry(&self, p)?;
        Ok(HybridState { d_hat: geom.d, ..self })
    }
}

/// Time derivative of the continuous part of [`HybridState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub dtheta1: f64,
    pub ddtheta1: f64,
    pub dtheta2: f64,
    pub ddtheta2: f64,
    pub dd_hat: f64,
}

impl StateDerivative {
    /// `self + other * w`, used for Runge-Kutta stage combination.
    pub fn add_scaled(&self, other: &StateDerivative, w: f64) -> StateDerivative {
        StateDerivative {
            dtheta1: self.dtheta1 + w * other.dtheta1,
            ddtheta1: self.ddtheta1 + w * other.ddtheta1,
            dtheta2: self.dtheta2 + w * other.dtheta2,
            ddtheta2: self.ddtheta2 + w * other.ddtheta2,
            dd_hat: self.dd_hat + w * other.dd_hat,
        }
    }
}

/// Coupler vector between the two masses, from mass 2 to mass 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplerGeometry {
    /// Length.
    pub d: f64,
    /// Angle relative to the slope.
    pub beta: f64,
    /// Slope-parallel component.
    pub dx: f64,
    /// Slope-normal component.
    pub dy: f64,
    /// Rate of change of the length.
    pub d_dot: f64,
}

/// Stance-foot separation `S0 + (n1 - n2) * 2 sin(alpha)`.
pub fn stance_distance(n1: u32, n2: u32, p: &NondimParams) -> f64 {
    let n = i64::from(n1) - i64::from(n2);
    p.s0_hat + n as f64 * p.step_length()
}

pub fn coupler_geometry(state: &HybridState, p: &NondimParams) -> Result<CouplerGeometry> {
    let s = stance_distance(state.n1, state.n2, p);
    let (sin1, cos1) = state.theta1.sin_cos();
    let (sin2, cos2) = state.theta2.sin_cos();
    let dx = sin1 - sin2 + s;
    let dy = cos1 - cos2;
    let d = dx.hypot(dy);
    if !(d >= MIN_COUPLER_LENGTH) {
        return Err(Error::DegenerateGeometry(d));
    }
    // atan2 equals asin(dy / d) whenever dx > 0 and stays consistent if the
    // feet ever cross.
    let beta = dy.atan2(dx);
    let d_dot = (state.theta1 + beta).cos() * state.dtheta1 - (state.theta2 + beta).cos() * state.dtheta2;
    Ok(CouplerGeometry { d, beta, dx, dy, d_dot })
}

/// Nondimensional coupler tension `k (D - D0) + b D'`.
pub fn coupler_force(geom: &CouplerGeometry, p: &NondimParams) -> f64 {
    p.k_hat * (geom.d - p.d0_hat) + p.b_hat * geom.d_dot
}

/// Right-hand side of the continuous flow. The coupler length and angle are
/// taken from the geometry, not from the integrated `d_hat`.
pub fn dynamics(state: &HybridState, p: &NondimParams) -> Result<StateDerivative> {
    let geom = coupler_geometry(state, p)?;
    let force = coupler_force(&geom, p);
    let lever1 = (state.theta1 + geom.beta).cos();
    let lever2 = (state.theta2 + geom.beta).cos();
    Ok(StateDerivative {
        dtheta1: state.dtheta1,
        ddtheta1: (state.theta1 + p.gamma).sin() - force * lever1,
        dtheta2: state.dtheta2,
        ddtheta2: (state.theta2 + p.gamma).sin() + force * lever2,
        dd_hat: geom.d_dot,
    })
}

/// Heel-strike of `wheel`: pivot onto the next spoke, keeping angular
/// momentum about the new contact.
pub fn impact_map(state: &HybridState, wheel: Wheel, p: &NondimParams) -> Result<HybridState> {
    let theta = state.theta(wheel);
    if theta < p.alpha - IMPACT_TOLERANCE {
        return Err(Error::ImpactPrecondition { wheel, theta, alpha: p.alpha });
    }
    let restitution = (2.0 * p.alpha).cos();
    let mut next = *state;
    match wheel {
        Wheel::One => {
            next.theta1 = -p.alpha;
            next.dtheta1 = state.dtheta1 * restitution;
            next.n1 += 1;
        }
        Wheel::Two => {
            next.theta2 = -p.alpha;
            next.dtheta2 = state.dtheta2 * restitution;
            next.n2 += 1;
        }
    }
    Ok(next)
}

pub fn nondimensionalize(p: &PhysicalParams) -> Result<NondimParams> {
    p.validate()?;
    Ok(NondimParams {
        gamma: p.gamma,
        alpha: p.alpha,
        k_hat: p.k / (p.m * p.g),
        b_hat: p.b / p.m * (p.ell / p.g).sqrt(),
        d0_hat: p.d0 / p.ell,
        s0_hat: p.s0 / p.ell,
    })
}

/// Physical `(k, b)` for a nondimensional coupler on wheels of mass `m` and
/// spoke length `ell` under gravity `g`.
pub fn dimensionalize(np: &NondimParams, m: f64, ell: f64, g: f64) -> Result<(f64, f64)> {
    validate_scales(m, ell, g)?;
    Ok((np.k_hat * m * g, np.b_hat * m * (g / ell).sqrt()))
}

/// Seconds per unit of nondimensional time.
pub fn time_unit(ell: f64, g: f64) -> f64 {
    (ell / g).sqrt()
}

/// Total mechanical energy in units of `m g ell`.
///
/// Mass heights include the downhill travel of each stance foot, so the
/// potential is continuous across impacts and only the kinetic loss shows.
pub fn total_energy(state: &HybridState, p: &NondimParams) -> Result<f64> {
    let geom = coupler_geometry(state, p)?;
    let sigma = p.step_length();
    let foot1 = p.s0_hat + f64::from(state.n1) * sigma;
    let foot2 = f64::from(state.n2) * sigma;
    let kinetic = 0.5 * (state.dtheta1 * state.dtheta1 + state.dtheta2 * state.dtheta2);
    let height1 = (state.theta1 + p.gamma).cos() - foot1 * p.gamma.sin();
    let height2 = (state.theta2 + p.gamma).cos() - foot2 * p.gamma.sin();
    let stretch = geom.d - p.d0_hat;
    Ok(kinetic + height1 + height2 + 0.5 * p.k_hat * stretch * stretch)
}

/// Post-impact rate of a single uncoupled wheel on its passive limit cycle.
///
/// Balances the gravitational gain from `-alpha` to `alpha` against the
/// `cos(2 alpha)` impact loss.
pub fn single_wheel_limit_rate(gamma: f64, alpha: f64) -> Result<f64> {
    validate_angles(gamma, alpha)?;
    let c = (2.0 * alpha).cos();
    let gain = 2.0 * ((gamma - alpha).cos() - (gamma + alpha).cos());
    if !(gain > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "slope {gamma} supplies no energy per step; no rolling limit cycle"
        )));
    }
    Ok((c * c * gain / (1.0 - c * c)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    fn params(gamma_deg: f64, k_hat: f64, b_hat: f64, s0: f64, d0: f64) -> NondimParams {
        NondimParams { gamma: deg(gamma_deg), alpha: deg(15.0), k_hat, b_hat, d0_hat: d0, s0_hat: s0 }
    }

    fn state(theta1: f64, dtheta1: f64, theta2: f64, dtheta2: f64) -> HybridState {
        HybridState { theta1, dtheta1, theta2, dtheta2, d_hat: 0.0, n1: 0, n2: 0 }
    }

    #[test]
    fn geometry_symmetric_configuration() {
        let p = params(1.75, 0.0, 0.0, 0.5, 0.5);
        let g = coupler_geometry(&state(0.0, 0.4, 0.0, 0.4), &p).unwrap();
        assert_eq!(g.dx, 0.5);
        assert_eq!(g.dy, 0.0);
        assert_eq!(g.d, 0.5);
        assert_eq!(g.beta, 0.0);
        assert_eq!(g.d_dot, 0.0);
    }

    #[test]
    fn geometry_leaning_front_wheel() {
        // sympy: Dx, Dy, D, beta[deg] at theta1 = 15 deg, theta2 = 0, S = 0.5
        let p = params(1.75, 0.0, 0.0, 0.5, 0.5);
        let g = coupler_geometry(&state(deg(15.0), 0.0, 0.0, 0.0), &p).unwrap();
        assert_abs_diff_eq!(g.dx, 0.758_819_045_102_520_76, epsilon = 1e-14);
        assert_abs_diff_eq!(g.dy, -0.034_074_173_710_931_713, epsilon = 1e-14);
        assert_abs_diff_eq!(g.d, 0.759_583_696_852_680_08, epsilon = 1e-14);
        assert_abs_diff_eq!(g.beta.to_degrees(), -2.571_094_833_704_695, epsilon = 1e-12);
        assert_eq!(g.d_dot, 0.0);
    }

    #[test]
    fn geometry_beta_consistency() {
        let p = params(2.0, 0.0, 0.0, 0.8, 0.6);
        let g = coupler_geometry(&state(0.12, 0.31, -0.05, 0.27), &p).unwrap();
        assert_abs_diff_eq!(g.beta.sin() * g.d, g.dy, epsilon = 1e-12);
        assert_abs_diff_eq!(g.beta.cos() * g.d, g.dx, epsilon = 1e-12);
        assert_abs_diff_eq!(g.beta, (g.dy / g.d).asin(), epsilon = 1e-12);
    }

    #[test]
    fn degenerate_geometry_is_an_error() {
        let p = params(1.75, 0.0, 0.0, 0.0, 0.5);
        let err = coupler_geometry(&state(0.1, 0.0, 0.1, 0.0), &p).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)));
    }

    #[test]
    fn coupler_force_values() {
        let p = params(1.75, 1e-3, 2.0, 0.5, 0.5);
        let at_rest = CouplerGeometry { d: 0.5, beta: 0.0, dx: 0.5, dy: 0.0, d_dot: 0.0 };
        assert_eq!(coupler_force(&at_rest, &p), 0.0);

        let spring = params(1.75, 1.0, 0.0, 0.5, 0.5);
        let stretched = CouplerGeometry { d: 0.6, ..at_rest };
        assert_abs_diff_eq!(coupler_force(&stretched, &spring), 0.1, epsilon = 1e-15);

        let moving = CouplerGeometry { d: 0.55, d_dot: -0.01, ..at_rest };
        assert_abs_diff_eq!(coupler_force(&moving, &p), -0.01995, epsilon = 1e-15);
    }

    #[test]
    fn uncoupled_upright_wheels_fall_with_slope_gravity() {
        let p = params(1.75, 0.0, 0.0, 0.5, 0.5);
        let d = dynamics(&state(0.0, 0.3, 0.0, -0.2), &p).unwrap();
        assert_abs_diff_eq!(d.ddtheta1, deg(1.75).sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.ddtheta2, deg(1.75).sin(), epsilon = 1e-15);
    }

    #[test]
    fn relaxed_lockstep_has_no_coupler_action() {
        let p = params(1.75, 5e-3, 3.0, 0.5, 0.5);
        let d = dynamics(&state(0.07, 0.31, 0.07, 0.31), &p).unwrap();
        assert_eq!(d.ddtheta1, (0.07 + p.gamma).sin());
        assert_eq!(d.ddtheta2, (0.07 + p.gamma).sin());
        assert_eq!(d.dd_hat, 0.0);
    }

    #[test]
    fn dynamics_matches_symbolic_evaluation() {
        // Frozen from an independent sympy evaluation of the flow equations.
        let p = params(1.75, 1e-3, 1.0, 0.5, 0.5);
        let d = dynamics(&state(0.1, 0.3, -0.1, 0.3), &p).unwrap();
        assert_abs_diff_eq!(d.ddtheta1, 0.129_974_131_940_878_315, epsilon = 1e-14);
        assert_abs_diff_eq!(d.ddtheta2, -0.069_202_236_250_535_197, epsilon = 1e-14);
        assert_abs_diff_eq!(d.dd_hat, 0.0, epsilon = 1e-15);

        let p = params(2.0, 4e-3, 0.7, 0.8, 0.6);
        let d = dynamics(&state(0.12, 0.31, -0.05, 0.27), &p).unwrap();
        assert_abs_diff_eq!(d.ddtheta1, 0.126_100_488_042_072_570, epsilon = 1e-14);
        assert_abs_diff_eq!(d.ddtheta2, 0.013_233_542_224_372_997, epsilon = 1e-14);
        assert_abs_diff_eq!(d.dd_hat, 0.038_417_460_438_320_998, epsilon = 1e-14);
    }

    #[test]
    fn length_rate_matches_component_form() {
        let p = params(2.0, 0.0, 0.0, 0.8, 0.6);
        let s = state(0.12, 0.31, -0.05, 0.27);
        let g = coupler_geometry(&s, &p).unwrap();
        let dx_dot = s.theta1.cos() * s.dtheta1 - s.theta2.cos() * s.dtheta2;
        let dy_dot = s.theta2.sin() * s.dtheta2 - s.theta1.sin() * s.dtheta1;
        let via_components = (g.dx * dx_dot + g.dy * dy_dot) / g.d;
        assert_abs_diff_eq!(g.d_dot, via_components, epsilon = 1e-15);
    }

    #[test]
    fn stance_distance_values() {
        let p = params(1.75, 0.0, 0.0, 0.5, 0.5);
        assert_eq!(stance_distance(3, 3, &p), 0.5);
        assert_abs_diff_eq!(stance_distance(4, 3, &p), 1.017_638_090_205_041_5, epsilon = 1e-15);
        assert_abs_diff_eq!(stance_distance(3, 4, &p), 0.5 - 2.0 * deg(15.0).sin(), epsilon = 1e-15);

        let hw = PhysicalParams {
            m: 10.0,
            ell: 0.9652,
            g: 9.81,
            gamma: deg(2.0),
            alpha: deg(15.0),
            k: 5.25,
            b: 100.0,
            d0: 0.5,
            s0: 0.5,
        };
        assert_abs_diff_eq!(hw.step_length(), 0.499_624_284_665_906_08, epsilon = 1e-14);
    }

    #[test]
    fn impact_resets_spoke_and_scales_rate() {
        let p = params(1.75, 0.0, 0.0, 0.5, 0.5);
        let pre = HybridState { theta1: deg(15.0), dtheta1: 0.5, theta2: 0.03, dtheta2: 0.29, d_hat: 0.7, n1: 2, n2: 2 };
        let post = impact_map(&pre, Wheel::One, &p).unwrap();
        assert_eq!(post.theta1, -deg(15.0));
        assert_abs_diff_eq!(post.dtheta1, 0.433_012_701_892_219_32, epsilon = 1e-15);
        assert_eq!(post.n1, 3);
        assert_eq!((post.theta2, post.dtheta2, post.d_hat, post.n2), (0.03, 0.29, 0.7, 2));

        let still = HybridState { dtheta1: 0.0, ..pre };
        assert_eq!(impact_map(&still, Wheel::One, &p).unwrap().dtheta1, 0.0);

        let ratio = (post.dtheta1 / pre.dtheta1).powi(2);
        assert_abs_diff_eq!(ratio, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn impact_before_surface_is_rejected() {
        let p = params(1.75, 0.0, 0.0, 0.5, 0.5);
        let early = state(0.1, 0.3, deg(14.0), 0.3);
        assert!(matches!(
            impact_map(&early, Wheel::Two, &p),
            Err(Error::ImpactPrecondition { wheel: Wheel::Two, .. })
        ));
    }

    #[test]
    fn coupler_length_is_continuous_across_impacts() {
        let p = params(1.75, 0.0, 0.0, 0.5, 0.5);
        for (wheel, other) in [(Wheel::One, -0.07), (Wheel::Two, 0.11)] {
            let mut pre = state(other, 0.3, other, 0.3);
            match wheel {
                Wheel::One => pre.theta1 = p.alpha,
                Wheel::Two => pre.theta2 = p.alpha,
            }
            pre.n1 = 4;
            pre.n2 = 4;
            let post = impact_map(&pre, wheel, &p).unwrap();
            let before = coupler_geometry(&pre, &p).unwrap().d;
            let after = coupler_geometry(&post, &p).unwrap().d;
            assert!((before - after).abs() < 1e-12, "{wheel}: {before} vs {after}");
        }
    }

    #[test]
    fn nondimensional_scaling() {
        let m = 3.0;
        let ell = 0.8;
        let g = 9.81;
        let unit = PhysicalParams {
            m,
            ell,
            g,
            gamma: deg(1.0),
            alpha: deg(15.0),
            k: m * g,
            b: m * (g / ell).sqrt(),
            d0: 0.4,
            s0: 0.4,
        };
        let np = nondimensionalize(&unit).unwrap();
        assert_abs_diff_eq!(np.k_hat, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(np.b_hat, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(np.d0_hat, 0.5, epsilon = 1e-15);

        let hw = PhysicalParams { m: 10.0, ell: 0.9652, g: 9.81, k: 5.25, b: 100.0, ..unit };
        let np = nondimensionalize(&hw).unwrap();
        assert_abs_diff_eq!(np.k_hat, 0.053_516_819_571_865_443, epsilon = 1e-15);
        assert_abs_diff_eq!(np.b_hat, 3.136_708_443_143_621_4, epsilon = 1e-14);
        let (k, b) = dimensionalize(&np, hw.m, hw.ell, hw.g).unwrap();
        assert_abs_diff_eq!(k, hw.k, epsilon = 1e-13);
        assert_abs_diff_eq!(b, hw.b, epsilon = 1e-12);
    }

    #[test]
    fn scaling_rejects_nonpositive_inputs() {
        let np = params(1.75, 1e-3, 1.0, 0.5, 0.5);
        assert!(dimensionalize(&np, 0.0, 1.0, 9.81).is_err());
        assert!(dimensionalize(&np, 1.0, -1.0, 9.81).is_err());
        let bad = PhysicalParams {
            m: 1.0,
            ell: 1.0,
            g: 0.0,
            gamma: 0.0,
            alpha: 0.2,
            k: 0.0,
            b: 0.0,
            d0: 1.0,
            s0: 1.0,
        };
        assert!(nondimensionalize(&bad).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(params(1.75, 1e-3, 1.0, 0.5, 0.5).validate().is_ok());
        assert!(params(16.0, 1e-3, 1.0, 0.5, 0.5).validate().is_err());
        assert!(params(1.75, -1e-3, 1.0, 0.5, 0.5).validate().is_err());
        assert!(params(1.75, 1e-3, 1.0, 0.5, 0.0).validate().is_err());
        let mut p = params(1.75, 1e-3, 1.0, 0.5, 0.5);
        p.alpha = std::f64::consts::FRAC_PI_2;
        assert!(p.validate().is_err());
    }

    #[test]
    fn energy_reference_and_impact_drop() {
        let p = params(1.75, 2e-3, 0.0, 0.5, 0.5);
        let upright = HybridState { theta1: 0.0, dtheta1: 0.0, theta2: 0.0, dtheta2: 0.0, d_hat: 0.5, n1: 0, n2: 0 };
        let e = total_energy(&upright, &p).unwrap();
        let expected = 2.0 * p.gamma.cos() - p.s0_hat * p.gamma.sin();
        assert_abs_diff_eq!(e, expected, epsilon = 1e-15);

        let pre = HybridState { theta1: p.alpha, dtheta1: 0.36, theta2: 0.02, dtheta2: 0.3, d_hat: 0.0, n1: 5, n2: 5 };
        let post = impact_map(&pre, Wheel::One, &p).unwrap();
        let drop = total_energy(&pre, &p).unwrap() - total_energy(&post, &p).unwrap();
        let c = (2.0 * p.alpha).cos();
        assert_abs_diff_eq!(drop, 0.5 * 0.36 * 0.36 * (1.0 - c * c), epsilon = 1e-14);
    }

    #[test]
    fn limit_rate_closed_form() {
        // sympy: cot(2a) * sqrt(4 sin(a) sin(g)) at a = 15 deg, g = 1.75 deg
        let omega = single_wheel_limit_rate(deg(1.75), deg(15.0)).unwrap();
        assert_abs_diff_eq!(omega, 0.307_973_027_932_324_30, epsilon = 1e-14);
        let cot = 1.0 / (2.0 * deg(15.0)).tan();
        let alt = cot * (4.0 * deg(15.0).sin() * deg(1.75).sin()).sqrt();
        assert_abs_diff_eq!(omega, alt, epsilon = 1e-14);
        assert!(single_wheel_limit_rate(0.0, deg(15.0)).is_err());
        assert!(single_wheel_limit_rate(-0.01, deg(15.0)).is_err());
    }
}

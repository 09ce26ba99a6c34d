//! Scenario files.
//!
//! A scenario is a TOML document giving the model either in physical units
//! (`[physical]`) or directly in nondimensional form (`[nondim]`). Angles are
//! written in degrees.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::model::{nondimensionalize, HybridState, NondimParams, PhysicalParams};
use crate::sweep::{default_initial_conditions, initial_condition, log_space, seed_with_initial_phase, SweepGrid};

/// Wheel mass used when a physical scenario leaves it out [kg]. The
/// hardware mass is not known; this is an assumption.
pub const DEFAULT_MASS: f64 = 10.0;
pub const DEFAULT_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    pub physical: Option<PhysicalSection>,
    pub nondim: Option<NondimSection>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub initial_conditions: InitialConditionSpec,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSection {
    /// Defaults to [`DEFAULT_MASS`].
    pub mass: Option<f64>,
    pub length: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    pub gamma_deg: f64,
    pub alpha_deg: f64,
    pub k: f64,
    pub b: f64,
    /// Defaults to half the spoke length.
    pub d0: Option<f64>,
    /// Defaults to half the spoke length.
    pub s0: Option<f64>,
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NondimSection {
    pub gamma_deg: f64,
    pub alpha_deg: f64,
    pub k_hat: f64,
    pub b_hat: f64,
    pub d0_hat: f64,
    pub s0_hat: f64,
}

impl Default for NondimSection {
    fn default() -> Self {
        NondimSection { gamma_deg: 1.75, alpha_deg: 15.0, k_hat: 0.0, b_hat: 0.0, d0_hat: 0.5, s0_hat: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConditionSpec {
    /// Number of spread seeds when `theta2_deg` is not given.
    pub count: usize,
    /// Explicit `theta2(0)` values [deg].
    pub theta2_deg: Option<Vec<f64>>,
    /// Replace the seeds by one whose first step has this wheel-2 phase [%].
    pub initial_phase_pct: Option<f64>,
}

impl Default for InitialConditionSpec {
    fn default() -> Self {
        InitialConditionSpec { count: 8, theta2_deg: None, initial_phase_pct: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub k_min: f64,
    pub k_max: f64,
    pub nk: usize,
    pub b_min: f64,
    pub b_max: f64,
    pub nb: usize,
    pub workers: Option<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { k_min: 1e-4, k_max: 1e-2, nk: 20, b_min: 0.1, b_max: 10.0, nb: 20, workers: None }
    }
}

/// A loaded scenario with the model in nondimensional form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: Option<String>,
    pub params: NondimParams,
    pub physical: Option<PhysicalParams>,
    pub integrator: IntegratorConfig,
    pub initial_conditions: InitialConditionSpec,
    pub sweep: SweepSection,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> std::result::Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn resolve(&self) -> Result<Scenario> {
        let (params, physical) = match (&self.physical, &self.nondim) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParameter("give either [physical] or [nondim], not both".into()))
            }
            (Some(ph), None) => {
                let p = ph.to_params();
                (nondimensionalize(&p)?, Some(p))
            }
            (None, nd) => (nd.clone().unwrap_or_default().to_params(), None),
        };
        params.validate()?;
        self.integrator.validate()?;
        let sweep = self.sweep.clone();
        log_space((sweep.k_min, sweep.k_max), sweep.nk)?;
        log_space((sweep.b_min, sweep.b_max), sweep.nb)?;
        if sweep.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be at least 1".into()));
        }
        Ok(Scenario {
            name: self.name.clone(),
            params,
            physical,
            integrator: self.integrator,
            initial_conditions: self.initial_conditions.clone(),
            sweep,
        })
    }
}

impl PhysicalSection {
    pub fn to_params(&self) -> PhysicalParams {
        PhysicalParams {
            m: self.mass.unwrap_or(DEFAULT_MASS),
            ell: self.length,
            g: self.gravity,
            gamma: self.gamma_deg.to_radians(),
            alpha: self.alpha_deg.to_radians(),
            k: self.k,
            b: self.b,
            d0: self.d0.unwrap_or(0.5 * self.length),
            s0: self.s0.unwrap_or(0.5 * self.length),
        }
    }
}

impl NondimSection {
    pub fn to_params(&self) -> NondimParams {
        NondimParams {
            gamma: self.gamma_deg.to_radians(),
            alpha: self.alpha_deg.to_radians(),
            k_hat: self.k_hat,
            b_hat: self.b_hat,
            d0_hat: self.d0_hat,
            s0_hat: self.s0_hat,
        }
    }
}

impl Scenario {
    /// Seeds for `simulate` and `sweep`. The phase-targeted seed is found on
    /// the scenario's own coupler.
    pub fn seeds(&self) -> Result<Vec<HybridState>> {
        let spec = &self.initial_conditions;
        if let Some(pct) = spec.initial_phase_pct {
            return Ok(vec![seed_with_initial_phase(&self.params, &self.integrator, pct)?]);
        }
        match &spec.theta2_deg {
            Some(values) if values.is_empty() => Err(Error::InvalidParameter("theta2_deg list is empty".into())),
            Some(values) => values
                .iter()
                .map(|d| {
                    if d.abs() > self.params.alpha.to_degrees() {
                        return Err(Error::InvalidParameter(format!("theta2 seed {d} deg outside the stance range")));
                    }
                    initial_condition(&self.params, d.to_radians())
                })
                .collect(),
            None => default_initial_conditions(&self.params, spec.count),
        }
    }

    pub fn grid(&self) -> Result<SweepGrid> {
        let s = &self.sweep;
        SweepGrid::log_spaced(self.params, (s.k_min, s.k_max), s.nk, (s.b_min, s.b_max), s.nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default_sweep_scenario() {
        let s = ScenarioConfig::from_toml("").unwrap().resolve().unwrap();
        assert!((s.params.gamma - 1.75f64.to_radians()).abs() < 1e-15);
        assert_eq!((s.params.d0_hat, s.params.s0_hat), (0.5, 0.5));
        assert_eq!(s.grid().unwrap().len(), 400);
        assert_eq!(s.seeds().unwrap().len(), 8);
        assert_eq!(s.integrator, IntegratorConfig::default());
    }

    #[test]
    fn physical_section_is_nondimensionalized() {
        let text = "
            [physical]
            length = 0.9652
            gamma_deg = 2.0
            alpha_deg = 15.0
            k = 5.25
            b = 100.0
        ";
        let s = ScenarioConfig::from_toml(text).unwrap().resolve().unwrap();
        assert!((s.params.k_hat - 0.053516819571865443).abs() < 1e-15);
        assert!((s.params.b_hat - 3.1367084431436214).abs() < 1e-13);
        assert_eq!(s.params.d0_hat, 0.5);
        assert_eq!(s.physical.unwrap().m, DEFAULT_MASS);
    }

    #[test]
    fn rejects_both_sources_and_unknown_keys() {
        let both = "[nondim]\n[physical]\nlength = 1.0\ngamma_deg = 1.0\nalpha_deg = 15.0\nk = 0.0\nb = 0.0\n";
        assert!(ScenarioConfig::from_toml(both).unwrap().resolve().is_err());
        assert!(ScenarioConfig::from_toml("[nondim]\nspring = 1.0\n").is_err());
        assert!(ScenarioConfig::from_toml("[integrator]\ndt = -1.0\n").unwrap().resolve().is_err());
    }

    #[test]
    fn explicit_seeds() {
        let s = ScenarioConfig::from_toml("[initial_conditions]\ntheta2_deg = [-5.0, 0.0, 7.5]\n")
            .unwrap()
            .resolve()
            .unwrap();
        let seeds = s.seeds().unwrap();
        assert_eq!(seeds.len(), 3);
        assert!((seeds[2].theta2 - 7.5f64.to_radians()).abs() < 1e-15);
    }
}

//! Scenario documents: workspace, plant, sensing, controller and resource
//! parameters of one mission, loaded from TOML.

use std::path::Path;

use nalgebra::{SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{RobotFootprint, Workspace};
use crate::plant::{
    Channel, ClosedLoop, Dynamics, LinearDrift2D, LocStatus, PlantKind, RiccatiOptions, Saturation, SensorModel,
    TriggerEps, Unicycle,
};

/// Names of the entries of every cost vector, in order.
pub const COST_NAMES: [&str; 3] = ["energy", "energy_loc", "duration"];
pub const COST_ENERGY: usize = 0;
pub const COST_ENERGY_LOC: usize = 1;
pub const COST_DURATION: usize = 2;
pub type CostVec = [f64; 3];

/// Objective names accepted in scenario and CLI documents.
pub const OBJECTIVE_NAMES: [&str; 4] = ["ptarg", "pcoll", "energy", "duration"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub workspace: Workspace,
    #[serde(default)]
    pub footprint: RobotFootprint,
    pub dynamics: DynamicsConfig,
    pub noise: NoiseConfig,
    pub sensors: SensorConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    pub resources: ResourceConfig,
    #[serde(default = "default_objectives")]
    pub objectives: Vec<String>,
    /// Reference trajectory `x̃₁ … x̃_|φ|` (positions, m).
    pub waypoints: Vec<[f64; 2]>,
}

fn default_objectives() -> Vec<String> {
    vec!["ptarg".into(), "pcoll".into(), "energy".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub kind: PlantKind,
    /// Initial state `x̃₀`: `[x, y, v, θ]` (unicycle) or `[x, y]` (linear).
    pub initial_state: Vec<f64>,
    /// Drift matrix `A` of the linear model.
    #[serde(default)]
    pub drift: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_w: f64,
    pub sigma_od: f64,
    pub sigma_lo: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub odometry_rate: f64,
    pub localization_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub dt: f64,
    /// Longest admissible convergence-terminated segment, s.
    pub t_max: f64,
    pub gains: [f64; 4],
    /// Proportional gain of the linear model.
    pub gain: f64,
    pub v_min: f64,
    pub eps_mean: f64,
    pub eps_var: f64,
    /// Reach radius defining the nominal segment durations, m.
    pub reach_radius: f64,
    pub max_speed: Option<f64>,
    pub max_turn_rate: Option<f64>,
    pub max_accel: Option<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        let uni = Unicycle::default();
        let eps = TriggerEps::default();
        Self {
            dt: 0.05,
            t_max: 120.0,
            gains: uni.gains,
            gain: 1.0,
            v_min: uni.v_min,
            eps_mean: eps.mean,
            eps_var: eps.var,
            reach_radius: 0.3,
            max_speed: None,
            max_turn_rate: None,
            max_accel: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceConfig {
    /// Power of the localization module when active, W.
    pub p_on: f64,
    /// Power of the rest of the system (motors, CPU), W.
    pub p_base: f64,
    pub t_boot: f64,
    pub e_boot: f64,
}

impl ResourceConfig {
    /// Instantaneous cost rates `[energy, energy_loc, duration]` per second.
    pub fn rates(&self, status: LocStatus) -> CostVec {
        let loc = match status {
            LocStatus::Off => 0.0,
            LocStatus::Booting => self.e_boot / self.t_boot,
            LocStatus::On => self.p_on,
        };
        [self.p_base + loc, loc, 1.0]
    }

    pub fn segment_cost(&self, time_off: f64, time_boot: f64, time_on: f64) -> CostVec {
        let mut c = [0.0; 3];
        for (status, t) in [(LocStatus::Off, time_off), (LocStatus::Booting, time_boot), (LocStatus::On, time_on)] {
            let r = self.rates(status);
            for k in 0..3 {
                c[k] += r[k] * t;
            }
        }
        c
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Scenario(msg) => Error::Scenario(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex_digest(&bytes)
    }

    pub fn waypoint_count(&self) -> usize {
        self.waypoints.len()
    }

    pub fn trigger_eps(&self) -> TriggerEps {
        TriggerEps { mean: self.controller.eps_mean, var: self.controller.eps_var }
    }

    pub fn saturation(&self) -> Saturation {
        Saturation {
            max_speed: self.controller.max_speed,
            max_turn_rate: self.controller.max_turn_rate,
            max_accel: self.controller.max_accel,
        }
    }

    pub fn riccati_options(&self) -> RiccatiOptions {
        RiccatiOptions::default()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Scenario(msg));
        self.workspace.validate()?;
        self.footprint.validate()?;
        if self.waypoints.is_empty() {
            return bad("at least one waypoint is required".into());
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return bad("waypoints must be finite".into());
        }
        let n = self.dynamics.kind.state_dim();
        if self.dynamics.initial_state.len() != n {
            return bad(format!(
                "initial_state has {} entries, {:?} needs {n}",
                self.dynamics.initial_state.len(),
                self.dynamics.kind
            ));
        }
        if self.dynamics.initial_state.iter().any(|v| !v.is_finite()) {
            return bad("initial_state must be finite".into());
        }
        let nz = &self.noise;
        for (name, v) in [("sigma_w", nz.sigma_w), ("sigma_od", nz.sigma_od), ("sigma_lo", nz.sigma_lo)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("noise.{name} must be a nonnegative number"));
            }
        }
        for (name, v) in [("odometry_rate", self.sensors.odometry_rate), ("localization_rate", self.sensors.localization_rate)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("sensors.{name} must be positive"));
            }
        }
        let c = &self.controller;
        if !(c.dt > 0.0 && c.dt.is_finite()) || !(c.t_max > c.dt) {
            return bad("controller needs 0 < dt < t_max".into());
        }
        if !(c.eps_mean > 0.0 && c.eps_var > 0.0) {
            return bad("trigger thresholds must be positive".into());
        }
        if !(c.v_min > 0.0) || !(c.reach_radius >= 0.0) {
            return bad("v_min must be positive and reach_radius nonnegative".into());
        }
        for (name, v) in [("max_speed", c.max_speed), ("max_turn_rate", c.max_turn_rate), ("max_accel", c.max_accel)] {
            if matches!(v, Some(b) if !(b > 0.0)) {
                return bad(format!("controller.{name} must be positive"));
            }
        }
        let r = &self.resources;
        if !(r.p_on >= 0.0 && r.p_base >= 0.0 && r.e_boot >= 0.0 && r.t_boot > 0.0) {
            return bad("resource parameters must be nonnegative with t_boot > 0".into());
        }
        if self.objectives.len() < 2 {
            return bad("at least two objectives are required".into());
        }
        for o in &self.objectives {
            if !OBJECTIVE_NAMES.contains(&o.as_str()) {
                return bad(format!("unknown objective {o:?}; expected one of {OBJECTIVE_NAMES:?}"));
            }
        }
        let start = Vector2::new(self.dynamics.initial_state[0], self.dynamics.initial_state[1]);
        if self.workspace.in_collision(&crate::geometry::Pose::new(start.x, start.y, 0.0), &self.footprint) {
            return bad("initial state is in collision".into());
        }
        Ok(())
    }

    /// Instantiates the plant and hands the typed closed loop to `visitor`.
    pub fn with_plant<V: PlantVisitor>(&self, visitor: V) -> Result<V::Output> {
        let c = &self.controller;
        match self.dynamics.kind {
            PlantKind::Unicycle2ndOrder => {
                let law = Unicycle { gains: c.gains, v_min: c.v_min, saturation: self.saturation() };
                let x0 = SVector::<f64, 4>::from_column_slice(&self.dynamics.initial_state);
                let cl = self.closed_loop(law)?;
                Ok(visitor.visit(cl, x0, x0[3]))
            }
            PlantKind::LinearDrift2D => {
                let mut law = LinearDrift2D { gain: c.gain, saturation: self.saturation(), ..Default::default() };
                if let Some(a) = self.dynamics.drift {
                    law.drift = a;
                }
                let x0 = SVector::<f64, 2>::from_column_slice(&self.dynamics.initial_state);
                let cl = self.closed_loop(law)?;
                Ok(visitor.visit(cl, x0, 0.0))
            }
        }
    }

    fn closed_loop<const N: usize, D: Dynamics<N>>(&self, law: D) -> Result<ClosedLoop<N, D>> {
        let sensors = SensorModel {
            odometry: Channel::isotropic(self.noise.sigma_od, self.sensors.odometry_rate)?,
            localization: Channel::isotropic(self.noise.sigma_lo, self.sensors.localization_rate)?,
        };
        ClosedLoop::new(
            law,
            sensors,
            SMatrix::<f64, N, N>::identity() * self.noise.sigma_w.powi(2),
            self.workspace.clone(),
            self.footprint,
            self.controller.dt,
            self.controller.t_max,
            self.controller.reach_radius,
        )
    }

    pub fn waypoint_vectors(&self) -> Vec<Vector2<f64>> {
        self.waypoints.iter().map(|w| Vector2::new(w[0], w[1])).collect()
    }
}

/// Receives the statically typed closed loop of a scenario.
pub trait PlantVisitor {
    type Output;
    fn visit<const N: usize, D: Dynamics<N> + Clone>(
        self,
        closed_loop: ClosedLoop<N, D>,
        initial_state: SVector<f64, N>,
        initial_heading: f64,
    ) -> Self::Output;
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
name = "minimal"
waypoints = [[2.0, 0.0]]

[workspace]
bounds = { min = [-5.0, -5.0], max = [5.0, 5.0] }
target = { circle = { center = [2.0, 0.0], radius = 0.5 } }

[dynamics]
kind = "linear_drift"
initial_state = [0.0, 0.0]

[noise]
sigma_w = 0.01
sigma_od = 0.2
sigma_lo = 0.03

[sensors]
odometry_rate = 20.0
localization_rate = 20.0

[resources]
p_on = 8.0
p_base = 42.0
t_boot = 5.0
e_boot = 40.0
"#;

    #[test]
    fn parses_minimal_document() {
        let sc = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(sc.waypoint_count(), 1);
        assert_eq!(sc.controller.dt, 0.05);
        assert_eq!(sc.objectives, vec!["ptarg", "pcoll", "energy"]);
        assert_eq!(sc.hash().len(), 64);
    }

    #[test]
    fn unknown_field_reports_line() {
        let text = MINIMAL.replace("sigma_lo = 0.03", "sigma_lo = 0.03\nsigma_x = 1.0");
        let msg = Scenario::from_toml_str(&text).unwrap_err().to_string();
        assert!(msg.contains("sigma_x") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn rejects_bad_values() {
        let text = MINIMAL.replace("initial_state = [0.0, 0.0]", "initial_state = [0.0, 0.0, 1.0]");
        assert!(Scenario::from_toml_str(&text).is_err());
        let text = MINIMAL.replace("name = \"minimal\"", "name = \"m\"\nobjectives = [\"ptarg\", \"speed\"]");
        assert!(Scenario::from_toml_str(&text).is_err());
    }

    #[test]
    fn energy_rates() {
        let r = ResourceConfig { p_on: 8.0, p_base: 42.0, t_boot: 5.0, e_boot: 40.0 };
        assert_eq!(r.segment_cost(1.0, 0.0, 0.0), [42.0, 0.0, 1.0]);
        assert_eq!(r.segment_cost(0.0, 0.0, 1.0), [50.0, 8.0, 1.0]);
        assert_eq!(r.rates(LocStatus::Booting)[COST_ENERGY_LOC], 8.0);
    }
}

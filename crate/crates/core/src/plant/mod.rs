//! Robot plant: dynamics, sensing, estimation and closed-loop execution.

pub mod closed_loop;
pub mod control;
pub mod filter;
pub mod model;
pub mod nominal;
pub mod sensor;

pub use closed_loop::{ClosedLoop, LocStatus, LoopState, SegmentMode, SegmentRun, StepSample};
pub use control::{trigger_fired, ControlLaw, TriggerEps, TriggerMode};
pub use filter::{kalman_predict, kalman_update, riccati_fixed_point, riccati_fixed_point_cyclic, update_pattern, GaussianBelief, RiccatiOptions};
pub use model::{euler_step, wrap_angle, ControlInput, Dynamics, LinearDrift2D, PlantKind, PlantModel, Saturation, Unicycle};
pub use nominal::{compute_nominal_plan, steady_state_covariance, NominalPlan};
pub use sensor::{measure, psd_sqrt, Channel, SensorMode, SensorModel};

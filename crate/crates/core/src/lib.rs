//! Adaptive step-size control for reverse-time SDE samplers.
//!
//! The controller scores how fast the drift changes between steps and
//! sizes the next step so each one covers a similar distance under the
//! Fisher–Rao metric of the Gaussian transition kernel. Around it sit
//! Euler–Maruyama and Heun kernels, analytic toy problems, baseline grids
//! and an experiment harness.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod drift;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod integrator;
pub mod metrics;
pub mod noise;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod state;
pub mod toys;

pub use control::{controller_step, ControllerConfig, ControllerState, StepDiagnostics};
pub use drift::{CountedDrift, DriftField};
pub use error::{Error, Result};
pub use harness::{run_experiment, RunConfig, SummaryReport};
pub use integrator::{euler_step, heun_step, Solver};
pub use noise::{make_schedule, NoiseSchedule};
pub use rng::RandomStream;
pub use sampler::{run_sampler, TrajectoryRecord};
pub use schedule::{ScheduleKind, ScheduleSpec};
pub use state::SystemState;
pub use toys::{toy, ToyProblem};

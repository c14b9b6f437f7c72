//! Adaptive and fixed-step integration of the bundled complex system.

mod bundle;
mod stepper;

pub use bundle::{BundledState, InitialData, Propagator, Trajectory, BUNDLE_LEN};
pub use stepper::{dopri5, rk4_step, DenseSegment, Integration, StepControl};

//! Simulation lab for image-based uncalibrated visual servoing.
//!
//! A six-joint arm is watched by a fixed camera. The hand-eye Jacobian is
//! estimated online, either by six radial-basis column networks or by
//! Kalman/least-squares baselines. The arm is then driven to a target
//! feature by an adaptive-exponent fast terminal sliding mode controller or
//! by one of the comparison controllers.
//!
//! * [`sim`]: forward kinematics, camera, sensor and joint integrator.
//! * [`rbf`]: the column-split RBF estimator, its update laws and training.
//! * [`estimators`]: LKF, UKF and RLS baselines.
//! * [`ftsm`]: sliding surfaces, control law, Lyapunov monitor, time bounds.
//! * [`control`]: PID, MFAC and closed-form MPC controllers.
//! * [`harness`]: datasets, metrics, closed-loop runs, comparison and export.
//!
//! ```
//! use servobench::sim::World;
//!
//! let world = World::ur5();
//! let x = world.features(&world.home);
//! let j = world.jacobian(&world.home);
//! assert!(x.norm() < 1.5);
//! assert_eq!(j.shape(), (3, 6));
//! ```

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{SMatrix, SVector};

pub mod control;
pub mod error;
pub mod estimators;
pub mod ftsm;
pub mod harness;
pub mod rbf;
pub mod sim;

pub use error::{Error, Result};

/// Joint-space vector.
pub type Vec6 = SVector<f64, 6>;
/// Feature-by-joint Jacobian.
pub type Jac = SMatrix<f64, 3, 6>;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/world.md")]
    mod world {}
    #[doc = include_str!("../../../book/src/rbf.md")]
    mod rbf {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/sliding_mode.md")]
    mod sliding_mode {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/comparison_controllers.md")]
    mod comparison_controllers {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}

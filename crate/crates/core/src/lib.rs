//! Simulation library for a flapping, morphing-wing flyer.
//!
//! The crate is organized bottom-up:
//!
//! - [`kinematics`]: joint gait generation and wing geometry (station
//!   positions, velocities, airflow components) in the body frame.
//! - [`aero`]: unsteady lifting-line aerodynamics with Wagner-function
//!   lag states and wrench integration.
//! - [`dynamics`]: rigid-body six-degree-of-freedom dynamics coupled to
//!   the aerodynamic state, including flapping recoil forces.
//! - [`collocation`]: Hermite-Simpson direct collocation, an augmented
//!   Lagrangian solver, and a receding-horizon controller built on them.
//! - [`harness`]: scenario configuration, the simulation loop, trace
//!   recording/reading, wake reconstruction, and trace comparison.

pub mod aero;
pub mod collocation;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod kinematics;

pub use error::{Result, SimError};

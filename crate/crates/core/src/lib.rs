//! Squeezed Gaussian wave packets of the time-dependent generalized singular
//! oscillator
//!
//! ```text
//! H = ½[Z(t)p² + Y(t)(px + xp) + X(t)x² + Z(t)l²/x²]
//! ```
//!
//! together with the nonadiabatic Hannay angle of the associated linear
//! flow and the geometric phase it induces on the packet.

pub mod classical;
pub mod config;
pub mod error;
pub mod integrate;
pub mod phases;
pub mod run;
pub mod schedules;
pub mod selfcheck;
pub mod wavepacket;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

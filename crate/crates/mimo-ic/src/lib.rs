//! Degrees of freedom of the three-user MIMO interference channel, plus
//! constructive checks of the value by interference alignment.
//!
//! * [`dof_core`] holds the exact rational formulas.
//! * [`channel`] draws seeded generic channels and symbol extensions.
//! * [`cob`] computes the layered change of basis for `(p, p+1)` networks.
//! * [`alignment`] builds alignment-chain beamformers.
//! * [`certifier`] decides ranks numerically and sweeps feasibility grids.
//!
//! Users are indexed `0, 1, 2` throughout. Transmitter `i` talks to receiver
//! `i`, and `h[j][i]` is the link from transmitter `i` to receiver `j`.
//! All DoF values are per user.

pub mod alignment;
pub mod certifier;
pub mod channel;
pub mod cob;
pub mod dof_core;
mod error;
pub mod linalg;
pub mod matrix_json;

pub use error::{Error, Result};

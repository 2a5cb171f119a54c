//! Secret-key capacity bounds and protocol simulation for wiretap channels
//! with transmitter state information.
//!
//! The crate has two halves. The analytical half evaluates and optimizes
//! key-rate bounds: [`bounds`] handles finite-alphabet channels numerically,
//! [`gaussian`] evaluates the dirty-paper closed forms, and [`onoff`] covers
//! the on-off fading example. The operational half, [`protocol`], runs the
//! random-binning key-agreement scheme at desk scale with exact small-n
//! verification of error probability, key entropy and leakage.
//!
//! All rates are bits/symbol; logs are base 2 throughout.

pub mod bounds;
pub mod channel;
pub mod error;
pub mod gaussian;
pub mod onoff;
pub mod prob;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};

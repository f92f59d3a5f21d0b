//! Closed-loop simulator and controller suite for multi-case supermarket
//! refrigeration units.
//!
//! The crate models a rack of interconnected display cases with switched
//! expansion valves and an ON/OFF compressor bank, and provides two families
//! of controllers over it: the traditional hysteresis + PI pair, and a
//! receding-horizon bilevel valve optimizer with a conservative compressor
//! rule (linear-surrogate and greedy set-function variants). An exhaustive
//! oracle verifies the optimizers' structural guarantees at small sizes, and
//! a scenario harness reproduces the energy, switching, and demand-response
//! experiments.

pub mod baseline;
pub mod error;
pub mod linmodel;
pub mod opt;
pub mod oracle;
pub mod params;
pub mod plant;
pub mod scenario;
pub mod thermo;
pub mod verify;

pub use error::{Error, Result};

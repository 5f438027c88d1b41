//! Exact maximization of k-submodular functions under linear constraints.
//!
//! The solver alternates between a binary master problem over the
//! characteristic vector of a k-set and the value oracle, adding one
//! k-submodular inequality per iteration until the bounds meet.

pub mod cuts;
pub mod dcg;
pub mod verify;
pub mod error;
pub mod instances;
pub mod kset;
pub mod milp;
pub mod oracle;

pub use error::{Error, Result};
pub use kset::{CharVector, GroundSet, KSet};

//! Population-wise error rate control for multi-population trials with
//! overlapping biomarker-defined populations.

pub mod allocation;
pub mod control;
pub mod design;
pub mod error;
pub mod mvdist;
pub mod normal;
pub mod prevalence;
pub mod quad;
pub mod sim;
pub mod strata;

pub use error::{Error, Result};

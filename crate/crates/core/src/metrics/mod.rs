//! Evaluation harness: discrimination, reclassification, calibration,
//! operating points, survival curves and resampling inference.

mod calibration;
mod classification;
mod concordance;
mod curves;
mod report;
mod resampling;

pub use calibration::*;
pub use classification::*;
pub use concordance::*;
pub use curves::*;
pub use report::*;
pub use resampling::*;

//! Cox proportional hazards fitting, absolute risk, and model feature sets.

mod cox;
mod spec;

pub use cox::*;
pub use spec::*;

//! Timing-driven analytical placement for mixed-size designs on columnar
//! FPGAs.

pub mod dplace;
pub mod error;
pub mod floorplan;
pub mod flow;
pub mod gplace;
pub mod model;
pub mod pack;
pub mod timing;

pub use error::{Error, Result};

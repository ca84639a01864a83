//! The guide under `book/`, compiled so its snippets run as doc tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/timing.md")]
pub mod timing {}
#[doc = include_str!("../../../book/src/floorplan.md")]
pub mod floorplan {}
#[doc = include_str!("../../../book/src/global.md")]
pub mod global {}
#[doc = include_str!("../../../book/src/packing.md")]
pub mod packing {}
#[doc = include_str!("../../../book/src/detailed.md")]
pub mod detailed {}
#[doc = include_str!("../../../book/src/flow.md")]
pub mod flow {}

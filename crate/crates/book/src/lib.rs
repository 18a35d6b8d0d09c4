//! Compiles every Rust listing in the guide as a doc-test, one module per
//! chapter so a failure points at its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/instances.md")]
pub mod instances {}
#[doc = include_str!("../../../book/src/lp.md")]
pub mod lp {}
#[doc = include_str!("../../../book/src/reformulation.md")]
pub mod reformulation {}
#[doc = include_str!("../../../book/src/separation.md")]
pub mod separation {}
#[doc = include_str!("../../../book/src/acceleration.md")]
pub mod acceleration {}
#[doc = include_str!("../../../book/src/master.md")]
pub mod master {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

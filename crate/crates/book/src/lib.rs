//! The guide in `book/` is built with mdbook, which cannot run listings that
//! depend on external crates. Each chapter is pulled in here as module docs so
//! that `cargo test` runs its Rust blocks as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}
#[doc = include_str!("../../../book/src/paths.md")]
pub mod paths {}
#[doc = include_str!("../../../book/src/scaling.md")]
pub mod scaling {}
#[doc = include_str!("../../../book/src/flatness.md")]
pub mod flatness {}
#[doc = include_str!("../../../book/src/bounds.md")]
pub mod bounds {}
#[doc = include_str!("../../../book/src/landscape.md")]
pub mod landscape {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

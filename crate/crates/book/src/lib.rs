//! The guide's chapters, one module each, so that `cargo test` runs every listing.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/forward.md")]
pub mod forward {}
#[doc = include_str!("../../../book/src/dictionary.md")]
pub mod dictionary {}
#[doc = include_str!("../../../book/src/inversion.md")]
pub mod inversion {}
#[doc = include_str!("../../../book/src/lasso.md")]
pub mod lasso {}
#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/mixture.md")]
pub mod mixture {}
#[doc = include_str!("../../../book/src/csv.md")]
pub mod csv {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

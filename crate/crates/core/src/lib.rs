//! Sparse fluid-antenna array design and direction-of-arrival estimation.
//!
//! A single movable antenna visits `N` positions on a linear track of length
//! `D`, forming a virtual sparse array. The crate covers the geometry and its
//! difference coarray, the snapshot model, Fisher information and the
//! Cramér-Rao bound, continuous position design, and a two-stage estimator
//! (coarray MUSIC followed by local maximum-likelihood refinement).

pub mod design;
pub mod error;
pub mod estimation;
pub mod fisher;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod optimize;
pub mod signal;

pub use error::{Error, Result};

// Guide chapters are compiled and run as doc tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/geometry.md")]
    struct Geometry;
    #[doc = include_str!("../../../book/src/signal.md")]
    struct Signal;
    #[doc = include_str!("../../../book/src/fisher.md")]
    struct Fisher;
    #[doc = include_str!("../../../book/src/design.md")]
    struct Design;
    #[doc = include_str!("../../../book/src/estimation.md")]
    struct Estimation;
    #[doc = include_str!("../../../book/src/harness.md")]
    struct Harness;
}

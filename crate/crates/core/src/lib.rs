//! Dependence estimation and fairness-penalized regression for continuous
//! sensitive attributes.
//!
//! The [`estimators`] module measures how much two scalar samples depend on
//! each other, up to the maximal (HGR) correlation. [`fairtrain`] uses those
//! measures as adversarial penalties while fitting a regressor. [`metrics`]
//! scores the result. The guide in `book/` walks through each piece with
//! runnable examples.

pub mod data;
pub mod error;
pub mod estimators;
pub mod fairtrain;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/fair-training.md")]
    mod fair_training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}

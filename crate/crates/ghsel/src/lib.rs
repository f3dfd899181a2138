//! Simultaneous variable and hazard-structure selection for right-censored
//! survival data under the general hazard model.
//!
//! The pieces compose bottom-up: [`baseline`] kernels feed the [`ghlik`]
//! likelihood, [`optimize`] fits it, [`marglik`] turns fits into evidence,
//! and [`sampler`] explores the model space scored by [`modelspace`] priors.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod ghlik;
pub mod modelspace;
pub mod marglik;
pub mod optimize;
pub mod priors;
pub mod quad;
pub mod sampler;
pub mod simulate;
pub mod summarize;

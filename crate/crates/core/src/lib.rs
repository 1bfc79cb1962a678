//! Simulator and codec for a coded-access single-detector camera that
//! combines frequency-division carriers with code-division Walsh sequences.
//!
//! The pipeline is `plan -> scene -> sensor -> decode -> metrics`: a
//! [`plan::CodingPlan`] assigns every pixel a code, a carrier and an optional
//! hop schedule; [`sensor`] turns a [`scene::Scene`] into detector sample
//! streams; [`decode`] inverts them back into images.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capture;
pub mod codes;
pub mod config;
pub mod decode;
pub mod error;
pub mod experiments;
pub mod io;
pub mod keyed;
pub mod metrics;
pub mod plan;
pub mod scene;
pub mod sensor;

pub use error::{Error, Result};

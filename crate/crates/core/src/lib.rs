//! Source color laser printer identification from photographed halftones.
//!
//! The crate is organised as a chain of stages: [`halftone`] synthesizes
//! labelled prints, [`gan`] refines them toward a target photo
//! distribution, [`decompose`] learns CMYK separation, [`printer_id`]
//! reuses that knowledge to classify printers and [`pipeline`] wires the
//! stages together. [`nn`] is the shared network substrate.

pub mod decompose;
pub mod gan;
pub mod halftone;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod printer_id;
pub mod seeds;

pub use nn::{Dims, NetworkParams, NetworkSpec, Tensor};

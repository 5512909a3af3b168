//! Physics-constrained neural compact model for transistor IV curves.
//!
//! The drain current is an EKV core model multiplied by a neural correction
//! `eps(v_gs, v_gd)` that is symmetric under a source/drain swap by
//! construction. The crate covers data generation, core extraction,
//! gradient-augmented training, accuracy and Gummel validation, and VerilogA
//! export.

// `!(x < y)` comparisons reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod core_model;
pub mod dataset;
pub mod error;
pub mod model;
pub mod network;
pub mod training;
pub mod va_interp;
pub mod validation;
pub mod veriloga;

pub use core_model::{BiasPoint, CoreParams, Direction, IVSample};
pub use error::{Error, Result};
pub use model::TrainedModel;
pub use network::Mlp;

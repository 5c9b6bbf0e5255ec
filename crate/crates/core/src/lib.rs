//! Sequential news recommendation with a temporal-diversity-aware scorer.

pub mod data;
pub mod cli;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod gradsuite;
pub mod model;
pub mod numkernel;
pub mod synth;
pub mod temprec;
pub mod training;

pub use error::{Error, Result};

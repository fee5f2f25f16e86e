//! Modular neural-CRF sequence labeling.
//!
//! Composite tags such as `B-positive` are decomposed into a segmentation
//! part (`B`) and a type part (`positive`). Separate modules learn each part
//! and a decision module combines them, which lets training use any mix of
//! fully and partially labeled sentences.

pub mod config;
pub mod crf;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod labels;
pub mod model;
pub mod numeric;
pub mod train;
pub mod verify;

pub use error::{Error, Result};

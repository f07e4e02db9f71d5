pub mod clip;
pub mod config;
pub mod error;
pub mod geometry;
pub mod infer;
pub mod mock;
pub mod preprocess;
pub mod risk;
pub mod storage;
pub mod runtime;
pub mod tracking;
pub mod vlm;

pub use error::{Error, Result};

pub mod data;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod fusion;
pub mod metrics;
pub mod models;
pub mod numerics;

pub use error::{Error, Result};

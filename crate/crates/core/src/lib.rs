//! A genome-ordered relational query engine.

pub mod engine;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod model;
pub mod parser;
pub mod planner;
pub mod session;
pub mod sqlbridge;
pub mod storage;

pub use error::{Error, Result};

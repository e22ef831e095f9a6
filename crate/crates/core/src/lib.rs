//! Bilateral requirement/service pattern matching engine.

pub mod bpmn;
pub mod construction;
pub mod error;
pub mod fixtures;
pub mod kgr;
pub mod model;
pub mod pmm;
pub mod persistence;
pub mod process;
pub mod qos;
pub mod requirement_mining;
pub mod selection;
pub mod sp_mining;

pub use error::{Error, Result};

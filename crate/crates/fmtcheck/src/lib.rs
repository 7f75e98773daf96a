//! Std companion of `fmtcheck-core`: file formats, chat endpoints, the
//! sampling orchestrator, training-data export, the level pipeline and
//! evaluation.

pub mod config;
pub mod endpoint;
pub mod eval;
pub mod export;
pub mod external;
pub mod forge;
pub mod io;
pub mod orchestrate;
pub mod pipeline;
pub mod stub;
pub mod witness;

pub use fmtcheck_core as core;

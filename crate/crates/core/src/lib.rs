//! Verifiable format constraints for LLM responses.
//!
//! This crate holds the pure parts of the toolkit: the constraint model and
//! library format, deterministic checkers, seeded instruction synthesis,
//! annotation into SFT/DPO data, and the SFT/DPO objective values. It builds
//! without `std` (it needs `alloc`); the default `std` feature only adds the
//! YAML checker.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod annotate;
pub mod constraint;
pub mod forge;
pub mod loss;
pub mod sampling;
pub mod verify;

pub use constraint::{
    instantiate, parse_library, render_prompt, serialize_library, validate_meta, Category, ConstraintInstance,
    FormatInstruction, MetaConstraint, ParamValue, Value, VariableSpec,
};
pub use verify::{ConstraintVerdict, VerificationReport, Verifier, VerifyError, VerifyOptions};

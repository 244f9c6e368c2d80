//! Build-time JVM bytecode instrumentation.
//!
//! The crate decodes class files ([`classfile`]), builds per-method
//! control-flow graphs ([`cfg`]), computes typed and provenance frames
//! ([`analysis`]), enumerates joinpoints with their static contexts
//! ([`joinpoint`]) and inlines advice registered by a [`Transformer`]
//! ([`weaver`], [`transformers`]).

pub mod classfile;
pub mod cfg;
pub mod analysis;
pub mod joinpoint;
pub mod weaver;
pub mod transformers;

pub use transformers::{run_pipeline, PipelineConfig, Report, Transformer};

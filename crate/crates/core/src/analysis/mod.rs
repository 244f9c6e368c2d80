//! Dataflow over method bodies: verifier-style type frames, value
//! provenance frames, max stack/locals, and StackMapTable generation.

mod basic;
mod engine;
mod hierarchy;
mod source;
mod stackmap;

use std::fmt;

use thiserror::Error;

pub use basic::BasicInterpreter;
pub use engine::{analyze, entry_frame, locals_needed, param_slots, step, Analysis, Frame, FrameAdjust, Interpreter, Value};
pub use hierarchy::ClassHierarchy;
pub use source::{SourceInterpreter, SourceValue};
pub use stackmap::{expand_stack_map, finalize_code, FinalizeOptions, FrameHints};

use crate::classfile::{CodeBody, FieldType, MethodModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("type conflict at instruction {insn}: {reason}")]
    TypeConflict { insn: usize, reason: String },
    #[error("cannot resolve class {0}")]
    ResolutionFailure(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("malformed code: {0}")]
    Malformed(String),
}

/// A verification type, as tracked by [`BasicInterpreter`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum VType {
    /// Unusable: unset, or a merge of incompatible values.
    Top,
    /// Also boolean, byte, char and short.
    Int,
    Float,
    Long,
    Double,
    Null,
    /// Internal class name or array descriptor.
    Ref(String),
    /// Result of the `new` at this instruction position, before its
    /// constructor has run.
    Uninitialized(usize),
    /// `this` in a constructor before the super constructor call.
    UninitializedThis,
}

impl VType {
    pub fn from_field_type(t: &FieldType) -> VType {
        match t {
            FieldType::Byte | FieldType::Char | FieldType::Short | FieldType::Boolean | FieldType::Int => VType::Int,
            FieldType::Long => VType::Long,
            FieldType::Float => VType::Float,
            FieldType::Double => VType::Double,
            FieldType::Object(n) => VType::Ref(n.clone()),
            FieldType::Array(d) => VType::Ref(d.clone()),
        }
    }

    /// Type of a field descriptor; `None` if it does not parse.
    pub fn from_descriptor(desc: &str) -> Option<VType> {
        FieldType::parse(desc).ok().map(|t| VType::from_field_type(&t))
    }

    pub fn is_reference(&self) -> bool {
        matches!(self, VType::Null | VType::Ref(_) | VType::Uninitialized(_) | VType::UninitializedThis)
    }
}

impl Value for VType {
    fn size(&self) -> usize {
        match self {
            VType::Long | VType::Double => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for VType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VType::Top => f.write_str("top"),
            VType::Int => f.write_str("int"),
            VType::Float => f.write_str("float"),
            VType::Long => f.write_str("long"),
            VType::Double => f.write_str("double"),
            VType::Null => f.write_str("null"),
            VType::Ref(n) => f.write_str(n),
            VType::Uninitialized(i) => write!(f, "uninitialized({i})"),
            VType::UninitializedThis => f.write_str("uninitializedThis"),
        }
    }
}

/// Type frames for `code`, without consulting any existing StackMapTable.
pub fn compute_frames(
    owner: &str,
    method: &MethodModel,
    code: &CodeBody,
    hierarchy: &ClassHierarchy,
) -> Result<Analysis<VType>, AnalysisError> {
    let interp = BasicInterpreter::new(hierarchy, owner, &code.insns);
    analyze(&interp, owner, method, code, locals_needed(method, code)?, None)
}

/// Provenance frames: each value carries the set of instructions that may
/// have produced it.
pub fn compute_source_frames(
    owner: &str,
    method: &MethodModel,
    code: &CodeBody,
) -> Result<Analysis<SourceValue>, AnalysisError> {
    analyze(&SourceInterpreter, owner, method, code, locals_needed(method, code)?, None)
}

/// `(max_stack, max_locals)` required by `code`.
pub fn recompute_max(
    owner: &str,
    method: &MethodModel,
    code: &CodeBody,
    hierarchy: &ClassHierarchy,
) -> Result<(u16, u16), AnalysisError> {
    let a = compute_frames(owner, method, code, hierarchy)?;
    let locals = locals_needed(method, code)?;
    let fit = |v: usize, what: &str| {
        u16::try_from(v).map_err(|_| AnalysisError::Malformed(format!("{what} {v} exceeds 65535")))
    };
    Ok((fit(a.max_stack, "max_stack")?, fit(locals, "max_locals")?))
}

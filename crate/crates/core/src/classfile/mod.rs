//! Class-file and jar decoding/encoding.
//!
//! [`parse_class`] decodes a class file into a [`ClassModel`] whose method
//! bodies are lists of [`Insn`] with symbolic [`Label`] targets. [`emit_class`]
//! serializes it again; for a model that was not modified the output is
//! byte-identical to the input.

pub mod access;
pub mod constant_pool;
pub mod descriptor;
pub mod insn;
pub mod jar;
pub mod opcodes;
mod reader;
mod writer;

use thiserror::Error;

pub use constant_pool::{Constant, ConstantPool, JavaStr, PoolEntry};
pub use descriptor::{FieldType, MethodDescriptor};
pub use insn::{
    CodeAttribute, CodeBody, FrameKind, Insn, Label, LdcValue, LocalVariable, StackMapFrame,
    TryCatch, VerificationType,
};
pub use reader::parse_class;
pub use writer::{emit_class, encode_code, CodeLayout};

pub const MAGIC: u32 = 0xCAFE_BABE;
pub const MIN_MAJOR_VERSION: u16 = 45;
pub const MAX_MAJOR_VERSION: u16 = 61;
/// First version whose verifier requires StackMapTable frames.
pub const STACK_MAP_MAJOR_VERSION: u16 = 50;

#[derive(Debug, Error)]
pub enum ClassFileError {
    #[error("malformed class file: {0}")]
    MalformedClass(String),
    #[error("unsupported class file version {major}.{minor}")]
    UnsupportedVersion { major: u16, minor: u16 },
    #[error("encoding overflow: {0}")]
    EncodingOverflow(String),
    #[error("constant pool overflow (more than 65534 entries)")]
    PoolOverflow,
    #[error("archive error: {0}")]
    Archive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ClassFileError {
    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        ClassFileError::MalformedClass(msg.into())
    }
}

/// An attribute kept as opaque bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct RawAttribute {
    pub name: String,
    pub data: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldModel {
    pub access_flags: u16,
    pub name: String,
    pub descriptor: String,
    pub attributes: Vec<RawAttribute>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodModel {
    pub access_flags: u16,
    pub name: String,
    pub descriptor: String,
    /// Absent exactly for abstract and native methods.
    pub code: Option<CodeBody>,
    /// Decoded view of the `Exceptions` attribute; the raw attribute is
    /// what gets emitted.
    pub exceptions_thrown: Vec<String>,
    /// Attributes other than Code.
    pub attributes: Vec<RawAttribute>,
    /// Where the Code attribute sits among `attributes`.
    pub code_position: usize,
}

impl MethodModel {
    pub fn new(access_flags: u16, name: &str, descriptor: &str, code: Option<CodeBody>) -> Self {
        MethodModel {
            access_flags,
            name: name.into(),
            descriptor: descriptor.into(),
            code,
            exceptions_thrown: Vec::new(),
            attributes: Vec::new(),
            code_position: 0,
        }
    }

    pub fn is_static(&self) -> bool {
        self.access_flags & access::ACC_STATIC != 0
    }

    pub fn parsed_descriptor(&self) -> Result<MethodDescriptor, ClassFileError> {
        MethodDescriptor::parse(&self.descriptor)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassModel {
    pub minor_version: u16,
    pub major_version: u16,
    pub constant_pool: ConstantPool,
    pub access_flags: u16,
    pub this_class: String,
    /// Absent only for `java/lang/Object`.
    pub super_class: Option<String>,
    pub interfaces: Vec<String>,
    pub fields: Vec<FieldModel>,
    pub methods: Vec<MethodModel>,
    pub attributes: Vec<RawAttribute>,
}

impl ClassModel {
    /// An empty class targeting class-file version 52.
    pub fn new(access_flags: u16, name: &str, super_class: Option<&str>) -> Self {
        ClassModel {
            minor_version: 0,
            major_version: 52,
            constant_pool: ConstantPool::new(),
            access_flags,
            this_class: name.into(),
            super_class: super_class.map(Into::into),
            interfaces: Vec::new(),
            fields: Vec::new(),
            methods: Vec::new(),
            attributes: Vec::new(),
        }
    }

    pub fn field(&self, name: &str) -> Option<&FieldModel> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Dotted form of the class name, e.g. `com.example.Aes`.
    pub fn dotted_name(&self) -> String {
        self.this_class.replace('/', ".")
    }
}

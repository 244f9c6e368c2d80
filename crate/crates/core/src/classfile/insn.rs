//! Structured method bodies: instructions with symbolic branch targets.

use std::fmt;
use std::sync::Arc;

use super::constant_pool::JavaStr;
use super::descriptor::MethodDescriptor;
use super::opcodes::{self, *};
use super::RawAttribute;

/// A symbolic code position. Labels are unique within one method body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(pub u32);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LdcValue {
    Int(i32),
    /// IEEE bits.
    Float(u32),
    Long(i64),
    /// IEEE bits.
    Double(u64),
    String(JavaStr),
    /// Internal class name or array descriptor.
    Class(String),
    MethodType(String),
    /// Pool index of a MethodHandle entry.
    MethodHandle(u16),
    /// Pool index of a dynamic constant, with its field descriptor.
    Dynamic { index: u16, descriptor: String },
}

impl LdcValue {
    pub fn float(v: f32) -> Self {
        LdcValue::Float(v.to_bits())
    }

    pub fn double(v: f64) -> Self {
        LdcValue::Double(v.to_bits())
    }

    pub fn string(s: &str) -> Self {
        LdcValue::String(JavaStr::new(s))
    }

    pub fn is_wide(&self) -> bool {
        match self {
            LdcValue::Long(_) | LdcValue::Double(_) => true,
            LdcValue::Dynamic { descriptor, .. } => descriptor == "J" || descriptor == "D",
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Insn {
    Label(Label),
    LineNumber(u16),
    /// Any opcode without operands.
    Simple(u8),
    /// `bipush`, `sipush`, `newarray`.
    Int { opcode: u8, value: i32 },
    /// Loads, stores and `ret`, in their canonical (non `_n`) opcode.
    Var { opcode: u8, slot: u16 },
    /// `new`, `anewarray`, `checkcast`, `instanceof`.
    Type { opcode: u8, class: String },
    Field { opcode: u8, owner: String, name: String, descriptor: String },
    Method { opcode: u8, owner: String, name: String, descriptor: String, interface: bool },
    /// `index` is the InvokeDynamic pool entry.
    InvokeDynamic { index: u16, name: String, descriptor: String },
    Jump { opcode: u8, target: Label },
    TableSwitch { low: i32, high: i32, default: Label, targets: Vec<Label> },
    LookupSwitch { default: Label, pairs: Vec<(i32, Label)> },
    Ldc(LdcValue),
    Iinc { slot: u16, delta: i16 },
    MultiANewArray { class: String, dims: u8 },
}

impl Insn {
    pub fn simple(opcode: u8) -> Insn {
        Insn::Simple(opcode)
    }

    pub fn var(opcode: u8, slot: u16) -> Insn {
        Insn::Var { opcode, slot }
    }

    pub fn jump(opcode: u8, target: Label) -> Insn {
        Insn::Jump { opcode, target }
    }

    pub fn field(opcode: u8, owner: &str, name: &str, descriptor: &str) -> Insn {
        Insn::Field { opcode, owner: owner.into(), name: name.into(), descriptor: descriptor.into() }
    }

    pub fn method(opcode: u8, owner: &str, name: &str, descriptor: &str) -> Insn {
        Insn::Method {
            opcode,
            owner: owner.into(),
            name: name.into(),
            descriptor: descriptor.into(),
            interface: opcode == INVOKEINTERFACE,
        }
    }

    pub fn type_insn(opcode: u8, class: &str) -> Insn {
        Insn::Type { opcode, class: class.into() }
    }

    pub fn ldc_string(s: &str) -> Insn {
        Insn::Ldc(LdcValue::string(s))
    }

    /// Smallest instruction pushing the int constant.
    pub fn push_int(v: i32) -> Insn {
        match v {
            -1..=5 => Insn::Simple((ICONST_0 as i32 + v) as u8),
            -128..=127 => Insn::Int { opcode: BIPUSH, value: v },
            -32768..=32767 => Insn::Int { opcode: SIPUSH, value: v },
            _ => Insn::Ldc(LdcValue::Int(v)),
        }
    }

    /// The opcode as it would appear in the instruction stream, if any.
    pub fn opcode(&self) -> Option<u8> {
        Some(match self {
            Insn::Label(_) | Insn::LineNumber(_) => return None,
            Insn::Simple(op)
            | Insn::Int { opcode: op, .. }
            | Insn::Var { opcode: op, .. }
            | Insn::Type { opcode: op, .. }
            | Insn::Field { opcode: op, .. }
            | Insn::Method { opcode: op, .. }
            | Insn::Jump { opcode: op, .. } => *op,
            Insn::InvokeDynamic { .. } => INVOKEDYNAMIC,
            Insn::TableSwitch { .. } => TABLESWITCH,
            Insn::LookupSwitch { .. } => LOOKUPSWITCH,
            Insn::Ldc(v) => {
                if v.is_wide() {
                    LDC2_W
                } else {
                    LDC
                }
            }
            Insn::Iinc { .. } => IINC,
            Insn::MultiANewArray { .. } => MULTIANEWARRAY,
        })
    }

    /// False exactly for labels and line-number markers.
    pub fn is_real(&self) -> bool {
        !matches!(self, Insn::Label(_) | Insn::LineNumber(_))
    }

    pub fn is_conditional_jump(&self) -> bool {
        matches!(self, Insn::Jump { opcode, .. } if opcodes::is_conditional_jump(*opcode))
    }

    /// Jumps, switches, `athrow`, `ret` and the return family.
    pub fn is_branching(&self) -> bool {
        match self {
            Insn::Jump { .. } | Insn::TableSwitch { .. } | Insn::LookupSwitch { .. } => true,
            Insn::Var { opcode: RET, .. } => true,
            Insn::Simple(op) => *op == ATHROW || opcodes::is_return(*op),
            _ => false,
        }
    }

    /// True if control never continues to the next instruction.
    pub fn is_unconditional_transfer(&self) -> bool {
        self.opcode().is_some_and(opcodes::is_unconditional_transfer)
    }

    pub fn is_invoke(&self) -> bool {
        matches!(self, Insn::Method { .. } | Insn::InvokeDynamic { .. })
    }

    /// Every label this instruction can transfer control to.
    pub fn branch_targets(&self) -> Vec<Label> {
        match self {
            Insn::Jump { target, .. } => vec![*target],
            Insn::TableSwitch { default, targets, .. } => {
                let mut v = vec![*default];
                v.extend(targets.iter().copied());
                v
            }
            Insn::LookupSwitch { default, pairs } => {
                let mut v = vec![*default];
                v.extend(pairs.iter().map(|(_, l)| *l));
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn retarget(&mut self, from: Label, to: Label) {
        let fix = |l: &mut Label| {
            if *l == from {
                *l = to;
            }
        };
        match self {
            Insn::Jump { target, .. } => fix(target),
            Insn::TableSwitch { default, targets, .. } => {
                fix(default);
                targets.iter_mut().for_each(fix);
            }
            Insn::LookupSwitch { default, pairs } => {
                fix(default);
                pairs.iter_mut().for_each(|(_, l)| fix(l));
            }
            _ => {}
        }
    }

    /// Short human-readable rendering, used by the CFG visualizer.
    pub fn display(&self) -> String {
        match self {
            Insn::Label(l) => format!("{l}:"),
            Insn::LineNumber(n) => format!("line {n}"),
            Insn::Simple(op) => opcodes::mnemonic(*op).to_string(),
            Insn::Int { opcode, value } => format!("{} {value}", opcodes::mnemonic(*opcode)),
            Insn::Var { opcode, slot } => format!("{} {slot}", opcodes::mnemonic(*opcode)),
            Insn::Type { opcode, class } => format!("{} {class}", opcodes::mnemonic(*opcode)),
            Insn::Field { opcode, owner, name, descriptor } => {
                format!("{} {owner}.{name} {descriptor}", opcodes::mnemonic(*opcode))
            }
            Insn::Method { opcode, owner, name, descriptor, .. } => {
                format!("{} {owner}.{name}{descriptor}", opcodes::mnemonic(*opcode))
            }
            Insn::InvokeDynamic { name, descriptor, .. } => {
                format!("invokedynamic {name}{descriptor}")
            }
            Insn::Jump { opcode, target } => format!("{} {target}", opcodes::mnemonic(*opcode)),
            Insn::TableSwitch { low, high, .. } => format!("tableswitch {low}..{high}"),
            Insn::LookupSwitch { pairs, .. } => format!("lookupswitch ({} cases)", pairs.len()),
            Insn::Ldc(v) => match v {
                LdcValue::Int(i) => format!("ldc {i}"),
                LdcValue::Float(b) => format!("ldc {}f", f32::from_bits(*b)),
                LdcValue::Long(l) => format!("ldc2_w {l}L"),
                LdcValue::Double(b) => format!("ldc2_w {}d", f64::from_bits(*b)),
                LdcValue::String(s) => format!("ldc {:?}", s.to_text()),
                LdcValue::Class(c) => format!("ldc {c}.class"),
                LdcValue::MethodType(d) => format!("ldc methodtype {d}"),
                LdcValue::MethodHandle(i) => format!("ldc methodhandle #{i}"),
                LdcValue::Dynamic { index, .. } => format!("ldc dynamic #{index}"),
            },
            Insn::Iinc { slot, delta } => format!("iinc {slot} {delta}"),
            Insn::MultiANewArray { class, dims } => format!("multianewarray {class} {dims}"),
        }
    }
}

/// An exception table entry.
#[derive(Clone, Debug, PartialEq)]
pub struct TryCatch {
    pub start: Label,
    pub end: Label,
    pub handler: Label,
    /// `None` catches everything (`finally`).
    pub catch_type: Option<String>,
}

/// A LocalVariableTable or LocalVariableTypeTable entry.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalVariable {
    pub start: Label,
    pub end: Label,
    pub name: String,
    /// Descriptor, or generic signature for type-table entries.
    pub descriptor: String,
    pub slot: u16,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum VerificationType {
    Top,
    Integer,
    Float,
    Double,
    Long,
    Null,
    UninitializedThis,
    Object(String),
    /// The `new` instruction that created the value.
    Uninitialized(Label),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FrameKind {
    Same,
    SameLocals1StackItem(VerificationType),
    Chop(u8),
    Append(Vec<VerificationType>),
    Full { locals: Vec<VerificationType>, stack: Vec<VerificationType> },
}

/// One compressed StackMapTable entry, positioned at a label.
#[derive(Clone, Debug, PartialEq)]
pub struct StackMapFrame {
    pub label: Label,
    pub kind: FrameKind,
}

/// Attributes nested in a Code attribute, in their original order.
#[derive(Clone, Debug, PartialEq)]
pub enum CodeAttribute {
    /// Placeholder for the LineNumberTable; entries live in the instruction
    /// list as [`Insn::LineNumber`] markers.
    LineNumbers,
    LocalVariables(Vec<LocalVariable>),
    LocalVariableTypes(Vec<LocalVariable>),
    StackMap(Vec<StackMapFrame>),
    Raw(RawAttribute),
}

/// A decoded Code attribute.
#[derive(Clone, Debug)]
pub struct CodeBody {
    pub max_stack: u16,
    pub max_locals: u16,
    pub insns: Vec<Insn>,
    pub exception_table: Vec<TryCatch>,
    pub attributes: Vec<CodeAttribute>,
    next_label: u32,
    origin: Option<Arc<CodeOrigin>>,
}

/// The bytes a body was decoded from, with the decoded form they stand for.
/// Constant pools may hold duplicate entries, so re-encoding an unchanged
/// body could pick different indices; the writer reuses these bytes instead.
#[derive(Debug)]
pub(crate) struct CodeOrigin {
    pub(crate) decoded: CodeBody,
    pub(crate) bytes: Vec<u8>,
    /// Pool length and fingerprint at decode time.
    pub(crate) pool_len: usize,
    pub(crate) pool_hash: u64,
}

impl PartialEq for CodeBody {
    fn eq(&self, other: &Self) -> bool {
        self.max_stack == other.max_stack
            && self.max_locals == other.max_locals
            && self.insns == other.insns
            && self.exception_table == other.exception_table
            && self.attributes == other.attributes
    }
}

impl CodeBody {
    pub fn new(insns: Vec<Insn>) -> CodeBody {
        let next_label = insns
            .iter()
            .filter_map(|i| match i {
                Insn::Label(l) => Some(l.0 + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        CodeBody {
            max_stack: 0,
            max_locals: 0,
            insns,
            exception_table: Vec::new(),
            attributes: Vec::new(),
            next_label,
            origin: None,
        }
    }

    pub(crate) fn set_origin(&mut self, origin: CodeOrigin) {
        self.origin = Some(Arc::new(origin));
    }

    pub(crate) fn origin(&self) -> Option<&CodeOrigin> {
        self.origin.as_deref()
    }

    /// Drops the remembered original bytes, forcing re-encoding on emit.
    pub fn forget_origin(&mut self) {
        self.origin = None;
    }

    /// True if this body still equals what was decoded from the class file.
    pub fn is_pristine(&self) -> bool {
        self.origin.as_ref().is_some_and(|o| o.decoded == *self)
    }

    pub fn fresh_label(&mut self) -> Label {
        let l = Label(self.next_label);
        self.next_label += 1;
        l
    }

    /// One past the highest label id in use.
    pub fn label_watermark(&self) -> u32 {
        self.next_label
    }

    pub fn label_positions(&self) -> std::collections::HashMap<Label, usize> {
        self.insns
            .iter()
            .enumerate()
            .filter_map(|(i, insn)| match insn {
                Insn::Label(l) => Some((*l, i)),
                _ => None,
            })
            .collect()
    }

    pub fn line_numbers(&self) -> Vec<(usize, u16)> {
        self.insns
            .iter()
            .enumerate()
            .filter_map(|(i, insn)| match insn {
                Insn::LineNumber(n) => Some((i, *n)),
                _ => None,
            })
            .collect()
    }

    pub fn local_variables(&self) -> Option<&[LocalVariable]> {
        self.attributes.iter().find_map(|a| match a {
            CodeAttribute::LocalVariables(v) => Some(&v[..]),
            _ => None,
        })
    }

    pub fn stack_map(&self) -> Option<&[StackMapFrame]> {
        self.attributes.iter().find_map(|a| match a {
            CodeAttribute::StackMap(v) => Some(&v[..]),
            _ => None,
        })
    }

    pub fn set_stack_map(&mut self, frames: Option<Vec<StackMapFrame>>) {
        let pos = self.attributes.iter().position(|a| matches!(a, CodeAttribute::StackMap(_)));
        match (pos, frames) {
            (Some(p), Some(f)) if !f.is_empty() => self.attributes[p] = CodeAttribute::StackMap(f),
            (Some(p), _) => {
                self.attributes.remove(p);
            }
            (None, Some(f)) if !f.is_empty() => self.attributes.push(CodeAttribute::StackMap(f)),
            (None, _) => {}
        }
    }

    /// Positions of real instructions, in order.
    pub fn real_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.insns.iter().enumerate().filter(|(_, i)| i.is_real()).map(|(i, _)| i)
    }
}

/// Stack slots an invoke pops for its arguments (plus receiver).
pub fn invoke_arg_slots(opcode: u8, descriptor: &MethodDescriptor) -> u16 {
    descriptor.arg_slots() + u16::from(opcode != INVOKESTATIC && opcode != INVOKEDYNAMIC)
}

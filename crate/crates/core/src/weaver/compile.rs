//! Translation of weave actions into instruction sequences.

use super::{Action, Const, DynamicValue, Handle, Param, PrintArg, StaticInvocation, Stream, WeaveError};
use crate::analysis::VType;
use crate::classfile::opcodes::*;
use crate::classfile::{Insn, LdcValue};

const PRINT_STREAM: &str = "java/io/PrintStream";
const OBJECT_DESC: &str = "Ljava/lang/Object;";
const STRING_DESC: &str = "Ljava/lang/String;";

/// Scratch slots reused by every action for spilling stack values.
pub(crate) struct Temps {
    base: u16,
    next: u16,
    pub(crate) high: u16,
}

impl Temps {
    pub(crate) fn new(base: u16) -> Self {
        Temps { base, next: base, high: base }
    }

    fn reset(&mut self) {
        self.next = self.base;
    }

    fn alloc(&mut self, size: u16) -> u16 {
        let s = self.next;
        self.next += size;
        self.high = self.high.max(self.next);
        s
    }
}

pub(crate) fn load_op(t: &VType) -> u8 {
    match t {
        VType::Long => LLOAD,
        VType::Float => FLOAD,
        VType::Double => DLOAD,
        t if t.is_reference() => ALOAD,
        _ => ILOAD,
    }
}

pub(crate) fn store_op(t: &VType) -> u8 {
    load_op(t) + (ISTORE - ILOAD)
}

pub(crate) fn slots(t: &VType) -> u16 {
    if matches!(t, VType::Long | VType::Double) {
        2
    } else {
        1
    }
}

/// Stores the top `types.len()` stack values into `slot_of(k)` and reloads
/// them, leaving the stack unchanged. `types[0]` is the top value.
pub(crate) fn spill_and_restore(types: &[VType], slot_of: &[u16]) -> Vec<Insn> {
    let mut out = Vec::with_capacity(2 * types.len());
    for (t, &s) in types.iter().zip(slot_of) {
        out.push(Insn::var(store_op(t), s));
    }
    for (t, &s) in types.iter().zip(slot_of).rev() {
        out.push(Insn::var(load_op(t), s));
    }
    out
}

pub(crate) fn push_const(c: &Const) -> Insn {
    match c {
        Const::Int(v) => Insn::push_int(*v),
        Const::Boolean(b) => Insn::push_int(i32::from(*b)),
        Const::Long(0) => Insn::Simple(LCONST_0),
        Const::Long(1) => Insn::Simple(LCONST_1),
        Const::Long(v) => Insn::Ldc(LdcValue::Long(*v)),
        Const::Float(v) if *v == 0.0 && v.is_sign_positive() => Insn::Simple(FCONST_0),
        Const::Float(v) if *v == 1.0 => Insn::Simple(FCONST_1),
        Const::Float(v) if *v == 2.0 => Insn::Simple(FCONST_2),
        Const::Float(v) => Insn::Ldc(LdcValue::float(*v)),
        Const::Double(v) if *v == 0.0 && v.is_sign_positive() => Insn::Simple(DCONST_0),
        Const::Double(v) if *v == 1.0 => Insn::Simple(DCONST_1),
        Const::Double(v) => Insn::Ldc(LdcValue::double(*v)),
        Const::Str(s) => Insn::ldc_string(s),
    }
}

/// Appends to `prelude` whatever must run before any value is pushed, and
/// returns the instructions pushing one copy of `v`.
fn prepare(v: &DynamicValue, temps: &mut Temps, prelude: &mut Vec<Insn>) -> Vec<Insn> {
    match &v.handle {
        Handle::Null => vec![Insn::Simple(ACONST_NULL)],
        Handle::Local(slot) => vec![Insn::var(load_op(&v.vtype), *slot)],
        Handle::Stack(types) => {
            let slot_of: Vec<u16> = types.iter().map(|t| temps.alloc(slots(t))).collect();
            prelude.extend(spill_and_restore(types, &slot_of));
            let last = types.len() - 1;
            vec![Insn::var(load_op(&types[last]), slot_of[last])]
        }
        Handle::Field { base: Some(base), owner, name, descriptor } => {
            let mut load = prepare(base, temps, prelude);
            load.push(Insn::field(GETFIELD, owner, name, descriptor));
            load
        }
        Handle::Field { base: None, owner, name, descriptor } => {
            vec![Insn::field(GETSTATIC, owner, name, descriptor)]
        }
    }
}

/// Parameter descriptor of a dynamic value passed to advice.
pub(crate) fn value_descriptor(t: &VType) -> Option<&'static str> {
    Some(match t {
        VType::Int => "I",
        VType::Long => "J",
        VType::Float => "F",
        VType::Double => "D",
        VType::Null | VType::Ref(_) => OBJECT_DESC,
        _ => return None,
    })
}

fn print_descriptor(t: &VType) -> &'static str {
    match t {
        VType::Ref(c) if c == "java/lang/String" => "(Ljava/lang/String;)V",
        VType::Int => "(I)V",
        VType::Long => "(J)V",
        VType::Float => "(F)V",
        VType::Double => "(D)V",
        _ => "(Ljava/lang/Object;)V",
    }
}

fn stream_field(s: Stream) -> Insn {
    let name = match s {
        Stream::Out => "out",
        Stream::Err => "err",
    };
    Insn::field(GETSTATIC, "java/lang/System", name, "Ljava/io/PrintStream;")
}

fn print_call(newline: bool, desc: &str) -> Insn {
    Insn::method(INVOKEVIRTUAL, PRINT_STREAM, if newline { "println" } else { "print" }, desc)
}

impl StaticInvocation {
    /// Descriptor of the woven call: references as `Object`, primitives and
    /// string constants with their exact types, `void` result.
    pub fn descriptor(&self) -> Result<String, WeaveError> {
        let mut d = String::from("(");
        for p in &self.params {
            match p {
                Param::Value(v) => d.push_str(value_descriptor(&v.vtype).ok_or_else(|| {
                    WeaveError::UnsupportedParam(format!("value of type {}", v.vtype))
                })?),
                Param::Const(c) => d.push_str(match c {
                    Const::Int(_) => "I",
                    Const::Long(_) => "J",
                    Const::Float(_) => "F",
                    Const::Double(_) => "D",
                    Const::Boolean(_) => "Z",
                    Const::Str(_) => STRING_DESC,
                }),
            }
        }
        d.push_str(")V");
        Ok(d)
    }
}

/// Instructions for one action; spills use `temps` from its base.
pub(crate) fn compile_action(a: &Action, temps: &mut Temps) -> Result<Vec<Insn>, WeaveError> {
    temps.reset();
    let mut prelude = Vec::new();
    let body = match a {
        Action::Print { arg: PrintArg::Text(t), stream, newline } => {
            vec![stream_field(*stream), Insn::ldc_string(t), print_call(*newline, "(Ljava/lang/String;)V")]
        }
        Action::Print { arg: PrintArg::Value(v), stream, newline } => {
            let mut b = vec![stream_field(*stream)];
            b.extend(prepare(v, temps, &mut prelude));
            b.push(print_call(*newline, print_descriptor(&v.vtype)));
            b
        }
        Action::PrintHash { value, stream, newline } => {
            let mut b = vec![stream_field(*stream)];
            b.extend(prepare(value, temps, &mut prelude));
            b.push(Insn::method(INVOKESTATIC, "java/lang/System", "identityHashCode", "(Ljava/lang/Object;)I"));
            b.push(print_call(*newline, "(I)V"));
            b
        }
        Action::Invoke(si) => {
            let desc = si.descriptor()?;
            let mut b = Vec::new();
            for p in &si.params {
                match p {
                    Param::Value(v) => b.extend(prepare(v, temps, &mut prelude)),
                    Param::Const(c) => b.push(push_const(c)),
                }
            }
            b.push(Insn::method(INVOKESTATIC, &si.owner, &si.name, &desc));
            b
        }
        Action::Raw(insns) => insns.clone(),
        Action::Store { slot, value, vtype } => vec![push_const(value), Insn::var(store_op(vtype), *slot)],
    };
    prelude.extend(body);
    Ok(prelude)
}

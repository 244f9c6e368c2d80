//! Verifier-style type interpretation.

use super::engine::Interpreter;
use super::{AnalysisError, ClassHierarchy, VType};
use crate::classfile::insn::LdcValue;
use crate::classfile::opcodes::*;
use crate::classfile::{Insn, MethodDescriptor};

/// Tracks [`VType`]s; reference merges go through a [`ClassHierarchy`].
pub struct BasicInterpreter<'a> {
    hierarchy: &'a ClassHierarchy,
    owner: &'a str,
    insns: &'a [Insn],
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    I,
    L,
    F,
    D,
    A,
}

impl Kind {
    fn of(t: &VType) -> Kind {
        match t {
            VType::Long => Kind::L,
            VType::Float => Kind::F,
            VType::Double => Kind::D,
            t if t.is_reference() => Kind::A,
            _ => Kind::I,
        }
    }

    fn value(self) -> VType {
        match self {
            Kind::I => VType::Int,
            Kind::L => VType::Long,
            Kind::F => VType::Float,
            Kind::D => VType::Double,
            Kind::A => unreachable!("reference kind has no canonical value"),
        }
    }

    /// Kind of a `t`-prefixed opcode group member at `offset` from the int form.
    fn of_group(offset: u8) -> Kind {
        [Kind::I, Kind::L, Kind::F, Kind::D, Kind::A][offset as usize]
    }
}

fn conflict(idx: usize, reason: String) -> AnalysisError {
    AnalysisError::TypeConflict { insn: idx, reason }
}

fn want(idx: usize, v: &VType, k: Kind) -> Result<(), AnalysisError> {
    let ok = match k {
        Kind::I => *v == VType::Int,
        Kind::L => *v == VType::Long,
        Kind::F => *v == VType::Float,
        Kind::D => *v == VType::Double,
        Kind::A => v.is_reference(),
    };
    if ok {
        Ok(())
    } else {
        Err(conflict(idx, format!("expected {k:?} value, found {v}")))
    }
}

fn field_type(desc: &str) -> Result<VType, AnalysisError> {
    VType::from_descriptor(desc).ok_or_else(|| AnalysisError::Malformed(format!("bad field descriptor {desc}")))
}

fn array_of(class: &str) -> VType {
    if class.starts_with('[') {
        VType::Ref(format!("[{class}"))
    } else {
        VType::Ref(format!("[L{class};"))
    }
}

impl<'a> BasicInterpreter<'a> {
    pub fn new(hierarchy: &'a ClassHierarchy, owner: &'a str, insns: &'a [Insn]) -> Self {
        BasicInterpreter { hierarchy, owner, insns }
    }

    fn element(&self, idx: usize, arr: &VType) -> Result<VType, AnalysisError> {
        match arr {
            VType::Null => Ok(VType::Null),
            VType::Ref(d) if d.starts_with("[[") => Ok(VType::Ref(d[1..].to_string())),
            VType::Ref(d) if d.starts_with("[L") => Ok(VType::Ref(d[2..d.len() - 1].to_string())),
            VType::Ref(d) if d == "java/lang/Object" => Ok(VType::Ref(d.clone())),
            v => Err(conflict(idx, format!("aaload on non-reference array {v}"))),
        }
    }
}

impl Interpreter for BasicInterpreter<'_> {
    type V = VType;

    fn param(&self, ty: &VType) -> VType {
        ty.clone()
    }

    fn empty(&self) -> VType {
        VType::Top
    }

    fn exception(&self, _handler: usize, catch_type: Option<&str>) -> VType {
        VType::Ref(catch_type.unwrap_or("java/lang/Throwable").to_string())
    }

    fn push(&self, idx: usize, insn: &Insn) -> Result<VType, AnalysisError> {
        Ok(match insn {
            Insn::Simple(ACONST_NULL) => VType::Null,
            Insn::Simple(ICONST_M1..=ICONST_5) | Insn::Int { .. } => VType::Int,
            Insn::Simple(LCONST_0 | LCONST_1) => VType::Long,
            Insn::Simple(FCONST_0..=FCONST_2) => VType::Float,
            Insn::Simple(DCONST_0 | DCONST_1) => VType::Double,
            Insn::Ldc(v) => match v {
                LdcValue::Int(_) => VType::Int,
                LdcValue::Float(_) => VType::Float,
                LdcValue::Long(_) => VType::Long,
                LdcValue::Double(_) => VType::Double,
                LdcValue::String(_) => VType::Ref("java/lang/String".into()),
                LdcValue::Class(_) => VType::Ref("java/lang/Class".into()),
                LdcValue::MethodType(_) => VType::Ref("java/lang/invoke/MethodType".into()),
                LdcValue::MethodHandle(_) => VType::Ref("java/lang/invoke/MethodHandle".into()),
                LdcValue::Dynamic { descriptor, .. } => field_type(descriptor)?,
            },
            Insn::Field { opcode: GETSTATIC, descriptor, .. } => field_type(descriptor)?,
            Insn::Type { opcode: NEW, .. } => VType::Uninitialized(idx),
            other => return Err(conflict(idx, format!("unexpected producer {}", other.display()))),
        })
    }

    fn copy(&self, idx: usize, insn: &Insn, v: &VType) -> Result<VType, AnalysisError> {
        match insn {
            Insn::Var { opcode: op @ ILOAD..=ALOAD, .. } => want(idx, v, Kind::of_group(op - ILOAD))?,
            Insn::Var { opcode: op @ ISTORE..=ASTORE, .. } => want(idx, v, Kind::of_group(op - ISTORE))?,
            _ => {}
        }
        Ok(v.clone())
    }

    fn unary(&self, idx: usize, insn: &Insn, v: &VType) -> Result<Option<VType>, AnalysisError> {
        let op = insn.opcode().unwrap_or(NOP);
        let conv = |from: Kind, to: Kind| -> Result<Option<VType>, AnalysisError> {
            want(idx, v, from)?;
            Ok(Some(to.value()))
        };
        match op {
            IINC => conv(Kind::I, Kind::I),
            INEG..=DNEG => {
                let k = Kind::of_group(op - INEG);
                conv(k, k)
            }
            I2L => conv(Kind::I, Kind::L),
            I2F => conv(Kind::I, Kind::F),
            I2D => conv(Kind::I, Kind::D),
            L2I => conv(Kind::L, Kind::I),
            L2F => conv(Kind::L, Kind::F),
            L2D => conv(Kind::L, Kind::D),
            F2I => conv(Kind::F, Kind::I),
            F2L => conv(Kind::F, Kind::L),
            F2D => conv(Kind::F, Kind::D),
            D2I => conv(Kind::D, Kind::I),
            D2L => conv(Kind::D, Kind::L),
            D2F => conv(Kind::D, Kind::F),
            I2B | I2C | I2S => conv(Kind::I, Kind::I),
            IFEQ..=IFLE | TABLESWITCH | LOOKUPSWITCH => want(idx, v, Kind::I).map(|_| None),
            IFNULL | IFNONNULL | ATHROW | MONITORENTER | MONITOREXIT => want(idx, v, Kind::A).map(|_| None),
            IRETURN..=ARETURN => want(idx, v, Kind::of_group(op - IRETURN)).map(|_| None),
            PUTSTATIC => {
                let Insn::Field { descriptor, .. } = insn else { unreachable!() };
                want(idx, v, Kind::of(&field_type(descriptor)?))?;
                Ok(None)
            }
            GETFIELD => {
                let Insn::Field { descriptor, .. } = insn else { unreachable!() };
                want(idx, v, Kind::A)?;
                Ok(Some(field_type(descriptor)?))
            }
            NEWARRAY => {
                want(idx, v, Kind::I)?;
                let Insn::Int { value, .. } = insn else { unreachable!() };
                let elem = match *value {
                    T_BOOLEAN => "Z",
                    T_CHAR => "C",
                    T_FLOAT => "F",
                    T_DOUBLE => "D",
                    T_BYTE => "B",
                    T_SHORT => "S",
                    T_INT => "I",
                    T_LONG => "J",
                    t => return Err(AnalysisError::Malformed(format!("newarray type {t}"))),
                };
                Ok(Some(VType::Ref(format!("[{elem}"))))
            }
            ANEWARRAY => {
                want(idx, v, Kind::I)?;
                let Insn::Type { class, .. } = insn else { unreachable!() };
                Ok(Some(array_of(class)))
            }
            ARRAYLENGTH => {
                want(idx, v, Kind::A)?;
                Ok(Some(VType::Int))
            }
            CHECKCAST => {
                want(idx, v, Kind::A)?;
                let Insn::Type { class, .. } = insn else { unreachable!() };
                Ok(Some(VType::Ref(class.clone())))
            }
            INSTANCEOF => {
                want(idx, v, Kind::A)?;
                Ok(Some(VType::Int))
            }
            _ => Err(conflict(idx, format!("unexpected unary {}", mnemonic(op)))),
        }
    }

    fn binary(&self, idx: usize, insn: &Insn, a: &VType, b: &VType) -> Result<Option<VType>, AnalysisError> {
        let op = insn.opcode().unwrap_or(NOP);
        let both = |k: Kind, kb: Kind, r: Option<VType>| -> Result<Option<VType>, AnalysisError> {
            want(idx, a, k)?;
            want(idx, b, kb)?;
            Ok(r)
        };
        match op {
            IALOAD..=SALOAD => {
                want(idx, a, Kind::A)?;
                want(idx, b, Kind::I)?;
                Ok(Some(match op {
                    LALOAD => VType::Long,
                    FALOAD => VType::Float,
                    DALOAD => VType::Double,
                    AALOAD => self.element(idx, a)?,
                    _ => VType::Int,
                }))
            }
            IADD..=DREM => {
                let k = Kind::of_group((op - IADD) % 4);
                both(k, k, Some(k.value()))
            }
            ISHL..=LUSHR => {
                let k = if (op - ISHL).is_multiple_of(2) { Kind::I } else { Kind::L };
                both(k, Kind::I, Some(k.value()))
            }
            IAND..=LXOR => {
                let k = if (op - IAND).is_multiple_of(2) { Kind::I } else { Kind::L };
                both(k, k, Some(k.value()))
            }
            LCMP => both(Kind::L, Kind::L, Some(VType::Int)),
            FCMPL | FCMPG => both(Kind::F, Kind::F, Some(VType::Int)),
            DCMPL | DCMPG => both(Kind::D, Kind::D, Some(VType::Int)),
            IF_ICMPEQ..=IF_ICMPLE => both(Kind::I, Kind::I, None),
            IF_ACMPEQ | IF_ACMPNE => both(Kind::A, Kind::A, None),
            PUTFIELD => {
                let Insn::Field { descriptor, .. } = insn else { unreachable!() };
                both(Kind::A, Kind::of(&field_type(descriptor)?), None)
            }
            _ => Err(conflict(idx, format!("unexpected binary {}", mnemonic(op)))),
        }
    }

    fn ternary(&self, idx: usize, insn: &Insn, a: &VType, i: &VType, v: &VType) -> Result<(), AnalysisError> {
        let op = insn.opcode().unwrap_or(NOP);
        want(idx, a, Kind::A)?;
        want(idx, i, Kind::I)?;
        let k = match op {
            IASTORE..=AASTORE => Kind::of_group(op - IASTORE),
            _ => Kind::I,
        };
        want(idx, v, k)
    }

    fn nary(&self, idx: usize, insn: &Insn, _args: &[VType]) -> Result<Option<VType>, AnalysisError> {
        match insn {
            Insn::Method { descriptor, .. } | Insn::InvokeDynamic { descriptor, .. } => {
                let d = MethodDescriptor::parse(descriptor).map_err(|e| AnalysisError::Malformed(e.to_string()))?;
                Ok(d.ret.as_ref().map(VType::from_field_type))
            }
            Insn::MultiANewArray { class, .. } => Ok(Some(VType::Ref(class.clone()))),
            other => Err(conflict(idx, format!("unexpected n-ary {}", other.display()))),
        }
    }

    fn merge(&self, _at: usize, a: &VType, b: &VType) -> Result<VType, AnalysisError> {
        Ok(match (a, b) {
            _ if a == b => a.clone(),
            (VType::Null, VType::Ref(_)) => b.clone(),
            (VType::Ref(_), VType::Null) => a.clone(),
            (VType::Ref(x), VType::Ref(y)) => VType::Ref(self.hierarchy.common_superclass(x, y)?),
            _ => VType::Top,
        })
    }

    fn initialized(&self, _idx: usize, receiver: &VType, v: &VType) -> Option<VType> {
        if v != receiver {
            return None;
        }
        match receiver {
            VType::UninitializedThis => Some(VType::Ref(self.owner.to_string())),
            VType::Uninitialized(n) => match self.insns.get(*n) {
                Some(Insn::Type { class, .. }) => Some(VType::Ref(class.clone())),
                _ => None,
            },
            _ => None,
        }
    }
}

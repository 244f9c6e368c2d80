//! Provenance interpretation: which instructions may have produced a value.

use std::collections::BTreeSet;

use super::engine::{Interpreter, Value};
use super::{AnalysisError, VType};
use crate::classfile::opcodes::*;
use crate::classfile::{Insn, MethodDescriptor};

/// A value with the positions of every instruction that may have pushed it.
/// Parameters, unset locals and caught exceptions have an empty set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceValue {
    pub size: usize,
    pub insns: BTreeSet<usize>,
}

impl SourceValue {
    fn at(size: usize, idx: usize) -> Self {
        SourceValue { size, insns: BTreeSet::from([idx]) }
    }
}

impl Value for SourceValue {
    fn size(&self) -> usize {
        self.size
    }
}

/// Interpreter producing [`SourceValue`]s. Copies made by loads, stores and
/// the dup/swap family are attributed to the copying instruction.
pub struct SourceInterpreter;

fn desc_size(desc: &str) -> usize {
    if desc == "J" || desc == "D" {
        2
    } else {
        1
    }
}

fn result_size(insn: &Insn) -> Result<usize, AnalysisError> {
    Ok(match insn {
        Insn::Ldc(v) => 1 + usize::from(v.is_wide()),
        Insn::Field { descriptor, .. } => desc_size(descriptor),
        Insn::Method { descriptor, .. } | Insn::InvokeDynamic { descriptor, .. } => {
            let d = MethodDescriptor::parse(descriptor).map_err(|e| AnalysisError::Malformed(e.to_string()))?;
            d.return_slots() as usize
        }
        Insn::Var { opcode: LLOAD | DLOAD, .. } => 2,
        other => match other.opcode().unwrap_or(NOP) {
            LCONST_0 | LCONST_1 | DCONST_0 | DCONST_1 | LALOAD | DALOAD | LNEG | DNEG | I2L | I2D | L2D
            | F2L | F2D | D2L | LSHL | LSHR | LUSHR | LAND | LOR | LXOR => 2,
            op @ IADD..=DREM if (op - IADD) % 2 == 1 => 2,
            _ => 1,
        },
    })
}

impl Interpreter for SourceInterpreter {
    type V = SourceValue;

    fn param(&self, ty: &VType) -> SourceValue {
        SourceValue { size: ty.size(), insns: BTreeSet::new() }
    }

    fn empty(&self) -> SourceValue {
        SourceValue { size: 1, insns: BTreeSet::new() }
    }

    fn exception(&self, _handler: usize, _catch_type: Option<&str>) -> SourceValue {
        self.empty()
    }

    fn push(&self, idx: usize, insn: &Insn) -> Result<SourceValue, AnalysisError> {
        Ok(SourceValue::at(result_size(insn)?, idx))
    }

    fn copy(&self, idx: usize, insn: &Insn, v: &SourceValue) -> Result<SourceValue, AnalysisError> {
        let size = match insn {
            Insn::Var { opcode: ILOAD..=ALOAD, .. } => result_size(insn)?,
            _ => v.size,
        };
        Ok(SourceValue::at(size, idx))
    }

    fn unary(&self, idx: usize, insn: &Insn, _v: &SourceValue) -> Result<Option<SourceValue>, AnalysisError> {
        let op = insn.opcode().unwrap_or(NOP);
        Ok(match op {
            IFEQ..=IFLE | IFNULL | IFNONNULL | TABLESWITCH | LOOKUPSWITCH | IRETURN..=ARETURN | PUTSTATIC
            | ATHROW | MONITORENTER | MONITOREXIT => None,
            _ => Some(SourceValue::at(result_size(insn)?, idx)),
        })
    }

    fn binary(
        &self,
        idx: usize,
        insn: &Insn,
        _a: &SourceValue,
        _b: &SourceValue,
    ) -> Result<Option<SourceValue>, AnalysisError> {
        let op = insn.opcode().unwrap_or(NOP);
        Ok(match op {
            IF_ICMPEQ..=IF_ACMPNE | PUTFIELD => None,
            _ => Some(SourceValue::at(result_size(insn)?, idx)),
        })
    }

    fn ternary(
        &self,
        _idx: usize,
        _insn: &Insn,
        _a: &SourceValue,
        _b: &SourceValue,
        _c: &SourceValue,
    ) -> Result<(), AnalysisError> {
        Ok(())
    }

    fn nary(&self, idx: usize, insn: &Insn, _args: &[SourceValue]) -> Result<Option<SourceValue>, AnalysisError> {
        let size = result_size(insn)?;
        Ok(match insn {
            Insn::MultiANewArray { .. } => Some(SourceValue::at(1, idx)),
            _ if size == 0 => None,
            _ => Some(SourceValue::at(size, idx)),
        })
    }

    fn merge(&self, _at: usize, a: &SourceValue, b: &SourceValue) -> Result<SourceValue, AnalysisError> {
        if a.insns.is_superset(&b.insns) {
            return Ok(a.clone());
        }
        Ok(SourceValue { size: a.size, insns: a.insns.union(&b.insns).copied().collect() })
    }

    fn initialized(&self, _idx: usize, _receiver: &SourceValue, _v: &SourceValue) -> Option<SourceValue> {
        None
    }
}

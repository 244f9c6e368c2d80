//! Conservative rewriting of conditional jumps that may not reach their
//! target with a 16-bit offset.

use std::collections::HashMap;

use crate::classfile::opcodes::*;
use crate::classfile::{CodeBody, Insn};

/// Upper bound on the encoded size of `insn` at any offset.
fn max_size(insn: &Insn) -> i64 {
    match insn {
        Insn::Label(_) | Insn::LineNumber(_) => 0,
        Insn::Simple(_) => 1,
        Insn::Int { .. } | Insn::Type { .. } | Insn::Field { .. } | Insn::Ldc(_) => 3,
        Insn::Var { .. } | Insn::MultiANewArray { .. } => 4,
        Insn::Method { .. } | Insn::InvokeDynamic { .. } | Insn::Jump { .. } => 5,
        Insn::Iinc { .. } => 6,
        Insn::TableSwitch { targets, .. } => 16 + 4 * targets.len() as i64,
        Insn::LookupSwitch { pairs, .. } => 12 + 8 * pairs.len() as i64,
    }
}

/// Replaces every conditional jump whose distance might exceed a signed
/// 16-bit offset by an inverted jump over a `goto`, which the encoder can
/// widen. Returns the number of jumps rewritten.
pub(crate) fn widen_far_jumps(body: &mut CodeBody) -> usize {
    let mut rewritten = 0;
    loop {
        let mut at = Vec::with_capacity(body.insns.len() + 1);
        let mut total = 0i64;
        for insn in &body.insns {
            at.push(total);
            total += max_size(insn);
        }
        if total <= i16::MAX as i64 {
            return rewritten;
        }
        let labels: HashMap<_, _> = body
            .insns
            .iter()
            .enumerate()
            .filter_map(|(i, insn)| match insn {
                Insn::Label(l) => Some((*l, at[i])),
                _ => None,
            })
            .collect();
        let far: Vec<usize> = body
            .insns
            .iter()
            .enumerate()
            .filter(|(i, insn)| match insn {
                Insn::Jump { opcode, target } if is_conditional_jump(*opcode) => {
                    labels.get(target).is_none_or(|&t| (t - at[*i]).abs() > i16::MAX as i64)
                }
                _ => false,
            })
            .map(|(i, _)| i)
            .collect();
        if far.is_empty() {
            return rewritten;
        }
        for &i in far.iter().rev() {
            let Insn::Jump { opcode, target } = body.insns[i].clone() else { unreachable!() };
            let skip = body.fresh_label();
            let neg = negate_jump(opcode).expect("conditional jumps negate");
            body.insns.splice(i..=i, [Insn::jump(neg, skip), Insn::jump(GOTO, target), Insn::Label(skip)]);
        }
        rewritten += far.len();
    }
}

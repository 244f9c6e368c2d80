//! Built-in transformers: a basic-block tracer, an iterator monitor and an
//! inline test-inversion detector.

use super::{Cb, Transformer};
use crate::analysis::VType;
use crate::classfile::opcodes::{negate_jump, INVOKESTATIC};
use crate::classfile::{CodeBody, Insn};
use crate::joinpoint::{BasicBlockCtx, InstructionCtx, MethodCallCtx};
use crate::weaver::{load_op, spill_and_restore, DynamicValue, Instrumenter, StaticInvocation};

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["trace-blocks", "monitor-iterators", "detect-test-inversions"];

/// A built-in transformer by name.
pub fn builtin(name: &str) -> Option<Box<dyn Transformer>> {
    Some(match name {
        "trace-blocks" => Box::new(BlockTracer),
        "monitor-iterators" => Box::new(IteratorMonitor::default()),
        "detect-test-inversions" => Box::new(TestInversionDetector::default()),
        _ => return None,
    })
}

/// Prints `Entered block:<class>.<method>.<index>` on entering and
/// `Exited block:...` on leaving every basic block.
pub struct BlockTracer;

fn block_name(b: &BasicBlockCtx<'_>) -> String {
    format!("{}.{}.{}", b.method.class.dotted_name(), b.method.name(), b.index())
}

impl Transformer for BlockTracer {
    fn on_basic_block_enter(&self, b: &BasicBlockCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        dc.println(format!("Entered block:{}", block_name(b)));
        Ok(())
    }

    fn on_basic_block_exit(&self, b: &BasicBlockCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        dc.println(format!("Exited block:{}", block_name(b)));
        Ok(())
    }
}

/// Reports iterator creation on `List` receivers and every `hasNext` and
/// `next` call on iterators to static methods of a monitor class:
/// `iteratorCreation(Object, Object, Object)` with the calling object, the
/// list and the iterator, `hasNextCall(Object)` and `nextCall(Object)` with
/// the iterator.
pub struct IteratorMonitor {
    /// Internal name of the monitor class.
    pub monitor: String,
}

impl Default for IteratorMonitor {
    fn default() -> Self {
        IteratorMonitor { monitor: "IteratorMonitor".into() }
    }
}

impl Transformer for IteratorMonitor {
    fn before_method_call(&self, c: &MethodCallCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        let event = match (c.method_name(), c.descriptor()) {
            ("hasNext", "()Z") => "hasNextCall",
            ("next", "()Ljava/lang/Object;") => "nextCall",
            _ => return Ok(()),
        };
        if !c.method_owner().ends_with("Iterator") {
            return Ok(());
        }
        let it = dc.get_method_receiver()?;
        dc.invoke(StaticInvocation::new(&self.monitor, event).arg(it))
    }

    fn after_method_call(&self, c: &MethodCallCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        if c.method_name() != "iterator" || !c.method_owner().ends_with("List") {
            return Ok(());
        }
        let this = dc.get_this().unwrap_or_else(|_| DynamicValue::null());
        let list = dc.get_method_receiver()?;
        let iterator = dc.get_method_result()?;
        dc.invoke(StaticInvocation::new(&self.monitor, "iteratorCreation").arg(this).arg(list).arg(iterator))
    }
}

/// Duplicates every conditional jump into its successors: the operands are
/// saved before the jump and the comparison is evaluated again on entering
/// the true and false branches. A disagreement calls the reporter's static
/// `report(int)` with the ordinal of the jump in its method; with
/// `count_events`, every duplicated check first calls `event()`.
pub struct TestInversionDetector {
    /// Internal name of the reporter class.
    pub reporter: String,
    pub count_events: bool,
}

impl Default for TestInversionDetector {
    fn default() -> Self {
        TestInversionDetector { reporter: "InversionReporter".into(), count_events: false }
    }
}

/// Position of the conditional jump at `index` among the conditional jumps
/// of `code`.
pub fn conditional_jump_ordinal(code: &CodeBody, index: usize) -> usize {
    code.insns[..index].iter().filter(|i| i.is_conditional_jump()).count()
}

/// Inverts the sense of the `nth` conditional jump of `code`. Returns false
/// if there is no such jump.
pub fn flip_conditional_jump(code: &mut CodeBody, nth: usize) -> bool {
    let Some(insn) = code.insns.iter_mut().filter(|i| i.is_conditional_jump()).nth(nth) else {
        return false;
    };
    if let Insn::Jump { opcode, .. } = insn {
        *opcode = negate_jump(*opcode).expect("conditional jumps negate");
    }
    true
}

impl TestInversionDetector {
    fn operand_slots(&self, ins: &InstructionCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Option<(Vec<VType>, Vec<u16>)> {
        let n = usize::try_from(ins.stack_operands_if_cond_jump()).ok()?;
        let frame = ins.basic_value_frame()?;
        let types: Vec<VType> = frame.stack.iter().rev().take(n).cloned().collect();
        let slots = types
            .iter()
            .enumerate()
            .map(|(k, t)| dc.method_scratch_local(&format!("inversion.{}.{k}", ins.index), t))
            .collect();
        Some((types, slots))
    }

    fn check(&self, b: &BasicBlockCtx<'_>, dc: &mut Instrumenter<'_, '_>, taken: bool) -> Cb {
        let Some(j) = dc.joinpoint().insn else { return Ok(()) };
        let source = b.method.instruction(j);
        let src_block = source.basic_block;
        if src_block.true_branch().map(|t| t.pos) == src_block.false_branch().map(|f| f.pos) {
            return Ok(());
        }
        let Some((types, slots)) = self.operand_slots(&source, dc) else { return Ok(()) };
        let Insn::Jump { opcode, .. } = source.insn() else { return Ok(()) };
        let test = if taken { *opcode } else { negate_jump(*opcode).expect("conditional jumps negate") };
        let ok = dc.new_label();
        let mut code = Vec::new();
        if self.count_events {
            code.push(Insn::method(INVOKESTATIC, &self.reporter, "event", "()V"));
        }
        for (t, &s) in types.iter().zip(&slots).rev() {
            code.push(Insn::var(load_op(t), s));
        }
        code.push(Insn::jump(test, ok));
        code.push(Insn::push_int(conditional_jump_ordinal(b.method.code, j) as i32));
        code.push(Insn::method(INVOKESTATIC, &self.reporter, "report", "(I)V"));
        code.push(Insn::Label(ok));
        dc.insert_all(code);
        Ok(())
    }
}

impl Transformer for TestInversionDetector {
    fn uses_branch_joinpoints(&self) -> bool {
        true
    }

    fn before_instruction(&self, ins: &InstructionCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        if !ins.is_conditional_jump() {
            return Ok(());
        }
        if let Some((types, slots)) = self.operand_slots(ins, dc) {
            dc.insert_all(spill_and_restore(&types, &slots));
        }
        Ok(())
    }

    fn on_true_branch_enter(&self, b: &BasicBlockCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        self.check(b, dc, true)
    }

    fn on_false_branch_enter(&self, b: &BasicBlockCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        self.check(b, dc, false)
    }
}

//! Generic forward dataflow over a method body, one frame per instruction.

use std::collections::VecDeque;
use std::fmt::Debug;

use super::AnalysisError;
use crate::classfile::opcodes::*;
use crate::classfile::{CodeBody, Insn, MethodDescriptor, MethodModel};

/// A value tracked by an [`Interpreter`].
pub trait Value: Clone + PartialEq + Debug {
    /// Slots occupied: 2 for long/double, else 1.
    fn size(&self) -> usize;
}

/// Locals and operand stack before an instruction. The stack is value-level
/// (a long is one entry); locals are slot-level (a long is followed by an
/// empty slot).
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<V> {
    pub locals: Vec<V>,
    pub stack: Vec<V>,
}

impl<V: Value> Frame<V> {
    /// Operand stack height in slots.
    pub fn stack_slots(&self) -> usize {
        self.stack.iter().map(Value::size).sum()
    }

    /// Value at `depth` from the top, 0 being the top.
    pub fn peek(&self, depth: usize) -> Option<&V> {
        self.stack.len().checked_sub(depth + 1).map(|i| &self.stack[i])
    }
}

/// Abstract semantics plugged into [`analyze`]. Instruction positions are
/// passed as `idx`.
pub trait Interpreter {
    type V: Value;

    /// A parameter (or receiver) value at method entry.
    fn param(&self, ty: &super::VType) -> Self::V;
    /// Content of an unset local slot, and of the second slot of a long.
    fn empty(&self) -> Self::V;
    fn exception(&self, handler: usize, catch_type: Option<&str>) -> Self::V;
    /// Constants, `getstatic`, `new`.
    fn push(&self, idx: usize, insn: &Insn) -> Result<Self::V, AnalysisError>;
    /// Loads, stores and the dup/swap family.
    fn copy(&self, idx: usize, insn: &Insn, v: &Self::V) -> Result<Self::V, AnalysisError>;
    fn unary(&self, idx: usize, insn: &Insn, v: &Self::V) -> Result<Option<Self::V>, AnalysisError>;
    fn binary(&self, idx: usize, insn: &Insn, a: &Self::V, b: &Self::V) -> Result<Option<Self::V>, AnalysisError>;
    fn ternary(&self, idx: usize, insn: &Insn, a: &Self::V, b: &Self::V, c: &Self::V) -> Result<(), AnalysisError>;
    /// Invokes and `multianewarray`; `args` includes any receiver.
    fn nary(&self, idx: usize, insn: &Insn, args: &[Self::V]) -> Result<Option<Self::V>, AnalysisError>;
    fn merge(&self, at: usize, a: &Self::V, b: &Self::V) -> Result<Self::V, AnalysisError>;
    /// The value replacing `v` once the constructor call at `idx` has run on
    /// `receiver`, or `None` if `v` is unaffected.
    fn initialized(&self, idx: usize, receiver: &Self::V, v: &Self::V) -> Option<Self::V>;
}

fn conflict(insn: usize, reason: impl Into<String>) -> AnalysisError {
    AnalysisError::TypeConflict { insn, reason: reason.into() }
}

struct Exec<'a, I: Interpreter> {
    interp: &'a I,
    idx: usize,
}

impl<'a, I: Interpreter> Exec<'a, I> {
    fn pop(&self, f: &mut Frame<I::V>) -> Result<I::V, AnalysisError> {
        f.stack.pop().ok_or_else(|| conflict(self.idx, "operand stack underflow"))
    }

    fn pop1(&self, f: &mut Frame<I::V>) -> Result<I::V, AnalysisError> {
        let v = self.pop(f)?;
        if v.size() != 1 {
            return Err(conflict(self.idx, "category-2 value where category 1 was required"));
        }
        Ok(v)
    }

    fn get_local(&self, f: &Frame<I::V>, slot: u16) -> Result<I::V, AnalysisError> {
        f.locals.get(slot as usize).cloned().ok_or_else(|| conflict(self.idx, format!("local {slot} out of range")))
    }

    fn set_local(&self, f: &mut Frame<I::V>, slot: u16, v: I::V) -> Result<(), AnalysisError> {
        let s = slot as usize;
        if s + v.size() > f.locals.len() {
            return Err(conflict(self.idx, format!("local {slot} out of range")));
        }
        if s > 0 && f.locals[s - 1].size() == 2 {
            f.locals[s - 1] = self.interp.empty();
        }
        if v.size() == 2 {
            f.locals[s + 1] = self.interp.empty();
        }
        f.locals[s] = v;
        Ok(())
    }

    fn execute(&self, insn: &Insn, f: &mut Frame<I::V>) -> Result<(), AnalysisError> {
        let it = self.interp;
        let idx = self.idx;
        let Some(op) = insn.opcode() else { return Ok(()) };
        match insn {
            Insn::Var { opcode, slot } if *opcode <= ALOAD => {
                let v = self.get_local(f, *slot)?;
                let v = it.copy(idx, insn, &v)?;
                f.stack.push(v);
                return Ok(());
            }
            Insn::Var { opcode: RET, .. } => return Err(AnalysisError::Unsupported("ret".into())),
            Insn::Var { slot, .. } => {
                let v = self.pop(f)?;
                let v = it.copy(idx, insn, &v)?;
                return self.set_local(f, *slot, v);
            }
            Insn::Iinc { slot, .. } => {
                let v = self.get_local(f, *slot)?;
                let v = it.unary(idx, insn, &v)?.expect("iinc yields a value");
                return self.set_local(f, *slot, v);
            }
            Insn::Method { opcode, name, descriptor, .. } => {
                let d = MethodDescriptor::parse(descriptor)
                    .map_err(|e| AnalysisError::Malformed(e.to_string()))?;
                let count = d.params.len() + usize::from(*opcode != INVOKESTATIC);
                if f.stack.len() < count {
                    return Err(conflict(idx, "operand stack underflow"));
                }
                let args = f.stack.split_off(f.stack.len() - count);
                if *opcode == INVOKESPECIAL && name == "<init>" {
                    let receiver = args[0].clone();
                    for v in f.locals.iter_mut().chain(f.stack.iter_mut()) {
                        if let Some(n) = it.initialized(idx, &receiver, v) {
                            *v = n;
                        }
                    }
                }
                if let Some(r) = it.nary(idx, insn, &args)? {
                    f.stack.push(r);
                }
                return Ok(());
            }
            Insn::InvokeDynamic { descriptor, .. } => {
                let d = MethodDescriptor::parse(descriptor)
                    .map_err(|e| AnalysisError::Malformed(e.to_string()))?;
                if f.stack.len() < d.params.len() {
                    return Err(conflict(idx, "operand stack underflow"));
                }
                let args = f.stack.split_off(f.stack.len() - d.params.len());
                if let Some(r) = it.nary(idx, insn, &args)? {
                    f.stack.push(r);
                }
                return Ok(());
            }
            Insn::MultiANewArray { dims, .. } => {
                let n = *dims as usize;
                if f.stack.len() < n {
                    return Err(conflict(idx, "operand stack underflow"));
                }
                let args = f.stack.split_off(f.stack.len() - n);
                let r = it.nary(idx, insn, &args)?.expect("multianewarray yields a value");
                f.stack.push(r);
                return Ok(());
            }
            _ => {}
        }
        match op {
            NOP | GOTO => {}
            ACONST_NULL..=LDC2_W | GETSTATIC | NEW => {
                let v = it.push(idx, insn)?;
                f.stack.push(v);
            }
            JSR => return Err(AnalysisError::Unsupported("jsr".into())),
            IALOAD..=SALOAD => {
                let i = self.pop1(f)?;
                let a = self.pop1(f)?;
                let v = it.binary(idx, insn, &a, &i)?.expect("array load yields a value");
                f.stack.push(v);
            }
            IASTORE..=SASTORE => {
                let v = self.pop(f)?;
                let i = self.pop1(f)?;
                let a = self.pop1(f)?;
                it.ternary(idx, insn, &a, &i, &v)?;
            }
            POP => {
                self.pop1(f)?;
            }
            POP2 => {
                let v = self.pop(f)?;
                if v.size() == 1 {
                    self.pop1(f)?;
                }
            }
            DUP => {
                let v = self.pop1(f)?;
                f.stack.push(it.copy(idx, insn, &v)?);
                f.stack.push(it.copy(idx, insn, &v)?);
            }
            DUP_X1 => {
                let v1 = self.pop1(f)?;
                let v2 = self.pop1(f)?;
                f.stack.push(it.copy(idx, insn, &v1)?);
                f.stack.push(it.copy(idx, insn, &v2)?);
                f.stack.push(it.copy(idx, insn, &v1)?);
            }
            DUP_X2 => {
                let v1 = self.pop1(f)?;
                let v2 = self.pop(f)?;
                if v2.size() == 1 {
                    let v3 = self.pop1(f)?;
                    f.stack.push(it.copy(idx, insn, &v1)?);
                    f.stack.push(it.copy(idx, insn, &v3)?);
                } else {
                    f.stack.push(it.copy(idx, insn, &v1)?);
                }
                f.stack.push(it.copy(idx, insn, &v2)?);
                f.stack.push(it.copy(idx, insn, &v1)?);
            }
            DUP2 => {
                let v1 = self.pop(f)?;
                if v1.size() == 1 {
                    let v2 = self.pop1(f)?;
                    for v in [&v2, &v1, &v2, &v1] {
                        f.stack.push(it.copy(idx, insn, v)?);
                    }
                } else {
                    f.stack.push(it.copy(idx, insn, &v1)?);
                    f.stack.push(it.copy(idx, insn, &v1)?);
                }
            }
            DUP2_X1 => {
                let v1 = self.pop(f)?;
                if v1.size() == 1 {
                    let v2 = self.pop1(f)?;
                    let v3 = self.pop1(f)?;
                    for v in [&v2, &v1, &v3, &v2, &v1] {
                        f.stack.push(it.copy(idx, insn, v)?);
                    }
                } else {
                    let v2 = self.pop1(f)?;
                    for v in [&v1, &v2, &v1] {
                        f.stack.push(it.copy(idx, insn, v)?);
                    }
                }
            }
            DUP2_X2 => {
                let v1 = self.pop(f)?;
                if v1.size() == 1 {
                    let v2 = self.pop1(f)?;
                    let v3 = self.pop(f)?;
                    if v3.size() == 1 {
                        let v4 = self.pop1(f)?;
                        for v in [&v2, &v1, &v4, &v3, &v2, &v1] {
                            f.stack.push(it.copy(idx, insn, v)?);
                        }
                    } else {
                        for v in [&v2, &v1, &v3, &v2, &v1] {
                            f.stack.push(it.copy(idx, insn, v)?);
                        }
                    }
                } else {
                    let v2 = self.pop(f)?;
                    if v2.size() == 1 {
                        let v3 = self.pop1(f)?;
                        for v in [&v1, &v3, &v2, &v1] {
                            f.stack.push(it.copy(idx, insn, v)?);
                        }
                    } else {
                        for v in [&v1, &v2, &v1] {
                            f.stack.push(it.copy(idx, insn, v)?);
                        }
                    }
                }
            }
            SWAP => {
                let v1 = self.pop1(f)?;
                let v2 = self.pop1(f)?;
                f.stack.push(it.copy(idx, insn, &v1)?);
                f.stack.push(it.copy(idx, insn, &v2)?);
            }
            IADD..=DREM | ISHL..=LXOR | LCMP..=DCMPG | IF_ICMPEQ..=IF_ACMPNE | PUTFIELD => {
                let b = self.pop(f)?;
                let a = self.pop(f)?;
                if let Some(v) = it.binary(idx, insn, &a, &b)? {
                    f.stack.push(v);
                }
            }
            INEG..=DNEG | I2L..=I2S | IFEQ..=IFLE | IFNULL | IFNONNULL | TABLESWITCH | LOOKUPSWITCH
            | IRETURN..=ARETURN | PUTSTATIC | GETFIELD | NEWARRAY | ANEWARRAY | ARRAYLENGTH | ATHROW
            | CHECKCAST | INSTANCEOF | MONITORENTER | MONITOREXIT => {
                let v = self.pop(f)?;
                if let Some(r) = it.unary(idx, insn, &v)? {
                    f.stack.push(r);
                }
            }
            RETURN => {}
            _ => return Err(AnalysisError::Unsupported(format!("opcode {}", mnemonic(op)))),
        }
        Ok(())
    }
}

/// Applies instruction `idx` to `frame` exactly as [`analyze`] does.
pub fn step<I: Interpreter>(interp: &I, idx: usize, insn: &Insn, frame: &mut Frame<I::V>) -> Result<(), AnalysisError> {
    Exec { interp, idx }.execute(insn, frame)
}

/// Per-instruction frames. `frames[i]` is the state before instruction `i`;
/// `None` marks unreachable code.
#[derive(Clone, Debug)]
pub struct Analysis<V> {
    pub frames: Vec<Option<Frame<V>>>,
    /// Largest operand-stack height reached, in slots.
    pub max_stack: usize,
}

/// Slots needed for parameters (and `this`).
pub fn param_slots(method: &MethodModel) -> Result<usize, AnalysisError> {
    let d = method.parsed_descriptor().map_err(|e| AnalysisError::Malformed(e.to_string()))?;
    Ok(d.arg_slots() as usize + usize::from(!method.is_static()))
}

/// One past the highest local slot the code or the parameters touch.
pub fn locals_needed(method: &MethodModel, code: &CodeBody) -> Result<usize, AnalysisError> {
    let mut max = param_slots(method)?;
    for insn in &code.insns {
        let top = match insn {
            Insn::Var { opcode, slot } => {
                let wide = matches!(*opcode, LLOAD | DLOAD | LSTORE | DSTORE);
                *slot as usize + if wide { 2 } else { 1 }
            }
            Insn::Iinc { slot, .. } => *slot as usize + 1,
            _ => 0,
        };
        max = max.max(top);
    }
    Ok(max)
}

/// Initial frame for a method with `locals` slots.
pub fn entry_frame<I: Interpreter>(
    interp: &I,
    owner: &str,
    method: &MethodModel,
    locals: usize,
) -> Result<Frame<I::V>, AnalysisError> {
    use super::VType;
    let d = method.parsed_descriptor().map_err(|e| AnalysisError::Malformed(e.to_string()))?;
    let mut l = Vec::with_capacity(locals);
    if !method.is_static() {
        let this = if method.name == "<init>" && owner != "java/lang/Object" {
            VType::UninitializedThis
        } else {
            VType::Ref(owner.into())
        };
        l.push(interp.param(&this));
    }
    for p in &d.params {
        let t = VType::from_field_type(p);
        l.push(interp.param(&t));
        if t.size() == 2 {
            l.push(interp.empty());
        }
    }
    if l.len() > locals {
        return Err(AnalysisError::Malformed(format!(
            "{}{} needs {} parameter slots but max_locals is {locals}",
            method.name,
            method.descriptor,
            l.len()
        )));
    }
    l.resize(locals, interp.empty());
    Ok(Frame { locals: l, stack: Vec::new() })
}

/// Per-frame hook applied whenever a frame is stored, used to pin parts of
/// a frame to externally supplied types.
pub type FrameAdjust<'a, V> = &'a dyn Fn(usize, &mut Frame<V>);

/// Runs `interp` to a fixpoint over `code`.
pub fn analyze<I: Interpreter>(
    interp: &I,
    owner: &str,
    method: &MethodModel,
    code: &CodeBody,
    locals: usize,
    adjust: Option<FrameAdjust<'_, I::V>>,
) -> Result<Analysis<I::V>, AnalysisError> {
    let insns = &code.insns;
    let n = insns.len();
    let labels = code.label_positions();
    let pos = |l: &crate::classfile::Label| -> Result<usize, AnalysisError> {
        labels.get(l).copied().ok_or_else(|| AnalysisError::Malformed(format!("undefined label {l}")))
    };

    let mut handlers: Vec<Vec<(usize, Option<&str>)>> = vec![Vec::new(); n];
    for tc in &code.exception_table {
        let (s, e, h) = (pos(&tc.start)?, pos(&tc.end)?, pos(&tc.handler)?);
        for hs in handlers.iter_mut().take(e).skip(s) {
            hs.push((h, tc.catch_type.as_deref()));
        }
    }

    let mut frames: Vec<Option<Frame<I::V>>> = vec![None; n];
    let mut max_stack = 0usize;
    let mut queue = VecDeque::new();
    let mut queued = vec![false; n];
    if n == 0 {
        return Ok(Analysis { frames, max_stack });
    }
    let mut f0 = entry_frame(interp, owner, method, locals)?;
    if let Some(a) = adjust {
        a(0, &mut f0);
    }
    frames[0] = Some(f0);
    queue.push_back(0);
    queued[0] = true;

    let merge_into = |frames: &mut Vec<Option<Frame<I::V>>>,
                      t: usize,
                      incoming: &Frame<I::V>|
     -> Result<bool, AnalysisError> {
        let merged = match &frames[t] {
            None => {
                let mut f = incoming.clone();
                if let Some(a) = adjust {
                    a(t, &mut f);
                }
                f
            }
            Some(old) => {
                if old.stack.len() != incoming.stack.len() {
                    return Err(conflict(t, format!(
                        "stack height mismatch at merge ({} vs {} values)",
                        old.stack.len(),
                        incoming.stack.len()
                    )));
                }
                let mut f = Frame { locals: Vec::with_capacity(old.locals.len()), stack: Vec::with_capacity(old.stack.len()) };
                for (a, b) in old.locals.iter().zip(&incoming.locals) {
                    f.locals.push(interp.merge(t, a, b)?);
                }
                for (a, b) in old.stack.iter().zip(&incoming.stack) {
                    if a.size() != b.size() {
                        return Err(conflict(t, "stack value category mismatch at merge"));
                    }
                    f.stack.push(interp.merge(t, a, b)?);
                }
                if let Some(a) = adjust {
                    a(t, &mut f);
                }
                if &f == old {
                    return Ok(false);
                }
                f
            }
        };
        frames[t] = Some(merged);
        Ok(true)
    };

    while let Some(i) = queue.pop_front() {
        queued[i] = false;
        let before = frames[i].clone().expect("queued frames exist");
        let insn = &insns[i];
        let mut after = before.clone();
        Exec { interp, idx: i }.execute(insn, &mut after)?;
        max_stack = max_stack.max(before.stack_slots()).max(after.stack_slots());

        let mut succ = Vec::new();
        if !insn.is_unconditional_transfer() {
            if i + 1 >= n {
                if insn.is_real() {
                    return Err(conflict(i, "execution falls off the end of the code"));
                }
            } else {
                succ.push(i + 1);
            }
        }
        for t in insn.branch_targets() {
            succ.push(pos(&t)?);
        }
        for t in succ {
            if merge_into(&mut frames, t, &after)? && !queued[t] {
                queued[t] = true;
                queue.push_back(t);
            }
        }
        if insn.is_real() {
            for &(h, catch) in &handlers[i] {
                let hf = Frame { locals: before.locals.clone(), stack: vec![interp.exception(h, catch)] };
                max_stack = max_stack.max(hf.stack_slots());
                if merge_into(&mut frames, h, &hf)? && !queued[h] {
                    queued[h] = true;
                    queue.push_back(h);
                }
            }
        }
    }
    Ok(Analysis { frames, max_stack })
}

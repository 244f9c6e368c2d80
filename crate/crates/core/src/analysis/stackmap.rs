//! StackMapTable expansion, generation and compression.

use std::collections::{BTreeSet, HashMap};

use super::engine::{analyze, entry_frame, locals_needed, Frame, Value};
use super::{AnalysisError, BasicInterpreter, ClassHierarchy, VType};
use crate::classfile::opcodes::*;
use crate::classfile::{
    CodeAttribute, CodeBody, FrameKind, Insn, Label, MethodModel, StackMapFrame, TryCatch, VerificationType,
};

/// Declared frames from an existing StackMapTable, used to pin slots the
/// original compiler typed more precisely than a fresh merge would.
#[derive(Clone, Debug, Default)]
pub struct FrameHints {
    /// Frame per label.
    pub frames: HashMap<Label, Frame<VType>>,
    /// Hints cover locals below this slot.
    pub max_locals: usize,
}

fn vt_to_vtype(vt: &VerificationType, code: &CodeBody, labels: &HashMap<Label, usize>) -> Result<VType, AnalysisError> {
    Ok(match vt {
        VerificationType::Top => VType::Top,
        VerificationType::Integer => VType::Int,
        VerificationType::Float => VType::Float,
        VerificationType::Long => VType::Long,
        VerificationType::Double => VType::Double,
        VerificationType::Null => VType::Null,
        VerificationType::UninitializedThis => VType::UninitializedThis,
        VerificationType::Object(n) => VType::Ref(n.clone()),
        VerificationType::Uninitialized(l) => {
            let p = *labels.get(l).ok_or_else(|| AnalysisError::Malformed(format!("undefined label {l}")))?;
            let n = (p..code.insns.len())
                .find(|&i| matches!(code.insns[i], Insn::Type { opcode: NEW, .. }))
                .ok_or_else(|| AnalysisError::Malformed(format!("no new instruction at {l}")))?;
            VType::Uninitialized(n)
        }
    })
}

fn push_slots(out: &mut Vec<VType>, t: VType) {
    let wide = t.size() == 2;
    out.push(t);
    if wide {
        out.push(VType::Top);
    }
}

/// Decodes the compressed StackMapTable of `code` into full frames.
pub fn expand_stack_map(owner: &str, method: &MethodModel, code: &CodeBody) -> Result<FrameHints, AnalysisError> {
    let max_locals = code.max_locals as usize;
    let mut hints = FrameHints { frames: HashMap::new(), max_locals };
    let Some(map) = code.stack_map() else { return Ok(hints) };
    let labels = code.label_positions();
    let entry = entry_frame(&BasicInterpreter::new(&ClassHierarchy::new(), owner, &code.insns), owner, method, 0)
        .or_else(|_| {
            let n = super::engine::param_slots(method)?;
            entry_frame(&BasicInterpreter::new(&ClassHierarchy::new(), owner, &code.insns), owner, method, n)
        })?;
    let mut locals: Vec<VType> = compress_locals(&entry.locals)
        .iter()
        .map(|v| vt_to_vtype(v, code, &labels))
        .collect::<Result<_, _>>()?;
    for f in map {
        let conv = |v: &VerificationType| vt_to_vtype(v, code, &labels);
        let stack = match &f.kind {
            FrameKind::Same => Vec::new(),
            FrameKind::SameLocals1StackItem(v) => vec![conv(v)?],
            FrameKind::Chop(k) => {
                let k = *k as usize;
                if k > locals.len() {
                    return Err(AnalysisError::Malformed("chop below zero locals".into()));
                }
                locals.truncate(locals.len() - k);
                Vec::new()
            }
            FrameKind::Append(vs) => {
                for v in vs {
                    locals.push(conv(v)?);
                }
                Vec::new()
            }
            FrameKind::Full { locals: l, stack } => {
                locals = l.iter().map(conv).collect::<Result<_, _>>()?;
                stack.iter().map(conv).collect::<Result<_, _>>()?
            }
        };
        let mut slots = Vec::new();
        for t in &locals {
            push_slots(&mut slots, t.clone());
        }
        hints.frames.insert(f.label, Frame { locals: slots, stack });
    }
    Ok(hints)
}

fn to_vt(t: &VType, labels_before: &HashMap<usize, Label>) -> Result<VerificationType, AnalysisError> {
    Ok(match t {
        VType::Top => VerificationType::Top,
        VType::Int => VerificationType::Integer,
        VType::Float => VerificationType::Float,
        VType::Long => VerificationType::Long,
        VType::Double => VerificationType::Double,
        VType::Null => VerificationType::Null,
        VType::UninitializedThis => VerificationType::UninitializedThis,
        VType::Ref(n) => VerificationType::Object(n.clone()),
        VType::Uninitialized(i) => VerificationType::Uninitialized(
            *labels_before.get(i).ok_or_else(|| AnalysisError::Malformed(format!("no label before new at {i}")))?,
        ),
    })
}

/// Slot-level locals to a verification-type list: one entry per long or
/// double, trailing tops dropped.
fn compress_locals(slots: &[VType]) -> Vec<VerificationType> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < slots.len() {
        let t = &slots[i];
        out.push(match t {
            VType::Uninitialized(_) => VerificationType::Top,
            _ => to_vt(t, &HashMap::new()).unwrap_or(VerificationType::Top),
        });
        i += t.size();
    }
    while out.last() == Some(&VerificationType::Top) {
        out.pop();
    }
    out
}

fn locals_vt(slots: &[VType], labels_before: &HashMap<usize, Label>) -> Result<Vec<VerificationType>, AnalysisError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < slots.len() {
        out.push(to_vt(&slots[i], labels_before)?);
        i += slots[i].size();
    }
    while out.last() == Some(&VerificationType::Top) {
        out.pop();
    }
    Ok(out)
}

/// Smallest frame encoding of `(locals, stack)` relative to `prev` locals.
pub fn compress_frame(
    prev: &[VerificationType],
    locals: &[VerificationType],
    stack: &[VerificationType],
) -> FrameKind {
    if locals == prev {
        match stack.len() {
            0 => return FrameKind::Same,
            1 => return FrameKind::SameLocals1StackItem(stack[0].clone()),
            _ => {}
        }
    }
    if stack.is_empty() {
        if locals.len() < prev.len() && prev.len() - locals.len() <= 3 && prev.starts_with(locals) {
            return FrameKind::Chop((prev.len() - locals.len()) as u8);
        }
        if locals.len() > prev.len() && locals.len() - prev.len() <= 3 && locals.starts_with(prev) {
            return FrameKind::Append(locals[prev.len()..].to_vec());
        }
    }
    FrameKind::Full { locals: locals.to_vec(), stack: stack.to_vec() }
}

/// Options for [`finalize_code`].
#[derive(Clone, Copy, Debug)]
pub struct FinalizeOptions {
    /// Generate a StackMapTable (class files of version 50 and later).
    pub stack_map: bool,
    /// Pin frames to the body's existing StackMapTable where possible.
    pub use_hints: bool,
}

impl Default for FinalizeOptions {
    fn default() -> Self {
        FinalizeOptions { stack_map: true, use_hints: true }
    }
}

fn adjust_with(hints: &FrameHints, code: &CodeBody) -> HashMap<usize, Frame<VType>> {
    let labels = code.label_positions();
    hints
        .frames
        .iter()
        .filter_map(|(l, f)| labels.get(l).map(|&p| (p, f.clone())))
        .collect()
}

fn run(
    owner: &str,
    method: &MethodModel,
    code: &CodeBody,
    hierarchy: &ClassHierarchy,
    hints: Option<&FrameHints>,
) -> Result<super::Analysis<VType>, AnalysisError> {
    let interp = BasicInterpreter::new(hierarchy, owner, &code.insns);
    let locals = locals_needed(method, code)?;
    let by_pos = hints.map(|h| (adjust_with(h, code), h.max_locals));
    let adjust = |at: usize, f: &mut Frame<VType>| {
        let Some((map, max)) = &by_pos else { return };
        let Some(h) = map.get(&at) else { return };
        let n = (*max).min(f.locals.len());
        for s in 0..n {
            f.locals[s] = h.locals.get(s).cloned().unwrap_or(VType::Top);
        }
        if n > 0 && n < f.locals.len() && f.locals[n - 1].size() == 2 {
            f.locals[n] = VType::Top;
        }
        if h.stack.len() == f.stack.len() && h.stack.iter().zip(&f.stack).all(|(a, b)| a.size() == b.size()) {
            f.stack = h.stack.clone();
        }
    };
    let adjust_ref: &dyn Fn(usize, &mut Frame<VType>) = &adjust;
    analyze(&interp, owner, method, code, locals, hints.map(|_| adjust_ref))
}

/// First real instruction at or after `i`.
fn next_real(code: &CodeBody, i: usize) -> Option<usize> {
    (i..code.insns.len()).find(|&k| code.insns[k].is_real())
}

/// Real instructions that need an explicit frame: branch and switch
/// targets, handlers, and instructions following an unconditional transfer.
fn frame_sites(code: &CodeBody) -> Result<BTreeSet<usize>, AnalysisError> {
    let labels = code.label_positions();
    let mut out = BTreeSet::new();
    let at_label = |l: &Label, out: &mut BTreeSet<usize>| -> Result<(), AnalysisError> {
        let p = *labels.get(l).ok_or_else(|| AnalysisError::Malformed(format!("undefined label {l}")))?;
        if let Some(r) = next_real(code, p) {
            out.insert(r);
        }
        Ok(())
    };
    for (i, insn) in code.insns.iter().enumerate() {
        for t in insn.branch_targets() {
            at_label(&t, &mut out)?;
        }
        if insn.is_real() && insn.is_unconditional_transfer() {
            if let Some(r) = next_real(code, i + 1) {
                out.insert(r);
            }
        }
    }
    for tc in &code.exception_table {
        at_label(&tc.handler, &mut out)?;
    }
    Ok(out)
}

/// Label directly preceding real instruction `r` (only pseudo instructions
/// in between), if any.
fn label_before(code: &CodeBody, r: usize) -> Option<Label> {
    code.insns[..r].iter().rev().take_while(|i| !i.is_real()).find_map(|i| match i {
        Insn::Label(l) => Some(*l),
        _ => None,
    })
}

/// Inserts a label before each real instruction in `sites` and each `new`
/// that lacks one.
fn ensure_labels(code: &mut CodeBody, sites: &BTreeSet<usize>) {
    let need: Vec<usize> = code
        .insns
        .iter()
        .enumerate()
        .filter(|(i, insn)| sites.contains(i) || matches!(insn, Insn::Type { opcode: NEW, .. }))
        .map(|(i, _)| i)
        .filter(|&i| label_before(code, i).is_none())
        .collect();
    for &i in need.iter().rev() {
        let l = code.fresh_label();
        code.insns.insert(i, Insn::Label(l));
    }
}

/// Replaces unreachable instructions with `nop ... athrow` and removes them
/// from exception ranges. Returns whether anything changed.
fn neutralize_dead_code(code: &mut CodeBody, frames: &[Option<Frame<VType>>]) -> bool {
    let n = code.insns.len();
    let dead: Vec<bool> = (0..n).map(|i| code.insns[i].is_real() && frames[i].is_none()).collect();
    if !dead.iter().any(|&d| d) {
        return false;
    }
    // Maximal runs of dead real instructions, possibly interleaved with pseudo ones.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if dead[i] {
            let mut last = i;
            let mut k = i + 1;
            while k < n && (dead[k] || !code.insns[k].is_real()) {
                if dead[k] {
                    last = k;
                }
                k += 1;
            }
            runs.push((i, last));
            i = last + 1;
        } else {
            i += 1;
        }
    }
    let mut bounds: Vec<(Label, Label)> = Vec::new();
    for _ in &runs {
        let (a, b) = (code.fresh_label(), code.fresh_label());
        bounds.push((a, b));
    }
    let live_real_between = |a: usize, b: usize| (a..b).any(|k| code.insns[k].is_real() && !dead[k]);
    let labels = code.label_positions();
    let mut table = Vec::new();
    for tc in &code.exception_table {
        let (s, e) = (labels[&tc.start], labels[&tc.end]);
        let mut pieces: Vec<(Label, usize, Label, usize)> = vec![(tc.start, s, tc.end, e)];
        for (&(a, b), &(la, lb)) in runs.iter().zip(&bounds) {
            let mut next = Vec::new();
            for (sl, sp, el, ep) in pieces {
                if ep <= a || sp > b {
                    next.push((sl, sp, el, ep));
                    continue;
                }
                if sp < a {
                    next.push((sl, sp, la, a));
                }
                if ep > b + 1 {
                    next.push((lb, b + 1, el, ep));
                }
            }
            pieces = next;
        }
        for (sl, sp, el, ep) in pieces {
            if live_real_between(sp, ep) {
                table.push(TryCatch { start: sl, end: el, handler: tc.handler, catch_type: tc.catch_type.clone() });
            }
        }
    }
    let old = std::mem::take(&mut code.insns);
    let mut out = Vec::with_capacity(old.len() + 2 * runs.len());
    let mut run_iter = runs.iter().zip(&bounds).peekable();
    for (k, insn) in old.into_iter().enumerate() {
        let cur = run_iter.peek().map(|(r, l)| (**r, **l));
        match cur {
            Some(((a, b), (la, lb))) if k >= a && k <= b => {
                if k == a {
                    out.push(Insn::Label(la));
                }
                if dead[k] {
                    out.push(Insn::Simple(if k == b { ATHROW } else { NOP }));
                } else {
                    out.push(insn);
                }
                if k == b {
                    out.push(Insn::Label(lb));
                    run_iter.next();
                }
            }
            _ => out.push(insn),
        }
    }
    code.insns = out;
    code.exception_table = table;
    true
}

/// Recomputes frames, max stack and max locals for an edited body and, when
/// requested, regenerates its StackMapTable. Unreachable code is replaced by
/// `nop ... athrow`.
pub fn finalize_code(
    owner: &str,
    method: &MethodModel,
    code: &mut CodeBody,
    hierarchy: &ClassHierarchy,
    opts: FinalizeOptions,
) -> Result<(), AnalysisError> {
    if !opts.stack_map {
        let a = run(owner, method, code, hierarchy, None)?;
        set_max(code, method, a.max_stack)?;
        code.set_stack_map(None);
        return Ok(());
    }
    let hints = |code: &CodeBody| -> Result<Option<FrameHints>, AnalysisError> {
        if opts.use_hints { expand_stack_map(owner, method, code).map(Some) } else { Ok(None) }
    };
    let mut a = run(owner, method, code, hierarchy, hints(code)?.as_ref())?;
    if neutralize_dead_code(code, &a.frames) {
        a = run(owner, method, code, hierarchy, hints(code)?.as_ref())?;
    }
    let sites = frame_sites(code)?;
    let before = code.insns.len();
    ensure_labels(code, &sites);
    if code.insns.len() != before {
        a = run(owner, method, code, hierarchy, hints(code)?.as_ref())?;
    }
    let sites = frame_sites(code)?;
    let labels_before: HashMap<usize, Label> = code
        .insns
        .iter()
        .enumerate()
        .filter(|(_, i)| matches!(i, Insn::Type { opcode: NEW, .. }))
        .filter_map(|(i, _)| label_before(code, i).map(|l| (i, l)))
        .collect();

    let entry = entry_frame(&BasicInterpreter::new(hierarchy, owner, &code.insns), owner, method, 0).or_else(|_| {
        let n = super::engine::param_slots(method)?;
        entry_frame(&BasicInterpreter::new(hierarchy, owner, &code.insns), owner, method, n)
    })?;
    let mut prev = locals_vt(&entry.locals, &labels_before)?;
    let dead_frame = Frame { locals: Vec::new(), stack: vec![VType::Ref("java/lang/Throwable".into())] };
    let mut map = Vec::with_capacity(sites.len());
    for r in sites {
        let f = match &a.frames[r] {
            Some(f) => f,
            None => &dead_frame,
        };
        let label = label_before(code, r).expect("labels were ensured");
        let locals = locals_vt(&f.locals, &labels_before)?;
        let stack = f
            .stack
            .iter()
            .map(|t| {
                if *t == VType::Top {
                    Err(AnalysisError::TypeConflict { insn: r, reason: "incompatible stack values merge".into() })
                } else {
                    to_vt(t, &labels_before)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        map.push(StackMapFrame { label, kind: compress_frame(&prev, &locals, &stack) });
        prev = locals;
    }
    set_max(code, method, a.max_stack)?;
    if !code.attributes.iter().any(|at| matches!(at, CodeAttribute::StackMap(_))) && map.is_empty() {
        return Ok(());
    }
    code.set_stack_map(Some(map));
    Ok(())
}

fn set_max(code: &mut CodeBody, method: &MethodModel, max_stack: usize) -> Result<(), AnalysisError> {
    let locals = locals_needed(method, code)?;
    code.max_stack = u16::try_from(max_stack).map_err(|_| AnalysisError::Malformed("max_stack exceeds 65535".into()))?;
    code.max_locals = u16::try_from(locals).map_err(|_| AnalysisError::Malformed("max_locals exceeds 65535".into()))?;
    Ok(())
}

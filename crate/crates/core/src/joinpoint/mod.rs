//! Joinpoints: the closed set of instrumentation sites, their exact weave
//! anchors, and the static contexts handed to transformers.

mod context;
mod scope;

use std::fmt;

pub use context::{BasicBlockCtx, ClassCtx, InstructionCtx, MethodCallCtx, MethodCtx};
pub use scope::Scope;

use crate::cfg::{Cfg, EdgeKind};
use crate::classfile::{CodeBody, Insn};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JoinpointKind {
    OnMethodEnter,
    OnBasicBlockEnter,
    OnTrueBranchEnter,
    OnFalseBranchEnter,
    BeforeInstruction,
    BeforeMethodCall,
    AfterMethodCall,
    AfterInstruction,
    OnBasicBlockExit,
    OnMethodExit,
}

impl JoinpointKind {
    /// All kinds in visit order.
    pub const ALL: [JoinpointKind; 10] = [
        JoinpointKind::OnMethodEnter,
        JoinpointKind::OnBasicBlockEnter,
        JoinpointKind::OnTrueBranchEnter,
        JoinpointKind::OnFalseBranchEnter,
        JoinpointKind::BeforeInstruction,
        JoinpointKind::BeforeMethodCall,
        JoinpointKind::AfterMethodCall,
        JoinpointKind::AfterInstruction,
        JoinpointKind::OnBasicBlockExit,
        JoinpointKind::OnMethodExit,
    ];

    /// Position in visit order; advice sharing a location is woven by rank.
    pub fn rank(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            JoinpointKind::OnMethodEnter => "OnMethodEnter",
            JoinpointKind::OnBasicBlockEnter => "OnBasicBlockEnter",
            JoinpointKind::OnTrueBranchEnter => "OnTrueBranchEnter",
            JoinpointKind::OnFalseBranchEnter => "OnFalseBranchEnter",
            JoinpointKind::BeforeInstruction => "BeforeInstruction",
            JoinpointKind::BeforeMethodCall => "BeforeMethodCall",
            JoinpointKind::AfterMethodCall => "AfterMethodCall",
            JoinpointKind::AfterInstruction => "AfterInstruction",
            JoinpointKind::OnBasicBlockExit => "OnBasicBlockExit",
            JoinpointKind::OnMethodExit => "OnMethodExit",
        }
    }

    pub fn is_branch(self) -> bool {
        matches!(self, JoinpointKind::OnTrueBranchEnter | JoinpointKind::OnFalseBranchEnter)
    }
}

impl fmt::Display for JoinpointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where advice is woven, relative to a real instruction position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Anchor {
    /// Immediately before the instruction, after any labels heading it, so
    /// the advice runs whenever control reaches the instruction.
    Before(usize),
    /// Immediately after the instruction, before any following labels, so
    /// the advice runs only when control falls through from it.
    After(usize),
    /// At offset 0, ahead of the labels heading the first instruction, so
    /// jumps back to the entry block skip the advice.
    MethodStart(usize),
}

impl Anchor {
    /// The real instruction the anchor is attached to.
    pub fn index(self) -> usize {
        match self {
            Anchor::Before(i) | Anchor::After(i) | Anchor::MethodStart(i) => i,
        }
    }

    pub fn is_after(self) -> bool {
        matches!(self, Anchor::After(_))
    }

    /// Total order of physical weave locations.
    pub fn position_key(self) -> i64 {
        match self {
            Anchor::MethodStart(_) => -1,
            Anchor::Before(i) => 2 * i as i64,
            Anchor::After(i) => 2 * i as i64 + 1,
        }
    }
}

/// One instrumentation site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Joinpoint {
    pub kind: JoinpointKind,
    pub anchor: Anchor,
    /// Position in [`Cfg::blocks`] of the block the site belongs to; for
    /// branch kinds, the block being entered.
    pub block: usize,
    /// The instruction, for instruction and method-call kinds; the
    /// conditional jump, for branch kinds.
    pub insn: Option<usize>,
    /// Position in visit order: method entry, then per block its entry,
    /// instructions, exit and outgoing branch entries, then method exits.
    pub visit: usize,
}

impl Joinpoint {
    fn sort_key(&self) -> (i64, usize) {
        (self.anchor.position_key(), self.kind.rank())
    }
}

/// Blocks reachable from the entry through flow or handler edges.
pub fn reachable_blocks(cfg: &Cfg) -> Vec<bool> {
    let mut seen = vec![false; cfg.blocks.len()];
    if cfg.blocks.is_empty() {
        return seen;
    }
    let mut stack = vec![cfg.entry];
    seen[cfg.entry] = true;
    while let Some(u) = stack.pop() {
        for &(v, _) in &cfg.blocks[u].successors {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Method-call sites: invokes with a named owner (`invokedynamic` excluded).
pub fn is_method_call(insn: &Insn) -> bool {
    matches!(insn, Insn::Method { .. })
}

/// All joinpoints of one method body, sorted by weave location and, within
/// a location, by kind rank; ties keep visit order. Unreachable blocks yield
/// none. Branch kinds are produced only when `branches` is set; the CFG
/// should then be free of critical edges.
pub fn generate_joinpoints(cfg: &Cfg, code: &CodeBody, branches: bool) -> Vec<Joinpoint> {
    let insns = &code.insns;
    let live = reachable_blocks(cfg);
    let mut out = Vec::new();
    let mut push = |kind, anchor, block, insn| {
        let visit = out.len();
        out.push(Joinpoint { kind, anchor, block, insn, visit })
    };

    if let Some(entry) = cfg.blocks.get(cfg.entry) {
        let anchor = if entry.predecessors.is_empty() {
            Anchor::Before(entry.first_real)
        } else {
            Anchor::MethodStart(entry.first_real)
        };
        push(JoinpointKind::OnMethodEnter, anchor, cfg.entry, None);
    }
    for (bpos, b) in cfg.blocks.iter().enumerate() {
        if !live[bpos] {
            continue;
        }
        push(JoinpointKind::OnBasicBlockEnter, Anchor::Before(b.first_real), bpos, None);
        for i in (b.first_real..=b.last_real).filter(|&i| insns[i].is_real()) {
            let insn = &insns[i];
            let before = if i == b.first_real && !insn.is_branching() { Anchor::After(i) } else { Anchor::Before(i) };
            push(JoinpointKind::BeforeInstruction, before, bpos, Some(i));
            if is_method_call(insn) {
                push(JoinpointKind::BeforeMethodCall, Anchor::Before(i), bpos, Some(i));
                push(JoinpointKind::AfterMethodCall, Anchor::After(i), bpos, Some(i));
            }
            let after = if i == b.last_real { Anchor::Before(i) } else { Anchor::After(i) };
            push(JoinpointKind::AfterInstruction, after, bpos, Some(i));
        }
        let last = &insns[b.last_real];
        let exit = if last.is_branching() { Anchor::Before(b.last_real) } else { Anchor::After(b.last_real) };
        push(JoinpointKind::OnBasicBlockExit, exit, bpos, None);
        if branches {
            for &(v, kind) in &b.successors {
                let k = match kind {
                    EdgeKind::JumpTrue => JoinpointKind::OnTrueBranchEnter,
                    EdgeKind::JumpFalse => JoinpointKind::OnFalseBranchEnter,
                    _ => continue,
                };
                push(k, Anchor::Before(cfg.blocks[v].first_real), v, Some(b.last_real));
            }
        }
    }
    for &e in &cfg.exits {
        if live[e] {
            push(JoinpointKind::OnMethodExit, Anchor::Before(cfg.blocks[e].last_real), e, None);
        }
    }
    out.sort_by_key(Joinpoint::sort_key);
    out
}

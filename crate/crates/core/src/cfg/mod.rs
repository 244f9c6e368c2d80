//! Per-method control-flow graphs.
//!
//! Blocks partition a method's instruction list: every instruction, real or
//! pseudo, belongs to exactly one block, and a block owns the labels and line
//! markers that precede its first real instruction.

mod render;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::classfile::opcodes::*;
use crate::classfile::{CodeBody, Insn, Label};

pub use render::{cfg_file_name, render_cfg_html, render_cfg_svg, write_cfg_html};

#[derive(Debug, Error, PartialEq)]
pub enum CfgError {
    #[error("malformed code in {method}: {reason}")]
    MalformedCode { method: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockType {
    Normal,
    ConditionalJump,
    Goto,
    Switch,
    Return,
}

impl BlockType {
    /// Classification by the block's last real instruction.
    pub fn of(last: &Insn) -> BlockType {
        match last.opcode() {
            Some(op) if is_conditional_jump(op) => BlockType::ConditionalJump,
            Some(GOTO) => BlockType::Goto,
            Some(TABLESWITCH | LOOKUPSWITCH) => BlockType::Switch,
            Some(op) if is_return(op) || op == ATHROW || op == RET => BlockType::Return,
            _ => BlockType::Normal,
        }
    }
}

impl fmt::Display for BlockType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    FallThrough,
    /// The jump-taken edge of a conditional jump.
    JumpTrue,
    /// The fall-through edge of a conditional jump.
    JumpFalse,
    Goto,
    /// `None` is the default case.
    SwitchCase(Option<i32>),
    HandlerEntry,
}

impl EdgeKind {
    pub fn label(&self) -> String {
        match self {
            EdgeKind::FallThrough => String::new(),
            EdgeKind::JumpTrue => "True".into(),
            EdgeKind::JumpFalse => "False".into(),
            EdgeKind::Goto => "Goto".into(),
            EdgeKind::SwitchCase(Some(k)) => format!("Case {k}"),
            EdgeKind::SwitchCase(None) => "Case default".into(),
            EdgeKind::HandlerEntry => "Handler".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

/// A basic block. Block references (`successors`, `true_branch`, ...) are
/// positions in [`Cfg::blocks`].
#[derive(Clone, Debug, PartialEq)]
pub struct BasicBlock {
    /// `<methodName>.<index>`.
    pub id: String,
    /// Unique within the class.
    pub index: usize,
    pub block_type: BlockType,
    /// Inclusive range into the method's instruction list.
    pub first: usize,
    pub last: usize,
    pub first_real: usize,
    pub last_real: usize,
    /// Number of real instructions.
    pub size: usize,
    pub successors: Vec<(usize, EdgeKind)>,
    /// Distinct predecessor blocks, ascending.
    pub predecessors: Vec<usize>,
    pub true_branch: Option<usize>,
    pub false_branch: Option<usize>,
    /// Inserted by critical-edge splitting.
    pub synthetic: bool,
}

impl BasicBlock {
    pub fn contains(&self, insn: usize) -> bool {
        (self.first..=self.last).contains(&insn)
    }

    /// Successors excluding exception-handler edges.
    pub fn flow_successors(&self) -> impl Iterator<Item = &(usize, EdgeKind)> {
        self.successors.iter().filter(|(_, k)| *k != EdgeKind::HandlerEntry)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cfg {
    pub method_name: String,
    pub descriptor: String,
    pub blocks: Vec<BasicBlock>,
    pub entry: usize,
    /// Blocks ending in a return or `athrow`.
    pub exits: Vec<usize>,
    pub edges: Vec<Edge>,
}

impl Cfg {
    /// The block owning an instruction position.
    pub fn block_of(&self, insn: usize) -> Option<usize> {
        let i = self.blocks.partition_point(|b| b.last < insn);
        (i < self.blocks.len() && self.blocks[i].contains(insn)).then_some(i)
    }

    pub fn by_index(&self, index: usize) -> Option<&BasicBlock> {
        self.blocks.iter().find(|b| b.index == index)
    }

    pub fn synthetic_count(&self) -> usize {
        self.blocks.iter().filter(|b| b.synthetic).count()
    }

    /// Number of non-handler edges entering each block, counted with
    /// multiplicity.
    pub fn flow_in_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.blocks.len()];
        for e in &self.edges {
            if e.kind != EdgeKind::HandlerEntry {
                d[e.to] += 1;
            }
        }
        d
    }

    /// Edges from a block with several flow successors to a block with
    /// several flow predecessors. Handler edges never count; method entry
    /// counts as a predecessor of the entry block.
    pub fn critical_edges(&self) -> Vec<Edge> {
        let mut indeg = self.flow_in_degrees();
        if let Some(d) = indeg.get_mut(self.entry) {
            *d += 1;
        }
        let mut out = Vec::new();
        for (u, b) in self.blocks.iter().enumerate() {
            if b.flow_successors().count() < 2 {
                continue;
            }
            for &(v, kind) in b.flow_successors() {
                if indeg[v] > 1 {
                    out.push(Edge { from: u, to: v, kind });
                }
            }
        }
        out
    }
}

fn malformed(method: &str, reason: impl Into<String>) -> CfgError {
    CfgError::MalformedCode { method: method.into(), reason: reason.into() }
}

/// Position of the first real instruction at or after `pos`.
fn real_at_or_after(insns: &[Insn], pos: usize) -> Option<usize> {
    (pos..insns.len()).find(|&i| insns[i].is_real())
}

/// Builds the CFG of a method body. Block indices start at `first_index`.
pub fn build_cfg(
    method_name: &str,
    descriptor: &str,
    code: &CodeBody,
    first_index: usize,
) -> Result<Cfg, CfgError> {
    let insns = &code.insns;
    let labels = code.label_positions();
    let target_of = |l: &Label| -> Result<usize, CfgError> {
        let p = *labels.get(l).ok_or_else(|| malformed(method_name, format!("undefined label {l}")))?;
        real_at_or_after(insns, p).ok_or_else(|| malformed(method_name, format!("label {l} is past the last instruction")))
    };

    let first = real_at_or_after(insns, 0).ok_or_else(|| malformed(method_name, "no instructions"))?;
    let mut leaders = BTreeSet::from([first]);
    for (i, insn) in insns.iter().enumerate() {
        let ends_block = insn.is_branching() || insn.opcode() == Some(JSR);
        for t in insn.branch_targets() {
            leaders.insert(target_of(&t)?);
        }
        if ends_block {
            if let Some(n) = real_at_or_after(insns, i + 1) {
                leaders.insert(n);
            }
        }
    }
    for tc in &code.exception_table {
        leaders.insert(target_of(&tc.handler)?);
        target_of(&tc.start)?;
    }

    // A block starts at the pseudo instructions directly before its leader.
    let leaders: Vec<usize> = leaders.into_iter().collect();
    let mut starts = Vec::with_capacity(leaders.len());
    for (k, &l) in leaders.iter().enumerate() {
        let mut s = l;
        while s > 0 && !insns[s - 1].is_real() {
            s -= 1;
        }
        if k == 0 {
            s = 0;
        }
        starts.push(s);
    }

    let mut blocks = Vec::with_capacity(leaders.len());
    for k in 0..leaders.len() {
        let start = starts[k];
        let end = if k + 1 < leaders.len() { starts[k + 1] - 1 } else { insns.len() - 1 };
        let first_real = leaders[k];
        let last_real = (first_real..=end).rev().find(|&i| insns[i].is_real()).unwrap_or(first_real);
        let index = first_index + k;
        blocks.push(BasicBlock {
            id: format!("{method_name}.{index}"),
            index,
            block_type: BlockType::of(&insns[last_real]),
            first: start,
            last: end,
            first_real,
            last_real,
            size: (first_real..=last_real).filter(|&i| insns[i].is_real()).count(),
            successors: Vec::new(),
            predecessors: Vec::new(),
            true_branch: None,
            false_branch: None,
            synthetic: false,
        });
    }

    let block_at: HashMap<usize, usize> = leaders.iter().enumerate().map(|(k, &l)| (l, k)).collect();
    let block_of_label = |l: &Label| -> Result<usize, CfgError> { Ok(block_at[&target_of(l)?]) };
    let mut edges = Vec::new();
    for k in 0..blocks.len() {
        let last = &insns[blocks[k].last_real];
        let next = (k + 1 < blocks.len()).then_some(k + 1);
        match last {
            Insn::Jump { opcode, target } if is_conditional_jump(*opcode) => {
                let t = block_of_label(target)?;
                let f = next.ok_or_else(|| malformed(method_name, "conditional jump falls off the end of the code"))?;
                edges.push(Edge { from: k, to: t, kind: EdgeKind::JumpTrue });
                edges.push(Edge { from: k, to: f, kind: EdgeKind::JumpFalse });
                blocks[k].true_branch = Some(t);
                blocks[k].false_branch = Some(f);
            }
            Insn::Jump { opcode: GOTO, target } => {
                edges.push(Edge { from: k, to: block_of_label(target)?, kind: EdgeKind::Goto });
            }
            Insn::Jump { opcode: JSR, target } => {
                edges.push(Edge { from: k, to: block_of_label(target)?, kind: EdgeKind::Goto });
                if let Some(n) = next {
                    edges.push(Edge { from: k, to: n, kind: EdgeKind::FallThrough });
                }
            }
            Insn::TableSwitch { low, targets, default, .. } => {
                for (j, t) in targets.iter().enumerate() {
                    let key = low.wrapping_add(j as i32);
                    edges.push(Edge { from: k, to: block_of_label(t)?, kind: EdgeKind::SwitchCase(Some(key)) });
                }
                edges.push(Edge { from: k, to: block_of_label(default)?, kind: EdgeKind::SwitchCase(None) });
            }
            Insn::LookupSwitch { pairs, default } => {
                for (key, t) in pairs {
                    edges.push(Edge { from: k, to: block_of_label(t)?, kind: EdgeKind::SwitchCase(Some(*key)) });
                }
                edges.push(Edge { from: k, to: block_of_label(default)?, kind: EdgeKind::SwitchCase(None) });
            }
            other if other.is_unconditional_transfer() => {}
            _ => {
                if let Some(n) = next {
                    edges.push(Edge { from: k, to: n, kind: EdgeKind::FallThrough });
                }
            }
        }
    }

    let mut handler_edges = BTreeSet::new();
    for tc in &code.exception_table {
        let start = target_of(&tc.start)?;
        let from = blocks.partition_point(|b| b.last < start);
        let to = block_of_label(&tc.handler)?;
        if handler_edges.insert((from, to)) {
            edges.push(Edge { from, to, kind: EdgeKind::HandlerEntry });
        }
    }

    let mut preds: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); blocks.len()];
    for e in &edges {
        blocks[e.from].successors.push((e.to, e.kind));
        preds[e.to].insert(e.from);
    }
    for (b, p) in blocks.iter_mut().zip(preds) {
        b.predecessors = p.into_iter().collect();
    }
    let exits = blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| {
            insns[b.last_real].opcode().is_some_and(|op| is_return(op) || op == ATHROW)
        })
        .map(|(k, _)| k)
        .collect();
    Ok(Cfg {
        method_name: method_name.into(),
        descriptor: descriptor.into(),
        blocks,
        entry: 0,
        exits,
        edges,
    })
}

/// Result of [`split_critical_edges`].
#[derive(Clone, Debug)]
pub struct SplitResult {
    pub cfg: Cfg,
    pub code: CodeBody,
    /// Labels heading each synthetic block, in block order.
    pub synthetic_labels: Vec<Label>,
}

/// Inserts a block holding only a `goto` on every critical edge. Blocks on
/// fall-through edges go inline right after the branch; blocks on jump
/// edges go at the end of the code. Original block indices are kept and new
/// blocks take indices from `next_index`.
pub fn split_critical_edges(
    cfg: &Cfg,
    code: &CodeBody,
    next_index: &mut usize,
) -> Result<SplitResult, CfgError> {
    let critical = cfg.critical_edges();
    if critical.is_empty() {
        return Ok(SplitResult { cfg: cfg.clone(), code: code.clone(), synthetic_labels: Vec::new() });
    }
    let mut body = code.clone();
    let mut insns = body.insns.clone();

    let mut head_label: HashMap<usize, Label> = HashMap::new();
    let mut new_heads: BTreeMap<usize, Label> = BTreeMap::new();
    let mut label_for = |v: usize, body: &mut CodeBody| -> Label {
        if let Some(l) = head_label.get(&v) {
            return *l;
        }
        let b = &cfg.blocks[v];
        let l = insns[b.first..b.first_real].iter().find_map(|i| match i {
            Insn::Label(l) => Some(*l),
            _ => None,
        });
        let l = l.unwrap_or_else(|| {
            let l = body.fresh_label();
            new_heads.insert(b.first, l);
            l
        });
        head_label.insert(v, l);
        l
    };

    let mut inline: BTreeMap<usize, Vec<Insn>> = BTreeMap::new();
    let mut appended = Vec::new();
    let mut synthetic_labels = Vec::new();
    let mut retargets = Vec::new();
    for e in &critical {
        let target = label_for(e.to, &mut body);
        let s = body.fresh_label();
        synthetic_labels.push(s);
        let block = [Insn::Label(s), Insn::jump(GOTO, target)];
        let u = &cfg.blocks[e.from];
        match e.kind {
            EdgeKind::FallThrough | EdgeKind::JumpFalse => {
                inline.entry(u.last_real + 1).or_default().extend(block);
            }
            kind => {
                appended.extend(block);
                retargets.push((u.last_real, kind, s));
            }
        }
    }
    for (at, kind, s) in retargets {
        retarget_edge(&mut insns[at], kind, s);
    }

    let mut out = Vec::with_capacity(insns.len() + appended.len() + 4 * inline.len());
    let mut old_to_new = Vec::with_capacity(insns.len());
    for (i, insn) in insns.into_iter().enumerate() {
        if let Some(block) = inline.remove(&i) {
            out.extend(block);
        }
        if let Some(l) = new_heads.remove(&i) {
            out.push(Insn::Label(l));
        }
        old_to_new.push(out.len());
        out.push(insn);
    }
    out.extend(appended);
    body.insns = out;

    let mut split = build_cfg(&cfg.method_name, &cfg.descriptor, &body, 0)?;
    let original: HashMap<usize, usize> =
        cfg.blocks.iter().map(|b| (old_to_new[b.first_real], b.index)).collect();
    for b in &mut split.blocks {
        match original.get(&b.first_real) {
            Some(&index) => b.index = index,
            None => {
                b.index = *next_index;
                *next_index += 1;
                b.synthetic = true;
            }
        }
        b.id = format!("{}.{}", cfg.method_name, b.index);
    }
    Ok(SplitResult { cfg: split, code: body, synthetic_labels })
}

fn retarget_edge(insn: &mut Insn, kind: EdgeKind, to: Label) {
    match (insn, kind) {
        (Insn::Jump { target, .. }, EdgeKind::JumpTrue | EdgeKind::Goto) => *target = to,
        (Insn::TableSwitch { low, targets, .. }, EdgeKind::SwitchCase(Some(k))) => {
            targets[(k as i64 - *low as i64) as usize] = to;
        }
        (Insn::LookupSwitch { pairs, .. }, EdgeKind::SwitchCase(Some(k))) => {
            if let Some(p) = pairs.iter_mut().find(|(key, _)| *key == k) {
                p.1 = to;
            }
        }
        (Insn::TableSwitch { default, .. } | Insn::LookupSwitch { default, .. }, EdgeKind::SwitchCase(None)) => {
            *default = to;
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classfile::TryCatch;

    fn body(insns: Vec<Insn>) -> CodeBody {
        CodeBody::new(insns)
    }

    /// `static int abs(int x) { if (x < 0) return -x; return x; }` as javac emits it.
    pub(crate) fn abs() -> CodeBody {
        body(vec![
            Insn::var(ILOAD, 0),
            Insn::jump(IFGE, Label(0)),
            Insn::var(ILOAD, 0),
            Insn::Simple(INEG),
            Insn::Simple(IRETURN),
            Insn::Label(Label(0)),
            Insn::var(ILOAD, 0),
            Insn::Simple(IRETURN),
        ])
    }

    #[test]
    fn straight_line_is_one_return_block() {
        let c = body(vec![Insn::Simple(ICONST_1), Insn::var(ISTORE, 0), Insn::Simple(RETURN)]);
        let g = build_cfg("f", "()V", &c, 0).unwrap();
        assert_eq!(g.blocks.len(), 1);
        assert_eq!(g.blocks[0].block_type, BlockType::Return);
        assert!(g.edges.is_empty());
        assert_eq!(g.exits, vec![0]);
        assert_eq!(g.blocks[0].id, "f.0");
    }

    #[test]
    fn abs_has_three_blocks() {
        let g = build_cfg("abs", "(I)I", &abs(), 0).unwrap();
        assert_eq!(g.blocks.len(), 3);
        let e = &g.blocks[0];
        assert_eq!(e.block_type, BlockType::ConditionalJump);
        assert_eq!(e.true_branch, Some(2));
        assert_eq!(e.false_branch, Some(1));
        assert_eq!(g.exits, vec![1, 2]);
        assert_eq!((g.blocks[2].first, g.blocks[2].first_real), (5, 6));
        assert!(g.critical_edges().is_empty());
    }

    #[test]
    fn loop_header_has_back_edge() {
        // while (i < n) i++;
        let c = body(vec![
            Insn::Label(Label(0)),
            Insn::var(ILOAD, 0),
            Insn::var(ILOAD, 1),
            Insn::jump(IF_ICMPGE, Label(1)),
            Insn::Iinc { slot: 0, delta: 1 },
            Insn::jump(GOTO, Label(0)),
            Insn::Label(Label(1)),
            Insn::Simple(RETURN),
        ]);
        let g = build_cfg("loop", "(II)V", &c, 0).unwrap();
        assert_eq!(g.blocks.len(), 3);
        assert_eq!(g.blocks[0].block_type, BlockType::ConditionalJump);
        assert_eq!(g.blocks[0].predecessors, vec![1]);
        assert_eq!(g.blocks[1].block_type, BlockType::Goto);
    }

    #[test]
    fn diamond_false_edge_to_merge_is_split() {
        // if (x == 0) y = 1; return;  with the false edge reaching the merge
        let c = body(vec![
            Insn::var(ILOAD, 0),
            Insn::jump(IFNE, Label(0)),
            Insn::Simple(ICONST_1),
            Insn::var(ISTORE, 1),
            Insn::Label(Label(0)),
            Insn::Simple(RETURN),
        ]);
        let g = build_cfg("d", "(I)V", &c, 0).unwrap();
        let crit = g.critical_edges();
        assert_eq!(crit, vec![Edge { from: 0, to: 2, kind: EdgeKind::JumpTrue }]);
        let mut next = 10;
        let s = split_critical_edges(&g, &c, &mut next).unwrap();
        assert!(s.cfg.critical_edges().is_empty());
        assert_eq!(s.cfg.synthetic_count(), 1);
        assert_eq!(next, 11);
        let syn = s.cfg.blocks.iter().find(|b| b.synthetic).unwrap();
        assert_eq!(syn.size, 1);
        assert_eq!(s.code.insns[syn.first_real].opcode(), Some(GOTO));
        assert_eq!(syn.id, "d.10");
        assert_eq!(s.cfg.blocks[0].true_branch.map(|t| s.cfg.blocks[t].synthetic), Some(true));
        let originals: Vec<usize> = s.cfg.blocks.iter().filter(|b| !b.synthetic).map(|b| b.index).collect();
        assert_eq!(originals, vec![0, 1, 2]);
    }

    #[test]
    fn jump_to_own_fall_through_splits_both_edges() {
        let c = body(vec![
            Insn::var(ILOAD, 0),
            Insn::jump(IFEQ, Label(0)),
            Insn::Label(Label(0)),
            Insn::Simple(RETURN),
        ]);
        let g = build_cfg("j", "(I)V", &c, 0).unwrap();
        assert_eq!(g.critical_edges().len(), 2);
        let s = split_critical_edges(&g, &c, &mut 2).unwrap();
        assert!(s.cfg.critical_edges().is_empty());
        let e = &s.cfg.blocks[0];
        assert_ne!(e.true_branch, e.false_branch);
        assert_eq!(s.cfg.synthetic_count(), 2);
    }

    #[test]
    fn switch_cases_are_labelled() {
        let c = body(vec![
            Insn::var(ILOAD, 0),
            Insn::TableSwitch { low: 1, high: 2, default: Label(2), targets: vec![Label(0), Label(1)] },
            Insn::Label(Label(0)),
            Insn::Simple(RETURN),
            Insn::Label(Label(1)),
            Insn::Simple(RETURN),
            Insn::Label(Label(2)),
            Insn::Simple(RETURN),
        ]);
        let g = build_cfg("s", "(I)V", &c, 0).unwrap();
        assert_eq!(g.blocks[0].block_type, BlockType::Switch);
        let kinds: Vec<EdgeKind> = g.blocks[0].successors.iter().map(|s| s.1).collect();
        assert_eq!(kinds, vec![EdgeKind::SwitchCase(Some(1)), EdgeKind::SwitchCase(Some(2)), EdgeKind::SwitchCase(None)]);
    }

    #[test]
    fn handler_entry_is_a_summarized_edge() {
        let mut c = body(vec![
            Insn::Label(Label(0)),
            Insn::method(INVOKESTATIC, "A", "f", "()V"),
            Insn::method(INVOKESTATIC, "A", "g", "()V"),
            Insn::Label(Label(1)),
            Insn::Simple(RETURN),
            Insn::Label(Label(2)),
            Insn::var(ASTORE, 0),
            Insn::Simple(RETURN),
        ]);
        c.exception_table.push(TryCatch { start: Label(0), end: Label(1), handler: Label(2), catch_type: None });
        let g = build_cfg("h", "()V", &c, 0).unwrap();
        assert_eq!(g.blocks.len(), 2);
        assert_eq!(g.edges, vec![Edge { from: 0, to: 1, kind: EdgeKind::HandlerEntry }]);
        assert_eq!(g.blocks[0].block_type, BlockType::Return);
    }

    #[test]
    fn block_of_finds_owner() {
        let g = build_cfg("abs", "(I)I", &abs(), 0).unwrap();
        let owners: Vec<usize> = (0..8).map(|i| g.block_of(i).unwrap()).collect();
        assert_eq!(owners, vec![0, 0, 1, 1, 1, 2, 2, 2]);
    }
}

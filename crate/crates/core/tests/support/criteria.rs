//! Checks behind the acceptance criteria, shared by the topical test files
//! and the acceptance target. Each returns a one-line summary on success
//! and a description of the first failures otherwise.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use weft::analysis::{compute_frames, recompute_max, step, BasicInterpreter, ClassHierarchy, Frame, Interpreter, VType};
use weft::cfg::{build_cfg, split_critical_edges, BlockType, Cfg, EdgeKind};
use weft::classfile::{emit_class, parse_class, ClassModel, CodeBody, Insn, MethodDescriptor, MethodModel};
use weft::joinpoint::JoinpointKind;
use weft::transformers::{builtin, BUILTIN_NAMES};
use weft::{run_pipeline, PipelineConfig};

use super::fixtures::{fixture_class, weave, Printer, FIXTURE};
use super::minivm::{Vm, V};
use super::{corpus, corpus_models};

pub type Verdict = Result<String, String>;

fn verdict(failures: Vec<String>, ok: String) -> Verdict {
    if failures.is_empty() {
        Ok(ok)
    } else {
        let n = failures.len();
        let shown: Vec<_> = failures.into_iter().take(8).collect();
        Err(format!("{n} failures; first: {}", shown.join(" | ")))
    }
}

/// Every method with code in the corpus: `(class, method)`.
pub fn corpus_methods(models: &[ClassModel]) -> Vec<(&ClassModel, &MethodModel, &CodeBody)> {
    models
        .iter()
        .flat_map(|c| c.methods.iter().filter_map(move |m| m.code.as_ref().map(|code| (c, m, code))))
        .collect()
}

pub fn corpus_hierarchy(models: &[ClassModel]) -> ClassHierarchy {
    let mut h = ClassHierarchy::new();
    for c in models {
        h.add_class(c);
    }
    h
}

/// Parse and re-emit every corpus class; at least ten must come back
/// byte-identical and the whole pass must take under a second.
pub fn round_trip() -> Verdict {
    let classes = corpus();
    let start = Instant::now();
    let mut identical = 0;
    let mut failures = Vec::new();
    for (name, bytes) in &classes {
        match parse_class(bytes).and_then(|m| emit_class(&m)) {
            Ok(out) if out == *bytes => identical += 1,
            Ok(_) => failures.push(format!("{name}: bytes differ")),
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    if identical < 10 {
        failures.push(format!("only {identical} classes byte-identical"));
    }
    if elapsed.as_secs_f64() >= 1.0 {
        failures.push(format!("took {elapsed:?}"));
    }
    verdict(failures, format!("{identical}/{} classes byte-identical in {elapsed:?}", classes.len()))
}

/// Classification of a block by the opcode of its last instruction, from
/// the opcode numbering of the class-file format.
pub fn expected_block_type(opcode: u8) -> BlockType {
    match opcode {
        0x99..=0xa6 | 0xc6 | 0xc7 => BlockType::ConditionalJump,
        0xa7 | 0xc8 => BlockType::Goto,
        0xaa | 0xab => BlockType::Switch,
        0xa9 | 0xac..=0xb1 | 0xbf => BlockType::Return,
        _ => BlockType::Normal,
    }
}

/// True for opcodes after which control never falls through or which
/// transfer control: jumps, switches, returns, `athrow`, `jsr`, `ret`.
fn ends_block(opcode: u8) -> bool {
    matches!(opcode, 0x99..=0xb1 | 0xbf | 0xc6..=0xc9)
}

fn real_at_or_after(insns: &[Insn], pos: usize) -> Option<usize> {
    (pos..insns.len()).find(|&i| insns[i].is_real())
}

/// Leaders recomputed from scratch: the first instruction, branch and
/// handler targets, and instructions following a block-ending opcode.
fn leaders(code: &CodeBody) -> BTreeSet<usize> {
    let labels = code.label_positions();
    let insns = &code.insns;
    let mut out = BTreeSet::new();
    out.extend(real_at_or_after(insns, 0));
    for (i, insn) in insns.iter().enumerate() {
        let targets = match insn {
            Insn::Jump { target, .. } => vec![*target],
            Insn::TableSwitch { default, targets, .. } => targets.iter().chain([default]).copied().collect(),
            Insn::LookupSwitch { default, pairs } => pairs.iter().map(|p| p.1).chain([*default]).collect(),
            _ => Vec::new(),
        };
        for t in targets {
            out.extend(real_at_or_after(insns, labels[&t]));
        }
        if insn.opcode().is_some_and(ends_block) {
            out.extend(real_at_or_after(insns, i + 1));
        }
    }
    for tc in &code.exception_table {
        out.extend(real_at_or_after(insns, labels[&tc.handler]));
    }
    out
}

/// Critical edges recomputed from the edge list: source with two or more
/// flow successors, target with two or more flow predecessors, counting
/// method entry as a predecessor of the entry block.
pub fn critical_edge_count(cfg: &Cfg) -> usize {
    let flow: Vec<_> = cfg.edges.iter().filter(|e| e.kind != EdgeKind::HandlerEntry).collect();
    let mut outd = vec![0; cfg.blocks.len()];
    let mut ind = vec![0; cfg.blocks.len()];
    ind[cfg.entry] += 1;
    for e in &flow {
        outd[e.from] += 1;
        ind[e.to] += 1;
    }
    flow.iter().filter(|e| outd[e.from] > 1 && ind[e.to] > 1).count()
}

pub fn check_structure(cfg: &Cfg, code: &CodeBody, fail: &mut Vec<String>, tag: &str) {
    let n = code.insns.len();
    // Partition: contiguous, ordered, covering every position once.
    let mut next = 0;
    for b in &cfg.blocks {
        if b.first != next || b.last < b.first {
            fail.push(format!("{tag}: block {} spans {}..={} after {next}", b.index, b.first, b.last));
            return;
        }
        next = b.last + 1;
        let real: Vec<usize> = (b.first..=b.last).filter(|&i| code.insns[i].is_real()).collect();
        if real.first() != Some(&b.first_real) || real.last() != Some(&b.last_real) || real.len() != b.size {
            fail.push(format!("{tag}: block {} real range or size wrong", b.index));
        }
    }
    if next != n {
        fail.push(format!("{tag}: blocks cover {next} of {n} positions"));
    }
    let starts: BTreeSet<usize> = cfg.blocks.iter().map(|b| b.first_real).collect();
    if starts != leaders(code) {
        fail.push(format!("{tag}: block starts differ from leaders"));
    }
    // Symmetry between successor lists, predecessor lists and edges.
    for e in &cfg.edges {
        if !cfg.blocks[e.from].successors.contains(&(e.to, e.kind)) {
            fail.push(format!("{tag}: edge {}->{} missing from successors", e.from, e.to));
        }
    }
    for (u, b) in cfg.blocks.iter().enumerate() {
        for &(v, _) in &b.successors {
            if !cfg.blocks[v].predecessors.contains(&u) {
                fail.push(format!("{tag}: {u}->{v} not mirrored in predecessors"));
            }
        }
        for &p in &b.predecessors {
            if !cfg.blocks[p].successors.iter().any(|s| s.0 == u) {
                fail.push(format!("{tag}: {p} listed as predecessor of {u} without the edge"));
            }
        }
        if b.successors.len() != cfg.edges.iter().filter(|e| e.from == u).count() {
            fail.push(format!("{tag}: successor count of {u} differs from edges"));
        }
        let op = code.insns[b.last_real].opcode().unwrap_or(0);
        if b.block_type != expected_block_type(op) {
            fail.push(format!("{tag}: block {} is {:?}, opcode {op:#x} says {:?}", b.index, b.block_type, expected_block_type(op)));
        }
    }
}

/// Partition, edge symmetry, leader placement, block classification and
/// the absence of critical edges after splitting, over every corpus method.
pub fn cfg_properties() -> Verdict {
    let models = corpus_models();
    let methods = corpus_methods(&models);
    let mut fail = Vec::new();
    let (mut split_methods, mut split_edges) = (0, 0);
    for (c, m, code) in &methods {
        let tag = format!("{}.{}{}", c.this_class, m.name, m.descriptor);
        let cfg = match build_cfg(&m.name, &m.descriptor, code, 0) {
            Ok(cfg) => cfg,
            Err(e) => {
                fail.push(format!("{tag}: {e}"));
                continue;
            }
        };
        check_structure(&cfg, code, &mut fail, &tag);
        let before = critical_edge_count(&cfg);
        if before != cfg.critical_edges().len() {
            fail.push(format!("{tag}: critical edge count {before} vs {}", cfg.critical_edges().len()));
        }
        let mut next = cfg.blocks.len();
        let s = match split_critical_edges(&cfg, code, &mut next) {
            Ok(s) => s,
            Err(e) => {
                fail.push(format!("{tag}: split: {e}"));
                continue;
            }
        };
        check_structure(&s.cfg, &s.code, &mut fail, &format!("{tag} (split)"));
        if critical_edge_count(&s.cfg) != 0 {
            fail.push(format!("{tag}: critical edges remain after splitting"));
        }
        if s.cfg.synthetic_count() != before {
            fail.push(format!("{tag}: {} synthetic blocks for {before} critical edges", s.cfg.synthetic_count()));
        }
        for b in s.cfg.blocks.iter().filter(|b| b.synthetic) {
            if b.size != 1 || b.block_type != BlockType::Goto {
                fail.push(format!("{tag}: synthetic block {} is not a lone goto", b.index));
            }
        }
        if before > 0 {
            split_methods += 1;
            split_edges += before;
        }
    }
    if methods.len() < 50 {
        fail.push(format!("only {} methods", methods.len()));
    }
    verdict(
        fail,
        format!("{} methods; {split_edges} critical edges in {split_methods} methods, none after splitting", methods.len()),
    )
}

/// Operand-stack effect in slots, from the opcode's definition. `None` for
/// opcodes without a successor on the same stack (returns, `athrow`, `ret`).
pub fn stack_effect(insn: &Insn) -> Option<i32> {
    let op = insn.opcode()?;
    let desc_size = |d: &str| weft::classfile::FieldType::parse(d).map(|t| t.slots() as i32).unwrap();
    let invoke = |d: &str, receiver: bool| {
        let d = MethodDescriptor::parse(d).unwrap();
        let args: i32 = d.params.iter().map(|p| p.slots() as i32).sum();
        d.ret.as_ref().map_or(0, |r| r.slots() as i32) - args - i32::from(receiver)
    };
    Some(match op {
        0x00 => 0,
        0x01..=0x08 => 1,
        0x09 | 0x0a => 2,
        0x0b..=0x0d => 1,
        0x0e | 0x0f => 2,
        0x10..=0x13 => 1,
        0x14 => 2,
        0x15 | 0x17 | 0x19 => 1,
        0x16 | 0x18 => 2,
        0x1a..=0x1d | 0x22..=0x25 | 0x2a..=0x2d => 1,
        0x1e..=0x21 | 0x26..=0x29 => 2,
        0x2e | 0x30 | 0x32..=0x35 => -1,
        0x2f | 0x31 => 0,
        0x36 | 0x38 | 0x3a => -1,
        0x37 | 0x39 => -2,
        0x3b..=0x3e | 0x43..=0x46 | 0x4b..=0x4e => -1,
        0x3f..=0x42 | 0x47..=0x4a => -2,
        0x4f | 0x51 | 0x53..=0x56 => -3,
        0x50 | 0x52 => -4,
        0x57 => -1,
        0x58 => -2,
        0x59..=0x5b => 1,
        0x5c..=0x5e => 2,
        0x5f => 0,
        // add, sub, mul, div, rem in int, long, float, double order
        0x60..=0x73 => match (op - 0x60) % 4 {
            1 | 3 => -2,
            _ => -1,
        },
        0x74..=0x77 => 0,
        0x78..=0x7d => -1,
        0x7e | 0x80 | 0x82 => -1,
        0x7f | 0x81 | 0x83 => -2,
        0x84 => 0,
        0x85 | 0x87 => 1,
        0x86 => 0,
        0x88 | 0x89 => -1,
        0x8a => 0,
        0x8b => 0,
        0x8c | 0x8d => 1,
        0x8e | 0x90 => -1,
        0x8f => 0,
        0x91..=0x93 => 0,
        0x94 | 0x97 | 0x98 => -3,
        0x95 | 0x96 => -1,
        0x99..=0x9e => -1,
        0x9f..=0xa6 => -2,
        0xa7 | 0xc8 => 0,
        0xa8 | 0xc9 => 1,
        0xaa | 0xab => -1,
        0xa9 | 0xac..=0xb1 | 0xbf => return None,
        0xb2..=0xb5 => {
            let Insn::Field { descriptor, .. } = insn else { unreachable!() };
            let s = desc_size(descriptor);
            match op {
                0xb2 => s,
                0xb3 => -s,
                0xb4 => s - 1,
                _ => -s - 1,
            }
        }
        0xb6..=0xb9 => {
            let Insn::Method { descriptor, .. } = insn else { unreachable!() };
            invoke(descriptor, op != 0xb8)
        }
        0xba => {
            let Insn::InvokeDynamic { descriptor, .. } = insn else { unreachable!() };
            invoke(descriptor, false)
        }
        0xbb => 1,
        0xbc..=0xbe | 0xc0 | 0xc1 => 0,
        0xc2 | 0xc3 => -1,
        0xc5 => {
            let Insn::MultiANewArray { dims, .. } = insn else { unreachable!() };
            1 - *dims as i32
        }
        0xc6 | 0xc7 => -1,
        other => panic!("no stack effect for opcode {other:#x}"),
    })
}

/// Positions control can reach directly from instruction `i`, excluding
/// exception handlers.
fn flow_targets(code: &CodeBody, labels: &HashMap<weft::classfile::Label, usize>, i: usize) -> Vec<usize> {
    let insn = &code.insns[i];
    let mut out: Vec<usize> = insn.branch_targets().iter().map(|l| labels[l]).collect();
    let falls = match insn.opcode() {
        None => true,
        Some(op) => !matches!(op, 0xa7 | 0xa9 | 0xaa | 0xab | 0xac..=0xb1 | 0xbf | 0xc8),
    };
    if falls && i + 1 < code.insns.len() {
        out.push(i + 1);
    }
    out
}

fn frames_equal_after_merge(interp: &BasicInterpreter<'_>, at: usize, stored: &Frame<VType>, incoming: &Frame<VType>) -> bool {
    if stored.stack.len() != incoming.stack.len() || stored.locals.len() != incoming.locals.len() {
        return false;
    }
    let same = |a: &VType, b: &VType| interp.merge(at, a, b).is_ok_and(|m| m == *a);
    stored.stack.iter().zip(&incoming.stack).all(|(a, b)| same(a, b))
        && stored.locals.iter().zip(&incoming.locals).all(|(a, b)| same(a, b))
}

/// Fixpoint stability, stack-height conservation against [`stack_effect`],
/// and recomputed maxima no larger than the compiler's, over every corpus
/// method.
pub fn dataflow() -> Verdict {
    let models = corpus_models();
    let hierarchy = corpus_hierarchy(&models);
    let methods = corpus_methods(&models);
    let mut fail = Vec::new();
    let (mut edges, mut tighter) = (0usize, 0usize);
    for (c, m, code) in &methods {
        let tag = format!("{}.{}{}", c.this_class, m.name, m.descriptor);
        let a = match compute_frames(&c.this_class, m, code, &hierarchy) {
            Ok(a) => a,
            Err(e) => {
                fail.push(format!("{tag}: {e}"));
                continue;
            }
        };
        let again = compute_frames(&c.this_class, m, code, &hierarchy).unwrap();
        if again.frames != a.frames {
            fail.push(format!("{tag}: analysis is not deterministic"));
        }
        let interp = BasicInterpreter::new(&hierarchy, &c.this_class, &code.insns);
        let labels = code.label_positions();
        for (i, f) in a.frames.iter().enumerate() {
            let Some(f) = f else { continue };
            let insn = &code.insns[i];
            let mut out = f.clone();
            if let Err(e) = step(&interp, i, insn, &mut out) {
                fail.push(format!("{tag}@{i}: {e}"));
                continue;
            }
            let effect = if insn.is_real() { stack_effect(insn) } else { Some(0) };
            for t in flow_targets(code, &labels, i) {
                edges += 1;
                let Some(stored) = &a.frames[t] else {
                    fail.push(format!("{tag}: {i}->{t} reaches a frameless position"));
                    continue;
                };
                if let Some(d) = effect {
                    if stored.stack_slots() as i32 != f.stack_slots() as i32 + d {
                        fail.push(format!(
                            "{tag}@{i} {}: height {} -> {}, effect {d}",
                            insn.display(),
                            f.stack_slots(),
                            stored.stack_slots()
                        ));
                    }
                }
                if !frames_equal_after_merge(&interp, t, stored, &out) {
                    fail.push(format!("{tag}: frame at {t} changes when merged with the output of {i}"));
                }
            }
        }
        match recompute_max(&c.this_class, m, code, &hierarchy) {
            Ok((s, l)) => {
                if s > code.max_stack || l > code.max_locals {
                    fail.push(format!("{tag}: recomputed ({s}, {l}) exceeds ({}, {})", code.max_stack, code.max_locals));
                }
                if (s, l) != (code.max_stack, code.max_locals) {
                    tighter += 1;
                }
            }
            Err(e) => fail.push(format!("{tag}: {e}")),
        }
    }
    verdict(
        fail,
        format!("{} methods, {edges} flow edges stable and height-conserving; {tighter} with tighter maxima", methods.len()),
    )
}

/// Two pipeline runs with every built-in transformer over the corpus give
/// byte-identical classes.
pub fn determinism() -> Verdict {
    let models = corpus_models();
    let hierarchy = corpus_hierarchy(&models);
    let config = PipelineConfig::default();
    let mut fail = Vec::new();
    let mut changed = 0;
    for name in BUILTIN_NAMES {
        let t = builtin(name).unwrap();
        for c in &models {
            let run = || run_pipeline(c, t.as_ref(), &config, &hierarchy).map(|(m, _)| emit_class(&m).unwrap());
            match (run(), run()) {
                (Ok(a), Ok(b)) if a == b => changed += 1,
                (Ok(_), Ok(_)) => fail.push(format!("{name} {}: runs differ", c.this_class)),
                (Err(e), _) | (_, Err(e)) => fail.push(format!("{name} {}: {e}", c.this_class)),
            }
        }
    }
    verdict(fail, format!("{changed} class weavings byte-identical across runs"))
}

/// One expected trace of a woven fixture method.
pub struct PlacementCase {
    pub name: &'static str,
    pub kinds: Vec<JoinpointKind>,
    pub args: bool,
    pub method: &'static str,
    pub desc: &'static str,
    pub input: Vec<V>,
    pub expected: Vec<&'static str>,
}

fn case(
    name: &'static str,
    kinds: &[JoinpointKind],
    method: &'static str,
    desc: &'static str,
    input: Vec<V>,
    expected: &[&'static str],
) -> PlacementCase {
    PlacementCase { name, kinds: kinds.to_vec(), args: false, method, desc, input, expected: expected.to_vec() }
}

/// The placement suite: one case per joinpoint kind and placement
/// exception, plus shared-location ordering with every kind enabled.
pub fn placement_cases() -> Vec<PlacementCase> {
    use JoinpointKind::*;
    let all = JoinpointKind::ALL;
    let mut calls = case(
        "method calls surround the invoke with argument and result",
        &[BeforeMethodCall, AfterMethodCall],
        "call",
        "(I)I",
        vec![V::I(3)],
        // The argument is spilled to a temporary and reloaded before the
        // call, copied to a capture local for the after-call joinpoint, and
        // the result is spilled and reloaded after it.
        &[
            "iload",
            "> BeforeMethodCall f",
            "istore",
            "iload",
            "iload",
            "> 3",
            "istore",
            "iload",
            "invokestatic",
            "> AfterMethodCall f",
            "iload",
            "> 3",
            "istore",
            "iload",
            "iload",
            "> 3",
            "ireturn",
        ],
    );
    calls.args = true;
    vec![
        case(
            "method enter runs once before the first instruction",
            &[OnMethodEnter],
            "abs",
            "(I)I",
            vec![V::I(-5)],
            &["> OnMethodEnter", "iload", "ifge", "iload", "ineg", "ireturn"],
        ),
        case(
            "method enter runs once even when the entry block loops",
            &[OnMethodEnter],
            "countdown",
            "(I)V",
            vec![V::I(2)],
            &["> OnMethodEnter", "iinc", "iload", "ifgt", "iinc", "iload", "ifgt", "return"],
        ),
        case(
            "block enter runs before each block's first instruction",
            &[OnBasicBlockEnter],
            "abs",
            "(I)I",
            vec![V::I(-5)],
            &["> OnBasicBlockEnter 0", "iload", "ifge", "> OnBasicBlockEnter 1", "iload", "ineg", "ireturn"],
        ),
        case(
            "block enter runs on every entry of a looping entry block",
            &[OnBasicBlockEnter],
            "countdown",
            "(I)V",
            vec![V::I(2)],
            &[
                "> OnBasicBlockEnter 0",
                "iinc",
                "iload",
                "ifgt",
                "> OnBasicBlockEnter 0",
                "iinc",
                "iload",
                "ifgt",
                "> OnBasicBlockEnter 1",
                "return",
            ],
        ),
        case(
            "true branch enter runs only when the jump is taken",
            &[OnTrueBranchEnter, OnFalseBranchEnter],
            "abs",
            "(I)I",
            vec![V::I(5)],
            &["iload", "ifge", "> OnTrueBranchEnter", "iload", "ireturn"],
        ),
        case(
            "false branch enter runs only on fall-through",
            &[OnTrueBranchEnter, OnFalseBranchEnter],
            "abs",
            "(I)I",
            vec![V::I(-5)],
            &["iload", "ifge", "> OnFalseBranchEnter", "iload", "ineg", "ireturn"],
        ),
        case(
            "true branch enter on a critical edge runs in the split block only",
            &[OnTrueBranchEnter, OnFalseBranchEnter],
            "pick",
            "(I)I",
            vec![V::I(0)],
            &["iload", "ifeq", "> OnTrueBranchEnter", "goto", "iload", "ireturn"],
        ),
        case(
            "the join block of a critical edge gets no true branch advice on fall-through",
            &[OnTrueBranchEnter, OnFalseBranchEnter],
            "pick",
            "(I)I",
            vec![V::I(1)],
            &["iload", "ifeq", "> OnFalseBranchEnter", "iinc", "iload", "ireturn"],
        ),
        case(
            "before instruction at block entry runs after the instruction",
            &[BeforeInstruction],
            "abs",
            "(I)I",
            vec![V::I(-5)],
            &[
                "iload",
                "> BeforeInstruction iload",
                "> BeforeInstruction ifge",
                "ifge",
                "iload",
                "> BeforeInstruction iload",
                "> BeforeInstruction ineg",
                "ineg",
                "> BeforeInstruction ireturn",
                "ireturn",
            ],
        ),
        calls,
        case(
            "after instruction at block exit runs before the instruction",
            &[AfterInstruction],
            "abs",
            "(I)I",
            vec![V::I(-5)],
            &[
                "iload",
                "> AfterInstruction iload",
                "> AfterInstruction ifge",
                "ifge",
                "iload",
                "> AfterInstruction iload",
                "ineg",
                "> AfterInstruction ineg",
                "> AfterInstruction ireturn",
                "ireturn",
            ],
        ),
        case(
            "after instruction at a plain block exit still runs before it",
            &[AfterInstruction],
            "loop",
            "()I",
            vec![],
            &[
                "iconst_0",
                "> AfterInstruction iconst_0",
                "> AfterInstruction istore",
                "istore",
                "iload",
                "> AfterInstruction iload",
                "iconst_2",
                "> AfterInstruction iconst_2",
                "> AfterInstruction if_icmpge",
                "if_icmpge",
                "iinc",
                "> AfterInstruction iinc",
                "> AfterInstruction goto",
                "goto",
                "iload",
                "> AfterInstruction iload",
                "iconst_2",
                "> AfterInstruction iconst_2",
                "> AfterInstruction if_icmpge",
                "if_icmpge",
                "iinc",
                "> AfterInstruction iinc",
                "> AfterInstruction goto",
                "goto",
                "iload",
                "> AfterInstruction iload",
                "iconst_2",
                "> AfterInstruction iconst_2",
                "> AfterInstruction if_icmpge",
                "if_icmpge",
                "iload",
                "> AfterInstruction iload",
                "> AfterInstruction ireturn",
                "ireturn",
            ],
        ),
        case(
            "block exit runs after a plain last instruction and before jumps and returns",
            &[OnBasicBlockExit],
            "loop",
            "()I",
            vec![],
            &[
                "iconst_0",
                "istore",
                "> OnBasicBlockExit 0",
                "iload",
                "iconst_2",
                "> OnBasicBlockExit 1",
                "if_icmpge",
                "iinc",
                "> OnBasicBlockExit 2",
                "goto",
                "iload",
                "iconst_2",
                "> OnBasicBlockExit 1",
                "if_icmpge",
                "iinc",
                "> OnBasicBlockExit 2",
                "goto",
                "iload",
                "iconst_2",
                "> OnBasicBlockExit 1",
                "if_icmpge",
                "iload",
                "> OnBasicBlockExit 3",
                "ireturn",
            ],
        ),
        case(
            "method exit runs before the return",
            &[OnMethodExit],
            "abs",
            "(I)I",
            vec![V::I(-5)],
            &["iload", "ifge", "iload", "ineg", "> OnMethodExit", "ireturn"],
        ),
        case(
            "method exit runs before athrow",
            &[OnMethodExit, OnBasicBlockExit],
            "thrower",
            "()V",
            vec![],
            &["aconst_null", "> OnBasicBlockExit 0", "> OnMethodExit", "athrow"],
        ),
        case(
            "all kinds at one return follow rank order",
            &all,
            "ret",
            "()V",
            vec![],
            &[
                "> OnMethodEnter",
                "> OnBasicBlockEnter 0",
                "> BeforeInstruction return",
                "> AfterInstruction return",
                "> OnBasicBlockExit 0",
                "> OnMethodExit",
                "return",
            ],
        ),
        case(
            "all kinds around a leading call follow rank order",
            &all,
            "callg",
            "()V",
            vec![],
            &[
                "> OnMethodEnter",
                "> OnBasicBlockEnter 0",
                "> BeforeMethodCall g",
                "invokestatic",
                "> BeforeInstruction invokestatic",
                "> AfterMethodCall g",
                "> AfterInstruction invokestatic",
                "> BeforeInstruction return",
                "> AfterInstruction return",
                "> OnBasicBlockExit 0",
                "> OnMethodExit",
                "return",
            ],
        ),
        case(
            "all kinds on a taken critical edge follow rank order",
            &all,
            "pick",
            "(I)I",
            vec![V::I(0)],
            &[
                "> OnMethodEnter",
                "> OnBasicBlockEnter 0",
                "iload",
                "> BeforeInstruction iload",
                "> AfterInstruction iload",
                "> BeforeInstruction ifeq",
                "> AfterInstruction ifeq",
                "> OnBasicBlockExit 0",
                "ifeq",
                "> OnBasicBlockEnter 3",
                "> OnTrueBranchEnter",
                "> BeforeInstruction goto",
                "> AfterInstruction goto",
                "> OnBasicBlockExit 3",
                "goto",
                "> OnBasicBlockEnter 2",
                "iload",
                "> BeforeInstruction iload",
                "> AfterInstruction iload",
                "> BeforeInstruction ireturn",
                "> AfterInstruction ireturn",
                "> OnBasicBlockExit 2",
                "> OnMethodExit",
                "ireturn",
            ],
        ),
        case(
            "all kinds on the fall-through edge follow rank order",
            &all,
            "pick",
            "(I)I",
            vec![V::I(1)],
            &[
                "> OnMethodEnter",
                "> OnBasicBlockEnter 0",
                "iload",
                "> BeforeInstruction iload",
                "> AfterInstruction iload",
                "> BeforeInstruction ifeq",
                "> AfterInstruction ifeq",
                "> OnBasicBlockExit 0",
                "ifeq",
                "> OnBasicBlockEnter 1",
                "> OnFalseBranchEnter",
                "> AfterInstruction iinc",
                "iinc",
                "> BeforeInstruction iinc",
                "> OnBasicBlockExit 1",
                "> OnBasicBlockEnter 2",
                "iload",
                "> BeforeInstruction iload",
                "> AfterInstruction iload",
                "> BeforeInstruction ireturn",
                "> AfterInstruction ireturn",
                "> OnBasicBlockExit 2",
                "> OnMethodExit",
                "ireturn",
            ],
        ),
    ]
}

/// Trace of `case` run on the mini interpreter, and whether the uninstrumented
/// method behaves the same.
pub fn run_case(c: &PlacementCase) -> Result<Vec<String>, String> {
    let mut printer = Printer::new(&c.kinds);
    printer.args = c.args;
    let woven = weave(&printer, c.method);
    let plain = fixture_class();
    let mut vm = Vm::new(&woven);
    let out = vm.call(c.method, c.desc, c.input.clone());
    let mut base = Vm::new(&plain);
    let base_out = base.call(c.method, c.desc, c.input.clone());
    if out != base_out {
        return Err(format!("result {out:?} differs from uninstrumented {base_out:?}"));
    }
    let adds_code = c.args || c.kinds.iter().any(|k| k.is_branch());
    if !adds_code && super::minivm::program_only(&vm.trace) != base.trace {
        return Err("program instructions differ from the uninstrumented run".into());
    }
    if base.calls != vm.calls {
        return Err("external calls differ from the uninstrumented run".into());
    }
    Ok(vm.trace)
}

/// Every placement case produces exactly its expected trace.
pub fn placement() -> Verdict {
    let cases = placement_cases();
    let mut fail = Vec::new();
    for c in &cases {
        match run_case(c) {
            Ok(t) if t == c.expected => {}
            Ok(t) => fail.push(format!("{}: got {t:?}", c.name)),
            Err(e) => fail.push(format!("{}: {e}", c.name)),
        }
    }
    let kinds: BTreeSet<JoinpointKind> = cases.iter().flat_map(|c| c.kinds.iter().copied()).collect();
    if kinds.len() != JoinpointKind::ALL.len() {
        fail.push("not every joinpoint kind is exercised".into());
    }
    verdict(fail, format!("{} {FIXTURE} traces match", cases.len()))
}

//! Hand-assembled micro-fixtures and a transformer that prints the name of
//! every joinpoint it is called for.

use std::collections::BTreeSet;

use weft::analysis::ClassHierarchy;
use weft::classfile::access::{ACC_PUBLIC, ACC_STATIC, ACC_SUPER};
use weft::classfile::opcodes::*;
use weft::classfile::{ClassModel, CodeBody, Insn, Label, MethodModel};
use weft::joinpoint::{BasicBlockCtx, InstructionCtx, JoinpointKind, MethodCallCtx, MethodCtx, Scope};
use weft::transformers::{Cb, Transformer};
use weft::weaver::Instrumenter;
use weft::{run_pipeline, PipelineConfig};

use super::jvm::finish;

pub const FIXTURE: &str = "Fx";
pub const PROBE: &str = "Probe";

fn method(name: &str, desc: &str, insns: Vec<Insn>) -> MethodModel {
    let mut m = MethodModel::new(ACC_PUBLIC | ACC_STATIC, name, desc, Some(CodeBody::new(insns)));
    finish(FIXTURE, &mut m);
    m
}

/// `abs(I)I`: blocks 0 `[iload ifge]`, 1 `[iload ineg ireturn]`,
/// 2 `[iload ireturn]`.
pub fn abs() -> MethodModel {
    let l = Label(0);
    method(
        "abs",
        "(I)I",
        vec![
            Insn::var(ILOAD, 0),
            Insn::jump(IFGE, l),
            Insn::var(ILOAD, 0),
            Insn::Simple(INEG),
            Insn::Simple(IRETURN),
            Insn::Label(l),
            Insn::var(ILOAD, 0),
            Insn::Simple(IRETURN),
        ],
    )
}

/// `countdown(I)V`: a single loop block that is also the entry block.
pub fn countdown() -> MethodModel {
    let l = Label(0);
    method(
        "countdown",
        "(I)V",
        vec![
            Insn::Label(l),
            Insn::Iinc { slot: 0, delta: -1 },
            Insn::var(ILOAD, 0),
            Insn::jump(IFGT, l),
            Insn::Simple(RETURN),
        ],
    )
}

/// `pick(I)I`: `ifeq` jumps straight to the join block, so its true edge
/// is critical.
pub fn pick() -> MethodModel {
    let l = Label(0);
    method(
        "pick",
        "(I)I",
        vec![
            Insn::var(ILOAD, 0),
            Insn::jump(IFEQ, l),
            Insn::Iinc { slot: 0, delta: 5 },
            Insn::Label(l),
            Insn::var(ILOAD, 0),
            Insn::Simple(IRETURN),
        ],
    )
}

/// `loop()I`: counts a local to 2. Block 0 ends in a store, 1 in
/// `if_icmpge`, 2 in `goto`, 3 in `ireturn`.
pub fn counting_loop() -> MethodModel {
    let (head, done) = (Label(0), Label(1));
    method(
        "loop",
        "()I",
        vec![
            Insn::Simple(ICONST_0),
            Insn::var(ISTORE, 1),
            Insn::Label(head),
            Insn::var(ILOAD, 1),
            Insn::Simple(ICONST_2),
            Insn::jump(IF_ICMPGE, done),
            Insn::Iinc { slot: 1, delta: 1 },
            Insn::jump(GOTO, head),
            Insn::Label(done),
            Insn::var(ILOAD, 1),
            Insn::Simple(IRETURN),
        ],
    )
}

/// `call(I)I`: returns `Probe.f(x)`.
pub fn call() -> MethodModel {
    method(
        "call",
        "(I)I",
        vec![Insn::var(ILOAD, 0), Insn::method(INVOKESTATIC, PROBE, "f", "(I)I"), Insn::Simple(IRETURN)],
    )
}

/// `callg()V`: calls `Probe.g()` and returns.
pub fn call_first() -> MethodModel {
    method("callg", "()V", vec![Insn::method(INVOKESTATIC, PROBE, "g", "()V"), Insn::Simple(RETURN)])
}

/// `ret()V`: a single `return`.
pub fn ret() -> MethodModel {
    method("ret", "()V", vec![Insn::Simple(RETURN)])
}

/// `thrower()V`: throws null.
pub fn thrower() -> MethodModel {
    method("thrower", "()V", vec![Insn::Simple(ACONST_NULL), Insn::Simple(ATHROW)])
}

pub fn fixture_class() -> ClassModel {
    let mut c = ClassModel::new(ACC_PUBLIC | ACC_SUPER, FIXTURE, Some("java/lang/Object"));
    c.major_version = 49;
    c.methods = vec![abs(), countdown(), pick(), counting_loop(), call(), call_first(), ret(), thrower()];
    c
}

/// Prints `<Kind>` plus a detail for each joinpoint of the selected kinds:
/// the block index for block kinds, the mnemonic for instruction kinds, the
/// callee name for call kinds. With `args`, call joinpoints also print the
/// first argument and the result.
pub struct Printer {
    pub kinds: BTreeSet<JoinpointKind>,
    pub args: bool,
}

impl Printer {
    pub fn new(kinds: &[JoinpointKind]) -> Self {
        Printer { kinds: kinds.iter().copied().collect(), args: false }
    }

    pub fn all() -> Self {
        Printer::new(&JoinpointKind::ALL)
    }

    fn on(&self, dc: &mut Instrumenter<'_, '_>, detail: Option<String>) {
        let k = dc.kind();
        if self.kinds.contains(&k) {
            dc.println(match detail {
                Some(d) => format!("{k} {d}"),
                None => k.to_string(),
            });
        }
    }

    fn insn(&self, i: &InstructionCtx<'_>, dc: &mut Instrumenter<'_, '_>) {
        self.on(dc, Some(mnemonic(i.opcode()).to_string()));
    }

    fn block(&self, b: &BasicBlockCtx<'_>, dc: &mut Instrumenter<'_, '_>, with_index: bool) {
        self.on(dc, with_index.then(|| b.index().to_string()));
    }
}

impl Transformer for Printer {
    fn on_method_enter(&self, _m: &MethodCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        self.on(dc, None);
        Ok(())
    }
    fn on_basic_block_enter(&self, b: &BasicBlockCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        self.block(b, dc, true);
        Ok(())
    }
    fn on_true_branch_enter(&self, b: &BasicBlockCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        self.block(b, dc, false);
        Ok(())
    }
    fn on_false_branch_enter(&self, b: &BasicBlockCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        self.block(b, dc, false);
        Ok(())
    }
    fn before_instruction(&self, i: &InstructionCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        self.insn(i, dc);
        Ok(())
    }
    fn before_method_call(&self, c: &MethodCallCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        self.on(dc, Some(c.method_name().to_string()));
        if self.args && self.kinds.contains(&dc.kind()) {
            let a = dc.get_method_arg(1)?;
            dc.println(a);
        }
        Ok(())
    }
    fn after_method_call(&self, c: &MethodCallCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        self.on(dc, Some(c.method_name().to_string()));
        if self.args && self.kinds.contains(&dc.kind()) {
            let a = dc.get_method_arg(1)?;
            dc.println(a);
            let r = dc.get_method_result()?;
            dc.println(r);
        }
        Ok(())
    }
    fn after_instruction(&self, i: &InstructionCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        self.insn(i, dc);
        Ok(())
    }
    fn on_basic_block_exit(&self, b: &BasicBlockCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        self.block(b, dc, true);
        Ok(())
    }
    fn on_method_exit(&self, _m: &MethodCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
        self.on(dc, None);
        Ok(())
    }

    fn uses_branch_joinpoints(&self) -> bool {
        self.kinds.iter().any(|k| k.is_branch())
    }
}

/// The fixture class woven with `t`, restricted to `method`.
pub fn weave(t: &dyn Transformer, method: &str) -> ClassModel {
    let config = PipelineConfig { scope: Scope::new(&[format!("{FIXTURE}.{method}")]), ..PipelineConfig::default() };
    run_pipeline(&fixture_class(), t, &config, &ClassHierarchy::new()).expect("fixture weaves").0
}

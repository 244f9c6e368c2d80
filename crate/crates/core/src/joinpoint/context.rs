//! Static contexts: read-only views of the class, method, block and
//! instruction surrounding a joinpoint.

use std::cell::OnceCell;

use crate::analysis::{
    compute_frames, compute_source_frames, step, Analysis, BasicInterpreter, ClassHierarchy, Frame, SourceValue,
    VType,
};
use crate::cfg::{BasicBlock, BlockType, Cfg};
use crate::classfile::opcodes::{self, NOP};
use crate::classfile::{ClassModel, CodeBody, Insn, MethodModel};

#[derive(Clone, Copy, Debug)]
pub struct ClassCtx<'a> {
    /// Internal name, equal to the model's `this_class`.
    pub name: &'a str,
    pub model: &'a ClassModel,
}

impl<'a> ClassCtx<'a> {
    pub fn new(model: &'a ClassModel) -> Self {
        ClassCtx { name: &model.this_class, model }
    }

    pub fn dotted_name(&self) -> String {
        self.model.dotted_name()
    }
}

/// A method being instrumented. `code` and `cfg` are the bodies joinpoints
/// refer to: after critical-edge splitting when branch joinpoints are in
/// use, the original otherwise.
pub struct MethodCtx<'a> {
    pub class: ClassCtx<'a>,
    pub method: &'a MethodModel,
    pub code: &'a CodeBody,
    pub cfg: &'a Cfg,
    pub original_cfg: &'a Cfg,
    pub hierarchy: &'a ClassHierarchy,
    basic: OnceCell<Option<Analysis<VType>>>,
    source: OnceCell<Option<Analysis<SourceValue>>>,
}

impl<'a> MethodCtx<'a> {
    pub fn new(
        class: ClassCtx<'a>,
        method: &'a MethodModel,
        code: &'a CodeBody,
        cfg: &'a Cfg,
        original_cfg: &'a Cfg,
        hierarchy: &'a ClassHierarchy,
    ) -> Self {
        MethodCtx { class, method, code, cfg, original_cfg, hierarchy, basic: OnceCell::new(), source: OnceCell::new() }
    }

    pub fn name(&self) -> &'a str {
        &self.method.name
    }

    pub fn descriptor(&self) -> &'a str {
        &self.method.descriptor
    }

    pub fn access_flags(&self) -> u16 {
        self.method.access_flags
    }

    pub fn is_static(&self) -> bool {
        self.method.is_static()
    }

    pub fn number_of_basic_blocks(&self) -> usize {
        self.cfg.blocks.len()
    }

    pub fn entry_block(&self) -> BasicBlockCtx<'_> {
        BasicBlockCtx { method: self, pos: self.cfg.entry }
    }

    pub fn exit_blocks(&self) -> Vec<BasicBlockCtx<'_>> {
        self.cfg.exits.iter().map(|&pos| BasicBlockCtx { method: self, pos }).collect()
    }

    pub fn block(&self, pos: usize) -> BasicBlockCtx<'_> {
        BasicBlockCtx { method: self, pos }
    }

    pub fn instruction(&self, index: usize) -> InstructionCtx<'_> {
        let pos = self.cfg.block_of(index).expect("instruction belongs to a block");
        InstructionCtx { basic_block: BasicBlockCtx { method: self, pos }, index }
    }

    /// Type frames of `code`, or `None` if the analysis fails.
    pub fn basic_frames(&self) -> Option<&Analysis<VType>> {
        self.basic
            .get_or_init(|| compute_frames(self.class.name, self.method, self.code, self.hierarchy).ok())
            .as_ref()
    }

    /// Provenance frames of `code`, or `None` if the analysis fails.
    pub fn source_frames(&self) -> Option<&Analysis<SourceValue>> {
        self.source.get_or_init(|| compute_source_frames(self.class.name, self.method, self.code).ok()).as_ref()
    }

    /// Type frame just before instruction `i`.
    pub fn frame_before(&self, i: usize) -> Option<&Frame<VType>> {
        self.basic_frames()?.frames.get(i)?.as_ref()
    }

    /// Type frame just after instruction `i` completes normally.
    pub fn frame_after(&self, i: usize) -> Option<Frame<VType>> {
        let mut f = self.frame_before(i)?.clone();
        let interp = BasicInterpreter::new(self.hierarchy, self.class.name, &self.code.insns);
        step(&interp, i, &self.code.insns[i], &mut f).ok()?;
        Some(f)
    }
}

#[derive(Clone, Copy)]
pub struct BasicBlockCtx<'a> {
    pub method: &'a MethodCtx<'a>,
    /// Position in the method CFG's block list.
    pub pos: usize,
}

impl<'a> BasicBlockCtx<'a> {
    pub fn block(&self) -> &'a BasicBlock {
        &self.method.cfg.blocks[self.pos]
    }

    /// `<method>.<index>`.
    pub fn id(&self) -> &'a str {
        &self.block().id
    }

    pub fn index(&self) -> usize {
        self.block().index
    }

    pub fn block_type(&self) -> BlockType {
        self.block().block_type
    }

    /// Real instructions in the block.
    pub fn size(&self) -> usize {
        self.block().size
    }

    pub fn is_synthetic(&self) -> bool {
        self.block().synthetic
    }

    pub fn successor_blocks(&self) -> Vec<BasicBlockCtx<'a>> {
        self.block().successors.iter().map(|&(pos, _)| BasicBlockCtx { method: self.method, pos }).collect()
    }

    pub fn predecessor_blocks(&self) -> Vec<BasicBlockCtx<'a>> {
        self.block().predecessors.iter().map(|&pos| BasicBlockCtx { method: self.method, pos }).collect()
    }

    /// Successor reached when a conditional jump is taken.
    pub fn true_branch(&self) -> Option<BasicBlockCtx<'a>> {
        self.block().true_branch.map(|pos| BasicBlockCtx { method: self.method, pos })
    }

    /// Successor reached when a conditional jump falls through.
    pub fn false_branch(&self) -> Option<BasicBlockCtx<'a>> {
        self.block().false_branch.map(|pos| BasicBlockCtx { method: self.method, pos })
    }

    /// First entry of the block, possibly a label.
    pub fn first_instruction(&self) -> &'a Insn {
        &self.method.code.insns[self.block().first]
    }

    pub fn first_real_instruction(&self) -> InstructionCtx<'a> {
        InstructionCtx { basic_block: *self, index: self.block().first_real }
    }

    pub fn last_real_instruction(&self) -> InstructionCtx<'a> {
        InstructionCtx { basic_block: *self, index: self.block().last_real }
    }

    pub fn instructions(&self) -> impl Iterator<Item = InstructionCtx<'a>> + 'a {
        let b = self.block();
        let this = *self;
        (b.first_real..=b.last_real)
            .filter(move |&i| this.method.code.insns[i].is_real())
            .map(move |index| InstructionCtx { basic_block: this, index })
    }
}

#[derive(Clone, Copy)]
pub struct InstructionCtx<'a> {
    pub basic_block: BasicBlockCtx<'a>,
    /// Position in the method's instruction list.
    pub index: usize,
}

impl<'a> InstructionCtx<'a> {
    fn method(&self) -> &'a MethodCtx<'a> {
        self.basic_block.method
    }

    pub fn insn(&self) -> &'a Insn {
        &self.method().code.insns[self.index]
    }

    pub fn opcode(&self) -> u8 {
        self.insn().opcode().unwrap_or(NOP)
    }

    /// Next real instruction in the same block.
    pub fn next(&self) -> Option<&'a Insn> {
        let b = self.basic_block.block();
        let insns = &self.method().code.insns;
        (self.index + 1..=b.last_real).map(|i| &insns[i]).find(|i| i.is_real())
    }

    /// Previous real instruction in the same block.
    pub fn previous(&self) -> Option<&'a Insn> {
        let b = self.basic_block.block();
        let insns = &self.method().code.insns;
        (b.first_real..self.index).rev().map(|i| &insns[i]).find(|i| i.is_real())
    }

    pub fn is_conditional_jump(&self) -> bool {
        self.insn().is_conditional_jump()
    }

    pub fn is_branching_instruction(&self) -> bool {
        self.insn().is_branching()
    }

    /// 1 for unary `if*`, 2 for `if_icmp*`/`if_acmp*`, -1 otherwise.
    pub fn stack_operands_if_cond_jump(&self) -> i32 {
        opcodes::conditional_jump_operands(self.opcode())
    }

    pub fn basic_value_frame(&self) -> Option<&'a Frame<VType>> {
        self.method().frame_before(self.index)
    }

    pub fn source_value_frame(&self) -> Option<&'a Frame<SourceValue>> {
        self.method().source_frames()?.frames.get(self.index)?.as_ref()
    }

    pub fn method_name(&self) -> &'a str {
        self.method().name()
    }

    /// Internal name of the enclosing class.
    pub fn class_name(&self) -> &'a str {
        self.method().class.name
    }
}

/// An instruction context whose instruction is `invokevirtual`,
/// `invokespecial`, `invokestatic` or `invokeinterface`.
#[derive(Clone, Copy)]
pub struct MethodCallCtx<'a> {
    pub ins: InstructionCtx<'a>,
}

impl<'a> MethodCallCtx<'a> {
    pub fn new(ins: InstructionCtx<'a>) -> Option<Self> {
        matches!(ins.insn(), Insn::Method { .. }).then_some(MethodCallCtx { ins })
    }

    fn parts(&self) -> (&'a str, &'a str, &'a str) {
        match self.ins.insn() {
            Insn::Method { owner, name, descriptor, .. } => (owner, name, descriptor),
            _ => unreachable!("method call contexts wrap invokes"),
        }
    }

    /// Callee class, internal name.
    pub fn method_owner(&self) -> &'a str {
        self.parts().0
    }

    /// Called method.
    pub fn method_name(&self) -> &'a str {
        self.parts().1
    }

    pub fn descriptor(&self) -> &'a str {
        self.parts().2
    }

    /// Calling class, internal name.
    pub fn current_class_name(&self) -> &'a str {
        self.ins.class_name()
    }

    pub fn is_static_call(&self) -> bool {
        self.ins.opcode() == opcodes::INVOKESTATIC
    }
}

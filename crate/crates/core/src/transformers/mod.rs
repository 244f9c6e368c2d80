//! The transformer API and the per-class instrumentation pipeline.

mod builtin;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

pub use builtin::{
    builtin, conditional_jump_ordinal, flip_conditional_jump, BlockTracer, IteratorMonitor, TestInversionDetector,
    BUILTIN_NAMES,
};

use crate::analysis::{ClassHierarchy, FinalizeOptions};
use crate::cfg::{build_cfg, split_critical_edges, write_cfg_html, Cfg};
use crate::classfile::{ClassFileError, ClassModel, MethodModel};
use crate::joinpoint::{
    generate_joinpoints, BasicBlockCtx, ClassCtx, InstructionCtx, JoinpointKind, MethodCallCtx, MethodCtx, Scope,
};
use crate::weaver::{Instrumenter, MethodWeaver, WeaveError};

/// Result of a transformer callback.
pub type Cb = Result<(), WeaveError>;

/// Instrumentation logic: one callback per joinpoint kind, each registering
/// actions through the [`Instrumenter`] of the current joinpoint. All
/// callbacks default to doing nothing.
pub trait Transformer: Send + Sync {
    fn on_method_enter(&self, _m: &MethodCtx<'_>, _dc: &mut Instrumenter<'_, '_>) -> Cb {
        Ok(())
    }
    fn on_basic_block_enter(&self, _b: &BasicBlockCtx<'_>, _dc: &mut Instrumenter<'_, '_>) -> Cb {
        Ok(())
    }
    fn on_true_branch_enter(&self, _b: &BasicBlockCtx<'_>, _dc: &mut Instrumenter<'_, '_>) -> Cb {
        Ok(())
    }
    fn on_false_branch_enter(&self, _b: &BasicBlockCtx<'_>, _dc: &mut Instrumenter<'_, '_>) -> Cb {
        Ok(())
    }
    fn before_instruction(&self, _i: &InstructionCtx<'_>, _dc: &mut Instrumenter<'_, '_>) -> Cb {
        Ok(())
    }
    fn before_method_call(&self, _c: &MethodCallCtx<'_>, _dc: &mut Instrumenter<'_, '_>) -> Cb {
        Ok(())
    }
    fn after_method_call(&self, _c: &MethodCallCtx<'_>, _dc: &mut Instrumenter<'_, '_>) -> Cb {
        Ok(())
    }
    fn after_instruction(&self, _i: &InstructionCtx<'_>, _dc: &mut Instrumenter<'_, '_>) -> Cb {
        Ok(())
    }
    fn on_basic_block_exit(&self, _b: &BasicBlockCtx<'_>, _dc: &mut Instrumenter<'_, '_>) -> Cb {
        Ok(())
    }
    fn on_method_exit(&self, _m: &MethodCtx<'_>, _dc: &mut Instrumenter<'_, '_>) -> Cb {
        Ok(())
    }

    /// True if the branch callbacks are used; critical edges are then split
    /// before joinpoints are generated.
    fn uses_branch_joinpoints(&self) -> bool {
        false
    }
}

/// A transformer that registers nothing.
pub struct NoOp;

impl Transformer for NoOp {}

#[derive(Clone, Debug, Default)]
pub struct PipelineConfig {
    pub scope: Scope,
    /// Directory receiving one HTML CFG view per instrumented method.
    pub visualize: Option<PathBuf>,
    /// Classes and archives consulted for type merges.
    pub classpath: Vec<PathBuf>,
    /// Fail on classes missing from the hierarchy instead of assuming
    /// `java/lang/Object`.
    pub strict_frames: bool,
    /// Emit no StackMapTable.
    pub strip_frames: bool,
}

impl PipelineConfig {
    /// Class hierarchy of the built-in JDK classes plus the classpath.
    pub fn hierarchy(&self) -> Result<ClassHierarchy, ClassFileError> {
        let mut h = ClassHierarchy::new();
        h.strict = self.strict_frames;
        for p in &self.classpath {
            h.add_path(p)?;
        }
        Ok(h)
    }

    fn finalize_options(&self) -> FinalizeOptions {
        FinalizeOptions { stack_map: !self.strip_frames, ..FinalizeOptions::default() }
    }
}

/// What one pipeline run did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub classes: usize,
    pub classes_modified: usize,
    pub methods_in_scope: usize,
    /// `class.method(descriptor)` of every method whose code changed.
    pub methods_touched: Vec<String>,
    pub joinpoints: BTreeMap<JoinpointKind, usize>,
    pub callbacks: BTreeMap<JoinpointKind, usize>,
    pub actions: usize,
    pub cfg_views: Vec<PathBuf>,
}

impl Report {
    pub fn merge(&mut self, other: Report) {
        self.classes += other.classes;
        self.classes_modified += other.classes_modified;
        self.methods_in_scope += other.methods_in_scope;
        self.methods_touched.extend(other.methods_touched);
        for (k, v) in other.joinpoints {
            *self.joinpoints.entry(k).or_default() += v;
        }
        for (k, v) in other.callbacks {
            *self.callbacks.entry(k).or_default() += v;
        }
        self.actions += other.actions;
        self.cfg_views.extend(other.cfg_views);
    }

    pub fn total_joinpoints(&self) -> usize {
        self.joinpoints.values().sum()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "classes scanned:   {}", self.classes)?;
        writeln!(f, "classes modified:  {}", self.classes_modified)?;
        writeln!(f, "methods in scope:  {}", self.methods_in_scope)?;
        writeln!(f, "methods modified:  {}", self.methods_touched.len())?;
        writeln!(f, "joinpoints:        {}", self.total_joinpoints())?;
        for (k, v) in &self.joinpoints {
            writeln!(f, "  {:<20} {v}", k.name())?;
        }
        write!(f, "actions woven:     {}", self.actions)
    }
}

/// Instruments `class` with `t`. Methods without registered actions keep
/// their original code, so a class without any is returned unchanged.
pub fn run_pipeline(
    class: &ClassModel,
    t: &dyn Transformer,
    config: &PipelineConfig,
    hierarchy: &ClassHierarchy,
) -> Result<(ClassModel, Report), WeaveError> {
    let mut out = class.clone();
    let mut report = Report { classes: 1, ..Report::default() };
    for (mi, method) in class.methods.iter().enumerate() {
        if method.code.is_none() || !config.scope.matches(&class.this_class, &method.name) {
            continue;
        }
        report.methods_in_scope += 1;
        if let Some(m) = instrument_method(class, method, t, config, hierarchy, &mut report)? {
            report.methods_touched.push(format!("{}.{}{}", class.dotted_name(), method.name, method.descriptor));
            out.methods[mi] = m;
        }
    }
    if !report.methods_touched.is_empty() {
        report.classes_modified = 1;
    }
    Ok((out, report))
}

/// Calls the callback of `t` for the kind of `dc`'s joinpoint.
pub fn dispatch(t: &dyn Transformer, ctx: &MethodCtx<'_>, dc: &mut Instrumenter<'_, '_>) -> Cb {
    let jp = dc.joinpoint();
    let ins = || ctx.instruction(jp.insn.expect("instruction joinpoints carry an index"));
    let call = || MethodCallCtx::new(ins()).expect("call joinpoints sit on invokes");
    match jp.kind {
        JoinpointKind::OnMethodEnter => t.on_method_enter(ctx, dc),
        JoinpointKind::OnBasicBlockEnter => t.on_basic_block_enter(&ctx.block(jp.block), dc),
        JoinpointKind::OnTrueBranchEnter => t.on_true_branch_enter(&ctx.block(jp.block), dc),
        JoinpointKind::OnFalseBranchEnter => t.on_false_branch_enter(&ctx.block(jp.block), dc),
        JoinpointKind::BeforeInstruction => t.before_instruction(&ins(), dc),
        JoinpointKind::BeforeMethodCall => t.before_method_call(&call(), dc),
        JoinpointKind::AfterMethodCall => t.after_method_call(&call(), dc),
        JoinpointKind::AfterInstruction => t.after_instruction(&ins(), dc),
        JoinpointKind::OnBasicBlockExit => t.on_basic_block_exit(&ctx.block(jp.block), dc),
        JoinpointKind::OnMethodExit => t.on_method_exit(ctx, dc),
    }
}

fn instrument_method(
    class: &ClassModel,
    method: &MethodModel,
    t: &dyn Transformer,
    config: &PipelineConfig,
    hierarchy: &ClassHierarchy,
    report: &mut Report,
) -> Result<Option<MethodModel>, WeaveError> {
    let label = format!("{}.{}{}", class.this_class, method.name, method.descriptor);
    let code = method.code.as_ref().expect("caller checked for code");
    let cfg_err = |source| WeaveError::Cfg { method: label.clone(), source };
    let original = build_cfg(&method.name, &method.descriptor, code, 0).map_err(cfg_err)?;
    let branches = t.uses_branch_joinpoints();
    let split = if branches {
        let mut next = original.blocks.len();
        Some(split_critical_edges(&original, code, &mut next).map_err(cfg_err)?)
    } else {
        None
    };
    let (cfg, body, synthetic) = match &split {
        Some(s) => (&s.cfg, &s.code, &s.synthetic_labels[..]),
        None => (&original, code, &[][..]),
    };
    let ctx = MethodCtx::new(ClassCtx::new(class), method, body, cfg, &original, hierarchy);
    let mut jps = generate_joinpoints(cfg, body, branches);
    for jp in &jps {
        *report.joinpoints.entry(jp.kind).or_default() += 1;
    }
    jps.sort_by_key(|j| j.visit);

    let mut weaver = MethodWeaver::new(&ctx, synthetic);
    for jp in jps {
        *report.callbacks.entry(jp.kind).or_default() += 1;
        dispatch(t, &ctx, &mut weaver.at(jp)).map_err(|e| e.in_method(&label))?;
    }
    report.actions += weaver.action_count();
    let Some(new_code) = weaver.weave(config.finalize_options())? else {
        return Ok(None);
    };
    if let Some(dir) = &config.visualize {
        let after = build_cfg(&method.name, &method.descriptor, &new_code, 0).map_err(cfg_err)?;
        report.cfg_views.push(visualize(dir, class, (&original, &code.insns), (&after, &new_code.insns))?);
    }
    let mut m = method.clone();
    m.code = Some(new_code);
    Ok(Some(m))
}

fn visualize(
    dir: &Path,
    class: &ClassModel,
    before: (&Cfg, &[crate::classfile::Insn]),
    after: (&Cfg, &[crate::classfile::Insn]),
) -> Result<PathBuf, WeaveError> {
    write_cfg_html(dir, &class.this_class, before, Some(after))
        .map_err(|source| WeaveError::Visualize { path: dir.display().to_string(), source })
}

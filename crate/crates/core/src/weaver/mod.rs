//! Advice weaving: resolution of dynamic values into load and spill code,
//! compilation of weave actions, inlining at joinpoint anchors, and method
//! finalization.

mod compile;
mod layout;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::analysis::{
    entry_frame, finalize_code, locals_needed, AnalysisError, BasicInterpreter, FinalizeOptions, Frame, VType,
};
use crate::cfg::CfgError;
use crate::classfile::access::ACC_STATIC;
use crate::classfile::opcodes::*;
use crate::classfile::{CodeAttribute, CodeBody, FieldType, Insn, Label, MethodDescriptor};
use crate::joinpoint::{Anchor, Joinpoint, JoinpointKind, MethodCtx};

pub(crate) use compile::{load_op, slots, spill_and_restore, store_op};


#[derive(Debug, Error)]
pub enum WeaveError {
    #[error("{what} is unavailable at {kind}: {reason}")]
    UnavailableValue { what: String, kind: JoinpointKind, reason: String },
    #[error("synthetic local {id} holds {expected} values, not {found}")]
    CategoryMismatch { id: usize, expected: VType, found: VType },
    #[error("unsupported invocation parameter: {0}")]
    UnsupportedParam(String),
    #[error("{what} is only available at method joinpoints, not at {kind}")]
    MethodJoinpointOnly { what: &'static str, kind: JoinpointKind },
    #[error("frame computation failed in {method}: {source}")]
    Finalize { method: String, source: AnalysisError },
    #[error("cannot build the control-flow graph of {method}: {source}")]
    Cfg { method: String, source: CfgError },
    #[error("cannot write the CFG view {path}: {source}")]
    Visualize { path: String, source: std::io::Error },
    #[error("{method}: {source}")]
    InMethod { method: String, source: Box<WeaveError> },
}

impl WeaveError {
    /// Attributes the error to `method` unless it already names one.
    pub fn in_method(self, method: &str) -> WeaveError {
        match self {
            e @ (WeaveError::Finalize { .. } | WeaveError::InMethod { .. } | WeaveError::Cfg { .. }) => e,
            e => WeaveError::InMethod { method: method.to_string(), source: Box::new(e) },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Out,
    Err,
}

/// A constant usable as an invocation argument or synthetic local value.
#[derive(Clone, Debug, PartialEq)]
pub enum Const {
    Int(i32),
    Long(i64),
    Float(f32),
    Double(f64),
    Boolean(bool),
    Str(String),
}

impl Const {
    pub fn vtype(&self) -> VType {
        match self {
            Const::Int(_) | Const::Boolean(_) => VType::Int,
            Const::Long(_) => VType::Long,
            Const::Float(_) => VType::Float,
            Const::Double(_) => VType::Double,
            Const::Str(_) => VType::Ref("java/lang/String".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Handle {
    Null,
    Local(u16),
    /// Types of the stack values from the top down to the wanted one.
    Stack(Vec<VType>),
    Field { base: Option<Box<DynamicValue>>, owner: String, name: String, descriptor: String },
}

/// A value only known at run time, resolved against the frame of the
/// joinpoint that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicValue {
    pub(crate) handle: Handle,
    pub(crate) vtype: VType,
}

impl DynamicValue {
    /// The null reference constant.
    pub fn null() -> Self {
        DynamicValue { handle: Handle::Null, vtype: VType::Null }
    }

    pub fn vtype(&self) -> &VType {
        &self.vtype
    }

    /// True for the null constant substituted for `this` in static code.
    pub fn is_null(&self) -> bool {
        self.handle == Handle::Null
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Param {
    Value(DynamicValue),
    Const(Const),
}

impl From<DynamicValue> for Param {
    fn from(v: DynamicValue) -> Self {
        Param::Value(v)
    }
}

impl From<&DynamicValue> for Param {
    fn from(v: &DynamicValue) -> Self {
        Param::Value(v.clone())
    }
}

impl From<Const> for Param {
    fn from(c: Const) -> Self {
        Param::Const(c)
    }
}

impl From<&str> for Param {
    fn from(s: &str) -> Self {
        Param::Const(Const::Str(s.into()))
    }
}

impl From<String> for Param {
    fn from(s: String) -> Self {
        Param::Const(Const::Str(s))
    }
}

impl From<i32> for Param {
    fn from(v: i32) -> Self {
        Param::Const(Const::Int(v))
    }
}

impl From<i64> for Param {
    fn from(v: i64) -> Self {
        Param::Const(Const::Long(v))
    }
}

impl From<f32> for Param {
    fn from(v: f32) -> Self {
        Param::Const(Const::Float(v))
    }
}

impl From<f64> for Param {
    fn from(v: f64) -> Self {
        Param::Const(Const::Double(v))
    }
}

impl From<bool> for Param {
    fn from(v: bool) -> Self {
        Param::Const(Const::Boolean(v))
    }
}

/// A call to a static monitor method.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticInvocation {
    /// Internal name of the monitor class.
    pub owner: String,
    pub name: String,
    pub params: Vec<Param>,
}

impl StaticInvocation {
    /// `owner` may be dotted or internal.
    pub fn new(owner: &str, name: &str) -> Self {
        StaticInvocation { owner: owner.replace('.', "/"), name: name.into(), params: Vec::new() }
    }

    pub fn arg(mut self, p: impl Into<Param>) -> Self {
        self.params.push(p.into());
        self
    }
}

/// A primitive local variable added to the method by instrumentation.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticLocal {
    pub id: usize,
    pub slot: u16,
    pub vtype: VType,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PrintArg {
    Text(String),
    Value(DynamicValue),
}

impl From<&str> for PrintArg {
    fn from(s: &str) -> Self {
        PrintArg::Text(s.into())
    }
}

impl From<String> for PrintArg {
    fn from(s: String) -> Self {
        PrintArg::Text(s)
    }
}

impl From<&DynamicValue> for PrintArg {
    fn from(v: &DynamicValue) -> Self {
        PrintArg::Value(v.clone())
    }
}

impl From<DynamicValue> for PrintArg {
    fn from(v: DynamicValue) -> Self {
        PrintArg::Value(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Action {
    Print { arg: PrintArg, stream: Stream, newline: bool },
    PrintHash { value: DynamicValue, stream: Stream, newline: bool },
    Invoke(StaticInvocation),
    Raw(Vec<Insn>),
    Store { slot: u16, value: Const, vtype: VType },
}

struct Site {
    anchor: Anchor,
    rank: usize,
    seq: usize,
    action: Action,
}

/// Per-method weaving state. Transformers register actions through an
/// [`Instrumenter`] bound to one joinpoint; [`MethodWeaver::weave`] then
/// produces the new method body.
pub struct MethodWeaver<'a> {
    ctx: &'a MethodCtx<'a>,
    body: CodeBody,
    synthetic_labels: Vec<Label>,
    sites: Vec<Site>,
    captures: BTreeMap<usize, Vec<Insn>>,
    entry: Vec<Insn>,
    next_local: u16,
    scratch: HashMap<String, u16>,
    synthetic: usize,
    entry_frame: Option<Frame<VType>>,
    actions: usize,
}

impl<'a> MethodWeaver<'a> {
    /// `synthetic_labels` head the blocks added by critical-edge splitting;
    /// those left without advice are removed again.
    pub fn new(ctx: &'a MethodCtx<'a>, synthetic_labels: &[Label]) -> Self {
        let needed = locals_needed(ctx.method, ctx.code).unwrap_or(0);
        let base = ctx.code.max_locals.max(u16::try_from(needed).unwrap_or(u16::MAX));
        let interp = BasicInterpreter::new(ctx.hierarchy, ctx.class.name, &ctx.code.insns);
        let entry_frame = entry_frame(&interp, ctx.class.name, ctx.method, needed).ok();
        MethodWeaver {
            ctx,
            body: ctx.code.clone(),
            synthetic_labels: synthetic_labels.to_vec(),
            sites: Vec::new(),
            captures: BTreeMap::new(),
            entry: Vec::new(),
            next_local: base,
            scratch: HashMap::new(),
            synthetic: 0,
            entry_frame,
            actions: 0,
        }
    }

    pub fn ctx(&self) -> &'a MethodCtx<'a> {
        self.ctx
    }

    /// Instrumenter registering actions at `jp`.
    pub fn at(&mut self, jp: Joinpoint) -> Instrumenter<'_, 'a> {
        Instrumenter { weaver: self, jp }
    }

    /// Number of actions registered so far.
    pub fn action_count(&self) -> usize {
        self.actions
    }

    fn alloc(&mut self, size: u16) -> u16 {
        let s = self.next_local;
        self.next_local += size;
        s
    }

    fn method_label(&self) -> String {
        format!("{}.{}{}", self.ctx.class.name, self.ctx.name(), self.ctx.descriptor())
    }

    /// Inlines every registered action. Returns `None` if nothing was
    /// registered, leaving the method untouched.
    pub fn weave(mut self, opts: FinalizeOptions) -> Result<Option<CodeBody>, WeaveError> {
        if self.actions == 0 && self.captures.is_empty() && self.entry.is_empty() {
            return Ok(None);
        }
        let method = self.method_label();
        let mut temps = compile::Temps::new(self.next_local);
        self.sites.sort_by_key(|s| (s.anchor.position_key(), s.rank, s.seq));
        let mut start = Vec::new();
        let mut before: HashMap<usize, Vec<Insn>> = HashMap::new();
        let mut after: HashMap<usize, Vec<Insn>> = HashMap::new();
        for s in &self.sites {
            let code = compile::compile_action(&s.action, &mut temps).map_err(|e| e.in_method(&method))?;
            let dst = match s.anchor {
                Anchor::MethodStart(_) => &mut start,
                Anchor::Before(i) => before.entry(i).or_default(),
                Anchor::After(i) => after.entry(i).or_default(),
            };
            dst.extend(code);
        }

        let old = std::mem::take(&mut self.body.insns);
        let mut out = Vec::with_capacity(old.len() * 2);
        out.append(&mut self.entry);
        out.append(&mut start);
        for (i, insn) in old.into_iter().enumerate() {
            if let Some(b) = before.remove(&i) {
                out.extend(b);
            }
            if let Some(c) = self.captures.remove(&i) {
                out.extend(c);
            }
            out.push(insn);
            if let Some(a) = after.remove(&i) {
                out.extend(a);
            }
        }
        remove_bare_synthetic_blocks(&mut out, &self.synthetic_labels);
        let mut body = self.body;
        body.insns = out;
        body.attributes.retain(|a| !matches!(a, CodeAttribute::Raw(_)));
        layout::widen_far_jumps(&mut body);
        finalize_code(self.ctx.class.name, self.ctx.method, &mut body, self.ctx.hierarchy, opts)
            .map_err(|source| WeaveError::Finalize { method, source })?;
        Ok(Some(body))
    }
}

/// Drops synthetic `label: goto target` blocks that received no advice and
/// points their users back at `target`.
fn remove_bare_synthetic_blocks(insns: &mut Vec<Insn>, synthetic: &[Label]) {
    let mut redirect = HashMap::new();
    for &s in synthetic {
        let Some(p) = insns.iter().position(|i| *i == Insn::Label(s)) else { continue };
        if let Some(Insn::Jump { opcode: GOTO, target }) = insns.get(p + 1) {
            redirect.insert(s, *target);
            insns.drain(p..=p + 1);
        }
    }
    if redirect.is_empty() {
        return;
    }
    for insn in insns.iter_mut() {
        for t in insn.branch_targets() {
            if let Some(&to) = redirect.get(&t) {
                insn.retarget(t, to);
            }
        }
    }
}

/// The dynamic context of one joinpoint: value accessors and
/// instrumentation methods. Registered actions are woven at the joinpoint's
/// anchor in registration order.
pub struct Instrumenter<'w, 'a> {
    weaver: &'w mut MethodWeaver<'a>,
    jp: Joinpoint,
}

fn usable(t: &VType) -> bool {
    !matches!(t, VType::Top | VType::Uninitialized(_) | VType::UninitializedThis)
}

impl<'w, 'a> Instrumenter<'w, 'a> {
    pub fn joinpoint(&self) -> Joinpoint {
        self.jp
    }

    pub fn kind(&self) -> JoinpointKind {
        self.jp.kind
    }

    fn unavailable(&self, what: &str, reason: impl Into<String>) -> WeaveError {
        WeaveError::UnavailableValue { what: what.into(), kind: self.jp.kind, reason: reason.into() }
    }

    fn is_method_joinpoint(&self) -> bool {
        matches!(self.jp.kind, JoinpointKind::OnMethodEnter | JoinpointKind::OnMethodExit)
    }

    fn is_call_joinpoint(&self) -> bool {
        matches!(self.jp.kind, JoinpointKind::BeforeMethodCall | JoinpointKind::AfterMethodCall)
    }

    /// Type frame at the anchor.
    pub fn frame(&self) -> Option<Frame<VType>> {
        let ctx = self.weaver.ctx;
        match self.jp.anchor {
            Anchor::MethodStart(_) => self.weaver.entry_frame.clone(),
            Anchor::Before(i) => ctx.frame_before(i).cloned(),
            Anchor::After(i) => ctx.frame_after(i),
        }
    }

    fn frame_or(&self, what: &str) -> Result<Frame<VType>, WeaveError> {
        self.frame().ok_or_else(|| self.unavailable(what, "no type frame at this location"))
    }

    fn stack_value(&self, what: &str, frame: &Frame<VType>, depth: usize) -> Result<DynamicValue, WeaveError> {
        let n = frame.stack.len();
        if depth >= n {
            return Err(self.unavailable(what, format!("stack depth {depth} but only {n} values")));
        }
        let types: Vec<VType> = frame.stack.iter().rev().take(depth + 1).cloned().collect();
        let vtype = types[depth].clone();
        if !usable(&vtype) {
            return Err(self.unavailable(what, format!("value has type {vtype}")));
        }
        Ok(DynamicValue { handle: Handle::Stack(types), vtype })
    }

    /// The receiver of the current method, or a null constant in static
    /// methods.
    pub fn get_this(&self) -> Result<DynamicValue, WeaveError> {
        if self.weaver.ctx.is_static() {
            return Ok(DynamicValue { handle: Handle::Null, vtype: VType::Null });
        }
        let f = self.frame_or("this")?;
        match f.locals.first() {
            Some(t @ VType::Ref(_)) => Ok(DynamicValue { handle: Handle::Local(0), vtype: t.clone() }),
            Some(VType::UninitializedThis) => Err(self.unavailable("this", "the super constructor has not run yet")),
            _ => Err(self.unavailable("this", "local 0 no longer holds the receiver")),
        }
    }

    pub fn get_local_variable(&self, slot: u16) -> Result<DynamicValue, WeaveError> {
        let what = format!("local {slot}");
        let f = self.frame_or(&what)?;
        match f.locals.get(slot as usize) {
            Some(t) if usable(t) => Ok(DynamicValue { handle: Handle::Local(slot), vtype: t.clone() }),
            Some(t) => Err(self.unavailable(&what, format!("slot has type {t}"))),
            None => Err(self.unavailable(&what, "slot out of range")),
        }
    }

    /// Value `depth` positions below the top of the operand stack.
    pub fn get_stack_value(&self, depth: usize) -> Result<DynamicValue, WeaveError> {
        let what = format!("stack value {depth}");
        let f = self.frame_or(&what)?;
        self.stack_value(&what, &f, depth)
    }

    fn field_value(&self, base: Option<DynamicValue>, owner: &str, name: &str, desc: &str) -> Result<DynamicValue, WeaveError> {
        let t = FieldType::parse(desc).map_err(|e| self.unavailable(name, e.to_string()))?;
        Ok(DynamicValue {
            handle: Handle::Field { base: base.map(Box::new), owner: owner.into(), name: name.into(), descriptor: desc.into() },
            vtype: VType::from_field_type(&t),
        })
    }

    /// Instance field `name` of `this`, declared by the current class.
    pub fn get_instance_field(&self, name: &str) -> Result<DynamicValue, WeaveError> {
        let class = self.weaver.ctx.class;
        let field = class
            .model
            .field(name)
            .filter(|f| f.access_flags & ACC_STATIC == 0)
            .ok_or_else(|| self.unavailable(name, format!("{} declares no such instance field", class.name)))?;
        let this = self.get_this()?;
        if this.is_null() {
            return Err(self.unavailable(name, "no receiver in a static method"));
        }
        self.field_value(Some(this), class.name, name, &field.descriptor)
    }

    /// Instance field of an arbitrary reference value.
    pub fn get_instance_field_of(
        &self,
        base: &DynamicValue,
        owner: &str,
        name: &str,
        descriptor: &str,
    ) -> Result<DynamicValue, WeaveError> {
        if !base.vtype.is_reference() {
            return Err(self.unavailable(name, format!("base has type {}", base.vtype)));
        }
        self.field_value(Some(base.clone()), &owner.replace('.', "/"), name, descriptor)
    }

    /// Static field `name` of the current class.
    pub fn get_static_field(&self, name: &str) -> Result<DynamicValue, WeaveError> {
        let class = self.weaver.ctx.class;
        let field = class
            .model
            .field(name)
            .filter(|f| f.access_flags & ACC_STATIC != 0)
            .ok_or_else(|| self.unavailable(name, format!("{} declares no such static field", class.name)))?;
        self.field_value(None, class.name, name, &field.descriptor)
    }

    pub fn get_static_field_of(&self, owner: &str, name: &str, descriptor: &str) -> Result<DynamicValue, WeaveError> {
        self.field_value(None, &owner.replace('.', "/"), name, descriptor)
    }

    fn call_descriptor(&self) -> Result<(usize, u8, MethodDescriptor), WeaveError> {
        let i = self.jp.insn.expect("call joinpoints carry their instruction");
        match &self.weaver.ctx.code.insns[i] {
            Insn::Method { opcode, descriptor, .. } => {
                let d = MethodDescriptor::parse(descriptor).map_err(|e| self.unavailable("call", e.to_string()))?;
                Ok((i, *opcode, d))
            }
            _ => unreachable!("call joinpoints sit on invokes"),
        }
    }

    /// Copies the stack value at `depth` before call `i` into a dedicated
    /// local that stays valid after the call.
    fn capture(&mut self, what: &str, i: usize, depth: usize) -> Result<DynamicValue, WeaveError> {
        let f = self.weaver.ctx.frame_before(i).cloned().ok_or_else(|| self.unavailable(what, "no type frame"))?;
        let v = self.stack_value(what, &f, depth)?;
        let Handle::Stack(types) = &v.handle else { unreachable!() };
        let slot_of: Vec<u16> = types.iter().map(|t| self.weaver.alloc(slots(t))).collect();
        let code = spill_and_restore(types, &slot_of);
        self.weaver.captures.entry(i).or_default().extend(code);
        Ok(DynamicValue { handle: Handle::Local(slot_of[depth]), vtype: v.vtype })
    }

    /// Argument `n` (from 1) of the current call, or of the current method
    /// at method joinpoints.
    pub fn get_method_arg(&mut self, n: usize) -> Result<DynamicValue, WeaveError> {
        let what = format!("argument {n}");
        if self.is_method_joinpoint() {
            let d = self.weaver.ctx.method.parsed_descriptor().map_err(|e| self.unavailable(&what, e.to_string()))?;
            if n == 0 || n > d.params.len() {
                return Err(self.unavailable(&what, format!("method takes {} arguments", d.params.len())));
            }
            let mut slot = u16::from(!self.weaver.ctx.is_static());
            for p in &d.params[..n - 1] {
                slot += p.slots();
            }
            let vtype = VType::from_field_type(&d.params[n - 1]);
            return Ok(DynamicValue { handle: Handle::Local(slot), vtype });
        }
        if !self.is_call_joinpoint() {
            return Err(self.unavailable(&what, "only method and method-call joinpoints have arguments"));
        }
        let (i, _, d) = self.call_descriptor()?;
        if n == 0 || n > d.params.len() {
            return Err(self.unavailable(&what, format!("call passes {} arguments", d.params.len())));
        }
        let depth = d.params.len() - n;
        self.call_value(&what, i, depth)
    }

    fn call_value(&mut self, what: &str, i: usize, depth: usize) -> Result<DynamicValue, WeaveError> {
        if self.jp.kind == JoinpointKind::BeforeMethodCall {
            let f = self.frame_or(what)?;
            self.stack_value(what, &f, depth)
        } else {
            self.capture(what, i, depth)
        }
    }

    /// Receiver of the current call.
    pub fn get_method_receiver(&mut self) -> Result<DynamicValue, WeaveError> {
        if !self.is_call_joinpoint() {
            return Err(self.unavailable("receiver", "only method-call joinpoints have a receiver"));
        }
        let (i, opcode, d) = self.call_descriptor()?;
        if opcode == INVOKESTATIC {
            return Err(self.unavailable("receiver", "static call"));
        }
        self.call_value("receiver", i, d.params.len())
    }

    /// Same as [`Instrumenter::get_method_receiver`].
    pub fn get_method_target(&mut self) -> Result<DynamicValue, WeaveError> {
        self.get_method_receiver()
    }

    /// Value returned by the current call; only after the call.
    pub fn get_method_result(&self) -> Result<DynamicValue, WeaveError> {
        if self.jp.kind != JoinpointKind::AfterMethodCall {
            return Err(self.unavailable("result", "only available after a method call"));
        }
        let (_, _, d) = self.call_descriptor()?;
        if d.ret.is_none() {
            return Err(self.unavailable("result", "void call"));
        }
        self.get_stack_value(0)
    }

    /// Adds a primitive local initialized to `init` on method entry.
    pub fn add_local_variable(&mut self, init: Const) -> Result<SyntheticLocal, WeaveError> {
        if !self.is_method_joinpoint() {
            return Err(WeaveError::MethodJoinpointOnly { what: "addLocalVariable", kind: self.jp.kind });
        }
        let vtype = init.vtype();
        if vtype.is_reference() {
            return Err(WeaveError::UnsupportedParam("synthetic locals hold primitives only".into()));
        }
        let slot = self.weaver.alloc(slots(&vtype));
        self.weaver.entry.push(compile::push_const(&init));
        self.weaver.entry.push(Insn::var(store_op(&vtype), slot));
        let id = self.weaver.synthetic;
        self.weaver.synthetic += 1;
        Ok(SyntheticLocal { id, slot, vtype })
    }

    /// Stores `value` into a synthetic local of the same primitive type.
    pub fn update_local_variable(&mut self, local: &SyntheticLocal, value: Const) -> Result<(), WeaveError> {
        let found = value.vtype();
        if found != local.vtype {
            return Err(WeaveError::CategoryMismatch { id: local.id, expected: local.vtype.clone(), found });
        }
        self.push(Action::Store { slot: local.slot, value, vtype: found });
        Ok(())
    }

    /// Current value of a synthetic local.
    pub fn local_value(&self, local: &SyntheticLocal) -> DynamicValue {
        DynamicValue { handle: Handle::Local(local.slot), vtype: local.vtype.clone() }
    }

    fn push(&mut self, action: Action) {
        let seq = self.weaver.sites.len();
        self.weaver.sites.push(Site { anchor: self.jp.anchor, rank: self.jp.kind.rank(), seq, action });
        self.weaver.actions += 1;
    }

    pub fn print(&mut self, arg: impl Into<PrintArg>) {
        self.print_to(arg, Stream::Out, false);
    }

    pub fn println(&mut self, arg: impl Into<PrintArg>) {
        self.print_to(arg, Stream::Out, true);
    }

    /// Prints text or the string conversion of a value.
    pub fn print_to(&mut self, arg: impl Into<PrintArg>, stream: Stream, newline: bool) {
        self.push(Action::Print { arg: arg.into(), stream, newline });
    }

    /// Prints the identity hash code of a reference value on its own line.
    pub fn print_hash(&mut self, value: &DynamicValue, stream: Stream) -> Result<(), WeaveError> {
        if !value.vtype.is_reference() {
            return Err(self.unavailable("identity hash", format!("value has type {}", value.vtype)));
        }
        self.push(Action::PrintHash { value: value.clone(), stream, newline: true });
        Ok(())
    }

    /// Weaves a static call; parameter types are checked here.
    pub fn invoke(&mut self, call: StaticInvocation) -> Result<(), WeaveError> {
        call.descriptor()?;
        self.push(Action::Invoke(call));
        Ok(())
    }

    /// Inserts instructions verbatim. Keeping the stack and the frames
    /// consistent is the caller's responsibility.
    pub fn insert(&mut self, insn: Insn) {
        self.insert_all(vec![insn]);
    }

    pub fn insert_all(&mut self, insns: Vec<Insn>) {
        self.push(Action::Raw(insns));
    }

    /// A label unused in the method, for raw insertions.
    pub fn new_label(&mut self) -> Label {
        self.weaver.body.fresh_label()
    }

    /// A local slot reserved for the whole method under `key`; the same key
    /// yields the same slot. Sized for `vtype`.
    pub fn method_scratch_local(&mut self, key: &str, vtype: &VType) -> u16 {
        if let Some(&s) = self.weaver.scratch.get(key) {
            return s;
        }
        let s = self.weaver.alloc(slots(vtype));
        self.weaver.scratch.insert(key.to_string(), s);
        s
    }
}

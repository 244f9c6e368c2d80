use std::collections::HashMap;

use super::constant_pool::*;
use super::insn::*;
use super::opcodes::*;
use super::*;

/// Byte positions chosen by [`encode_code`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeLayout {
    /// Offset of every entry of `insns`; pseudo instructions share the offset
    /// of the next real instruction.
    pub offsets: Vec<u32>,
    pub code_length: u32,
    /// Indices of `goto`/`jsr` instructions that needed the 32-bit form.
    pub widened: Vec<usize>,
}

impl CodeLayout {
    pub fn label_offsets(&self, insns: &[Insn]) -> HashMap<Label, u32> {
        insns
            .iter()
            .enumerate()
            .filter_map(|(i, insn)| match insn {
                Insn::Label(l) => Some((*l, self.offsets[i])),
                _ => None,
            })
            .collect()
    }
}

struct Buf(Vec<u8>);

impl Buf {
    fn u1(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u2(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u4(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
}

fn ldc_index(pool: &mut ConstantPool, v: &LdcValue) -> Result<u16, ClassFileError> {
    match v {
        LdcValue::Int(i) => pool.push(PoolEntry::Integer(*i)),
        LdcValue::Float(b) => pool.push(PoolEntry::Float(*b)),
        LdcValue::Long(l) => pool.push(PoolEntry::Long(*l)),
        LdcValue::Double(b) => pool.push(PoolEntry::Double(*b)),
        LdcValue::String(s) => pool.string_index(s),
        LdcValue::Class(c) => pool.class_index(c),
        LdcValue::MethodType(d) => pool.intern(Constant::MethodType(d)),
        LdcValue::MethodHandle(i) | LdcValue::Dynamic { index: i, .. } => {
            pool.get(*i)?;
            Ok(*i)
        }
    }
}

/// Pool indices resolved once, before layout, so sizes are known.
fn operand_index(pool: &mut ConstantPool, insn: &Insn) -> Result<u16, ClassFileError> {
    Ok(match insn {
        Insn::Type { class, .. } | Insn::MultiANewArray { class, .. } => pool.class_index(class)?,
        Insn::Field { owner, name, descriptor, .. } => {
            pool.intern(Constant::Fieldref { owner, name, descriptor })?
        }
        Insn::Method { owner, name, descriptor, interface, .. } => {
            if *interface {
                pool.intern(Constant::InterfaceMethodref { owner, name, descriptor })?
            } else {
                pool.intern(Constant::Methodref { owner, name, descriptor })?
            }
        }
        Insn::InvokeDynamic { index, .. } => {
            pool.get(*index)?;
            *index
        }
        Insn::Ldc(v) => ldc_index(pool, v)?,
        _ => 0,
    })
}

fn var_size(opcode: u8, slot: u16) -> u32 {
    if slot > 255 {
        4
    } else if slot <= 3 && opcode != RET {
        1
    } else {
        2
    }
}

fn switch_padding(at: u32) -> u32 {
    (4 - (at + 1) % 4) % 4
}

fn insn_size(insn: &Insn, at: u32, index: u16, wide_jump: bool) -> u32 {
    match insn {
        Insn::Label(_) | Insn::LineNumber(_) => 0,
        Insn::Simple(_) => 1,
        Insn::Int { opcode, .. } => {
            if *opcode == SIPUSH {
                3
            } else {
                2
            }
        }
        Insn::Var { opcode, slot } => var_size(*opcode, *slot),
        Insn::Type { .. } | Insn::Field { .. } => 3,
        Insn::Method { opcode, .. } => {
            if *opcode == INVOKEINTERFACE {
                5
            } else {
                3
            }
        }
        Insn::InvokeDynamic { .. } => 5,
        Insn::Jump { .. } => {
            if wide_jump {
                5
            } else {
                3
            }
        }
        Insn::TableSwitch { targets, .. } => 1 + switch_padding(at) + 12 + 4 * targets.len() as u32,
        Insn::LookupSwitch { pairs, .. } => 1 + switch_padding(at) + 8 + 8 * pairs.len() as u32,
        Insn::Ldc(v) => {
            if v.is_wide() || index > 255 {
                3
            } else {
                2
            }
        }
        Insn::Iinc { slot, delta } => {
            if *slot > 255 || *delta < -128 || *delta > 127 {
                6
            } else {
                3
            }
        }
        Insn::MultiANewArray { .. } => 4,
    }
}

fn layout(insns: &[Insn], indices: &[u16]) -> Result<(CodeLayout, HashMap<Label, u32>), ClassFileError> {
    let mut wide = vec![false; insns.len()];
    loop {
        let mut offsets = Vec::with_capacity(insns.len());
        let mut at: u32 = 0;
        for (i, insn) in insns.iter().enumerate() {
            offsets.push(at);
            at += insn_size(insn, at, indices[i], wide[i]);
        }
        let code_length = at;
        let layout = CodeLayout { offsets, code_length, widened: Vec::new() };
        let labels = layout.label_offsets(insns);
        let mut changed = false;
        for (i, insn) in insns.iter().enumerate() {
            if let Insn::Jump { opcode, target } = insn {
                let t = *labels
                    .get(target)
                    .ok_or_else(|| ClassFileError::malformed(format!("jump to undefined label {target}")))?;
                let delta = t as i64 - layout.offsets[i] as i64;
                if !wide[i] && (delta < i16::MIN as i64 || delta > i16::MAX as i64) {
                    if *opcode == GOTO || *opcode == JSR {
                        wide[i] = true;
                        changed = true;
                    } else {
                        return Err(ClassFileError::EncodingOverflow(format!(
                            "conditional {} at instruction {i} spans {delta} bytes",
                            mnemonic(*opcode)
                        )));
                    }
                }
            }
        }
        if !changed {
            let widened = (0..insns.len()).filter(|&i| wide[i]).collect();
            return Ok((CodeLayout { widened, ..layout }, labels));
        }
    }
}

/// Encodes an instruction list into bytecode, interning every constant it
/// needs into `pool`.
pub fn encode_code(insns: &[Insn], pool: &mut ConstantPool) -> Result<(Vec<u8>, CodeLayout), ClassFileError> {
    let indices = insns.iter().map(|i| operand_index(pool, i)).collect::<Result<Vec<_>, _>>()?;
    let (layout, labels) = layout(insns, &indices)?;
    if layout.code_length == 0 || layout.code_length > 65535 {
        return Err(ClassFileError::EncodingOverflow(format!(
            "code length {} outside 1..=65535",
            layout.code_length
        )));
    }
    let label_at = |l: &Label| -> Result<u32, ClassFileError> {
        labels.get(l).copied().ok_or_else(|| ClassFileError::malformed(format!("undefined label {l}")))
    };
    let mut b = Buf(Vec::with_capacity(layout.code_length as usize));
    for (i, insn) in insns.iter().enumerate() {
        let at = layout.offsets[i];
        let rel = |l: &Label| -> Result<i32, ClassFileError> { Ok(label_at(l)? as i32 - at as i32) };
        match insn {
            Insn::Label(_) | Insn::LineNumber(_) => {}
            Insn::Simple(op) => b.u1(*op),
            Insn::Int { opcode, value } => {
                b.u1(*opcode);
                if *opcode == SIPUSH {
                    b.u2(*value as i16 as u16);
                } else {
                    b.u1(*value as u8);
                }
            }
            Insn::Var { opcode, slot } => {
                if *slot > 255 {
                    b.u1(WIDE);
                    b.u1(*opcode);
                    b.u2(*slot);
                } else if *slot <= 3 && *opcode != RET {
                    let base = if *opcode >= ISTORE { ISTORE_0 + (*opcode - ISTORE) * 4 } else { ILOAD_0 + (*opcode - ILOAD) * 4 };
                    b.u1(base + *slot as u8);
                } else {
                    b.u1(*opcode);
                    b.u1(*slot as u8);
                }
            }
            Insn::Type { opcode, .. } | Insn::Field { opcode, .. } => {
                b.u1(*opcode);
                b.u2(indices[i]);
            }
            Insn::Method { opcode, descriptor, .. } => {
                b.u1(*opcode);
                b.u2(indices[i]);
                if *opcode == INVOKEINTERFACE {
                    let d = MethodDescriptor::parse(descriptor)?;
                    b.u1((d.arg_slots() + 1) as u8);
                    b.u1(0);
                }
            }
            Insn::InvokeDynamic { .. } => {
                b.u1(INVOKEDYNAMIC);
                b.u2(indices[i]);
                b.u2(0);
            }
            Insn::Jump { opcode, target } => {
                if layout.widened.binary_search(&i).is_ok() {
                    b.u1(if *opcode == GOTO { GOTO_W } else { JSR_W });
                    b.u4(rel(target)? as u32);
                } else {
                    b.u1(*opcode);
                    b.u2(rel(target)? as i16 as u16);
                }
            }
            Insn::TableSwitch { low, high, default, targets } => {
                if *high < *low || (*high as i64 - *low as i64 + 1) as usize != targets.len() {
                    return Err(ClassFileError::EncodingOverflow("tableswitch bounds do not match its targets".into()));
                }
                b.u1(TABLESWITCH);
                for _ in 0..switch_padding(at) {
                    b.u1(0);
                }
                b.u4(rel(default)? as u32);
                b.u4(*low as u32);
                b.u4(*high as u32);
                for t in targets {
                    b.u4(rel(t)? as u32);
                }
            }
            Insn::LookupSwitch { default, pairs } => {
                b.u1(LOOKUPSWITCH);
                for _ in 0..switch_padding(at) {
                    b.u1(0);
                }
                b.u4(rel(default)? as u32);
                b.u4(pairs.len() as u32);
                for (k, t) in pairs {
                    b.u4(*k as u32);
                    b.u4(rel(t)? as u32);
                }
            }
            Insn::Ldc(v) => {
                if v.is_wide() {
                    b.u1(LDC2_W);
                    b.u2(indices[i]);
                } else if indices[i] > 255 {
                    b.u1(LDC_W);
                    b.u2(indices[i]);
                } else {
                    b.u1(LDC);
                    b.u1(indices[i] as u8);
                }
            }
            Insn::Iinc { slot, delta } => {
                if *slot > 255 || *delta < -128 || *delta > 127 {
                    b.u1(WIDE);
                    b.u1(IINC);
                    b.u2(*slot);
                    b.u2(*delta as u16);
                } else {
                    b.u1(IINC);
                    b.u1(*slot as u8);
                    b.u1(*delta as u8);
                }
            }
            Insn::MultiANewArray { dims, .. } => {
                b.u1(MULTIANEWARRAY);
                b.u2(indices[i]);
                b.u1(*dims);
            }
        }
        debug_assert_eq!(b.0.len() as u32, layout.offsets.get(i + 1).copied().unwrap_or(layout.code_length));
    }
    Ok((b.0, layout))
}

fn write_vtype(
    b: &mut Buf,
    t: &VerificationType,
    pool: &mut ConstantPool,
    labels: &HashMap<Label, u32>,
) -> Result<(), ClassFileError> {
    match t {
        VerificationType::Top => b.u1(0),
        VerificationType::Integer => b.u1(1),
        VerificationType::Float => b.u1(2),
        VerificationType::Double => b.u1(3),
        VerificationType::Long => b.u1(4),
        VerificationType::Null => b.u1(5),
        VerificationType::UninitializedThis => b.u1(6),
        VerificationType::Object(c) => {
            b.u1(7);
            b.u2(pool.class_index(c)?);
        }
        VerificationType::Uninitialized(l) => {
            b.u1(8);
            b.u2(*labels
                .get(l)
                .ok_or_else(|| ClassFileError::malformed(format!("stack map refers to undefined label {l}")))?
                as u16);
        }
    }
    Ok(())
}

fn encode_code_attribute(body: &CodeBody, pool: &mut ConstantPool) -> Result<Vec<u8>, ClassFileError> {
    let (code, layout) = encode_code(&body.insns, pool)?;
    let labels = layout.label_offsets(&body.insns);
    let at = |l: &Label| -> Result<u32, ClassFileError> {
        labels.get(l).copied().ok_or_else(|| ClassFileError::malformed(format!("undefined label {l}")))
    };
    let mut b = Buf(Vec::with_capacity(code.len() + 64));
    b.u2(body.max_stack);
    b.u2(body.max_locals);
    b.u4(code.len() as u32);
    b.bytes(&code);
    b.u2(body.exception_table.len() as u16);
    for tc in &body.exception_table {
        b.u2(at(&tc.start)? as u16);
        b.u2(at(&tc.end)? as u16);
        b.u2(at(&tc.handler)? as u16);
        b.u2(match &tc.catch_type {
            Some(c) => pool.class_index(c)?,
            None => 0,
        });
    }

    let has_lines = body.insns.iter().any(|i| matches!(i, Insn::LineNumber(_)));
    let mut attrs: Vec<&CodeAttribute> = body.attributes.iter().collect();
    let synthesized_lines = CodeAttribute::LineNumbers;
    if has_lines && !attrs.iter().any(|a| matches!(a, CodeAttribute::LineNumbers)) {
        attrs.push(&synthesized_lines);
    }
    b.u2(attrs.len() as u16);
    for a in attrs {
        let mut body_buf = Buf(Vec::new());
        let name = match a {
            CodeAttribute::LineNumbers => {
                let entries: Vec<(u32, u16)> = body
                    .insns
                    .iter()
                    .enumerate()
                    .filter_map(|(i, insn)| match insn {
                        Insn::LineNumber(n) => Some((layout.offsets[i], *n)),
                        _ => None,
                    })
                    .filter(|(pc, _)| *pc < layout.code_length)
                    .collect();
                body_buf.u2(entries.len() as u16);
                for (pc, n) in entries {
                    body_buf.u2(pc as u16);
                    body_buf.u2(n);
                }
                "LineNumberTable"
            }
            CodeAttribute::LocalVariables(vars) | CodeAttribute::LocalVariableTypes(vars) => {
                body_buf.u2(vars.len() as u16);
                for v in vars {
                    let s = at(&v.start)?;
                    let e = at(&v.end)?;
                    body_buf.u2(s as u16);
                    body_buf.u2(e.saturating_sub(s) as u16);
                    body_buf.u2(pool.utf8_index(&v.name)?);
                    body_buf.u2(pool.utf8_index(&v.descriptor)?);
                    body_buf.u2(v.slot);
                }
                if matches!(a, CodeAttribute::LocalVariables(_)) {
                    "LocalVariableTable"
                } else {
                    "LocalVariableTypeTable"
                }
            }
            CodeAttribute::StackMap(frames) => {
                body_buf.u2(frames.len() as u16);
                let mut prev: Option<u32> = None;
                for f in frames {
                    let off = at(&f.label)?;
                    let delta = match prev {
                        None => off,
                        Some(p) if off > p => off - p - 1,
                        Some(_) => {
                            return Err(ClassFileError::malformed(format!(
                                "stack map frames out of order at offset {off}"
                            )))
                        }
                    };
                    prev = Some(off);
                    match &f.kind {
                        FrameKind::Same if delta <= 63 => body_buf.u1(delta as u8),
                        FrameKind::Same => {
                            body_buf.u1(251);
                            body_buf.u2(delta as u16);
                        }
                        FrameKind::SameLocals1StackItem(t) => {
                            if delta <= 63 {
                                body_buf.u1(64 + delta as u8);
                            } else {
                                body_buf.u1(247);
                                body_buf.u2(delta as u16);
                            }
                            write_vtype(&mut body_buf, t, pool, &labels)?;
                        }
                        FrameKind::Chop(k) => {
                            body_buf.u1(251 - k);
                            body_buf.u2(delta as u16);
                        }
                        FrameKind::Append(ts) => {
                            body_buf.u1(251 + ts.len() as u8);
                            body_buf.u2(delta as u16);
                            for t in ts {
                                write_vtype(&mut body_buf, t, pool, &labels)?;
                            }
                        }
                        FrameKind::Full { locals, stack } => {
                            body_buf.u1(255);
                            body_buf.u2(delta as u16);
                            body_buf.u2(locals.len() as u16);
                            for t in locals {
                                write_vtype(&mut body_buf, t, pool, &labels)?;
                            }
                            body_buf.u2(stack.len() as u16);
                            for t in stack {
                                write_vtype(&mut body_buf, t, pool, &labels)?;
                            }
                        }
                    }
                }
                "StackMapTable"
            }
            CodeAttribute::Raw(r) => {
                body_buf.bytes(&r.data);
                &r.name
            }
        };
        b.u2(pool.utf8_index(name)?);
        b.u4(body_buf.0.len() as u32);
        b.bytes(&body_buf.0);
    }
    Ok(b.0)
}

fn write_raw_attributes(b: &mut Buf, attrs: &[RawAttribute], pool: &mut ConstantPool) -> Result<(), ClassFileError> {
    for a in attrs {
        b.u2(pool.utf8_index(&a.name)?);
        b.u4(a.data.len() as u32);
        b.bytes(&a.data);
    }
    Ok(())
}

/// Serializes a class. Constants needed by modified code are appended to a
/// copy of the model's pool; `model` itself is left untouched.
pub fn emit_class(model: &ClassModel) -> Result<Vec<u8>, ClassFileError> {
    let mut pool = model.constant_pool.clone();
    let mut fingerprints: HashMap<usize, Option<u64>> = HashMap::new();
    let mut b = Buf(Vec::new());
    b.u2(model.access_flags);
    b.u2(pool.class_index(&model.this_class)?);
    b.u2(match &model.super_class {
        Some(s) => pool.class_index(s)?,
        None => 0,
    });
    b.u2(model.interfaces.len() as u16);
    for i in &model.interfaces {
        b.u2(pool.class_index(i)?);
    }
    b.u2(model.fields.len() as u16);
    for f in &model.fields {
        b.u2(f.access_flags);
        b.u2(pool.utf8_index(&f.name)?);
        b.u2(pool.utf8_index(&f.descriptor)?);
        b.u2(f.attributes.len() as u16);
        write_raw_attributes(&mut b, &f.attributes, &mut pool)?;
    }
    b.u2(model.methods.len() as u16);
    for m in &model.methods {
        b.u2(m.access_flags);
        b.u2(pool.utf8_index(&m.name)?);
        b.u2(pool.utf8_index(&m.descriptor)?);
        let count = m.attributes.len() + usize::from(m.code.is_some());
        b.u2(count as u16);
        let split = m.code_position.min(m.attributes.len());
        write_raw_attributes(&mut b, &m.attributes[..split], &mut pool)?;
        if let Some(code) = &m.code {
            let reusable = code.origin().filter(|o| {
                o.decoded == *code
                    && *fingerprints.entry(o.pool_len).or_insert_with(|| pool.fingerprint(o.pool_len))
                        == Some(o.pool_hash)
            });
            let data = match reusable {
                Some(o) => Ok(o.bytes.clone()),
                None => encode_code_attribute(code, &mut pool),
            };
            let data = data.map_err(|e| match e {
                ClassFileError::EncodingOverflow(msg) => {
                    ClassFileError::EncodingOverflow(format!("{}{}: {msg}", m.name, m.descriptor))
                }
                ClassFileError::MalformedClass(msg) => {
                    ClassFileError::malformed(format!("{}{}: {msg}", m.name, m.descriptor))
                }
                other => other,
            })?;
            b.u2(pool.utf8_index("Code")?);
            b.u4(data.len() as u32);
            b.bytes(&data);
        }
        write_raw_attributes(&mut b, &m.attributes[split..], &mut pool)?;
    }
    b.u2(model.attributes.len() as u16);
    write_raw_attributes(&mut b, &model.attributes, &mut pool)?;

    let mut out = Buf(Vec::with_capacity(b.0.len() + pool.count() * 8 + 10));
    out.u4(MAGIC);
    out.u2(model.minor_version);
    out.u2(model.major_version);
    out.u2(pool.count() as u16);
    for e in pool.entries().iter().skip(1) {
        match e {
            PoolEntry::Unusable => {}
            PoolEntry::Utf8(s) => {
                out.u1(TAG_UTF8);
                out.u2(s.as_bytes().len() as u16);
                out.bytes(s.as_bytes());
            }
            PoolEntry::Integer(v) => {
                out.u1(TAG_INTEGER);
                out.u4(*v as u32);
            }
            PoolEntry::Float(v) => {
                out.u1(TAG_FLOAT);
                out.u4(*v);
            }
            PoolEntry::Long(v) => {
                out.u1(TAG_LONG);
                out.bytes(&v.to_be_bytes());
            }
            PoolEntry::Double(v) => {
                out.u1(TAG_DOUBLE);
                out.bytes(&v.to_be_bytes());
            }
            PoolEntry::Class(i) => {
                out.u1(TAG_CLASS);
                out.u2(*i);
            }
            PoolEntry::String(i) => {
                out.u1(TAG_STRING);
                out.u2(*i);
            }
            PoolEntry::Fieldref(a, c) => {
                out.u1(TAG_FIELDREF);
                out.u2(*a);
                out.u2(*c);
            }
            PoolEntry::Methodref(a, c) => {
                out.u1(TAG_METHODREF);
                out.u2(*a);
                out.u2(*c);
            }
            PoolEntry::InterfaceMethodref(a, c) => {
                out.u1(TAG_INTERFACE_METHODREF);
                out.u2(*a);
                out.u2(*c);
            }
            PoolEntry::NameAndType(a, c) => {
                out.u1(TAG_NAME_AND_TYPE);
                out.u2(*a);
                out.u2(*c);
            }
            PoolEntry::MethodHandle(k, r) => {
                out.u1(TAG_METHOD_HANDLE);
                out.u1(*k);
                out.u2(*r);
            }
            PoolEntry::MethodType(i) => {
                out.u1(TAG_METHOD_TYPE);
                out.u2(*i);
            }
            PoolEntry::Dynamic(a, c) => {
                out.u1(TAG_DYNAMIC);
                out.u2(*a);
                out.u2(*c);
            }
            PoolEntry::InvokeDynamic(a, c) => {
                out.u1(TAG_INVOKE_DYNAMIC);
                out.u2(*a);
                out.u2(*c);
            }
            PoolEntry::Module(i) => {
                out.u1(TAG_MODULE);
                out.u2(*i);
            }
            PoolEntry::Package(i) => {
                out.u1(TAG_PACKAGE);
                out.u2(*i);
            }
        }
    }
    out.bytes(&b.0);
    Ok(out.0)
}

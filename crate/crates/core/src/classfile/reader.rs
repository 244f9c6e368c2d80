use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::constant_pool::*;
use super::insn::*;
use super::opcodes::*;
use super::*;

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Cursor { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ClassFileError> {
        if self.data.len() - self.pos < n {
            return Err(ClassFileError::malformed(format!(
                "truncated input: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u1(&mut self) -> Result<u8, ClassFileError> {
        Ok(self.take(1)?[0])
    }

    fn u2(&mut self) -> Result<u16, ClassFileError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u4(&mut self) -> Result<u32, ClassFileError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn i1(&mut self) -> Result<i8, ClassFileError> {
        Ok(self.u1()? as i8)
    }

    fn i2(&mut self) -> Result<i16, ClassFileError> {
        Ok(self.u2()? as i16)
    }

    fn i4(&mut self) -> Result<i32, ClassFileError> {
        Ok(self.u4()? as i32)
    }

    fn is_empty(&self) -> bool {
        self.pos == self.data.len()
    }
}

/// Decodes a class file.
pub fn parse_class(bytes: &[u8]) -> Result<ClassModel, ClassFileError> {
    let mut c = Cursor::new(bytes);
    if bytes.len() < 4 || c.u4()? != MAGIC {
        return Err(ClassFileError::malformed("bad magic number"));
    }
    let minor_version = c.u2()?;
    let major_version = c.u2()?;
    if !(MIN_MAJOR_VERSION..=MAX_MAJOR_VERSION).contains(&major_version) {
        return Err(ClassFileError::UnsupportedVersion { major: major_version, minor: minor_version });
    }
    let pool = read_pool(&mut c)?;
    pool.validate()?;
    let access_flags = c.u2()?;
    let this_class = pool.class_name(c.u2()?)?;
    let super_index = c.u2()?;
    let super_class = if super_index == 0 { None } else { Some(pool.class_name(super_index)?) };
    let n = c.u2()?;
    let mut interfaces = Vec::with_capacity(n as usize);
    for _ in 0..n {
        interfaces.push(pool.class_name(c.u2()?)?);
    }

    let n = c.u2()?;
    let mut fields = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let access_flags = c.u2()?;
        let name = pool.utf8(c.u2()?)?;
        let descriptor = pool.utf8(c.u2()?)?;
        let attributes = read_attributes(&mut c, &pool)?;
        fields.push(FieldModel { access_flags, name, descriptor, attributes });
    }

    let n = c.u2()?;
    let mut methods = Vec::with_capacity(n as usize);
    for _ in 0..n {
        methods.push(read_method(&mut c, &pool)?);
    }
    let attributes = read_attributes(&mut c, &pool)?;
    if !c.is_empty() {
        return Err(ClassFileError::malformed("trailing bytes after class attributes"));
    }
    Ok(ClassModel {
        minor_version,
        major_version,
        constant_pool: pool,
        access_flags,
        this_class,
        super_class,
        interfaces,
        fields,
        methods,
        attributes,
    })
}

fn read_pool(c: &mut Cursor<'_>) -> Result<ConstantPool, ClassFileError> {
    let count = c.u2()? as usize;
    if count == 0 {
        return Err(ClassFileError::malformed("constant pool count is zero"));
    }
    let mut entries = Vec::with_capacity(count);
    entries.push(PoolEntry::Unusable);
    while entries.len() < count {
        let tag = c.u1()?;
        let e = match tag {
            TAG_UTF8 => {
                let len = c.u2()? as usize;
                PoolEntry::Utf8(JavaStr::from_bytes(c.take(len)?.to_vec()))
            }
            TAG_INTEGER => PoolEntry::Integer(c.i4()?),
            TAG_FLOAT => PoolEntry::Float(c.u4()?),
            TAG_LONG => PoolEntry::Long(((c.u4()? as u64) << 32 | c.u4()? as u64) as i64),
            TAG_DOUBLE => PoolEntry::Double((c.u4()? as u64) << 32 | c.u4()? as u64),
            TAG_CLASS => PoolEntry::Class(c.u2()?),
            TAG_STRING => PoolEntry::String(c.u2()?),
            TAG_FIELDREF => PoolEntry::Fieldref(c.u2()?, c.u2()?),
            TAG_METHODREF => PoolEntry::Methodref(c.u2()?, c.u2()?),
            TAG_INTERFACE_METHODREF => PoolEntry::InterfaceMethodref(c.u2()?, c.u2()?),
            TAG_NAME_AND_TYPE => PoolEntry::NameAndType(c.u2()?, c.u2()?),
            TAG_METHOD_HANDLE => PoolEntry::MethodHandle(c.u1()?, c.u2()?),
            TAG_METHOD_TYPE => PoolEntry::MethodType(c.u2()?),
            TAG_DYNAMIC => PoolEntry::Dynamic(c.u2()?, c.u2()?),
            TAG_INVOKE_DYNAMIC => PoolEntry::InvokeDynamic(c.u2()?, c.u2()?),
            TAG_MODULE => PoolEntry::Module(c.u2()?),
            TAG_PACKAGE => PoolEntry::Package(c.u2()?),
            _ => {
                return Err(ClassFileError::malformed(format!(
                    "unknown constant pool tag {tag} at index {}",
                    entries.len()
                )))
            }
        };
        let wide = e.is_wide();
        entries.push(e);
        if wide {
            if entries.len() == count {
                return Err(ClassFileError::malformed("wide constant in last pool slot"));
            }
            entries.push(PoolEntry::Unusable);
        }
    }
    Ok(ConstantPool::from_entries(entries))
}

fn read_attributes(c: &mut Cursor<'_>, pool: &ConstantPool) -> Result<Vec<RawAttribute>, ClassFileError> {
    let n = c.u2()?;
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let name = pool.utf8(c.u2()?)?;
        let len = c.u4()? as usize;
        out.push(RawAttribute { name, data: c.take(len)?.to_vec() });
    }
    Ok(out)
}

fn read_method(c: &mut Cursor<'_>, pool: &ConstantPool) -> Result<MethodModel, ClassFileError> {
    let access_flags = c.u2()?;
    let name = pool.utf8(c.u2()?)?;
    let descriptor = pool.utf8(c.u2()?)?;
    MethodDescriptor::parse(&descriptor)?;
    let raw = read_attributes(c, pool)?;
    let mut attributes = Vec::with_capacity(raw.len());
    let mut code = None;
    let mut code_position = 0;
    let mut exceptions_thrown = Vec::new();
    for a in raw {
        if a.name == "Code" {
            if code.is_some() {
                return Err(ClassFileError::malformed(format!("{name}: duplicate Code attribute")));
            }
            code_position = attributes.len();
            let mut body = read_code(&a.data, pool).map_err(|e| match e {
                ClassFileError::MalformedClass(m) => {
                    ClassFileError::malformed(format!("{name}{descriptor}: {m}"))
                }
                other => other,
            })?;
            let origin = CodeOrigin {
                decoded: body.clone(),
                bytes: a.data,
                pool_len: pool.count(),
                pool_hash: pool.fingerprint(pool.count()).unwrap_or(0),
            };
            body.set_origin(origin);
            code = Some(body);
            continue;
        }
        if a.name == "Exceptions" {
            let mut ec = Cursor::new(&a.data);
            let n = ec.u2()?;
            for _ in 0..n {
                exceptions_thrown.push(pool.class_name(ec.u2()?)?);
            }
        }
        attributes.push(a);
    }
    let bodiless = access_flags & (access::ACC_ABSTRACT | access::ACC_NATIVE) != 0;
    if bodiless == code.is_some() {
        return Err(ClassFileError::malformed(format!(
            "{name}{descriptor}: Code attribute presence does not match abstract/native flags"
        )));
    }
    Ok(MethodModel { access_flags, name, descriptor, code, exceptions_thrown, attributes, code_position })
}

/// An instruction with branch targets still expressed as absolute offsets.
enum RawInsn {
    Done(Insn),
    Jump(u8, u32),
    Table { low: i32, high: i32, default: u32, targets: Vec<u32> },
    Lookup { default: u32, pairs: Vec<(i32, u32)> },
}

fn target(base: usize, delta: i32, code_len: usize) -> Result<u32, ClassFileError> {
    let t = base as i64 + delta as i64;
    if t < 0 || t >= code_len as i64 {
        return Err(ClassFileError::malformed(format!("branch target {t} outside code")));
    }
    Ok(t as u32)
}

fn decode_insns(code: &[u8], pool: &ConstantPool) -> Result<Vec<(u32, RawInsn)>, ClassFileError> {
    let mut c = Cursor::new(code);
    let mut out = Vec::new();
    let len = code.len();
    while !c.is_empty() {
        let at = c.pos;
        let op = c.u1()?;
        let insn = match op {
            NOP..=DCONST_1 => Insn::Simple(op),
            BIPUSH => Insn::Int { opcode: op, value: c.i1()? as i32 },
            SIPUSH => Insn::Int { opcode: op, value: c.i2()? as i32 },
            LDC => Insn::Ldc(ldc_value(pool, c.u1()? as u16)?),
            LDC_W | LDC2_W => Insn::Ldc(ldc_value(pool, c.u2()?)?),
            ILOAD..=ALOAD | ISTORE..=ASTORE | RET => Insn::Var { opcode: op, slot: c.u1()? as u16 },
            ILOAD_0..=ALOAD_3 => {
                let k = op - ILOAD_0;
                Insn::Var { opcode: ILOAD + k / 4, slot: (k % 4) as u16 }
            }
            ISTORE_0..=ASTORE_3 => {
                let k = op - ISTORE_0;
                Insn::Var { opcode: ISTORE + k / 4, slot: (k % 4) as u16 }
            }
            IALOAD..=SALOAD | IASTORE..=LXOR | I2L..=DCMPG => Insn::Simple(op),
            IRETURN..=RETURN | ARRAYLENGTH | ATHROW | MONITORENTER | MONITOREXIT => Insn::Simple(op),
            IINC => Insn::Iinc { slot: c.u1()? as u16, delta: c.i1()? as i16 },
            IFEQ..=JSR | IFNULL | IFNONNULL => {
                let t = target(at, c.i2()? as i32, len)?;
                let op = if op == JSR { JSR } else { op };
                out.push((at as u32, RawInsn::Jump(op, t)));
                continue;
            }
            GOTO_W | JSR_W => {
                let t = target(at, c.i4()?, len)?;
                out.push((at as u32, RawInsn::Jump(if op == GOTO_W { GOTO } else { JSR }, t)));
                continue;
            }
            TABLESWITCH => {
                c.take((4 - (at + 1) % 4) % 4)?;
                let default = target(at, c.i4()?, len)?;
                let low = c.i4()?;
                let high = c.i4()?;
                if high < low {
                    return Err(ClassFileError::malformed("tableswitch high < low"));
                }
                let n = (high as i64 - low as i64 + 1) as usize;
                if n > len {
                    return Err(ClassFileError::malformed("tableswitch larger than code"));
                }
                let mut targets = Vec::with_capacity(n);
                for _ in 0..n {
                    targets.push(target(at, c.i4()?, len)?);
                }
                out.push((at as u32, RawInsn::Table { low, high, default, targets }));
                continue;
            }
            LOOKUPSWITCH => {
                c.take((4 - (at + 1) % 4) % 4)?;
                let default = target(at, c.i4()?, len)?;
                let n = c.i4()?;
                if n < 0 || n as usize > len {
                    return Err(ClassFileError::malformed("bad lookupswitch pair count"));
                }
                let mut pairs = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    let key = c.i4()?;
                    pairs.push((key, target(at, c.i4()?, len)?));
                }
                out.push((at as u32, RawInsn::Lookup { default, pairs }));
                continue;
            }
            GETSTATIC..=PUTFIELD => {
                let (owner, name, descriptor, _) = pool.member_ref(c.u2()?)?;
                Insn::Field { opcode: op, owner, name, descriptor }
            }
            INVOKEVIRTUAL..=INVOKEINTERFACE => {
                let (owner, name, descriptor, interface) = pool.member_ref(c.u2()?)?;
                if op == INVOKEINTERFACE {
                    c.take(2)?;
                }
                Insn::Method { opcode: op, owner, name, descriptor, interface }
            }
            INVOKEDYNAMIC => {
                let index = c.u2()?;
                c.take(2)?;
                let nt = match pool.get(index)? {
                    PoolEntry::InvokeDynamic(_, nt) => *nt,
                    _ => return Err(ClassFileError::malformed("invokedynamic without InvokeDynamic entry")),
                };
                let (name, descriptor) = pool.name_and_type(nt)?;
                Insn::InvokeDynamic { index, name, descriptor }
            }
            NEW | ANEWARRAY | CHECKCAST | INSTANCEOF => {
                Insn::Type { opcode: op, class: pool.class_name(c.u2()?)? }
            }
            NEWARRAY => Insn::Int { opcode: op, value: c.u1()? as i32 },
            WIDE => {
                let op2 = c.u1()?;
                match op2 {
                    ILOAD..=ALOAD | ISTORE..=ASTORE | RET => Insn::Var { opcode: op2, slot: c.u2()? },
                    IINC => Insn::Iinc { slot: c.u2()?, delta: c.i2()? },
                    _ => return Err(ClassFileError::malformed(format!("invalid wide opcode {op2:#x}"))),
                }
            }
            MULTIANEWARRAY => {
                Insn::MultiANewArray { class: pool.class_name(c.u2()?)?, dims: c.u1()? }
            }
            _ => return Err(ClassFileError::malformed(format!("invalid opcode {op:#x} at {at}"))),
        };
        out.push((at as u32, RawInsn::Done(insn)));
    }
    Ok(out)
}

fn ldc_value(pool: &ConstantPool, index: u16) -> Result<LdcValue, ClassFileError> {
    Ok(match pool.get(index)? {
        PoolEntry::Integer(v) => LdcValue::Int(*v),
        PoolEntry::Float(v) => LdcValue::Float(*v),
        PoolEntry::Long(v) => LdcValue::Long(*v),
        PoolEntry::Double(v) => LdcValue::Double(*v),
        PoolEntry::String(s) => LdcValue::String(pool.java_str(*s)?.clone()),
        PoolEntry::Class(n) => LdcValue::Class(pool.utf8(*n)?),
        PoolEntry::MethodType(d) => LdcValue::MethodType(pool.utf8(*d)?),
        PoolEntry::MethodHandle(..) => LdcValue::MethodHandle(index),
        PoolEntry::Dynamic(_, nt) => LdcValue::Dynamic { index, descriptor: pool.name_and_type(*nt)?.1 },
        other => return Err(ClassFileError::malformed(format!("ldc of non-loadable constant {other:?}"))),
    })
}

struct PendingCodeAttr {
    kind: PendingKind,
}

enum PendingKind {
    LineNumbers,
    LocalVars(Vec<(u32, u32, String, String, u16)>, bool),
    StackMap(Vec<(u32, PendingFrame)>),
    Raw(RawAttribute),
}

enum PendingType {
    Done(VerificationType),
    Uninit(u32),
}

enum PendingFrame {
    Same,
    SameLocals1(PendingType),
    Chop(u8),
    Append(Vec<PendingType>),
    Full(Vec<PendingType>, Vec<PendingType>),
}

fn read_code(data: &[u8], pool: &ConstantPool) -> Result<CodeBody, ClassFileError> {
    let mut c = Cursor::new(data);
    let max_stack = c.u2()?;
    let max_locals = c.u2()?;
    let code_len = c.u4()? as usize;
    if code_len == 0 || code_len > 65535 {
        return Err(ClassFileError::malformed(format!("invalid code length {code_len}")));
    }
    let code = c.take(code_len)?;
    let raw = decode_insns(code, pool)?;
    let boundaries: BTreeSet<u32> = raw.iter().map(|(o, _)| *o).collect();
    let check = |off: u32, allow_end: bool| -> Result<u32, ClassFileError> {
        if boundaries.contains(&off) || (allow_end && off as usize == code_len) {
            Ok(off)
        } else {
            Err(ClassFileError::malformed(format!("offset {off} is not an instruction boundary")))
        }
    };

    let mut label_offsets: BTreeSet<u32> = BTreeSet::new();
    for (_, r) in &raw {
        match r {
            RawInsn::Jump(_, t) => {
                label_offsets.insert(check(*t, false)?);
            }
            RawInsn::Table { default, targets, .. } => {
                label_offsets.insert(check(*default, false)?);
                for t in targets {
                    label_offsets.insert(check(*t, false)?);
                }
            }
            RawInsn::Lookup { default, pairs } => {
                label_offsets.insert(check(*default, false)?);
                for (_, t) in pairs {
                    label_offsets.insert(check(*t, false)?);
                }
            }
            RawInsn::Done(_) => {}
        }
    }

    let n = c.u2()?;
    let mut handlers = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let start = check(c.u2()? as u32, false)?;
        let end = check(c.u2()? as u32, true)?;
        let handler = check(c.u2()? as u32, false)?;
        let ct = c.u2()?;
        let catch_type = if ct == 0 { None } else { Some(pool.class_name(ct)?) };
        label_offsets.extend([start, end, handler]);
        handlers.push((start, end, handler, catch_type));
    }

    let mut line_entries: BTreeMap<u32, Vec<u16>> = BTreeMap::new();
    let mut pending = Vec::new();
    let n = c.u2()?;
    for _ in 0..n {
        let name = pool.utf8(c.u2()?)?;
        let len = c.u4()? as usize;
        let body = c.take(len)?;
        let mut a = Cursor::new(body);
        let kind = match name.as_str() {
            "LineNumberTable" if !pending.iter().any(|p: &PendingCodeAttr| matches!(p.kind, PendingKind::LineNumbers)) => {
                let count = a.u2()?;
                for _ in 0..count {
                    let pc = check(a.u2()? as u32, false)?;
                    line_entries.entry(pc).or_default().push(a.u2()?);
                }
                PendingKind::LineNumbers
            }
            "LocalVariableTable" | "LocalVariableTypeTable" => {
                let count = a.u2()?;
                let mut vars = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let start = check(a.u2()? as u32, true)?;
                    let end = check(start + a.u2()? as u32, true)?;
                    let vname = pool.utf8(a.u2()?)?;
                    let desc = pool.utf8(a.u2()?)?;
                    let slot = a.u2()?;
                    label_offsets.extend([start, end]);
                    vars.push((start, end, vname, desc, slot));
                }
                PendingKind::LocalVars(vars, name == "LocalVariableTypeTable")
            }
            "StackMapTable" => {
                let frames = read_stack_map(&mut a, pool, &check)?;
                for (off, f) in &frames {
                    label_offsets.insert(*off);
                    let types: Vec<&PendingType> = match f {
                        PendingFrame::SameLocals1(t) => vec![t],
                        PendingFrame::Append(v) => v.iter().collect(),
                        PendingFrame::Full(l, s) => l.iter().chain(s.iter()).collect(),
                        _ => vec![],
                    };
                    for t in types {
                        if let PendingType::Uninit(o) = t {
                            label_offsets.insert(*o);
                        }
                    }
                }
                PendingKind::StackMap(frames)
            }
            _ => PendingKind::Raw(RawAttribute { name, data: body.to_vec() }),
        };
        if !matches!(kind, PendingKind::Raw(_)) && !a.is_empty() {
            return Err(ClassFileError::malformed("trailing bytes in code attribute"));
        }
        pending.push(PendingCodeAttr { kind });
    }
    if !c.is_empty() {
        return Err(ClassFileError::malformed("trailing bytes in Code attribute"));
    }

    let labels: HashMap<u32, Label> =
        label_offsets.iter().enumerate().map(|(i, o)| (*o, Label(i as u32))).collect();
    let lab = |o: u32| labels[&o];

    let mut insns = Vec::with_capacity(raw.len() + labels.len() + line_entries.len());
    for (off, r) in raw {
        if let Some(l) = labels.get(&off) {
            insns.push(Insn::Label(*l));
        }
        if let Some(lines) = line_entries.get(&off) {
            insns.extend(lines.iter().map(|n| Insn::LineNumber(*n)));
        }
        insns.push(match r {
            RawInsn::Done(i) => i,
            RawInsn::Jump(op, t) => Insn::Jump { opcode: op, target: lab(t) },
            RawInsn::Table { low, high, default, targets } => Insn::TableSwitch {
                low,
                high,
                default: lab(default),
                targets: targets.into_iter().map(lab).collect(),
            },
            RawInsn::Lookup { default, pairs } => Insn::LookupSwitch {
                default: lab(default),
                pairs: pairs.into_iter().map(|(k, t)| (k, lab(t))).collect(),
            },
        });
    }
    if let Some(l) = labels.get(&(code_len as u32)) {
        insns.push(Insn::Label(*l));
    }

    let exception_table = handlers
        .into_iter()
        .map(|(s, e, h, catch_type)| TryCatch { start: lab(s), end: lab(e), handler: lab(h), catch_type })
        .collect();

    let conv = |t: PendingType| match t {
        PendingType::Done(v) => v,
        PendingType::Uninit(o) => VerificationType::Uninitialized(lab(o)),
    };
    let attributes = pending
        .into_iter()
        .map(|p| match p.kind {
            PendingKind::LineNumbers => CodeAttribute::LineNumbers,
            PendingKind::LocalVars(v, types) => {
                let vars = v
                    .into_iter()
                    .map(|(s, e, name, descriptor, slot)| LocalVariable {
                        start: lab(s),
                        end: lab(e),
                        name,
                        descriptor,
                        slot,
                    })
                    .collect();
                if types {
                    CodeAttribute::LocalVariableTypes(vars)
                } else {
                    CodeAttribute::LocalVariables(vars)
                }
            }
            PendingKind::StackMap(frames) => CodeAttribute::StackMap(
                frames
                    .into_iter()
                    .map(|(off, f)| StackMapFrame {
                        label: lab(off),
                        kind: match f {
                            PendingFrame::Same => FrameKind::Same,
                            PendingFrame::SameLocals1(t) => FrameKind::SameLocals1StackItem(conv(t)),
                            PendingFrame::Chop(k) => FrameKind::Chop(k),
                            PendingFrame::Append(v) => FrameKind::Append(v.into_iter().map(conv).collect()),
                            PendingFrame::Full(l, s) => FrameKind::Full {
                                locals: l.into_iter().map(conv).collect(),
                                stack: s.into_iter().map(conv).collect(),
                            },
                        },
                    })
                    .collect(),
            ),
            PendingKind::Raw(r) => CodeAttribute::Raw(r),
        })
        .collect();

    let mut body = CodeBody::new(insns);
    body.max_stack = max_stack;
    body.max_locals = max_locals;
    body.exception_table = exception_table;
    body.attributes = attributes;
    Ok(body)
}

fn read_vtype(
    a: &mut Cursor<'_>,
    pool: &ConstantPool,
    check: &dyn Fn(u32, bool) -> Result<u32, ClassFileError>,
) -> Result<PendingType, ClassFileError> {
    Ok(PendingType::Done(match a.u1()? {
        0 => VerificationType::Top,
        1 => VerificationType::Integer,
        2 => VerificationType::Float,
        3 => VerificationType::Double,
        4 => VerificationType::Long,
        5 => VerificationType::Null,
        6 => VerificationType::UninitializedThis,
        7 => VerificationType::Object(pool.class_name(a.u2()?)?),
        8 => return Ok(PendingType::Uninit(check(a.u2()? as u32, false)?)),
        t => return Err(ClassFileError::malformed(format!("bad verification type tag {t}"))),
    }))
}

fn read_stack_map(
    a: &mut Cursor<'_>,
    pool: &ConstantPool,
    check: &dyn Fn(u32, bool) -> Result<u32, ClassFileError>,
) -> Result<Vec<(u32, PendingFrame)>, ClassFileError> {
    let n = a.u2()?;
    let mut out = Vec::with_capacity(n as usize);
    let mut prev: Option<u32> = None;
    for _ in 0..n {
        let tag = a.u1()?;
        let (delta, frame) = match tag {
            0..=63 => (tag as u32, PendingFrame::Same),
            64..=127 => ((tag - 64) as u32, PendingFrame::SameLocals1(read_vtype(a, pool, check)?)),
            247 => {
                let d = a.u2()? as u32;
                (d, PendingFrame::SameLocals1(read_vtype(a, pool, check)?))
            }
            248..=250 => (a.u2()? as u32, PendingFrame::Chop(251 - tag)),
            251 => (a.u2()? as u32, PendingFrame::Same),
            252..=254 => {
                let d = a.u2()? as u32;
                let mut v = Vec::new();
                for _ in 0..(tag - 251) {
                    v.push(read_vtype(a, pool, check)?);
                }
                (d, PendingFrame::Append(v))
            }
            255 => {
                let d = a.u2()? as u32;
                let nl = a.u2()?;
                let mut locals = Vec::with_capacity(nl as usize);
                for _ in 0..nl {
                    locals.push(read_vtype(a, pool, check)?);
                }
                let ns = a.u2()?;
                let mut stack = Vec::with_capacity(ns as usize);
                for _ in 0..ns {
                    stack.push(read_vtype(a, pool, check)?);
                }
                (d, PendingFrame::Full(locals, stack))
            }
            _ => return Err(ClassFileError::malformed(format!("reserved stack map frame type {tag}"))),
        };
        let off = match prev {
            None => delta,
            Some(p) => p + delta + 1,
        };
        out.push((check(off, false)?, frame));
        prev = Some(off);
    }
    Ok(out)
}

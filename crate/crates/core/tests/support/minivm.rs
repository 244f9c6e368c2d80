//! A tiny bytecode interpreter used as an execution oracle for woven
//! micro-fixtures. It traces every executed program instruction by mnemonic
//! and every printed line as `> text`; the `System.out` loads, string
//! constants and `PrintStream` calls that make up print advice are not
//! traced themselves.

use weft::classfile::opcodes::*;
use weft::classfile::{ClassModel, FieldType, Insn, LdcValue, MethodDescriptor};

#[derive(Clone, Debug, PartialEq)]
pub enum V {
    I(i32),
    L(i64),
    /// Reference: `None` is null; objects are numbered from 1.
    R(Option<usize>),
    S(String),
    Stream,
    Top,
}

impl V {
    fn i(&self) -> i32 {
        match self {
            V::I(v) => *v,
            other => panic!("expected int, found {other:?}"),
        }
    }

    pub fn render(&self) -> String {
        match self {
            V::I(v) => v.to_string(),
            V::L(v) => v.to_string(),
            V::R(None) => "null".into(),
            V::R(Some(id)) => format!("obj{id}"),
            V::S(s) => s.clone(),
            V::Stream => "stream".into(),
            V::Top => "top".into(),
        }
    }
}

#[derive(Debug, PartialEq)]
pub enum Outcome {
    Returned(Option<V>),
    Threw,
}

pub struct Vm<'a> {
    class: &'a ClassModel,
    pub trace: Vec<String>,
    /// Calls to methods of other classes: `Owner.name(arg, ...)`.
    pub calls: Vec<String>,
    /// `(method, position)` of every executed real instruction.
    pub path: Vec<(String, usize)>,
    steps: usize,
}

fn zero(t: Option<&FieldType>) -> Option<V> {
    Some(match t? {
        FieldType::Long => V::L(0),
        FieldType::Object(_) | FieldType::Array(_) => V::R(None),
        _ => V::I(0),
    })
}

impl<'a> Vm<'a> {
    pub fn new(class: &'a ClassModel) -> Self {
        Vm { class, trace: Vec::new(), calls: Vec::new(), path: Vec::new(), steps: 0 }
    }

    /// Lines printed so far, without the `> ` marker.
    pub fn printed(&self) -> Vec<String> {
        self.trace.iter().filter_map(|t| t.strip_prefix("> ").map(str::to_string)).collect()
    }

    pub fn call(&mut self, name: &str, desc: &str, args: Vec<V>) -> Outcome {
        let m = self
            .class
            .methods
            .iter()
            .find(|m| m.name == name && m.descriptor == desc)
            .unwrap_or_else(|| panic!("no method {name}{desc}"));
        let code = m.code.as_ref().expect("method has code");
        let labels = code.label_positions();
        let mut locals = vec![V::Top; code.max_locals.max(8) as usize + 8];
        let mut slot = 0;
        for a in args {
            let wide = matches!(a, V::L(_));
            locals[slot] = a;
            slot += if wide { 2 } else { 1 };
        }
        let mut stack: Vec<V> = Vec::new();
        let mut pc = 0;
        let goto = |l: &weft::classfile::Label| labels[l];
        while pc < code.insns.len() {
            self.steps += 1;
            assert!(self.steps < 1_000_000, "step limit");
            let insn = &code.insns[pc];
            pc += 1;
            if !insn.is_real() {
                continue;
            }
            self.path.push((name.to_string(), pc - 1));
            let quiet = matches!(insn, Insn::Field { opcode: GETSTATIC, owner, .. } if owner == "java/lang/System")
                || matches!(insn, Insn::Ldc(LdcValue::String(_)))
                || matches!(insn, Insn::Method { owner, .. } if owner == "java/io/PrintStream");
            if !quiet {
                self.trace.push(mnemonic(insn.opcode().unwrap()).to_string());
            }
            match insn {
                Insn::Simple(op) => match *op {
                    NOP => {}
                    ACONST_NULL => stack.push(V::R(None)),
                    ICONST_M1..=ICONST_5 => stack.push(V::I(*op as i32 - ICONST_0 as i32)),
                    LCONST_0 | LCONST_1 => stack.push(V::L((*op - LCONST_0) as i64)),
                    IADD | ISUB | IMUL | IDIV | IREM | IAND | IOR | IXOR => {
                        let b = stack.pop().unwrap().i();
                        let a = stack.pop().unwrap().i();
                        stack.push(V::I(match *op {
                            IADD => a.wrapping_add(b),
                            ISUB => a.wrapping_sub(b),
                            IMUL => a.wrapping_mul(b),
                            IDIV => a.wrapping_div(b),
                            IREM => a.wrapping_rem(b),
                            IAND => a & b,
                            IOR => a | b,
                            _ => a ^ b,
                        }));
                    }
                    INEG => {
                        let a = stack.pop().unwrap().i();
                        stack.push(V::I(a.wrapping_neg()));
                    }
                    DUP => {
                        let v = stack.last().unwrap().clone();
                        stack.push(v);
                    }
                    POP => {
                        stack.pop();
                    }
                    SWAP => {
                        let n = stack.len();
                        stack.swap(n - 1, n - 2);
                    }
                    IRETURN | LRETURN | ARETURN => return Outcome::Returned(stack.pop()),
                    RETURN => return Outcome::Returned(None),
                    ATHROW => return Outcome::Threw,
                    other => panic!("unsupported {}", mnemonic(other)),
                },
                Insn::Int { value, .. } => stack.push(V::I(*value)),
                Insn::Ldc(LdcValue::Int(v)) => stack.push(V::I(*v)),
                Insn::Ldc(LdcValue::Long(v)) => stack.push(V::L(*v)),
                Insn::Ldc(LdcValue::String(s)) => stack.push(V::S(s.to_text())),
                Insn::Var { opcode, slot } => {
                    let s = *slot as usize;
                    match *opcode {
                        ILOAD..=ALOAD => stack.push(locals[s].clone()),
                        ISTORE..=ASTORE => locals[s] = stack.pop().unwrap(),
                        other => panic!("unsupported {}", mnemonic(other)),
                    }
                }
                Insn::Iinc { slot, delta } => {
                    let v = locals[*slot as usize].i();
                    locals[*slot as usize] = V::I(v.wrapping_add(i32::from(*delta)));
                }
                Insn::Jump { opcode, target } => {
                    let taken = match *opcode {
                        GOTO => true,
                        IFEQ..=IFLE => {
                            let a = stack.pop().unwrap().i();
                            match *opcode {
                                IFEQ => a == 0,
                                IFNE => a != 0,
                                IFLT => a < 0,
                                IFGE => a >= 0,
                                IFGT => a > 0,
                                _ => a <= 0,
                            }
                        }
                        IF_ICMPEQ..=IF_ICMPLE => {
                            let b = stack.pop().unwrap().i();
                            let a = stack.pop().unwrap().i();
                            match *opcode {
                                IF_ICMPEQ => a == b,
                                IF_ICMPNE => a != b,
                                IF_ICMPLT => a < b,
                                IF_ICMPGE => a >= b,
                                IF_ICMPGT => a > b,
                                _ => a <= b,
                            }
                        }
                        IFNULL | IFNONNULL => {
                            let a = stack.pop().unwrap();
                            (a == V::R(None)) == (*opcode == IFNULL)
                        }
                        IF_ACMPEQ | IF_ACMPNE => {
                            let b = stack.pop().unwrap();
                            let a = stack.pop().unwrap();
                            (a == b) == (*opcode == IF_ACMPEQ)
                        }
                        other => panic!("unsupported {}", mnemonic(other)),
                    };
                    if taken {
                        pc = goto(target);
                    }
                }
                Insn::TableSwitch { low, default, targets, .. } => {
                    let k = stack.pop().unwrap().i() as i64 - *low as i64;
                    let t = usize::try_from(k).ok().and_then(|k| targets.get(k)).unwrap_or(default);
                    pc = goto(t);
                }
                Insn::LookupSwitch { default, pairs } => {
                    let k = stack.pop().unwrap().i();
                    pc = goto(pairs.iter().find(|(key, _)| *key == k).map_or(default, |(_, l)| l));
                }
                Insn::Field { opcode: GETSTATIC, owner, .. } if owner == "java/lang/System" => stack.push(V::Stream),
                Insn::Method { opcode, owner, name, descriptor, .. } => {
                    let d = MethodDescriptor::parse(descriptor).unwrap();
                    let n = d.params.len() + usize::from(*opcode != INVOKESTATIC);
                    let args = stack.split_off(stack.len() - n);
                    if owner == "java/io/PrintStream" {
                        self.trace.push(format!("> {}", args[1].render()));
                        continue;
                    }
                    if owner == "java/lang/System" && name == "identityHashCode" {
                        stack.push(V::I(match &args[0] {
                            V::R(Some(id)) => *id as i32,
                            _ => 0,
                        }));
                        continue;
                    }
                    if *opcode == INVOKESTATIC && *owner == self.class.this_class {
                        match self.call(name, descriptor, args) {
                            Outcome::Returned(Some(v)) => stack.push(v),
                            Outcome::Returned(None) => {}
                            Outcome::Threw => return Outcome::Threw,
                        }
                        continue;
                    }
                    let rendered: Vec<String> = args.iter().map(V::render).collect();
                    self.calls.push(format!("{owner}.{name}({})", rendered.join(", ")));
                    let ret = match (&d.ret, args.first()) {
                        (Some(FieldType::Int), Some(V::I(v))) => Some(V::I(*v)),
                        (r, _) => zero(r.as_ref()),
                    };
                    if let Some(v) = ret {
                        stack.push(v);
                    }
                }
                other => panic!("unsupported {other:?}"),
            }
        }
        panic!("fell off the end of {name}{desc}");
    }
}

/// Program instructions only, without printed lines.
pub fn program_only(trace: &[String]) -> Vec<String> {
    trace.iter().filter(|t| !t.starts_with("> ")).cloned().collect()
}

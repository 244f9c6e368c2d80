//! Runnable fixture programs and the monitor classes their advice calls,
//! assembled directly as class models.

use weft::classfile::access::{ACC_PUBLIC, ACC_STATIC, ACC_SUPER};
use weft::classfile::opcodes::*;
use weft::classfile::{emit_class, ClassModel, CodeBody, FieldModel, Insn, Label, MethodModel};

use super::jvm::finish;

pub const MONITOR: &str = "IteratorMonitor";
pub const REPORTER: &str = "InversionReporter";

fn out() -> Insn {
    Insn::field(GETSTATIC, "java/lang/System", "out", "Ljava/io/PrintStream;")
}

fn print(desc: &str, newline: bool) -> Insn {
    Insn::method(INVOKEVIRTUAL, "java/io/PrintStream", if newline { "println" } else { "print" }, desc)
}

fn static_method(owner: &str, name: &str, desc: &str, insns: Vec<Insn>) -> MethodModel {
    let mut m = MethodModel::new(ACC_PUBLIC | ACC_STATIC, name, desc, Some(CodeBody::new(insns)));
    finish(owner, &mut m);
    m
}

fn class(name: &str, fields: &[&str], methods: Vec<MethodModel>) -> ClassModel {
    let mut c = ClassModel::new(ACC_PUBLIC | ACC_SUPER, name, Some("java/lang/Object"));
    c.major_version = 49;
    c.fields = fields
        .iter()
        .map(|f| FieldModel { access_flags: ACC_PUBLIC | ACC_STATIC, name: f.to_string(), descriptor: "I".into(), attributes: Vec::new() })
        .collect();
    c.methods = methods;
    c
}

fn bump(owner: &str, field: &str) -> [Insn; 4] {
    [
        Insn::field(GETSTATIC, owner, field, "I"),
        Insn::Simple(ICONST_1),
        Insn::Simple(IADD),
        Insn::field(PUTSTATIC, owner, field, "I"),
    ]
}

/// `prefix name=value` for each counter field.
fn dump(owner: &str, prefix: &str, fields: &[&str]) -> MethodModel {
    let mut insns = Vec::new();
    for f in fields {
        insns.extend([out(), Insn::ldc_string(&format!("{prefix} {f}=")), print("(Ljava/lang/String;)V", false)]);
        insns.extend([out(), Insn::field(GETSTATIC, owner, f, "I"), print("(I)V", true)]);
    }
    insns.push(Insn::Simple(RETURN));
    static_method(owner, "dump", "()V", insns)
}

const MONITOR_COUNTERS: [&str; 4] = ["creations", "hasNext", "next", "violations"];

/// Counts iterator creations, `hasNext` and `next` calls, and `next` calls
/// not preceded by a `hasNext` call.
pub fn iterator_monitor() -> ClassModel {
    let m = MONITOR;
    let obj = "Ljava/lang/Object;";
    let mut creation = bump(m, "creations").to_vec();
    creation.push(Insn::Simple(RETURN));
    let mut has_next = bump(m, "hasNext").to_vec();
    has_next.extend([Insn::Simple(ICONST_1), Insn::field(PUTSTATIC, m, "safe", "I"), Insn::Simple(RETURN)]);
    let ok = Label(0);
    let mut next = bump(m, "next").to_vec();
    next.extend([Insn::field(GETSTATIC, m, "safe", "I"), Insn::jump(IFNE, ok)]);
    next.extend(bump(m, "violations"));
    next.extend([Insn::Label(ok), Insn::Simple(ICONST_0), Insn::field(PUTSTATIC, m, "safe", "I"), Insn::Simple(RETURN)]);
    let mut fields = MONITOR_COUNTERS.to_vec();
    fields.push("safe");
    class(
        m,
        &fields,
        vec![
            static_method(m, "iteratorCreation", &format!("({obj}{obj}{obj})V"), creation),
            static_method(m, "hasNextCall", &format!("({obj})V"), has_next),
            static_method(m, "nextCall", &format!("({obj})V"), next),
            dump(m, "monitor", &MONITOR_COUNTERS),
        ],
    )
}

/// Counts reported inversions and duplicated-check events.
pub fn inversion_reporter() -> ClassModel {
    let r = REPORTER;
    let mut report = bump(r, "inversions").to_vec();
    report.push(Insn::Simple(RETURN));
    let mut event = bump(r, "events").to_vec();
    event.push(Insn::Simple(RETURN));
    class(
        r,
        &["inversions", "events"],
        vec![
            static_method(r, "report", "(I)V", report),
            static_method(r, "event", "()V", event),
            dump(r, "reporter", &["inversions", "events"]),
        ],
    )
}

pub const TRACED: &str = "Traced";

/// `abs(I)I`, `loop3()I` counting a local to 3, and a `main` calling
/// `abs(-5)` then `loop3()`.
pub fn traced() -> ClassModel {
    let o = TRACED;
    let l = Label(0);
    let abs = static_method(
        o,
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
    );
    let (head, done) = (Label(0), Label(1));
    let loop3 = static_method(
        o,
        "loop3",
        "()I",
        vec![
            Insn::Simple(ICONST_0),
            Insn::var(ISTORE, 0),
            Insn::Label(head),
            Insn::var(ILOAD, 0),
            Insn::Simple(ICONST_3),
            Insn::jump(IF_ICMPGE, done),
            Insn::Iinc { slot: 0, delta: 1 },
            Insn::jump(GOTO, head),
            Insn::Label(done),
            Insn::var(ILOAD, 0),
            Insn::Simple(IRETURN),
        ],
    );
    let main = static_method(
        o,
        "main",
        "([Ljava/lang/String;)V",
        vec![
            out(),
            Insn::push_int(-5),
            Insn::method(INVOKESTATIC, o, "abs", "(I)I"),
            print("(I)V", true),
            out(),
            Insn::method(INVOKESTATIC, o, "loop3", "()I"),
            print("(I)V", true),
            Insn::Simple(RETURN),
        ],
    );
    class(o, &[], vec![abs, loop3, main])
}

/// A `main` filling an `ArrayList` with `size` elements and iterating it
/// with explicit `hasNext`/`next` pairs; with `checked` false no `hasNext`
/// call is made. Ends by calling the monitor's `dump`.
pub fn iterating(name: &str, size: usize, checked: bool) -> ClassModel {
    let list = "java/util/List";
    let it = "java/util/Iterator";
    let mut insns = vec![
        Insn::type_insn(NEW, "java/util/ArrayList"),
        Insn::Simple(DUP),
        Insn::method(INVOKESPECIAL, "java/util/ArrayList", "<init>", "()V"),
        Insn::var(ASTORE, 1),
    ];
    for k in 0..size {
        insns.extend([
            Insn::var(ALOAD, 1),
            Insn::ldc_string(&format!("e{k}")),
            Insn::method(INVOKEINTERFACE, list, "add", "(Ljava/lang/Object;)Z"),
            Insn::Simple(POP),
        ]);
    }
    insns.extend([
        Insn::var(ALOAD, 1),
        Insn::method(INVOKEINTERFACE, list, "iterator", "()Ljava/util/Iterator;"),
        Insn::var(ASTORE, 2),
    ]);
    for _ in 0..size {
        if checked {
            insns.extend([Insn::var(ALOAD, 2), Insn::method(INVOKEINTERFACE, it, "hasNext", "()Z"), Insn::Simple(POP)]);
        }
        insns.extend([
            out(),
            Insn::var(ALOAD, 2),
            Insn::method(INVOKEINTERFACE, it, "next", "()Ljava/lang/Object;"),
            print("(Ljava/lang/Object;)V", true),
        ]);
    }
    insns.extend([Insn::method(INVOKESTATIC, MONITOR, "dump", "()V"), Insn::Simple(RETURN)]);
    class(name, &[], vec![static_method(name, "main", "([Ljava/lang/String;)V", insns)])
}

pub const CHECKSUM: &str = "Checksum";

/// `sum(I)I` folds `0..n` into a checksum, adding even and xoring odd
/// values; `main` prints `sum(args[0])` and calls the reporter's `dump`.
pub fn checksum() -> ClassModel {
    let o = CHECKSUM;
    let (head, odd, join, done) = (Label(0), Label(1), Label(2), Label(3));
    let sum = static_method(
        o,
        "sum",
        "(I)I",
        vec![
            Insn::Simple(ICONST_0),
            Insn::var(ISTORE, 1),
            Insn::Simple(ICONST_0),
            Insn::var(ISTORE, 2),
            Insn::Label(head),
            Insn::var(ILOAD, 2),
            Insn::var(ILOAD, 0),
            Insn::jump(IF_ICMPGE, done),
            Insn::var(ILOAD, 2),
            Insn::Simple(ICONST_1),
            Insn::Simple(IAND),
            Insn::jump(IFNE, odd),
            Insn::var(ILOAD, 1),
            Insn::var(ILOAD, 2),
            Insn::Simple(IADD),
            Insn::var(ISTORE, 1),
            Insn::jump(GOTO, join),
            Insn::Label(odd),
            Insn::var(ILOAD, 1),
            Insn::var(ILOAD, 2),
            Insn::Simple(IXOR),
            Insn::var(ISTORE, 1),
            Insn::Label(join),
            Insn::Iinc { slot: 2, delta: 1 },
            Insn::jump(GOTO, head),
            Insn::Label(done),
            Insn::var(ILOAD, 1),
            Insn::Simple(IRETURN),
        ],
    );
    let main = static_method(
        o,
        "main",
        "([Ljava/lang/String;)V",
        vec![
            out(),
            Insn::var(ALOAD, 0),
            Insn::Simple(ICONST_0),
            Insn::Simple(AALOAD),
            Insn::method(INVOKESTATIC, "java/lang/Integer", "parseInt", "(Ljava/lang/String;)I"),
            Insn::method(INVOKESTATIC, o, "sum", "(I)I"),
            print("(I)V", true),
            Insn::method(INVOKESTATIC, REPORTER, "dump", "()V"),
            Insn::Simple(RETURN),
        ],
    );
    class(o, &[], vec![sum, main])
}

pub fn emit(classes: &[ClassModel]) -> Vec<(String, Vec<u8>)> {
    classes.iter().map(|c| (c.this_class.clone(), emit_class(c).expect("fixture emits"))).collect()
}

/// `name=value` counters printed by a `dump` with `prefix`.
pub fn counters(stdout: &str, prefix: &str) -> std::collections::BTreeMap<String, i64> {
    stdout
        .lines()
        .filter_map(|l| l.strip_prefix(prefix)?.trim().split_once('='))
        .map(|(k, v)| (k.to_string(), v.parse().expect("counter value")))
        .collect()
}

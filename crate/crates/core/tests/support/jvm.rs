//! Locating a `java` launcher and running generated classes on it.

use std::path::{Path, PathBuf};
use std::process::Command;

use weft::analysis::{finalize_code, ClassHierarchy, FinalizeOptions};
use weft::classfile::access::{ACC_PUBLIC, ACC_STATIC, ACC_SUPER};
use weft::classfile::opcodes::*;
use weft::classfile::{emit_class, ClassModel, CodeBody, Insn, Label, MethodModel, TryCatch};

fn works(java: &Path) -> bool {
    Command::new(java).arg("-version").output().is_ok_and(|o| o.status.success())
}

/// `WEFT_JAVA`, then `java` on `PATH`, then the runtime bundled with the
/// `jdk4py` Python package.
pub fn java() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("WEFT_JAVA").map(PathBuf::from) {
        return works(&p).then_some(p);
    }
    if let Some(paths) = std::env::var_os("PATH") {
        for dir in std::env::split_paths(&paths) {
            let p = dir.join("java");
            if p.is_file() && works(&p) {
                return Some(p);
            }
        }
    }
    let out = Command::new("python3").args(["-c", "import jdk4py; print(jdk4py.JAVA)"]).output().ok()?;
    let p = PathBuf::from(String::from_utf8(out.stdout).ok()?.trim());
    (out.status.success() && works(&p)).then_some(p)
}

/// Writes `(internal name, bytes)` pairs as a class-file tree under `dir`.
pub fn write_classes(dir: &Path, classes: &[(String, Vec<u8>)]) {
    for (name, bytes) in classes {
        let path = dir.join(format!("{name}.class"));
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, bytes).unwrap();
    }
}

pub struct JavaRun {
    pub stdout: String,
    pub stderr: String,
    pub code: Option<i32>,
}

pub fn run(java: &Path, classpath: &[&Path], main: &str, args: &[String]) -> JavaRun {
    let cp = std::env::join_paths(classpath).unwrap();
    let out = Command::new(java)
        .arg("-Xshare:off")
        .arg("-cp")
        .arg(cp)
        .arg(main)
        .args(args)
        .output()
        .expect("java runs");
    JavaRun {
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        code: out.status.code(),
    }
}

/// Completes `code` (max values, no stack map) for a class-file version 49
/// method.
pub fn finish(owner: &str, m: &mut MethodModel) {
    let mut code = m.code.take().unwrap();
    finalize_code(owner, m, &mut code, &ClassHierarchy::new(), FinalizeOptions { stack_map: false, use_hints: false })
        .unwrap();
    m.code = Some(code);
}

pub const LOADER: &str = "WeftLoad";
pub const LOADER_TAG: &str = "@@weft";

/// A class whose `main` initializes every class named on the command line
/// and prints `@@weft<TAB>name<TAB>OK` or the throwable it raised.
pub fn loader_class() -> Vec<u8> {
    let out = || Insn::field(GETSTATIC, "java/lang/System", "out", "Ljava/io/PrintStream;");
    let print = |desc: &str| Insn::method(INVOKEVIRTUAL, "java/io/PrintStream", "print", desc);
    let arg = [Insn::var(ALOAD, 0), Insn::var(ILOAD, 1), Insn::Simple(AALOAD)];
    let (lp, end, start, stop, handler, next) = (Label(0), Label(1), Label(2), Label(3), Label(4), Label(5));
    let mut insns = vec![Insn::Simple(ICONST_0), Insn::var(ISTORE, 1), Insn::Label(lp)];
    insns.extend([Insn::var(ILOAD, 1), Insn::var(ALOAD, 0), Insn::Simple(ARRAYLENGTH), Insn::jump(IF_ICMPGE, end)]);
    insns.push(Insn::Label(start));
    insns.extend(arg.clone());
    insns.push(Insn::method(INVOKESTATIC, "java/lang/Class", "forName", "(Ljava/lang/String;)Ljava/lang/Class;"));
    insns.push(Insn::Simple(POP));
    insns.push(Insn::Simple(ACONST_NULL));
    insns.push(Insn::var(ASTORE, 2));
    insns.push(Insn::Label(stop));
    insns.push(Insn::jump(GOTO, next));
    insns.extend([Insn::Label(handler), Insn::var(ASTORE, 2), Insn::Label(next)]);
    insns.extend([out(), Insn::ldc_string(&format!("{LOADER_TAG}\t")), print("(Ljava/lang/String;)V"), out()]);
    insns.extend(arg);
    insns.extend([print("(Ljava/lang/String;)V"), out(), Insn::ldc_string("\t"), print("(Ljava/lang/String;)V")]);
    let ok = Label(6);
    let done = Label(7);
    insns.extend([
        Insn::var(ALOAD, 2),
        Insn::jump(IFNULL, ok),
        out(),
        Insn::var(ALOAD, 2),
        Insn::method(INVOKEVIRTUAL, "java/io/PrintStream", "println", "(Ljava/lang/Object;)V"),
        Insn::jump(GOTO, done),
        Insn::Label(ok),
        out(),
        Insn::ldc_string("OK"),
        Insn::method(INVOKEVIRTUAL, "java/io/PrintStream", "println", "(Ljava/lang/String;)V"),
        Insn::Label(done),
        Insn::Iinc { slot: 1, delta: 1 },
        Insn::jump(GOTO, lp),
        Insn::Label(end),
        Insn::Simple(RETURN),
    ]);
    let mut code = CodeBody::new(insns);
    code.exception_table.push(TryCatch { start, end: stop, handler, catch_type: Some("java/lang/Throwable".into()) });
    let mut m = MethodModel::new(ACC_PUBLIC | ACC_STATIC, "main", "([Ljava/lang/String;)V", Some(code));
    finish(LOADER, &mut m);
    let mut c = ClassModel::new(ACC_PUBLIC | ACC_SUPER, LOADER, Some("java/lang/Object"));
    c.major_version = 49;
    c.methods.push(m);
    emit_class(&c).unwrap()
}

/// Loads and initializes `names` (dotted) from `dir`; returns the outcome
/// line for each class, `OK` or the throwable's string form.
pub fn load_all(java: &Path, dir: &Path, names: &[String]) -> Vec<(String, String)> {
    let tmp = tempfile::tempdir().unwrap();
    write_classes(tmp.path(), &[(LOADER.to_string(), loader_class())]);
    let r = run(java, &[tmp.path(), dir], LOADER, names);
    r.stdout
        .lines()
        .filter_map(|l| l.strip_prefix(LOADER_TAG))
        .filter_map(|l| {
            let mut it = l.trim_start_matches('\t').splitn(2, '\t');
            Some((it.next()?.to_string(), it.next()?.to_string()))
        })
        .collect()
}

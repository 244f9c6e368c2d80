//! Class hierarchy lookups for merging reference types.

use std::collections::HashMap;
use std::path::Path;

use super::AnalysisError;
use crate::classfile::access::ACC_INTERFACE;
use crate::classfile::jar::read_jar;
use crate::classfile::{parse_class, ClassFileError, ClassModel};

#[derive(Clone, Debug, PartialEq, Eq)]
struct ClassInfo {
    super_class: Option<String>,
    interface: bool,
}

/// Superclass and interface facts about known classes.
///
/// Starts with a table of common `java.lang`, `java.util` and `java.io`
/// types; further classes come from class files, jars and directories.
#[derive(Clone, Debug)]
pub struct ClassHierarchy {
    classes: HashMap<String, ClassInfo>,
    /// Fail on unknown classes instead of falling back to `java/lang/Object`.
    pub strict: bool,
}

const BUILTIN_CLASSES: &[(&str, &str)] = &[
    ("java/lang/Throwable", "java/lang/Object"),
    ("java/lang/Exception", "java/lang/Throwable"),
    ("java/lang/Error", "java/lang/Throwable"),
    ("java/lang/RuntimeException", "java/lang/Exception"),
    ("java/lang/ReflectiveOperationException", "java/lang/Exception"),
    ("java/lang/ClassNotFoundException", "java/lang/ReflectiveOperationException"),
    ("java/lang/NoSuchMethodException", "java/lang/ReflectiveOperationException"),
    ("java/lang/NoSuchFieldException", "java/lang/ReflectiveOperationException"),
    ("java/lang/IllegalAccessException", "java/lang/ReflectiveOperationException"),
    ("java/lang/InstantiationException", "java/lang/ReflectiveOperationException"),
    ("java/lang/reflect/InvocationTargetException", "java/lang/ReflectiveOperationException"),
    ("java/lang/InterruptedException", "java/lang/Exception"),
    ("java/lang/CloneNotSupportedException", "java/lang/Exception"),
    ("java/lang/IllegalArgumentException", "java/lang/RuntimeException"),
    ("java/lang/NumberFormatException", "java/lang/IllegalArgumentException"),
    ("java/lang/IllegalStateException", "java/lang/RuntimeException"),
    ("java/lang/NullPointerException", "java/lang/RuntimeException"),
    ("java/lang/ClassCastException", "java/lang/RuntimeException"),
    ("java/lang/ArithmeticException", "java/lang/RuntimeException"),
    ("java/lang/SecurityException", "java/lang/RuntimeException"),
    ("java/lang/UnsupportedOperationException", "java/lang/RuntimeException"),
    ("java/lang/IndexOutOfBoundsException", "java/lang/RuntimeException"),
    ("java/lang/ArrayIndexOutOfBoundsException", "java/lang/IndexOutOfBoundsException"),
    ("java/lang/StringIndexOutOfBoundsException", "java/lang/IndexOutOfBoundsException"),
    ("java/lang/NegativeArraySizeException", "java/lang/RuntimeException"),
    ("java/lang/ArrayStoreException", "java/lang/RuntimeException"),
    ("java/util/NoSuchElementException", "java/lang/RuntimeException"),
    ("java/util/ConcurrentModificationException", "java/lang/RuntimeException"),
    ("java/lang/LinkageError", "java/lang/Error"),
    ("java/lang/VerifyError", "java/lang/LinkageError"),
    ("java/lang/NoClassDefFoundError", "java/lang/LinkageError"),
    ("java/lang/ExceptionInInitializerError", "java/lang/LinkageError"),
    ("java/lang/AssertionError", "java/lang/Error"),
    ("java/lang/VirtualMachineError", "java/lang/Error"),
    ("java/lang/OutOfMemoryError", "java/lang/VirtualMachineError"),
    ("java/lang/StackOverflowError", "java/lang/VirtualMachineError"),
    ("java/io/IOException", "java/lang/Exception"),
    ("java/io/FileNotFoundException", "java/io/IOException"),
    ("java/io/EOFException", "java/io/IOException"),
    ("java/io/UncheckedIOException", "java/lang/RuntimeException"),
    ("java/lang/Number", "java/lang/Object"),
    ("java/lang/Integer", "java/lang/Number"),
    ("java/lang/Long", "java/lang/Number"),
    ("java/lang/Short", "java/lang/Number"),
    ("java/lang/Byte", "java/lang/Number"),
    ("java/lang/Float", "java/lang/Number"),
    ("java/lang/Double", "java/lang/Number"),
    ("java/math/BigInteger", "java/lang/Number"),
    ("java/math/BigDecimal", "java/lang/Number"),
    ("java/lang/String", "java/lang/Object"),
    ("java/lang/Boolean", "java/lang/Object"),
    ("java/lang/Character", "java/lang/Object"),
    ("java/lang/Class", "java/lang/Object"),
    ("java/lang/Enum", "java/lang/Object"),
    ("java/lang/Thread", "java/lang/Object"),
    ("java/lang/System", "java/lang/Object"),
    ("java/lang/Math", "java/lang/Object"),
    ("java/lang/AbstractStringBuilder", "java/lang/Object"),
    ("java/lang/StringBuilder", "java/lang/AbstractStringBuilder"),
    ("java/lang/StringBuffer", "java/lang/AbstractStringBuilder"),
    ("java/util/AbstractCollection", "java/lang/Object"),
    ("java/util/AbstractList", "java/util/AbstractCollection"),
    ("java/util/AbstractSequentialList", "java/util/AbstractList"),
    ("java/util/ArrayList", "java/util/AbstractList"),
    ("java/util/LinkedList", "java/util/AbstractSequentialList"),
    ("java/util/Vector", "java/util/AbstractList"),
    ("java/util/AbstractSet", "java/util/AbstractCollection"),
    ("java/util/HashSet", "java/util/AbstractSet"),
    ("java/util/LinkedHashSet", "java/util/HashSet"),
    ("java/util/TreeSet", "java/util/AbstractSet"),
    ("java/util/AbstractMap", "java/lang/Object"),
    ("java/util/HashMap", "java/util/AbstractMap"),
    ("java/util/LinkedHashMap", "java/util/HashMap"),
    ("java/util/TreeMap", "java/util/AbstractMap"),
    ("java/util/Dictionary", "java/lang/Object"),
    ("java/util/Hashtable", "java/util/Dictionary"),
    ("java/util/Properties", "java/util/Hashtable"),
    ("java/util/Arrays", "java/lang/Object"),
    ("java/util/Collections", "java/lang/Object"),
    ("java/util/Objects", "java/lang/Object"),
    ("java/io/InputStream", "java/lang/Object"),
    ("java/io/OutputStream", "java/lang/Object"),
    ("java/io/FilterOutputStream", "java/io/OutputStream"),
    ("java/io/PrintStream", "java/io/FilterOutputStream"),
    ("java/io/FilterInputStream", "java/io/InputStream"),
    ("java/io/BufferedInputStream", "java/io/FilterInputStream"),
    ("java/io/BufferedOutputStream", "java/io/FilterOutputStream"),
    ("java/io/DataInputStream", "java/io/FilterInputStream"),
    ("java/io/DataOutputStream", "java/io/FilterOutputStream"),
    ("java/io/ByteArrayInputStream", "java/io/InputStream"),
    ("java/io/ByteArrayOutputStream", "java/io/OutputStream"),
    ("java/io/FileInputStream", "java/io/InputStream"),
    ("java/io/FileOutputStream", "java/io/OutputStream"),
    ("java/io/Reader", "java/lang/Object"),
    ("java/io/Writer", "java/lang/Object"),
    ("java/io/BufferedReader", "java/io/Reader"),
    ("java/io/InputStreamReader", "java/io/Reader"),
    ("java/io/BufferedWriter", "java/io/Writer"),
    ("java/io/OutputStreamWriter", "java/io/Writer"),
    ("java/io/PrintWriter", "java/io/Writer"),
    ("java/io/StringWriter", "java/io/Writer"),
    ("java/io/File", "java/lang/Object"),
];

const BUILTIN_INTERFACES: &[&str] = &[
    "java/lang/Runnable",
    "java/lang/Comparable",
    "java/lang/CharSequence",
    "java/lang/Cloneable",
    "java/lang/Iterable",
    "java/lang/AutoCloseable",
    "java/lang/Appendable",
    "java/lang/reflect/Type",
    "java/util/Collection",
    "java/util/List",
    "java/util/Set",
    "java/util/SortedSet",
    "java/util/Queue",
    "java/util/Deque",
    "java/util/Map",
    "java/util/Map$Entry",
    "java/util/SortedMap",
    "java/util/Iterator",
    "java/util/ListIterator",
    "java/util/Enumeration",
    "java/util/Comparator",
    "java/util/RandomAccess",
    "java/io/Serializable",
    "java/io/Closeable",
    "java/io/Flushable",
];

impl Default for ClassHierarchy {
    fn default() -> Self {
        Self::new()
    }
}

impl ClassHierarchy {
    /// A hierarchy holding only the built-in table.
    pub fn new() -> Self {
        let mut classes = HashMap::new();
        classes.insert("java/lang/Object".to_string(), ClassInfo { super_class: None, interface: false });
        for (c, s) in BUILTIN_CLASSES {
            classes.insert(c.to_string(), ClassInfo { super_class: Some(s.to_string()), interface: false });
        }
        for i in BUILTIN_INTERFACES {
            classes.insert(
                i.to_string(),
                ClassInfo { super_class: Some("java/lang/Object".into()), interface: true },
            );
        }
        ClassHierarchy { classes, strict: false }
    }

    pub fn add(&mut self, name: &str, super_class: Option<&str>, interface: bool) {
        self.classes.insert(name.into(), ClassInfo { super_class: super_class.map(Into::into), interface });
    }

    pub fn add_class(&mut self, class: &ClassModel) {
        self.add(&class.this_class, class.super_class.as_deref(), class.access_flags & ACC_INTERFACE != 0);
    }

    /// Registers every class in a `.class` file, a jar, or a directory tree.
    pub fn add_path(&mut self, path: &Path) -> Result<(), ClassFileError> {
        if path.is_dir() {
            let mut entries: Vec<_> = std::fs::read_dir(path)?.collect::<Result<_, _>>()?;
            entries.sort_by_key(|e| e.path());
            for e in entries {
                self.add_path(&e.path())?;
            }
        } else if has_ext(path, "class") {
            self.add_class(&parse_class(&std::fs::read(path)?)?);
        } else if has_ext(path, "jar") {
            for e in read_jar(path)? {
                if e.is_class() {
                    if let Ok(c) = parse_class(&e.data) {
                        self.add_class(&c);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.classes.contains_key(name)
    }

    pub fn is_interface(&self, name: &str) -> bool {
        self.classes.get(name).is_some_and(|c| c.interface)
    }

    fn unknown(&self, name: &str) -> Result<String, AnalysisError> {
        if self.strict {
            Err(AnalysisError::ResolutionFailure(name.into()))
        } else {
            Ok("java/lang/Object".into())
        }
    }

    /// Superclass chain starting at `name` itself, or `None` if some class
    /// on the way is unknown.
    fn chain(&self, name: &str) -> Option<Vec<String>> {
        let mut out = vec![name.to_string()];
        let mut cur = name.to_string();
        while let Some(info) = self.classes.get(&cur) {
            match &info.super_class {
                None => return Some(out),
                Some(s) => {
                    if out.len() > 256 {
                        return None;
                    }
                    out.push(s.clone());
                    cur = s.clone();
                }
            }
        }
        None
    }

    /// Most specific common superclass of two reference types, each an
    /// internal class name or an array descriptor. Interfaces merge to
    /// `java/lang/Object`.
    pub fn common_superclass(&self, a: &str, b: &str) -> Result<String, AnalysisError> {
        if a == b {
            return Ok(a.into());
        }
        match (a.strip_prefix('['), b.strip_prefix('[')) {
            (Some(ea), Some(eb)) => {
                let ref_elem = |e: &str| {
                    if e.starts_with('[') {
                        Some(e.to_string())
                    } else {
                        e.strip_prefix('L').and_then(|e| e.strip_suffix(';')).map(String::from)
                    }
                };
                return match (ref_elem(ea), ref_elem(eb)) {
                    (Some(x), Some(y)) => {
                        let c = self.common_superclass(&x, &y)?;
                        Ok(if c.starts_with('[') { format!("[{c}") } else { format!("[L{c};") })
                    }
                    _ => Ok("java/lang/Object".into()),
                };
            }
            (Some(_), None) | (None, Some(_)) => return Ok("java/lang/Object".into()),
            _ => {}
        }
        if self.is_interface(a) || self.is_interface(b) {
            return Ok("java/lang/Object".into());
        }
        let Some(ca) = self.chain(a) else { return self.unknown(a) };
        let Some(cb) = self.chain(b) else { return self.unknown(b) };
        Ok(cb.into_iter().find(|c| ca.contains(c)).unwrap_or_else(|| "java/lang/Object".into()))
    }
}

fn has_ext(p: &Path, ext: &str) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

use std::collections::HashMap;
use std::fmt;

use super::ClassFileError;

pub const TAG_UTF8: u8 = 1;
pub const TAG_INTEGER: u8 = 3;
pub const TAG_FLOAT: u8 = 4;
pub const TAG_LONG: u8 = 5;
pub const TAG_DOUBLE: u8 = 6;
pub const TAG_CLASS: u8 = 7;
pub const TAG_STRING: u8 = 8;
pub const TAG_FIELDREF: u8 = 9;
pub const TAG_METHODREF: u8 = 10;
pub const TAG_INTERFACE_METHODREF: u8 = 11;
pub const TAG_NAME_AND_TYPE: u8 = 12;
pub const TAG_METHOD_HANDLE: u8 = 15;
pub const TAG_METHOD_TYPE: u8 = 16;
pub const TAG_DYNAMIC: u8 = 17;
pub const TAG_INVOKE_DYNAMIC: u8 = 18;
pub const TAG_MODULE: u8 = 19;
pub const TAG_PACKAGE: u8 = 20;

/// A string in the class-file "modified UTF-8" encoding.
///
/// The raw bytes are authoritative so that strings which are not valid Unicode
/// (lone surrogates) survive a parse/emit cycle unchanged.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct JavaStr {
    bytes: Vec<u8>,
}

impl JavaStr {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        JavaStr { bytes }
    }

    pub fn new(text: &str) -> Self {
        JavaStr { bytes: encode_modified_utf8(text) }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Decoded text; unpaired surrogates become U+FFFD.
    pub fn to_text(&self) -> String {
        decode_modified_utf8(&self.bytes)
    }
}

impl fmt::Debug for JavaStr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.to_text())
    }
}

impl From<&str> for JavaStr {
    fn from(s: &str) -> Self {
        JavaStr::new(s)
    }
}

pub fn encode_modified_utf8(text: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(text.len());
    for unit in text.encode_utf16() {
        match unit {
            0x0001..=0x007f => out.push(unit as u8),
            0x0000 | 0x0080..=0x07ff => {
                out.push(0xc0 | ((unit >> 6) & 0x1f) as u8);
                out.push(0x80 | (unit & 0x3f) as u8);
            }
            _ => {
                out.push(0xe0 | ((unit >> 12) & 0x0f) as u8);
                out.push(0x80 | ((unit >> 6) & 0x3f) as u8);
                out.push(0x80 | (unit & 0x3f) as u8);
            }
        }
    }
    out
}

pub fn decode_modified_utf8(bytes: &[u8]) -> String {
    let mut units = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b & 0x80 == 0 {
            units.push(b as u16);
            i += 1;
        } else if b & 0xe0 == 0xc0 && i + 1 < bytes.len() {
            units.push((((b & 0x1f) as u16) << 6) | (bytes[i + 1] & 0x3f) as u16);
            i += 2;
        } else if b & 0xf0 == 0xe0 && i + 2 < bytes.len() {
            units.push(
                (((b & 0x0f) as u16) << 12)
                    | (((bytes[i + 1] & 0x3f) as u16) << 6)
                    | (bytes[i + 2] & 0x3f) as u16,
            );
            i += 3;
        } else {
            units.push(0xfffd);
            i += 1;
        }
    }
    String::from_utf16_lossy(&units)
}

/// One constant-pool slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PoolEntry {
    /// Index 0 and the slot following a Long or Double.
    Unusable,
    Utf8(JavaStr),
    Integer(i32),
    /// IEEE bits, so that NaN payloads round-trip and hashing is total.
    Float(u32),
    Long(i64),
    Double(u64),
    Class(u16),
    String(u16),
    Fieldref(u16, u16),
    Methodref(u16, u16),
    InterfaceMethodref(u16, u16),
    NameAndType(u16, u16),
    MethodHandle(u8, u16),
    MethodType(u16),
    Dynamic(u16, u16),
    InvokeDynamic(u16, u16),
    Module(u16),
    Package(u16),
}

impl PoolEntry {
    pub fn is_wide(&self) -> bool {
        matches!(self, PoolEntry::Long(_) | PoolEntry::Double(_))
    }
}

/// A symbolic constant accepted by [`ConstantPool::intern`]; references are
/// interned transitively.
#[derive(Clone, Debug, PartialEq)]
pub enum Constant<'a> {
    Utf8(&'a str),
    Integer(i32),
    Float(f32),
    Long(i64),
    Double(f64),
    Class(&'a str),
    String(&'a str),
    Fieldref { owner: &'a str, name: &'a str, descriptor: &'a str },
    Methodref { owner: &'a str, name: &'a str, descriptor: &'a str },
    InterfaceMethodref { owner: &'a str, name: &'a str, descriptor: &'a str },
    NameAndType { name: &'a str, descriptor: &'a str },
    MethodType(&'a str),
}

/// The class constant pool. Interning only ever appends, so existing indices
/// stay valid while a class is being woven.
#[derive(Clone, Debug)]
pub struct ConstantPool {
    entries: Vec<PoolEntry>,
    lookup: HashMap<PoolEntry, u16>,
}

impl Default for ConstantPool {
    fn default() -> Self {
        Self::new()
    }
}

impl PartialEq for ConstantPool {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl ConstantPool {
    pub fn new() -> Self {
        ConstantPool { entries: vec![PoolEntry::Unusable], lookup: HashMap::new() }
    }

    /// Builds a pool from decoded entries (index 0 included). The first
    /// occurrence of a duplicated entry is the one interning returns.
    pub fn from_entries(entries: Vec<PoolEntry>) -> Self {
        let mut lookup = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if !matches!(e, PoolEntry::Unusable) {
                lookup.entry(e.clone()).or_insert(i as u16);
            }
        }
        ConstantPool { entries, lookup }
    }

    /// The `constant_pool_count` value written to the class file.
    pub fn count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn get(&self, index: u16) -> Result<&PoolEntry, ClassFileError> {
        match self.entries.get(index as usize) {
            Some(PoolEntry::Unusable) | None => Err(ClassFileError::malformed(format!(
                "constant pool index {index} is not a usable entry"
            ))),
            Some(e) => Ok(e),
        }
    }

    /// Hash of the first `len` entries; used to tell whether a pool is still
    /// an append-only extension of an earlier state.
    pub fn fingerprint(&self, len: usize) -> Option<u64> {
        use std::hash::{Hash, Hasher};
        let prefix = self.entries.get(..len)?;
        let mut h = std::collections::hash_map::DefaultHasher::new();
        prefix.hash(&mut h);
        Some(h.finish())
    }

    pub fn find(&self, entry: &PoolEntry) -> Option<u16> {
        self.lookup.get(entry).copied()
    }

    pub fn push(&mut self, entry: PoolEntry) -> Result<u16, ClassFileError> {
        if let Some(i) = self.find(&entry) {
            return Ok(i);
        }
        let width = if entry.is_wide() { 2 } else { 1 };
        if self.entries.len() + width > 0xffff {
            return Err(ClassFileError::PoolOverflow);
        }
        let index = self.entries.len() as u16;
        self.lookup.insert(entry.clone(), index);
        self.entries.push(entry);
        if width == 2 {
            self.entries.push(PoolEntry::Unusable);
        }
        Ok(index)
    }

    pub fn intern(&mut self, value: Constant<'_>) -> Result<u16, ClassFileError> {
        let entry = match value {
            Constant::Utf8(s) => PoolEntry::Utf8(JavaStr::new(s)),
            Constant::Integer(v) => PoolEntry::Integer(v),
            Constant::Float(v) => PoolEntry::Float(v.to_bits()),
            Constant::Long(v) => PoolEntry::Long(v),
            Constant::Double(v) => PoolEntry::Double(v.to_bits()),
            Constant::Class(name) => PoolEntry::Class(self.utf8_index(name)?),
            Constant::String(s) => PoolEntry::String(self.utf8_index(s)?),
            Constant::MethodType(d) => PoolEntry::MethodType(self.utf8_index(d)?),
            Constant::NameAndType { name, descriptor } => {
                PoolEntry::NameAndType(self.utf8_index(name)?, self.utf8_index(descriptor)?)
            }
            Constant::Fieldref { owner, name, descriptor } => {
                let (c, nt) = self.member_parts(owner, name, descriptor)?;
                PoolEntry::Fieldref(c, nt)
            }
            Constant::Methodref { owner, name, descriptor } => {
                let (c, nt) = self.member_parts(owner, name, descriptor)?;
                PoolEntry::Methodref(c, nt)
            }
            Constant::InterfaceMethodref { owner, name, descriptor } => {
                let (c, nt) = self.member_parts(owner, name, descriptor)?;
                PoolEntry::InterfaceMethodref(c, nt)
            }
        };
        self.push(entry)
    }

    pub fn utf8_index(&mut self, s: &str) -> Result<u16, ClassFileError> {
        self.push(PoolEntry::Utf8(JavaStr::new(s)))
    }

    pub fn string_index(&mut self, s: &JavaStr) -> Result<u16, ClassFileError> {
        let utf = self.push(PoolEntry::Utf8(s.clone()))?;
        self.push(PoolEntry::String(utf))
    }

    pub fn class_index(&mut self, name: &str) -> Result<u16, ClassFileError> {
        self.intern(Constant::Class(name))
    }

    fn member_parts(
        &mut self,
        owner: &str,
        name: &str,
        descriptor: &str,
    ) -> Result<(u16, u16), ClassFileError> {
        let class = self.intern(Constant::Class(owner))?;
        let nt = self.intern(Constant::NameAndType { name, descriptor })?;
        Ok((class, nt))
    }

    pub fn utf8(&self, index: u16) -> Result<String, ClassFileError> {
        match self.get(index)? {
            PoolEntry::Utf8(s) => Ok(s.to_text()),
            other => Err(ClassFileError::malformed(format!(
                "expected Utf8 at pool index {index}, found {other:?}"
            ))),
        }
    }

    pub fn java_str(&self, index: u16) -> Result<&JavaStr, ClassFileError> {
        match self.get(index)? {
            PoolEntry::Utf8(s) => Ok(s),
            other => Err(ClassFileError::malformed(format!(
                "expected Utf8 at pool index {index}, found {other:?}"
            ))),
        }
    }

    pub fn class_name(&self, index: u16) -> Result<String, ClassFileError> {
        match self.get(index)? {
            PoolEntry::Class(n) => self.utf8(*n),
            other => Err(ClassFileError::malformed(format!(
                "expected Class at pool index {index}, found {other:?}"
            ))),
        }
    }

    pub fn name_and_type(&self, index: u16) -> Result<(String, String), ClassFileError> {
        match self.get(index)? {
            PoolEntry::NameAndType(n, d) => Ok((self.utf8(*n)?, self.utf8(*d)?)),
            other => Err(ClassFileError::malformed(format!(
                "expected NameAndType at pool index {index}, found {other:?}"
            ))),
        }
    }

    /// Resolves a field/method reference to `(owner, name, descriptor, is_interface)`.
    pub fn member_ref(&self, index: u16) -> Result<(String, String, String, bool), ClassFileError> {
        let (class, nt, itf) = match self.get(index)? {
            PoolEntry::Fieldref(c, nt) | PoolEntry::Methodref(c, nt) => (*c, *nt, false),
            PoolEntry::InterfaceMethodref(c, nt) => (*c, *nt, true),
            other => {
                return Err(ClassFileError::malformed(format!(
                    "expected member reference at pool index {index}, found {other:?}"
                )))
            }
        };
        let (name, desc) = self.name_and_type(nt)?;
        Ok((self.class_name(class)?, name, desc, itf))
    }

    /// Checks that every reference inside the pool points at an entry of the
    /// right kind.
    pub fn validate(&self) -> Result<(), ClassFileError> {
        for (i, e) in self.entries.iter().enumerate() {
            let ok = match e {
                PoolEntry::Class(n)
                | PoolEntry::String(n)
                | PoolEntry::MethodType(n)
                | PoolEntry::Module(n)
                | PoolEntry::Package(n) => self.utf8(*n).is_ok(),
                PoolEntry::NameAndType(n, d) => self.utf8(*n).is_ok() && self.utf8(*d).is_ok(),
                PoolEntry::Fieldref(c, nt)
                | PoolEntry::Methodref(c, nt)
                | PoolEntry::InterfaceMethodref(c, nt) => {
                    self.class_name(*c).is_ok() && self.name_and_type(*nt).is_ok()
                }
                PoolEntry::MethodHandle(_, r) => self.member_ref(*r).is_ok(),
                PoolEntry::Dynamic(_, nt) | PoolEntry::InvokeDynamic(_, nt) => {
                    self.name_and_type(*nt).is_ok()
                }
                _ => true,
            };
            if !ok {
                return Err(ClassFileError::malformed(format!(
                    "dangling reference in constant pool entry {i}: {e:?}"
                )));
            }
        }
        Ok(())
    }
}

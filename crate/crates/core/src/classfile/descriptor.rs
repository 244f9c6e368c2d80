//! Field and method descriptor parsing.

use super::ClassFileError;

/// A parsed field type.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FieldType {
    Byte,
    Char,
    Double,
    Float,
    Int,
    Long,
    Short,
    Boolean,
    /// Internal class name, e.g. `java/lang/String`.
    Object(String),
    /// Full array descriptor, e.g. `[[I`.
    Array(String),
}

impl FieldType {
    pub fn slots(&self) -> u16 {
        match self {
            FieldType::Long | FieldType::Double => 2,
            _ => 1,
        }
    }

    pub fn is_reference(&self) -> bool {
        matches!(self, FieldType::Object(_) | FieldType::Array(_))
    }

    pub fn descriptor(&self) -> String {
        match self {
            FieldType::Byte => "B".into(),
            FieldType::Char => "C".into(),
            FieldType::Double => "D".into(),
            FieldType::Float => "F".into(),
            FieldType::Int => "I".into(),
            FieldType::Long => "J".into(),
            FieldType::Short => "S".into(),
            FieldType::Boolean => "Z".into(),
            FieldType::Object(n) => format!("L{n};"),
            FieldType::Array(d) => d.clone(),
        }
    }

    pub fn parse(desc: &str) -> Result<FieldType, ClassFileError> {
        let (t, rest) = parse_one(desc)?;
        if !rest.is_empty() {
            return Err(bad(desc));
        }
        Ok(t)
    }
}

/// A parsed method descriptor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodDescriptor {
    pub params: Vec<FieldType>,
    /// `None` for `void`.
    pub ret: Option<FieldType>,
}

impl MethodDescriptor {
    pub fn parse(desc: &str) -> Result<MethodDescriptor, ClassFileError> {
        let mut rest = desc.strip_prefix('(').ok_or_else(|| bad(desc))?;
        let mut params = Vec::new();
        while !rest.starts_with(')') {
            if rest.is_empty() {
                return Err(bad(desc));
            }
            let (t, r) = parse_one(rest)?;
            params.push(t);
            rest = r;
        }
        let ret = &rest[1..];
        let ret = if ret == "V" { None } else { Some(FieldType::parse(ret).map_err(|_| bad(desc))?) };
        Ok(MethodDescriptor { params, ret })
    }

    /// Argument slots, excluding any receiver.
    pub fn arg_slots(&self) -> u16 {
        self.params.iter().map(FieldType::slots).sum()
    }

    pub fn return_slots(&self) -> u16 {
        self.ret.as_ref().map_or(0, FieldType::slots)
    }

    pub fn render(&self) -> String {
        let mut s = String::from("(");
        for p in &self.params {
            s.push_str(&p.descriptor());
        }
        s.push(')');
        match &self.ret {
            Some(r) => s.push_str(&r.descriptor()),
            None => s.push('V'),
        }
        s
    }
}

fn bad(desc: &str) -> ClassFileError {
    ClassFileError::malformed(format!("invalid descriptor {desc:?}"))
}

fn parse_one(s: &str) -> Result<(FieldType, &str), ClassFileError> {
    let first = s.chars().next().ok_or_else(|| bad(s))?;
    let t = match first {
        'B' => FieldType::Byte,
        'C' => FieldType::Char,
        'D' => FieldType::Double,
        'F' => FieldType::Float,
        'I' => FieldType::Int,
        'J' => FieldType::Long,
        'S' => FieldType::Short,
        'Z' => FieldType::Boolean,
        'L' => {
            let end = s.find(';').ok_or_else(|| bad(s))?;
            if end == 1 {
                return Err(bad(s));
            }
            return Ok((FieldType::Object(s[1..end].to_string()), &s[end + 1..]));
        }
        '[' => {
            let dims = s.chars().take_while(|&c| c == '[').count();
            if dims > 255 {
                return Err(bad(s));
            }
            let (_, rest) = parse_one(&s[dims..])?;
            let len = s.len() - rest.len();
            return Ok((FieldType::Array(s[..len].to_string()), rest));
        }
        _ => return Err(bad(s)),
    };
    Ok((t, &s[1..]))
}

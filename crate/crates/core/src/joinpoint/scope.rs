//! Wildcard filters over dotted `package.Class.method` names.

use wildmatch::WildMatch;

/// A set of wildcard patterns; `*` matches any run of characters, dots
/// included. A pattern selects a method if it matches the dotted method
/// name, or if it names the method's class or an enclosing package. The
/// empty scope selects everything.
#[derive(Clone, Debug, Default)]
pub struct Scope {
    patterns: Vec<(String, WildMatch, WildMatch)>,
}

impl Scope {
    pub fn new<I, S>(patterns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let patterns = patterns
            .into_iter()
            .map(|p| p.as_ref().trim().to_string())
            .filter(|p| !p.is_empty())
            .map(|p| {
                let whole = WildMatch::new(&p);
                let prefix = WildMatch::new(&format!("{p}.*"));
                (p, whole, prefix)
            })
            .collect();
        Scope { patterns }
    }

    /// Parses a comma-separated pattern list.
    pub fn parse(spec: &str) -> Self {
        Scope::new(spec.split(','))
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> impl Iterator<Item = &str> {
        self.patterns.iter().map(|(p, _, _)| p.as_str())
    }

    /// `class` is an internal name (`a/b/C`).
    pub fn matches(&self, class: &str, method: &str) -> bool {
        if self.patterns.is_empty() {
            return true;
        }
        let dotted = format!("{}.{method}", class.replace('/', "."));
        self.patterns.iter().any(|(_, whole, prefix)| whole.matches(&dotted) || prefix.matches(&dotted))
    }
}

//! Ordered pattern table that assigns a [`ToolCategory`] to a snippet.
//!
//! The bundled table lives in `assets/taxonomy/rules.json` and can be
//! replaced with [`RuleTable::from_path`].

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::Deserialize;

use super::{Sub, TaxonomyError, ToolCategory};

pub const DEFAULT_RULES: &str = include_str!("../../assets/taxonomy/rules.json");

#[derive(Deserialize)]
struct RawTable {
    #[serde(default)]
    #[allow(dead_code)]
    description: String,
    rules: Vec<RawRule>,
}

#[derive(Deserialize)]
struct RawRule {
    sub: String,
    patterns: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Rule {
    pub sub: Sub,
    pub patterns: Vec<Regex>,
}

#[derive(Clone, Debug)]
pub struct RuleTable {
    rules: Vec<Rule>,
}

impl RuleTable {
    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        let raw: RawTable = serde_json::from_str(text).map_err(|e| TaxonomyError::Rules(e.to_string()))?;
        let mut rules = Vec::with_capacity(raw.rules.len());
        for r in raw.rules {
            let sub = Sub::parse(&r.sub)
                .ok_or_else(|| TaxonomyError::Rules(format!("unknown sub-category '{}'", r.sub)))?;
            if r.patterns.is_empty() {
                return Err(TaxonomyError::Rules(format!("rule '{}' has no patterns", r.sub)));
            }
            let patterns = r
                .patterns
                .iter()
                .map(|p| Regex::new(p).map_err(|e| TaxonomyError::Rules(format!("rule '{}': {e}", r.sub))))
                .collect::<Result<_, _>>()?;
            rules.push(Rule { sub, patterns });
        }
        Ok(Self { rules })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| TaxonomyError::Rules(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// First matching rule and the pattern that fired.
    pub fn explain(&self, code: &str) -> Option<(Sub, &str)> {
        let code = strip_comments(code);
        self.rules.iter().find_map(|rule| {
            rule.patterns
                .iter()
                .find(|p| p.is_match(&code))
                .map(|p| (rule.sub, p.as_str()))
        })
    }

    pub fn classify(&self, code: &str) -> ToolCategory {
        self.explain(code)
            .map(|(sub, _)| ToolCategory::from_sub(sub))
            .unwrap_or_else(ToolCategory::long_tail)
    }
}

impl Default for RuleTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_RULES).expect("bundled rule table is valid")
    }
}

/// Classifies with the bundled rule table.
pub fn classify_snippet(code: &str) -> ToolCategory {
    static TABLE: OnceLock<RuleTable> = OnceLock::new();
    TABLE.get_or_init(RuleTable::default).classify(code)
}

/// Drops `#` comments outside string literals. Handles single, double and
/// triple quotes with backslash escapes.
pub fn strip_comments(code: &str) -> String {
    let chars: Vec<char> = code.chars().collect();
    let mut out = String::with_capacity(code.len());
    let mut i = 0;
    let mut quote: Option<(char, bool)> = None;
    while i < chars.len() {
        let c = chars[i];
        match quote {
            Some((q, triple)) => {
                out.push(c);
                if c == '\\' {
                    if let Some(&next) = chars.get(i + 1) {
                        out.push(next);
                        i += 1;
                    }
                } else if c == q {
                    if !triple {
                        quote = None;
                    } else if chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                        out.push(q);
                        out.push(q);
                        i += 2;
                        quote = None;
                    }
                } else if c == '\n' && !triple {
                    quote = None;
                }
            }
            None => match c {
                '#' => {
                    while i < chars.len() && chars[i] != '\n' {
                        i += 1;
                    }
                    continue;
                }
                '\'' | '"' => {
                    let triple = chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c);
                    out.push(c);
                    if triple {
                        out.push(c);
                        out.push(c);
                        i += 2;
                    }
                    quote = Some((c, triple));
                }
                _ => out.push(c),
            },
        }
        i += 1;
    }
    out
}

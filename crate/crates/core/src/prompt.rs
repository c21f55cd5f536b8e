//! System prompt rendering.
//!
//! Two templates ship as text assets under `assets/prompts/`: the agent
//! system prompt (code + answer tag protocol) and the plain chain-of-thought
//! baseline prompt. Placeholders are `{width}`, `{height}` and `{query}`.
//! Substitution is a single left-to-right pass, so braces inside the user's
//! query are never reinterpreted.

use std::path::Path;

const AGENT_SYSTEM: &str = include_str!("../assets/prompts/agent_system.txt");
const COT_BASELINE: &str = include_str!("../assets/prompts/cot.txt");

/// Literal markers the agent template must carry for the tag protocol to work.
pub const AGENT_MARKERS: [&str; 6] = [
    "<code>",
    "<answer>",
    "image_clue_",
    "<interpreter>",
    "plt.show()",
    "print()",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template error: {0}")]
    Template(String),
    #[error("usage error: {0}")]
    Usage(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateId {
    AgentSystem,
    CotBaseline,
}

impl TemplateId {
    fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            Self::AgentSystem => &["width", "height", "query"],
            Self::CotBaseline => &["query"],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    id: TemplateId,
    body: String,
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: impl Into<String>) -> Result<Self, PromptError> {
        let template = Self {
            id,
            body: body.into(),
        };
        template.check()?;
        Ok(template)
    }

    pub fn from_file(id: TemplateId, path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Self::new(id, body)
    }

    pub fn id(&self) -> TemplateId {
        self.id
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    fn check(&self) -> Result<(), PromptError> {
        for name in self.id.required_placeholders() {
            let token = format!("{{{name}}}");
            match self.body.matches(&token).count() {
                1 => {}
                0 => {
                    return Err(PromptError::Template(format!(
                        "placeholder {token} missing from {:?} template",
                        self.id
                    )))
                }
                n => {
                    return Err(PromptError::Template(format!(
                        "placeholder {token} appears {n} times in {:?} template",
                        self.id
                    )))
                }
            }
        }
        Ok(())
    }
}

/// The pair of templates a session renders from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptSet {
    pub agent: PromptTemplate,
    pub cot: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            agent: PromptTemplate::new(TemplateId::AgentSystem, AGENT_SYSTEM)
                .expect("bundled agent template is well-formed"),
            cot: PromptTemplate::new(TemplateId::CotBaseline, COT_BASELINE)
                .expect("bundled cot template is well-formed"),
        }
    }
}

impl PromptSet {
    /// Renders the agent prompt for a single image.
    pub fn render_agent(&self, width: u32, height: u32, query: &str) -> Result<String, PromptError> {
        self.render_agent_multi(&[(width, height)], query)
    }

    /// Renders the agent prompt for any number of images.
    ///
    /// One image gives the template verbatim. With several images the
    /// resolution line is repeated once per image, prefixed by its index. With
    /// none the resolution line is dropped.
    pub fn render_agent_multi(
        &self,
        dims: &[(u32, u32)],
        query: &str,
    ) -> Result<String, PromptError> {
        check_query(query)?;
        if dims.iter().any(|&(w, h)| w == 0 || h == 0) {
            return Err(PromptError::Usage("image dimensions must be at least 1".into()));
        }
        self.agent.check()?;
        let body = self.agent.body();
        if dims.len() == 1 {
            let (w, h) = dims[0];
            return Ok(substitute(
                body,
                &[
                    ("width", &w.to_string()),
                    ("height", &h.to_string()),
                    ("query", query),
                ],
            ));
        }

        let mut out = String::with_capacity(body.len() + query.len());
        for line in body.split_inclusive('\n') {
            if line.contains("{width}") || line.contains("{height}") {
                for (i, &(w, h)) in dims.iter().enumerate() {
                    out.push_str(&format!("Image {i}: "));
                    let rendered = substitute(
                        line,
                        &[("width", &w.to_string()), ("height", &h.to_string())],
                    );
                    out.push_str(&rendered);
                    if !rendered.ends_with('\n') {
                        out.push('\n');
                    }
                }
            } else {
                out.push_str(&substitute(line, &[("query", query)]));
            }
        }
        Ok(out)
    }

    pub fn render_cot(&self, query: &str) -> Result<String, PromptError> {
        check_query(query)?;
        self.cot.check()?;
        Ok(substitute(self.cot.body(), &[("query", query)]))
    }
}

/// Renders the bundled agent prompt.
pub fn render_agent_prompt(width: u32, height: u32, query: &str) -> Result<String, PromptError> {
    PromptSet::default().render_agent(width, height, query)
}

/// Renders the bundled chain-of-thought prompt.
pub fn render_cot_prompt(query: &str) -> Result<String, PromptError> {
    PromptSet::default().render_cot(query)
}

fn check_query(query: &str) -> Result<(), PromptError> {
    if query.is_empty() {
        return Err(PromptError::Usage("query must not be empty".into()));
    }
    Ok(())
}

/// Replaces `{name}` tokens in one pass; inserted values are never rescanned.
fn substitute(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let hit = values.iter().find(|(name, _)| {
            tail.starts_with(name) && tail[name.len()..].starts_with('}')
        });
        match hit {
            Some((name, value)) => {
                out.push_str(value);
                rest = &tail[name.len() + 1..];
            }
            None => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}

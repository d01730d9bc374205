use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::retrieval::{ExamplePair, Language};

pub const QUESTION_HEADING: &str = "## Question";
pub const SCHEMA_HEADING: &str = "## Database schema";
pub const EMPTY_SECTION: &str = "(none)";

/// System and user halves of a prompt template. `{{name}}` marks a slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("{file}: {message}")]
    Malformed { file: String, message: String },
    #[error("cannot read {file}: {message}")]
    Io { file: String, message: String },
}

impl Template {
    /// Parses `[system]` and `[user]` sections.
    pub fn parse(file: &str, text: &str) -> Result<Self, TemplateError> {
        let malformed = |message: &str| TemplateError::Malformed {
            file: file.to_owned(),
            message: message.to_owned(),
        };
        let rest = text
            .strip_prefix("[system]\n")
            .ok_or_else(|| malformed("must start with a [system] line"))?;
        let (system, user) = rest
            .split_once("\n[user]\n")
            .ok_or_else(|| malformed("missing [user] line"))?;
        Ok(Template {
            system: system.trim_end().to_owned(),
            user: user.trim_end().to_owned(),
        })
    }
}

/// Prompt templates for every provider role plus the repair suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub translate: Template,
    pub sketch: Template,
    pub link: Template,
    pub generate: Template,
    pub augment: Template,
    pub repair: String,
}

const BUILTIN_V1: [(&str, &str); 6] = [
    (
        "translate.prompt",
        include_str!("../../templates/v1/translate.prompt"),
    ),
    (
        "sketch.prompt",
        include_str!("../../templates/v1/sketch.prompt"),
    ),
    (
        "link.prompt",
        include_str!("../../templates/v1/link.prompt"),
    ),
    (
        "generate.prompt",
        include_str!("../../templates/v1/generate.prompt"),
    ),
    (
        "augment.prompt",
        include_str!("../../templates/v1/augment.prompt"),
    ),
    (
        "repair.prompt",
        include_str!("../../templates/v1/repair.prompt"),
    ),
];

impl Templates {
    fn from_texts(
        get: impl Fn(&str) -> Result<String, TemplateError>,
    ) -> Result<Self, TemplateError> {
        let t = |name: &str| Template::parse(name, &get(name)?);
        Ok(Templates {
            translate: t("translate.prompt")?,
            sketch: t("sketch.prompt")?,
            link: t("link.prompt")?,
            generate: t("generate.prompt")?,
            augment: t("augment.prompt")?,
            repair: get("repair.prompt")?.trim_end().to_owned(),
        })
    }

    /// The templates bundled with the library.
    pub fn builtin() -> Self {
        Self::from_texts(|name| {
            Ok(BUILTIN_V1
                .iter()
                .find(|(n, _)| *n == name)
                .expect("bundled template")
                .1
                .to_owned())
        })
        .expect("bundled templates are well-formed")
    }

    /// Reads the six template files from a directory.
    pub fn load(dir: &Path) -> Result<Self, TemplateError> {
        Self::from_texts(|name| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                file: path.display().to_string(),
                message: e.to_string(),
            })
        })
    }
}

/// Fills `{{name}}` slots in one pass; inserted text is never re-scanned.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = &after[..end];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[start..start + 2 + end + 2]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Text under a `## ` heading, up to the next heading.
pub fn section(text: &str, heading: &str) -> Option<String> {
    let marker = format!("{heading}\n");
    let start = if text.starts_with(&marker) {
        marker.len()
    } else {
        text.find(&format!("\n{marker}"))? + 1 + marker.len()
    };
    let body = &text[start..];
    let end = body.find("\n## ").unwrap_or(body.len());
    Some(body[..end].trim().to_owned())
}

fn or_none(s: &str) -> &str {
    if s.trim().is_empty() {
        EMPTY_SECTION
    } else {
        s
    }
}

pub fn render_examples(examples: &[ExamplePair]) -> String {
    examples
        .iter()
        .enumerate()
        .map(|(i, e)| {
            format!(
                "Example {}\nQuestion: {}\nQuery: {}",
                i + 1,
                e.nlq,
                e.query_text
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Inputs of the final generation prompt.
#[derive(Debug, Clone, Copy)]
pub struct GenerationInputs<'a> {
    pub question: &'a str,
    pub language: Language,
    pub schema: &'a str,
    pub sketch: &'a str,
    pub links: &'a str,
    pub examples: &'a [ExamplePair],
}

/// Builds the (system, user) generation prompt: schema, sketch, links,
/// retrieved examples, question, then reasoning instructions. Empty parts
/// read `(none)`.
pub fn assemble_generation_prompt(
    t: &Templates,
    inputs: &GenerationInputs<'_>,
) -> (String, String) {
    let examples = render_examples(inputs.examples);
    let user = fill(
        &t.generate.user,
        &[
            ("schema", or_none(inputs.schema)),
            ("sketch", or_none(inputs.sketch)),
            ("links", or_none(inputs.links)),
            ("examples", or_none(&examples)),
            ("language", inputs.language.english_name()),
            ("question", inputs.question.trim()),
        ],
    );
    (t.generate.system.clone(), user)
}

pub fn repair_suffix(t: &Templates, answer: &str, error: &str) -> String {
    fill(&t.repair, &[("answer", answer.trim()), ("error", error)])
}

//! Prompt templates for the four prompting strategies.
//!
//! Templates are plain text resources with `{{name}}` placeholders. Rendering
//! is single-pass: substituted values are never re-scanned, so a value that
//! happens to contain `{{style}}` is emitted literally.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Triplet;
use crate::exemplar::Exemplar;

/// Separator between demonstration blocks, and between the last block and the query.
pub const BLOCK_SEPARATOR: &str = "\n\n";

/// Appended to the colors/textures prompt when the first answer cannot be parsed.
pub const COT_REPROMPT_SUFFIX: &str = "Answer only with the two labeled lines.";

const ZS_BODY: &str = include_str!("../templates/zs.txt");
const FS_BODY: &str = include_str!("../templates/fs.txt");
const COT_STEP1_BODY: &str = include_str!("../templates/cot_step1.txt");
const COT_STEP2_BODY: &str = include_str!("../templates/cot_step2.txt");
const RAG_BODY: &str = include_str!("../templates/rag.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("template: {0}")]
    Template(String),
    #[error("validation: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStrategy {
    Zs,
    Fs,
    CotStep1,
    CotStep2,
    Rag,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 5] = [
        PromptStrategy::Zs,
        PromptStrategy::Fs,
        PromptStrategy::CotStep1,
        PromptStrategy::CotStep2,
        PromptStrategy::Rag,
    ];

    pub fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            PromptStrategy::Zs => &["style", "type", "occasion"],
            PromptStrategy::Fs | PromptStrategy::CotStep1 => {
                &["style", "type", "occasion", "examples"]
            }
            PromptStrategy::CotStep2 => &["style", "type", "occasion", "colors", "textures"],
            PromptStrategy::Rag => &["context", "question"],
        }
    }

    fn shipped_body(self) -> &'static str {
        match self {
            PromptStrategy::Zs => ZS_BODY,
            PromptStrategy::Fs => FS_BODY,
            PromptStrategy::CotStep1 => COT_STEP1_BODY,
            PromptStrategy::CotStep2 => COT_STEP2_BODY,
            PromptStrategy::Rag => RAG_BODY,
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptStrategy::Zs => "zs",
            PromptStrategy::Fs => "fs",
            PromptStrategy::CotStep1 => "cot-step1",
            PromptStrategy::CotStep2 => "cot-step2",
            PromptStrategy::Rag => "rag",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub strategy: PromptStrategy,
    pub body: String,
    pub placeholders: BTreeSet<String>,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    /// Parses `body` and checks its placeholder set against the strategy's contract.
    pub fn parse(strategy: PromptStrategy, body: &str) -> Result<Self, PromptError> {
        let body = body.strip_suffix('\n').unwrap_or(body);
        let mut segments = Vec::new();
        let mut placeholders = BTreeSet::new();
        let mut rest = body;
        while let Some(open) = rest.find("{{") {
            if open > 0 {
                segments.push(Segment::Literal(rest[..open].to_string()));
            }
            let after = &rest[open + 2..];
            let close = after
                .find("}}")
                .ok_or_else(|| PromptError::Template("unterminated placeholder".into()))?;
            let name = &after[..close];
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(PromptError::Template(format!("bad placeholder name \"{name}\"")));
            }
            placeholders.insert(name.to_string());
            segments.push(Segment::Slot(name.to_string()));
            rest = &after[close + 2..];
        }
        if rest.contains("}}") {
            return Err(PromptError::Template("stray \"}}\"".into()));
        }
        if !rest.is_empty() {
            segments.push(Segment::Literal(rest.to_string()));
        }
        let required: BTreeSet<String> = strategy
            .required_placeholders()
            .iter()
            .map(|s| s.to_string())
            .collect();
        if placeholders != required {
            return Err(PromptError::Template(format!(
                "{strategy} template placeholders {placeholders:?} differ from {required:?}"
            )));
        }
        Ok(Self {
            strategy,
            body: body.to_string(),
            placeholders,
            segments,
        })
    }

    fn render(&self, bindings: BTreeMap<String, String>, triplet: Option<&Triplet>) -> RenderedPrompt {
        let mut text = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => text.push_str(s),
                Segment::Slot(name) => text.push_str(&bindings[name]),
            }
        }
        debug_assert_eq!(
            bindings.keys().collect::<BTreeSet<_>>(),
            self.placeholders.iter().collect::<BTreeSet<_>>()
        );
        RenderedPrompt {
            strategy: self.strategy,
            text,
            bindings,
            triplet: triplet.cloned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub strategy: PromptStrategy,
    pub text: String,
    pub bindings: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triplet: Option<Triplet>,
}

/// The five templates in use. [`Templates::shipped`] holds the verbatim set;
/// individual bodies can be replaced (for example to swap the RAG instruction
/// wrapper for a backend's own chat markers) as long as the placeholder set is kept.
#[derive(Debug, Clone)]
pub struct Templates {
    zs: PromptTemplate,
    fs: PromptTemplate,
    cot_step1: PromptTemplate,
    cot_step2: PromptTemplate,
    rag: PromptTemplate,
}

impl Default for Templates {
    fn default() -> Self {
        Self::shipped().clone()
    }
}

impl Templates {
    pub fn shipped() -> &'static Templates {
        static SHIPPED: OnceLock<Templates> = OnceLock::new();
        SHIPPED.get_or_init(|| {
            let load = |s: PromptStrategy| {
                PromptTemplate::parse(s, s.shipped_body()).expect("shipped template is valid")
            };
            Templates {
                zs: load(PromptStrategy::Zs),
                fs: load(PromptStrategy::Fs),
                cot_step1: load(PromptStrategy::CotStep1),
                cot_step2: load(PromptStrategy::CotStep2),
                rag: load(PromptStrategy::Rag),
            }
        })
    }

    pub fn with_override(mut self, strategy: PromptStrategy, body: &str) -> Result<Self, PromptError> {
        let parsed = PromptTemplate::parse(strategy, body)?;
        *self.slot_mut(strategy) = parsed;
        Ok(self)
    }

    pub fn get(&self, strategy: PromptStrategy) -> &PromptTemplate {
        match strategy {
            PromptStrategy::Zs => &self.zs,
            PromptStrategy::Fs => &self.fs,
            PromptStrategy::CotStep1 => &self.cot_step1,
            PromptStrategy::CotStep2 => &self.cot_step2,
            PromptStrategy::Rag => &self.rag,
        }
    }

    fn slot_mut(&mut self, strategy: PromptStrategy) -> &mut PromptTemplate {
        match strategy {
            PromptStrategy::Zs => &mut self.zs,
            PromptStrategy::Fs => &mut self.fs,
            PromptStrategy::CotStep1 => &mut self.cot_step1,
            PromptStrategy::CotStep2 => &mut self.cot_step2,
            PromptStrategy::Rag => &mut self.rag,
        }
    }

    pub fn zero_shot(&self, t: &Triplet) -> RenderedPrompt {
        self.zs.render(triplet_bindings(t), Some(t))
    }

    pub fn few_shot(&self, t: &Triplet, exemplars: &[Exemplar]) -> Result<RenderedPrompt, PromptError> {
        let mut bindings = triplet_bindings(t);
        bindings.insert("examples".into(), join_exemplars(exemplars)?);
        Ok(self.fs.render(bindings, Some(t)))
    }

    pub fn cot_step1(&self, t: &Triplet, exemplars: &[Exemplar]) -> Result<RenderedPrompt, PromptError> {
        let mut bindings = triplet_bindings(t);
        bindings.insert("examples".into(), join_exemplars(exemplars)?);
        Ok(self.cot_step1.render(bindings, Some(t)))
    }

    pub fn cot_step2(
        &self,
        t: &Triplet,
        colors: &[String],
        textures: &[String],
    ) -> Result<RenderedPrompt, PromptError> {
        let colors = join_items("colors", colors)?;
        let textures = join_items("textures", textures)?;
        let mut bindings = triplet_bindings(t);
        bindings.insert("colors".into(), colors);
        bindings.insert("textures".into(), textures);
        Ok(self.cot_step2.render(bindings, Some(t)))
    }

    pub fn rag(&self, question: &str, context: &str) -> Result<RenderedPrompt, PromptError> {
        if question.trim().is_empty() {
            return Err(PromptError::Validation("RAG question is empty".into()));
        }
        let bindings = BTreeMap::from([
            ("context".to_string(), context.to_string()),
            ("question".to_string(), question.to_string()),
        ]);
        Ok(self.rag.render(bindings, None))
    }
}

fn triplet_bindings(t: &Triplet) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("style".to_string(), t.style.clone()),
        ("type".to_string(), t.wearer_type.clone()),
        ("occasion".to_string(), t.occasion.clone()),
    ])
}

fn join_items(what: &str, items: &[String]) -> Result<String, PromptError> {
    if items.is_empty() || items.iter().any(|s| s.trim().is_empty()) {
        return Err(PromptError::Validation(format!("{what} list is empty")));
    }
    Ok(items.join(", "))
}

fn join_exemplars(exemplars: &[Exemplar]) -> Result<String, PromptError> {
    if exemplars.is_empty() {
        return Err(PromptError::Validation("no demonstrations supplied".into()));
    }
    let blocks = exemplars
        .iter()
        .map(|e| format_qa(&e.question, &e.answer))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(blocks.join(BLOCK_SEPARATOR))
}

/// `Question: <question>\nAnswer: <answer>`
pub fn format_qa(question: &str, answer: &str) -> Result<String, PromptError> {
    if question.trim().is_empty() {
        return Err(PromptError::Validation("exemplar question is empty".into()));
    }
    if answer.trim().is_empty() {
        return Err(PromptError::Validation("exemplar answer is empty".into()));
    }
    Ok(format!("Question: {question}\nAnswer: {answer}"))
}

pub fn format_exemplar(e: &Exemplar) -> Result<String, PromptError> {
    format_qa(&e.question, &e.answer)
}

pub fn render_zero_shot(t: &Triplet) -> RenderedPrompt {
    Templates::shipped().zero_shot(t)
}

pub fn render_few_shot(t: &Triplet, exemplars: &[Exemplar]) -> Result<RenderedPrompt, PromptError> {
    Templates::shipped().few_shot(t, exemplars)
}

pub fn render_cot_step1(t: &Triplet, exemplars: &[Exemplar]) -> Result<RenderedPrompt, PromptError> {
    Templates::shipped().cot_step1(t, exemplars)
}

pub fn render_cot_step2(
    t: &Triplet,
    colors: &[String],
    textures: &[String],
) -> Result<RenderedPrompt, PromptError> {
    Templates::shipped().cot_step2(t, colors, textures)
}

pub fn render_rag(question: &str, context: &str) -> Result<RenderedPrompt, PromptError> {
    Templates::shipped().rag(question, context)
}

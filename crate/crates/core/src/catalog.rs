//! Controlled vocabulary and the experimental triplet grid.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("vocabulary configuration: {0}")]
    Config(String),
    #[error("duplicate {list} label \"{label}\"")]
    Duplicate { list: &'static str, label: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Simple types carry gender only; complex types add a body type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletKind {
    Simple,
    Complex,
}

impl fmt::Display for TripletKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TripletKind::Simple => "simple",
            TripletKind::Complex => "complex",
        })
    }
}

impl std::str::FromStr for TripletKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simple" => Ok(TripletKind::Simple),
            "complex" => Ok(TripletKind::Complex),
            other => Err(format!("unknown triplet kind \"{other}\" (expected simple|complex)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub style: String,
    pub occasion: String,
    pub wearer_type: String,
    pub kind: TripletKind,
}

impl Triplet {
    pub fn new(style: &str, occasion: &str, wearer_type: &str, kind: TripletKind) -> Self {
        Self {
            style: style.to_string(),
            occasion: occasion.to_string(),
            wearer_type: wearer_type.to_string(),
            kind,
        }
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.style, self.occasion, self.wearer_type)
    }
}

/// Raw document shape; every list is required.
#[derive(Debug, Deserialize)]
struct VocabularyDoc {
    styles: Option<Vec<String>>,
    occasions: Option<Vec<String>>,
    simple_types: Option<Vec<String>>,
    complex_types: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Vocabulary {
    pub styles: Vec<String>,
    pub occasions: Vec<String>,
    pub simple_types: Vec<String>,
    pub complex_types: Vec<String>,
}

/// Trim, collapse inner whitespace and lowercase.
pub fn canonical_label(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Occasion labels are stored without a leading indefinite article, since the
/// prompt templates already say "at a ...".
pub fn canonical_occasion(raw: &str) -> String {
    let label = canonical_label(raw);
    for article in ["a ", "an "] {
        if let Some(rest) = label.strip_prefix(article) {
            if !rest.is_empty() {
                return rest.to_string();
            }
        }
    }
    label
}

fn canonical_list(
    list: &'static str,
    raw: Option<Vec<String>>,
    canon: fn(&str) -> String,
) -> Result<Vec<String>, CatalogError> {
    let raw = raw.ok_or_else(|| CatalogError::Config(format!("missing list \"{list}\"")))?;
    if raw.is_empty() {
        return Err(CatalogError::Config(format!("list \"{list}\" is empty")));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for item in raw {
        let label = canon(&item);
        if label.is_empty() {
            return Err(CatalogError::Config(format!("empty label in \"{list}\"")));
        }
        if !seen.insert(label.clone()) {
            return Err(CatalogError::Duplicate { list, label });
        }
        out.push(label);
    }
    Ok(out)
}

impl Vocabulary {
    /// Parses and canonicalizes a JSON vocabulary document.
    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let doc: VocabularyDoc =
            serde_json::from_str(text).map_err(|e| CatalogError::Config(e.to_string()))?;
        Ok(Self {
            styles: canonical_list("styles", doc.styles, canonical_label)?,
            occasions: canonical_list("occasions", doc.occasions, canonical_occasion)?,
            simple_types: canonical_list("simple_types", doc.simple_types, canonical_label)?,
            complex_types: canonical_list("complex_types", doc.complex_types, canonical_label)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn types_of(&self, kind: TripletKind) -> &[String] {
        match kind {
            TripletKind::Simple => &self.simple_types,
            TripletKind::Complex => &self.complex_types,
        }
    }

    /// Cartesian product styles × occasions × types, in configured list order.
    pub fn enumerate_triplets(&self, kind: TripletKind) -> Vec<Triplet> {
        let types = self.types_of(kind);
        let mut out = Vec::with_capacity(self.styles.len() * self.occasions.len() * types.len());
        for style in &self.styles {
            for occasion in &self.occasions {
                for wearer in types {
                    out.push(Triplet::new(style, occasion, wearer, kind));
                }
            }
        }
        out
    }

    pub fn validate_triplet(&self, t: &Triplet) -> Result<(), TripletRejection> {
        let mut problems = Vec::new();
        if !self.styles.iter().any(|s| *s == canonical_label(&t.style)) {
            problems.push(FieldProblem::UnknownStyle(t.style.clone()));
        }
        if !self.occasions.iter().any(|o| *o == canonical_occasion(&t.occasion)) {
            problems.push(FieldProblem::UnknownOccasion(t.occasion.clone()));
        }
        let wearer = canonical_label(&t.wearer_type);
        if !self.types_of(t.kind).contains(&wearer) {
            let other = match t.kind {
                TripletKind::Simple => TripletKind::Complex,
                TripletKind::Complex => TripletKind::Simple,
            };
            if self.types_of(other).contains(&wearer) {
                problems.push(FieldProblem::KindMismatch {
                    wearer_type: t.wearer_type.clone(),
                    declared: t.kind,
                    actual: other,
                });
            } else {
                problems.push(FieldProblem::UnknownType(t.wearer_type.clone()));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TripletRejection { problems })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldProblem {
    UnknownStyle(String),
    UnknownOccasion(String),
    UnknownType(String),
    KindMismatch {
        wearer_type: String,
        declared: TripletKind,
        actual: TripletKind,
    },
}

impl FieldProblem {
    pub fn field(&self) -> &'static str {
        match self {
            FieldProblem::UnknownStyle(_) => "style",
            FieldProblem::UnknownOccasion(_) => "occasion",
            FieldProblem::UnknownType(_) | FieldProblem::KindMismatch { .. } => "wearer_type",
        }
    }
}

impl fmt::Display for FieldProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldProblem::UnknownStyle(s) => write!(f, "style \"{s}\" is not in the vocabulary"),
            FieldProblem::UnknownOccasion(s) => {
                write!(f, "occasion \"{s}\" is not in the vocabulary")
            }
            FieldProblem::UnknownType(s) => write!(f, "type \"{s}\" is not in the vocabulary"),
            FieldProblem::KindMismatch {
                wearer_type,
                declared,
                actual,
            } => write!(
                f,
                "type \"{wearer_type}\" is a {actual} type but the triplet is {declared}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid triplet: {}", .problems.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("; "))]
pub struct TripletRejection {
    pub problems: Vec<FieldProblem>,
}

//! Few-shot demonstration store and nearest-demonstration selection.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Embedder, GatewayError};
use crate::jsonl::{self, JsonlError};
use crate::prompt::{format_qa, PromptError};
use crate::similarity::{cosine_similarity, normalize, SimilarityError};

/// Demonstrations chosen per few-shot prompt unless configured otherwise.
pub const DEFAULT_K: usize = 2;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("duplicate exemplar id \"{0}\"")]
    DuplicateId(String),
    #[error("embedding has dimension {got}, store dimension is {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub question: String,
    pub answer: String,
    /// Unit-normalized. Empty for exemplars that were never embedded.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub embedding: Vec<f64>,
}

impl Exemplar {
    /// An exemplar used only for formatting.
    pub fn unembedded(id: &str, question: &str, answer: &str) -> Self {
        Self {
            id: id.to_string(),
            question: question.to_string(),
            answer: answer.to_string(),
            embedding: Vec::new(),
        }
    }
}

/// One line of an exemplar file.
#[derive(Debug, Clone, Deserialize)]
pub struct ExemplarRow {
    pub id: String,
    pub question: String,
    pub answer: String,
}

/// Which text of an exemplar is embedded for selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorText {
    /// The full `Question: ...\nAnswer: ...` block.
    #[default]
    QuestionAnswer,
    QuestionOnly,
}

impl SelectorText {
    fn text_for(self, question: &str, answer: &str) -> Result<String, PromptError> {
        let block = format_qa(question, answer)?;
        Ok(match self {
            SelectorText::QuestionAnswer => block,
            SelectorText::QuestionOnly => question.to_string(),
        })
    }
}

/// Append-only; insertion order is the tie-break order for selection.
#[derive(Debug, Clone, Default)]
pub struct ExemplarStore {
    exemplars: Vec<Exemplar>,
    dimension: Option<usize>,
    ids: HashSet<String>,
    selector_text: SelectorText,
}

impl ExemplarStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_selector_text(selector_text: SelectorText) -> Self {
        Self {
            selector_text,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    /// Inserts an exemplar with a precomputed embedding (normalized here).
    pub fn insert_embedded(
        &mut self,
        id: &str,
        question: &str,
        answer: &str,
        embedding: Vec<f64>,
    ) -> Result<&Exemplar, StoreError> {
        format_qa(question, answer)?;
        if self.ids.contains(id) {
            return Err(StoreError::DuplicateId(id.to_string()));
        }
        if let Some(expected) = self.dimension {
            if embedding.len() != expected {
                return Err(StoreError::Dimension {
                    expected,
                    got: embedding.len(),
                });
            }
        }
        let embedding = normalize(embedding)?;
        self.dimension = Some(embedding.len());
        self.ids.insert(id.to_string());
        self.exemplars.push(Exemplar {
            id: id.to_string(),
            question: question.to_string(),
            answer: answer.to_string(),
            embedding,
        });
        Ok(self.exemplars.last().expect("just pushed"))
    }

    /// Embeds the exemplar's selector text through `embedder` and appends it.
    pub fn add_exemplar(
        &mut self,
        id: &str,
        question: &str,
        answer: &str,
        embedder: &dyn Embedder,
    ) -> Result<&Exemplar, StoreError> {
        if self.ids.contains(id) {
            return Err(StoreError::DuplicateId(id.to_string()));
        }
        let text = self.selector_text.text_for(question, answer)?;
        let mut vectors = embedder.embed_texts(&[text])?;
        self.insert_embedded(id, question, answer, vectors.remove(0))
    }

    /// Loads a JSONL file of `{id, question, answer}` rows, embedding them in one batch.
    pub fn load_jsonl(
        path: &Path,
        embedder: &dyn Embedder,
        selector_text: SelectorText,
    ) -> Result<Self, StoreError> {
        let rows: Vec<ExemplarRow> = jsonl::read_jsonl(path)?;
        Self::from_rows(rows, embedder, selector_text)
    }

    pub fn from_rows(
        rows: Vec<ExemplarRow>,
        embedder: &dyn Embedder,
        selector_text: SelectorText,
    ) -> Result<Self, StoreError> {
        let mut store = Self::with_selector_text(selector_text);
        if rows.is_empty() {
            return Ok(store);
        }
        let texts = rows
            .iter()
            .map(|r| selector_text.text_for(&r.question, &r.answer))
            .collect::<Result<Vec<_>, _>>()?;
        let vectors = embedder.embed_texts(&texts)?;
        for (row, vector) in rows.iter().zip(vectors) {
            store.insert_embedded(&row.id, &row.question, &row.answer, vector)?;
        }
        Ok(store)
    }

    /// The `k` exemplars most similar to `query`, best first. Ties keep
    /// insertion order; `k` larger than the store returns everything.
    pub fn select_top_k(&self, query: &[f64], k: usize) -> Result<Vec<Exemplar>, StoreError> {
        if k == 0 || self.exemplars.is_empty() {
            return Ok(Vec::new());
        }
        let expected = self.dimension.expect("non-empty store has a dimension");
        if query.len() != expected {
            return Err(StoreError::Dimension {
                expected,
                got: query.len(),
            });
        }
        let mut scored = self
            .exemplars
            .iter()
            .enumerate()
            .map(|(i, e)| cosine_similarity(query, &e.embedding).map(|s| (i, s)))
            .collect::<Result<Vec<_>, _>>()?;
        // stable: equal scores stay in insertion order
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, _)| self.exemplars[i].clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, ProfileEmbedder};
    use proptest::prelude::*;

    fn three() -> ExemplarStore {
        let mut s = ExemplarStore::new();
        s.insert_embedded("e1", "q1", "a1", vec![1.0, 0.0]).unwrap();
        s.insert_embedded("e2", "q2", "a2", vec![0.0, 1.0]).unwrap();
        s.insert_embedded("e3", "q3", "a3", vec![0.9, 0.1]).unwrap();
        s
    }

    fn ids(v: &[Exemplar]) -> Vec<&str> {
        v.iter().map(|e| e.id.as_str()).collect()
    }

    #[test]
    fn top_two_of_three() {
        let s = three();
        assert!((s.exemplars()[2].embedding[0] - 0.9938837347).abs() < 1e-9);
        assert_eq!(ids(&s.select_top_k(&[1.0, 0.0], 2).unwrap()), ["e1", "e3"]);
        assert!(s.select_top_k(&[1.0, 0.0], 0).unwrap().is_empty());
        assert_eq!(s.select_top_k(&[1.0, 0.0], 10).unwrap().len(), 3);
        assert_eq!(ids(&s.select_top_k(&[0.0, 3.0], 1).unwrap()), ["e2"]);
    }

    #[test]
    fn dimension_rules() {
        let mut s = three();
        assert_eq!(s.dimension(), Some(2));
        assert!(matches!(
            s.select_top_k(&[1.0, 0.0, 0.0], 1),
            Err(StoreError::Dimension { expected: 2, got: 3 })
        ));
        assert!(matches!(
            s.insert_embedded("e4", "q", "a", vec![1.0]),
            Err(StoreError::Dimension { .. })
        ));
        assert!(matches!(
            s.insert_embedded("e1", "q", "a", vec![1.0, 1.0]),
            Err(StoreError::DuplicateId(_))
        ));
        assert!(matches!(
            s.select_top_k(&[0.0, 0.0], 1),
            Err(StoreError::Similarity(SimilarityError::ZeroNorm))
        ));
    }

    #[test]
    fn add_through_mock_backend() {
        let gw = Gateway::all_mock("t", "e", "i");
        let emb = ProfileEmbedder::new(&gw, "e");
        let mut s = ExemplarStore::new();
        assert_eq!(s.dimension(), None);
        let first = s.add_exemplar("a", "Q", "A", &emb).unwrap().embedding.clone();
        assert_eq!(s.dimension(), Some(64));
        let second = s.add_exemplar("b", "Q", "A", &emb).unwrap().embedding.clone();
        assert_eq!(first, second);
        assert!(matches!(
            s.add_exemplar("a", "Q2", "A2", &emb),
            Err(StoreError::DuplicateId(_))
        ));
        let n: f64 = first.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() <= 1e-6);
    }

    /// Selection by repeated arg-max, earliest index winning ties.
    fn oracle(store: &[Vec<f64>], query: &[f64], k: usize) -> Vec<usize> {
        let cos = |v: &[f64]| {
            let d: f64 = v.iter().zip(query).map(|(a, b)| a * b).sum();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nq = query.iter().map(|x| x * x).sum::<f64>().sqrt();
            (d / (nv * nq)).clamp(-1.0, 1.0)
        };
        let scores: Vec<f64> = store.iter().map(|v| cos(v)).collect();
        let mut taken = vec![false; store.len()];
        let mut out = Vec::new();
        for _ in 0..k.min(store.len()) {
            let mut best: Option<usize> = None;
            for i in 0..store.len() {
                if taken[i] {
                    continue;
                }
                if best.map_or(true, |b| scores[i] > scores[b]) {
                    best = Some(i);
                }
            }
            let b = best.unwrap();
            taken[b] = true;
            out.push(b);
        }
        out
    }

    proptest! {
        #[test]
        fn matches_oracle_and_is_scale_invariant(
            dim in 1usize..6,
            raw in proptest::collection::vec(proptest::collection::vec(-3i32..=3, 6), 1..20),
            q in proptest::collection::vec(-3i32..=3, 6),
            k in 0usize..8,
        ) {
            let vecs: Vec<Vec<f64>> = raw.iter()
                .map(|r| r[..dim].iter().map(|&x| x as f64).collect::<Vec<_>>())
                .filter(|v| v.iter().any(|&x| x != 0.0))
                .collect();
            let query: Vec<f64> = q[..dim].iter().map(|&x| x as f64).collect();
            prop_assume!(!vecs.is_empty() && query.iter().any(|&x| x != 0.0));
            let mut store = ExemplarStore::new();
            for (i, v) in vecs.iter().enumerate() {
                store.insert_embedded(&format!("e{i}"), "q", "a", v.clone()).unwrap();
            }
            let normalized: Vec<Vec<f64>> = store.exemplars().iter().map(|e| e.embedding.clone()).collect();
            let got: Vec<String> = store.select_top_k(&query, k).unwrap().into_iter().map(|e| e.id).collect();
            let want: Vec<String> = oracle(&normalized, &query, k).into_iter().map(|i| format!("e{i}")).collect();
            prop_assert_eq!(&got, &want);

            // power-of-two scales are exact, so ordering is preserved bit-for-bit
            let scaled: Vec<f64> = query.iter().map(|x| x * 4.0).collect();
            let again: Vec<String> = store.select_top_k(&scaled, k).unwrap().into_iter().map(|e| e.id).collect();
            prop_assert_eq!(&again, &got);
        }

        #[test]
        fn arbitrary_positive_scale_without_near_ties(
            vecs in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 1..24),
            query in proptest::collection::vec(-1.0f64..1.0, 4),
            alpha in 1e-3f64..1e3,
            k in 1usize..6,
        ) {
            prop_assume!(vecs.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)));
            prop_assume!(query.iter().any(|x| x.abs() > 1e-3));
            let mut store = ExemplarStore::new();
            for (i, v) in vecs.iter().enumerate() {
                store.insert_embedded(&format!("e{i}"), "q", "a", v.clone()).unwrap();
            }
            let mut scores: Vec<f64> = store.exemplars().iter()
                .map(|e| cosine_similarity(&query, &e.embedding).unwrap()).collect();
            scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
            prop_assume!(scores.windows(2).all(|w| w[0] - w[1] > 1e-9));
            let scaled: Vec<f64> = query.iter().map(|x| x * alpha).collect();
            let a: Vec<String> = store.select_top_k(&query, k).unwrap().into_iter().map(|e| e.id).collect();
            let b: Vec<String> = store.select_top_k(&scaled, k).unwrap().into_iter().map(|e| e.id).collect();
            prop_assert_eq!(a, b);
        }
    }
}

//! Text/image alignment as the raw cosine between the two embeddings.

use serde::{Deserialize, Serialize};

use crate::similarity::{cosine_similarity, SimilarityError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// Unscaled cosine in `[-1, 1]`.
    #[default]
    Raw,
    /// `2.5 * max(0, cos)`, the rescaled variant common in the literature.
    Rescaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentScore {
    pub record_id: String,
    pub score: f64,
}

pub fn clip_score(image_embedding: &[f64], text_embedding: &[f64], mode: ClipMode) -> Result<f64, SimilarityError> {
    let cos = cosine_similarity(image_embedding, text_embedding)?;
    Ok(match mode {
        ClipMode::Raw => cos,
        ClipMode::Rescaled => 2.5 * cos.max(0.0),
    })
}

pub fn score_record(
    record_id: &str,
    image_embedding: &[f64],
    text_embedding: &[f64],
) -> Result<AlignmentScore, SimilarityError> {
    Ok(AlignmentScore {
        record_id: record_id.to_string(),
        score: clip_score(image_embedding, text_embedding, ClipMode::Raw)?,
    })
}

//! Survey instruments, responses and the per-method summaries built on them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stats::{chi2_sf, chi_square_homogeneity, StatsError};
use crate::pipeline::StrategyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Rating generated images.
    E1,
    /// Rating generated descriptions.
    E2,
    /// Ranking five images, one per strategy.
    E3,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::E1, Experiment::E2, Experiment::E3];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::E1 => "e1",
            Experiment::E2 => "e2",
            Experiment::E3 => "e3",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown experiment \"{s}\" (expected e1|e2|e3)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Likert1To5,
    YesNo,
    RankPermutation5,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub answer_kind: AnswerKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyInstrument {
    pub experiment: Experiment,
    pub questions: Vec<Question>,
}

const E1_QUESTIONS: [&str; 8] = [
    "On a scale of 1 to 5, how well does the outfit align with the style?",
    "On a scale of 1 to 5, how suitable is the outfit for the occasion?",
    "On a scale of 1 to 5, how fitting is the outfit for the type?",
    "On a scale of 1 to 5, how creative is the outfit?",
    "On a scale of 1 to 5, rate the aesthetic appeal of the outfit.",
    "On a scale of 1 to 5, how well do the clothes and accessories match in the outfit?",
    "Are there any abnormalities or inconsistencies in the image?",
    "If the answer in the previous question was yes: Despite any abnormalities or inconsistencies, do you believe the image could serve as inspiration for a fashion designer?",
];

const E2_QUESTIONS: [&str; 11] = [
    "On a scale of 1 to 5, how comprehensible is the description?",
    "On a scale of 1 to 5, how coherent is the description?",
    "On a scale of 1 to 5, how suitable is the outfit described for the occasion?",
    "On a scale of 1 to 5, how suitable is the outfit described for a type?",
    "On a scale of 1 to 5, how well does the outfit described align with the style?",
    "On a scale of 1 to 5, how suitable are the colors used for the occasion?",
    "On a scale of 1 to 5, how suitable are the colors used for a type?",
    "On a scale of 1 to 5, how suitable are the colors used for a style?",
    "On a scale of 1 to 5, how suitable are the textures used for the occasion?",
    "On a scale of 1 to 5, how suitable are the textures used for a type?",
    "On a scale of 1 to 5, how suitable are the textures used for a style?",
];

const E3_QUESTION: &str =
    "Rank the five outfits from the one you prefer most (first) to the one you prefer least (fifth).";

/// Id of the single ranking item in the comparative experiment.
pub const RANK_QUESTION_ID: &str = "rank";
/// The yes/no question that gates the follow-up in the image experiment.
pub const E1_GATE_QUESTION: &str = "q7";
pub const E1_FOLLOW_UP_QUESTION: &str = "q8";

pub fn instrument(experiment: Experiment) -> &'static SurveyInstrument {
    static INSTRUMENTS: OnceLock<[SurveyInstrument; 3]> = OnceLock::new();
    let all = INSTRUMENTS.get_or_init(|| {
        let numbered = |texts: &[&str], kind_of: &dyn Fn(usize) -> AnswerKind| {
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Question {
                    id: format!("q{}", i + 1),
                    text: t.to_string(),
                    answer_kind: kind_of(i),
                })
                .collect::<Vec<_>>()
        };
        [
            SurveyInstrument {
                experiment: Experiment::E1,
                questions: numbered(&E1_QUESTIONS, &|i| {
                    if i < 6 {
                        AnswerKind::Likert1To5
                    } else {
                        AnswerKind::YesNo
                    }
                }),
            },
            SurveyInstrument {
                experiment: Experiment::E2,
                questions: numbered(&E2_QUESTIONS, &|_| AnswerKind::Likert1To5),
            },
            SurveyInstrument {
                experiment: Experiment::E3,
                questions: vec![Question {
                    id: RANK_QUESTION_ID.to_string(),
                    text: E3_QUESTION.to_string(),
                    answer_kind: AnswerKind::RankPermutation5,
                }],
            },
        ]
    });
    &all[experiment as usize]
}

impl SurveyInstrument {
    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn likert_ids(&self) -> impl Iterator<Item = &str> {
        self.questions
            .iter()
            .filter(|q| q.answer_kind == AnswerKind::Likert1To5)
            .map(|q| q.id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgeRange {
    #[serde(rename = "under-18")]
    Under18,
    #[serde(rename = "18-24")]
    From18To24,
    #[serde(rename = "25-34")]
    From25To34,
    #[serde(rename = "35-44")]
    From35To44,
    #[serde(rename = "45-54")]
    From45To54,
    #[serde(rename = "55+")]
    Over55,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    NonBinary,
    PreferNotToSay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupation {
    Student,
    FullTimeEmployed,
    PartTimeEmployed,
    SelfEmployed,
    Unemployed,
    Retired,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnglishLevel {
    Beginner,
    Intermediate,
    Proficient,
    Native,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub age_range: AgeRange,
    pub gender: Gender,
    pub occupation: Occupation,
    pub art_related: YesNo,
    pub english_level: EnglishLevel,
    pub prior_ai_survey: YesNo,
    pub prior_fashion_survey: YesNo,
    pub fashion_interest: u8,
}

/// One stored answer. A follow-up question that does not apply is `null`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Rating(u8),
    Choice(YesNo),
    Ranking(Vec<StrategyKind>),
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub participant_id: String,
    pub demographics: Demographics,
    pub experiment: Experiment,
    pub stimulus_id: String,
    /// Strategy behind the rated stimulus; absent for the ranking experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<StrategyKind>,
    pub answers: BTreeMap<String, Answer>,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks answers against the experiment's instrument: exact id coverage,
/// Likert range, yes/no values, the conditional follow-up, and rank permutations.
pub fn validate_answers(experiment: Experiment, answers: &BTreeMap<String, Answer>) -> Vec<FieldError> {
    let inst = instrument(experiment);
    let mut errors = Vec::new();
    for q in &inst.questions {
        let field = format!("answers.{}", q.id);
        let Some(answer) = answers.get(&q.id) else {
            errors.push(FieldError::new(field, "missing answer"));
            continue;
        };
        match (q.answer_kind, answer) {
            (AnswerKind::Likert1To5, Answer::Rating(v)) if (1..=5).contains(v) => {}
            (AnswerKind::Likert1To5, _) => errors.push(FieldError::new(field, "expected an integer from 1 to 5")),
            (AnswerKind::YesNo, Answer::Choice(_)) => {}
            (AnswerKind::YesNo, Answer::NotApplicable)
                if experiment == Experiment::E1 && q.id == E1_FOLLOW_UP_QUESTION => {}
            (AnswerKind::YesNo, _) => errors.push(FieldError::new(field, "expected \"yes\" or \"no\"")),
            (AnswerKind::RankPermutation5, Answer::Ranking(order)) => {
                let mut sorted = order.clone();
                sorted.sort();
                if sorted != StrategyKind::ALL {
                    errors.push(FieldError::new(field, "expected a permutation of the five methods"));
                }
            }
            (AnswerKind::RankPermutation5, _) => {
                errors.push(FieldError::new(field, "expected a ranking of five stimuli"))
            }
        }
    }
    for id in answers.keys() {
        if inst.question(id).is_none() {
            errors.push(FieldError::new(format!("answers.{id}"), "not a question of this experiment"));
        }
    }
    if experiment == Experiment::E1 {
        let gate = answers.get(E1_GATE_QUESTION);
        let follow = answers.get(E1_FOLLOW_UP_QUESTION);
        match (gate, follow) {
            (Some(Answer::Choice(YesNo::Yes)), Some(Answer::NotApplicable)) => errors.push(FieldError::new(
                format!("answers.{E1_FOLLOW_UP_QUESTION}"),
                "required when the previous answer is yes",
            )),
            (Some(Answer::Choice(YesNo::No)), Some(Answer::Choice(_))) => errors.push(FieldError::new(
                format!("answers.{E1_FOLLOW_UP_QUESTION}"),
                "must be null when the previous answer is no",
            )),
            _ => {}
        }
    }
    errors
}

pub fn validate_demographics(d: &Demographics) -> Vec<FieldError> {
    if (1..=5).contains(&d.fashion_interest) {
        Vec::new()
    } else {
        vec![FieldError::new("demographics.fashion_interest", "expected an integer from 1 to 5")]
    }
}

impl SurveyResponse {
    pub fn validate(&self) -> Vec<FieldError> {
        let mut errors = validate_demographics(&self.demographics);
        errors.extend(validate_answers(self.experiment, &self.answers));
        match (self.experiment, self.method) {
            (Experiment::E3, Some(_)) => errors.push(FieldError::new("method", "ranking responses carry no method")),
            (Experiment::E1 | Experiment::E2, None) => errors.push(FieldError::new("method", "missing")),
            _ => {}
        }
        errors
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("criterion \"{criterion}\" is not a 1-5 rating in {experiment}")]
    NotLikert { experiment: Experiment, criterion: String },
    #[error("participant {participant}: {message}")]
    BadRanking { participant: String, message: String },
    #[error("no {experiment}/{criterion} ratings for method {method}")]
    NoData {
        experiment: Experiment,
        criterion: String,
        method: StrategyKind,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingSummary {
    pub n: u64,
    pub mean: f64,
    /// Counts of ratings 1..=5.
    pub histogram: [u64; 5],
}

fn likert_criterion(experiment: Experiment, criterion: &str) -> Result<(), EvalError> {
    match instrument(experiment).question(criterion) {
        Some(q) if q.answer_kind == AnswerKind::Likert1To5 => Ok(()),
        _ => Err(EvalError::NotLikert {
            experiment,
            criterion: criterion.to_string(),
        }),
    }
}

/// Mean and histogram of one method's ratings on one criterion.
/// `Ok(None)` when there is nothing to aggregate.
pub fn aggregate_ratings(
    responses: &[SurveyResponse],
    experiment: Experiment,
    criterion: &str,
    method: StrategyKind,
) -> Result<Option<RatingSummary>, EvalError> {
    likert_criterion(experiment, criterion)?;
    let mut histogram = [0u64; 5];
    for r in responses
        .iter()
        .filter(|r| r.experiment == experiment && r.method == Some(method))
    {
        if let Some(Answer::Rating(v @ 1..=5)) = r.answers.get(criterion) {
            histogram[*v as usize - 1] += 1;
        }
    }
    let n: u64 = histogram.iter().sum();
    if n == 0 {
        return Ok(None);
    }
    let total: u64 = histogram.iter().enumerate().map(|(i, c)| (i as u64 + 1) * c).sum();
    Ok(Some(RatingSummary {
        n,
        mean: total as f64 / n as f64,
        histogram,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodComparison {
    pub experiment: Experiment,
    pub method_a: StrategyKind,
    pub method_b: StrategyKind,
    pub criterion: String,
    pub table: [[u64; 5]; 2],
    pub chi2: f64,
    pub df: u32,
    pub p: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: u64,
    pub n_b: u64,
}

/// 2×5 homogeneity test between two methods' rating histograms. When every
/// rating falls in one column the table carries no evidence: chi2 = 0, df = 0, p = 1.
pub fn compare_methods(
    responses: &[SurveyResponse],
    experiment: Experiment,
    criterion: &str,
    method_a: StrategyKind,
    method_b: StrategyKind,
) -> Result<MethodComparison, EvalError> {
    let summary = |m| {
        aggregate_ratings(responses, experiment, criterion, m)?.ok_or_else(|| EvalError::NoData {
            experiment,
            criterion: criterion.to_string(),
            method: m,
        })
    };
    let a = summary(method_a)?;
    let b = summary(method_b)?;
    let test = chi_square_homogeneity(&a.histogram, &b.histogram)?;
    let p = if test.df == 0 { 1.0 } else { chi2_sf(test.chi2, test.df)? };
    Ok(MethodComparison {
        experiment,
        method_a,
        method_b,
        criterion: criterion.to_string(),
        table: [a.histogram, b.histogram],
        chi2: test.chi2,
        df: test.df,
        p,
        mean_a: a.mean,
        mean_b: b.mean,
        n_a: a.n,
        n_b: b.n,
    })
}

/// Method × place counts for the ranking experiment; rows follow
/// [`StrategyKind::ALL`], columns are places 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RankMatrix(pub [[u64; 5]; 5]);

impl RankMatrix {
    pub fn row(&self, method: StrategyKind) -> [u64; 5] {
        let i = StrategyKind::ALL.iter().position(|m| *m == method).expect("known method");
        self.0[i]
    }

    pub fn row_sums(&self) -> [u64; 5] {
        self.0.map(|r| r.iter().sum())
    }

    pub fn column_sums(&self) -> [u64; 5] {
        let mut out = [0; 5];
        for row in &self.0 {
            for (j, c) in row.iter().enumerate() {
                out[j] += c;
            }
        }
        out
    }
}

pub fn rank_distribution(responses: &[SurveyResponse]) -> Result<RankMatrix, EvalError> {
    let mut m = RankMatrix::default();
    for r in responses.iter().filter(|r| r.experiment == Experiment::E3) {
        let bad = |message: &str| EvalError::BadRanking {
            participant: r.participant_id.clone(),
            message: message.to_string(),
        };
        let Some(Answer::Ranking(order)) = r.answers.get(RANK_QUESTION_ID) else {
            return Err(bad("missing ranking"));
        };
        let mut sorted = order.clone();
        sorted.sort();
        if sorted != StrategyKind::ALL {
            return Err(bad("ranking is not a permutation of the five methods"));
        }
        for (place, method) in order.iter().enumerate() {
            let row = StrategyKind::ALL.iter().position(|k| k == method).expect("known method");
            m.0[row][place] += 1;
        }
    }
    Ok(m)
}

//! Alignment scoring, survey aggregation and the statistics behind them.

pub mod alignment;
pub mod report;
pub mod stats;
pub mod survey;

pub use alignment::{clip_score, AlignmentScore, ClipMode};
pub use stats::{chi2_sf, chi_square_homogeneity, ChiSquare, StatsError};
pub use survey::{
    aggregate_ratings, compare_methods, instrument, rank_distribution, Answer, Demographics, EvalError,
    Experiment, MethodComparison, RankMatrix, RatingSummary, SurveyInstrument, SurveyResponse,
};

//! CSV tables for alignment scores, rating summaries, pairwise tests and ranks.

use std::collections::BTreeMap;

use super::survey::{
    aggregate_ratings, compare_methods, instrument, EvalError, Experiment, MethodComparison, RankMatrix,
    SurveyResponse,
};
use crate::pipeline::{GenerationRecord, StrategyKind};

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory writer");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

/// One row per record that carries a score.
pub fn alignment_csv(records: &[GenerationRecord]) -> String {
    let mut w = writer();
    w.write_record(["record_id", "style", "occasion", "type", "strategy", "clip_score"])
        .expect("in-memory write");
    for r in records {
        let Some(score) = r.clip_score else { continue };
        w.write_record([
            r.id.as_str(),
            &r.triplet.style,
            &r.triplet.occasion,
            &r.triplet.wearer_type,
            r.strategy.as_str(),
            &score.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Mean alignment per strategy, in [`StrategyKind::ALL`] order.
pub fn alignment_means(records: &[GenerationRecord]) -> Vec<(StrategyKind, usize, f64)> {
    let mut acc: BTreeMap<StrategyKind, (usize, f64)> = BTreeMap::new();
    for r in records {
        if let Some(s) = r.clip_score {
            let e = acc.entry(r.strategy).or_default();
            e.0 += 1;
            e.1 += s;
        }
    }
    StrategyKind::ALL
        .into_iter()
        .filter_map(|k| acc.get(&k).map(|&(n, sum)| (k, n, sum / n as f64)))
        .collect()
}

pub fn alignment_means_csv(records: &[GenerationRecord]) -> String {
    let mut w = writer();
    w.write_record(["strategy", "n", "mean_clip_score"]).expect("in-memory write");
    for (k, n, mean) in alignment_means(records) {
        w.write_record([k.as_str(), &n.to_string(), &mean.to_string()])
            .expect("in-memory write");
    }
    finish(w)
}

/// Per experiment, criterion and method: n, mean and the 1..5 histogram.
pub fn rating_means_csv(responses: &[SurveyResponse]) -> Result<String, EvalError> {
    let mut w = writer();
    w.write_record(["experiment", "criterion", "method", "n", "mean", "r1", "r2", "r3", "r4", "r5"])
        .expect("in-memory write");
    for exp in [Experiment::E1, Experiment::E2] {
        for criterion in instrument(exp).likert_ids() {
            for method in StrategyKind::ALL {
                let Some(s) = aggregate_ratings(responses, exp, criterion, method)? else {
                    continue;
                };
                let mut row = vec![
                    exp.to_string(),
                    criterion.to_string(),
                    method.as_str().to_string(),
                    s.n.to_string(),
                    format!("{:.4}", s.mean),
                ];
                row.extend(s.histogram.iter().map(u64::to_string));
                w.write_record(&row).expect("in-memory write");
            }
        }
    }
    Ok(finish(w))
}

/// Every method pair with data, on every Likert criterion of the rating experiments.
pub fn all_comparisons(responses: &[SurveyResponse]) -> Result<Vec<MethodComparison>, EvalError> {
    let mut out = Vec::new();
    for exp in [Experiment::E1, Experiment::E2] {
        for criterion in instrument(exp).likert_ids() {
            for (i, a) in StrategyKind::ALL.iter().enumerate() {
                for b in &StrategyKind::ALL[i + 1..] {
                    match compare_methods(responses, exp, criterion, *a, *b) {
                        Ok(c) => out.push(c),
                        Err(EvalError::NoData { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn comparisons_csv(comparisons: &[MethodComparison]) -> String {
    let mut w = writer();
    w.write_record([
        "experiment", "criterion", "method_a", "method_b", "chi2", "df", "p", "mean_a", "mean_b", "n_a", "n_b",
    ])
    .expect("in-memory write");
    for c in comparisons {
        w.write_record([
            c.experiment.to_string(),
            c.criterion.clone(),
            c.method_a.as_str().to_string(),
            c.method_b.as_str().to_string(),
            format!("{:.6}", c.chi2),
            c.df.to_string(),
            format!("{:.6e}", c.p),
            format!("{:.4}", c.mean_a),
            format!("{:.4}", c.mean_b),
            c.n_a.to_string(),
            c.n_b.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn rank_matrix_csv(m: &RankMatrix) -> String {
    let mut w = writer();
    w.write_record(["method", "1st", "2nd", "3rd", "4th", "5th"]).expect("in-memory write");
    for (k, row) in StrategyKind::ALL.iter().zip(m.0.iter()) {
        let mut rec = vec![k.as_str().to_string()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w)
}

//! Chi-square homogeneity test and the chi-square upper tail.
//!
//! The tail is the regularized upper incomplete gamma `Q(df/2, x/2)`, evaluated
//! by the power series of `P` below `a + 1` and by a Lentz continued fraction
//! for `Q` above it.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid table: {0}")]
    Validation(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 100_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    let tiny = f64::MIN_POSITIVE / EPS;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (a * x.ln() - x - ln_gamma(a)).exp() * h
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64, StatsError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(StatsError::Domain(format!("shape {a} must be positive")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(StatsError::Domain(format!("argument {x} must be non-negative")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let q = if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    };
    Ok(q.clamp(0.0, 1.0))
}

/// Upper-tail probability of the chi-square distribution with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: u32) -> Result<f64, StatsError> {
    if df == 0 {
        return Err(StatsError::Domain("degrees of freedom must be positive".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(StatsError::Domain(format!("chi-square statistic {x} is negative")));
    }
    regularized_gamma_q(df as f64 / 2.0, x / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquare {
    pub chi2: f64,
    pub df: u32,
    /// Original indices of the columns that survived empty-column removal.
    pub kept_columns: Vec<usize>,
}

/// Chi-square homogeneity statistic for a 2×m table of counts. Columns empty
/// in both rows are dropped first; no continuity correction is applied.
pub fn chi_square_homogeneity(top: &[u64], bottom: &[u64]) -> Result<ChiSquare, StatsError> {
    if top.len() != bottom.len() {
        return Err(StatsError::Validation(format!(
            "rows have {} and {} columns",
            top.len(),
            bottom.len()
        )));
    }
    let kept_columns: Vec<usize> = (0..top.len()).filter(|&j| top[j] + bottom[j] > 0).collect();
    let rows = [top, bottom];
    let row_totals: Vec<f64> = rows.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    if let Some(i) = row_totals.iter().position(|&t| t == 0.0) {
        return Err(StatsError::Validation(format!("row {} has no observations", i + 1)));
    }
    let grand: f64 = row_totals.iter().sum();
    let mut chi2 = 0.0;
    for &j in &kept_columns {
        let col_total = (top[j] + bottom[j]) as f64;
        for (r, row) in rows.iter().enumerate() {
            let expected = row_totals[r] * col_total / grand;
            if expected <= 0.0 {
                return Err(StatsError::Invariant(format!("zero expected count in column {j}")));
            }
            let diff = row[j] as f64 - expected;
            chi2 += diff * diff / expected;
        }
    }
    let df = kept_columns.len().saturating_sub(1) as u32;
    Ok(ChiSquare {
        chi2,
        df,
        kept_columns,
    })
}

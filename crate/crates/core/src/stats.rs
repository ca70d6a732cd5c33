//! Student-t distribution, two-sample t-tests and Pearson correlation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Significance level for every test in the toolkit.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("degrees of freedom must be positive, got {0}")]
    BadDf(f64),
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite input value")]
    NonFinite,
    #[error("both samples are constant and equal, the t statistic is 0/0")]
    Degenerate,
    #[error("sample {0} has zero variance, correlation undefined")]
    ZeroVariance(&'static str),
}

// ============================================================================
// Special functions
// ============================================================================

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

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for I_x(a, b), modified Lentz.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..20_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b), given both `x` and `1 - x` so
/// callers can pass a complement computed without cancellation.
fn inc_beta_split(x: f64, one_minus_x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if one_minus_x <= 0.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * one_minus_x.ln() - ln_beta(a, b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(one_minus_x, b, a) / b
    }
}

/// Regularized incomplete beta function I_x(a, b) for a, b > 0, x ∈ [0, 1].
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    inc_beta_split(x, 1.0 - x, a, b)
}

/// Upper tail P(T > |t|) of Student's t.
fn t_tail(t: f64, df: f64) -> f64 {
    let t2 = t * t;
    let denom = df + t2;
    0.5 * inc_beta_split(df / denom, t2 / denom, 0.5 * df, 0.5)
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64, StatsError> {
    if !(df.is_finite() && df > 0.0) {
        return Err(StatsError::BadDf(df));
    }
    if !t.is_finite() {
        if t.is_nan() {
            return Err(StatsError::NonFinite);
        }
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let tail = t_tail(t, df);
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// Two-tailed p-value `P(|T| >= |t|)`.
pub fn student_t_two_tailed(t: f64, df: f64) -> Result<f64, StatsError> {
    if !(df.is_finite() && df > 0.0) {
        return Err(StatsError::BadDf(df));
    }
    if t.is_nan() {
        return Err(StatsError::NonFinite);
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    Ok((2.0 * t_tail(t, df)).min(1.0))
}

// ============================================================================
// t-tests
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
    pub significant: bool,
    /// Both samples had zero variance but different means; `p_value` is 0
    /// by convention and the statistic is infinite.
    pub zero_variance: bool,
}

impl TestResult {
    fn new(statistic: f64, df: f64, p_value: f64) -> Self {
        Self {
            statistic,
            df,
            p_value,
            significant: p_value < ALPHA,
            zero_variance: false,
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn check_sample(xs: &[f64], need: usize) -> Result<(), StatsError> {
    if xs.len() < need {
        return Err(StatsError::TooFew { need, got: xs.len() });
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Two-tailed two-sample t-test; Welch's unequal-variance form unless
/// `equal_variance` selects the pooled Student form.
pub fn two_sample_t_test(xs: &[f64], ys: &[f64], equal_variance: bool) -> Result<TestResult, StatsError> {
    check_sample(xs, 2)?;
    check_sample(ys, 2)?;
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (mx, my) = (mean(xs), mean(ys));
    let (vx, vy) = (sample_variance(xs), sample_variance(ys));
    let diff = mx - my;

    if vx == 0.0 && vy == 0.0 {
        if diff == 0.0 {
            return Err(StatsError::Degenerate);
        }
        return Ok(TestResult {
            statistic: diff.signum() * f64::INFINITY,
            df: nx + ny - 2.0,
            p_value: 0.0,
            significant: true,
            zero_variance: true,
        });
    }

    let (se2, df) = if equal_variance {
        let pooled = ((nx - 1.0) * vx + (ny - 1.0) * vy) / (nx + ny - 2.0);
        (pooled * (1.0 / nx + 1.0 / ny), nx + ny - 2.0)
    } else {
        let (a, b) = (vx / nx, vy / ny);
        let se2 = a + b;
        (se2, se2 * se2 / (a * a / (nx - 1.0) + b * b / (ny - 1.0)))
    };
    let t = diff / se2.sqrt();
    Ok(TestResult::new(t, df, student_t_two_tailed(t, df)?))
}

pub fn welch_t_test(xs: &[f64], ys: &[f64]) -> Result<TestResult, StatsError> {
    two_sample_t_test(xs, ys, false)
}

// ============================================================================
// Correlation
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub p_value: f64,
}

/// Pearson r with a two-tailed p-value from `t = r sqrt((n-2)/(1-r²))`.
/// Perfect correlation gets p = 0.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<Correlation, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    check_sample(xs, 3)?;
    check_sample(ys, 3)?;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::ZeroVariance("y"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    if r.abs() == 1.0 {
        return Ok(Correlation { r, p_value: 0.0 });
    }
    let df = (xs.len() - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    Ok(Correlation { r, p_value: student_t_two_tailed(t, df)? })
}

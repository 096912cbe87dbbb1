//! Goodness-of-fit tests used by the verification suites.
//!
//! Only what the suites need: one- and two-sample Kolmogorov-Smirnov, Pearson
//! chi-square (goodness of fit, homogeneity, and pooled expected counts), and
//! the special functions behind their p-values.

use crate::error::{Error, Result};

/// Significance level used by every acceptance gate.
pub const DEFAULT_ALPHA: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub statistic: f64,
    pub p_value: f64,
    pub sample_size: usize,
    pub alpha: f64,
    pub passed: bool,
    /// Set when an asymptotic approximation is used outside its usual range
    /// (e.g. chi-square cells with expected count below 5).
    pub warning: Option<String>,
}

impl TestReport {
    fn new(statistic: f64, p_value: f64, sample_size: usize) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            statistic,
            p_value,
            sample_size,
            alpha: DEFAULT_ALPHA,
            passed: p_value > DEFAULT_ALPHA,
            warning: None,
        }
    }

    /// Re-judge the verdict at a different significance level.
    pub fn at_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self.passed = self.p_value > alpha;
        self
    }
}

// ---------------------------------------------------------------------------
// special functions

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

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + 7.5;
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 10_000;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    // modified Lentz
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
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
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (h.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return if statistic > 0.0 { 0.0 } else { 1.0 };
    }
    regularized_gamma_q(dof as f64 / 2.0, statistic / 2.0)
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2 k² λ²)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    const TERM_CUTOFF: f64 = 1e-12;
    if lambda < 1.18 {
        // Jacobi theta form converges fast for small λ:
        // P(λ) = sqrt(2π)/λ Σ exp(-(2k-1)² π² / (8 λ²))
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut sum = 0.0;
        for k in 1..=100 {
            let m = (2 * k - 1) as f64;
            let term = (-m * m * pi2 / (8.0 * lambda * lambda)).exp();
            sum += term;
            if term < TERM_CUTOFF {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += sign * term;
            if term < TERM_CUTOFF {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid_arg("sample contains NaN"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    Ok(xs)
}

fn kolmogorov_p(d: f64, effective_n: f64) -> f64 {
    let root = effective_n.sqrt();
    kolmogorov_sf((root + 0.12 + 0.11 / root) * d)
}

/// One-sample Kolmogorov-Smirnov test of `samples` against a continuous CDF.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<TestReport> {
    let xs = sorted_finite(samples)?;
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(TestReport::new(d, kolmogorov_p(d, n), xs.len()))
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestReport> {
    let xs = sorted_finite(a)?;
    let ys = sorted_finite(b)?;
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    Ok(TestReport::new(d, kolmogorov_p(d, ne), xs.len() + ys.len()))
}

/// Pearson goodness-of-fit test with `k - 1` degrees of freedom.
pub fn chi_square_test(observed: &[u64], expected_probs: &[f64]) -> Result<TestReport> {
    if observed.len() != expected_probs.len() {
        return Err(Error::CategoryMismatch {
            observed: observed.len(),
            expected: expected_probs.len(),
        });
    }
    if observed.is_empty() {
        return Err(Error::EmptySample);
    }
    let psum: f64 = expected_probs.iter().sum();
    if (psum - 1.0).abs() > 1e-9 || expected_probs.iter().any(|&p| p < 0.0) {
        return Err(Error::invalid_arg(format!(
            "expected probabilities sum to {psum}"
        )));
    }
    let n: u64 = observed.iter().sum();
    let expected: Vec<f64> = expected_probs.iter().map(|p| p * n as f64).collect();
    chi_square_from_expected(observed, &expected, observed.len().saturating_sub(1))
}

/// Pearson statistic for arbitrary expected counts and a caller-supplied
/// number of degrees of freedom. Cells with zero expectation and zero
/// observation are ignored; a zero-expectation cell with observations gives
/// an infinite statistic.
pub fn chi_square_from_expected(
    observed: &[u64],
    expected: &[f64],
    dof: usize,
) -> Result<TestReport> {
    if observed.len() != expected.len() {
        return Err(Error::CategoryMismatch {
            observed: observed.len(),
            expected: expected.len(),
        });
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut stat = 0.0;
    let mut low = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e <= 0.0 {
            if o > 0 {
                stat = f64::INFINITY;
            }
            continue;
        }
        if e < 5.0 {
            low += 1;
        }
        let diff = o as f64 - e;
        stat += diff * diff / e;
    }
    let mut report = TestReport::new(stat, chi_square_sf(stat, dof), n as usize);
    if low > 0 {
        report.warning = Some(format!("{low} cell(s) with expected count below 5"));
    }
    Ok(report)
}

/// Two-sample chi-square test of homogeneity on paired category counts.
/// Categories empty in both samples are dropped before counting degrees of
/// freedom.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<TestReport> {
    if a.len() != b.len() {
        return Err(Error::CategoryMismatch {
            observed: a.len(),
            expected: b.len(),
        });
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(Error::EmptySample);
    }
    let total = (na + nb) as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    let mut low = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        for (o, row) in [(x, na), (y, nb)] {
            let e = row as f64 * col / total;
            if e < 5.0 {
                low += 1;
            }
            let diff = o as f64 - e;
            stat += diff * diff / e;
        }
    }
    let dof = cells.saturating_sub(1);
    let mut report = TestReport::new(stat, chi_square_sf(stat, dof), (na + nb) as usize);
    if low > 0 {
        report.warning = Some(format!("{low} cell(s) with expected count below 5"));
    }
    Ok(report)
}

/// Sample Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::CategoryMismatch {
            observed: x.len(),
            expected: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::EmptySample);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

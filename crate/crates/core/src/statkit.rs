//! Numerical statistics shared by the metric, recalibration and comparison code.
//!
//! Everything here is a pure function over slices. Quantiles use linear
//! interpolation between order statistics (R's type 7); medians of even-length
//! inputs are the midpoint of the two central values.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// RSS at or below this fraction of `Σy²` is treated as an exact fit.
const ZERO_RSS_REL: f64 = 1e-20;

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let v = sorted(values);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// First and third quartiles.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64)> {
    let v = sorted(values);
    Some((quantile_sorted(&v, 0.25)?, quantile_sorted(&v, 0.75)?))
}

pub fn iqr(values: &[f64]) -> Option<f64> {
    quartiles(values).map(|(q1, q3)| q3 - q1)
}

/// Raw median absolute deviation about the median (no normal-consistency factor).
pub fn mad(values: &[f64]) -> Option<f64> {
    let m = median(values)?;
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

/// Sum of Euclidean distances from `m` to every point.
pub fn distance_sum(points: &[(f64, f64)], m: (f64, f64)) -> f64 {
    points.iter().map(|p| (p.0 - m.0).hypot(p.1 - m.1)).sum()
}

/// Geometric median by Weiszfeld iteration with the Vardi–Zhang correction for
/// iterates that land on a data point.
///
/// Stops when a step is shorter than 1e-10 or after 1000 iterations, returning
/// the best iterate seen. `None` for an empty input.
pub fn geometric_median(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    const MAX_ITER: usize = 1000;
    const STEP_TOL: f64 = 1e-10;

    let n = points.len();
    if n == 0 {
        return None;
    }
    if n == 1 {
        return Some(points[0]);
    }
    let mut y = (
        points.iter().map(|p| p.0).sum::<f64>() / n as f64,
        points.iter().map(|p| p.1).sum::<f64>() / n as f64,
    );
    if points.iter().all(|p| *p == points[0]) {
        return Some(points[0]);
    }
    let scale = points
        .iter()
        .map(|p| (p.0 - y.0).abs().max((p.1 - y.1).abs()))
        .fold(0.0, f64::max);
    let coincide_tol = scale * 1e-14;
    let mut best = (distance_sum(points, y), y);

    for _ in 0..MAX_ITER {
        let (mut nx, mut ny, mut den) = (0.0, 0.0, 0.0);
        let mut coincident = 0usize;
        for p in points {
            let d = (p.0 - y.0).hypot(p.1 - y.1);
            if d <= coincide_tol {
                coincident += 1;
                continue;
            }
            nx += p.0 / d;
            ny += p.1 / d;
            den += 1.0 / d;
        }
        if den == 0.0 {
            break;
        }
        let t = (nx / den, ny / den);
        let next = if coincident == 0 {
            t
        } else {
            // R = Σ (p − y)/‖p − y‖ over non-coincident points.
            let r = ((t.0 - y.0) * den).hypot((t.1 - y.1) * den);
            if r <= coincident as f64 {
                break;
            }
            let gamma = coincident as f64 / r;
            (
                (1.0 - gamma) * t.0 + gamma * y.0,
                (1.0 - gamma) * t.1 + gamma * y.1,
            )
        };
        let step = (next.0 - y.0).hypot(next.1 - y.1);
        y = next;
        let obj = distance_sum(points, y);
        if obj < best.0 {
            best = (obj, y);
        }
        if step < STEP_TOL {
            break;
        }
    }
    Some(best.1)
}

/// Ordinary least-squares fit with classical inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub r2: f64,
    pub df_resid: usize,
    /// `Σy²`, kept so that exact fits can be recognised.
    pub y_sumsq: f64,
}

impl OlsFit {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn p(&self) -> usize {
        self.coefficients.len()
    }

    /// True when the residuals are zero up to rounding.
    pub fn is_exact(&self) -> bool {
        self.rss <= ZERO_RSS_REL * self.y_sumsq
    }

    /// Two-sided confidence interval for coefficient `j`.
    pub fn confidence_interval(&self, j: usize, level: f64) -> (f64, f64) {
        let q = t_quantile(0.5 + level / 2.0, self.df_resid as f64);
        let half = q * self.std_errors[j];
        (self.coefficients[j] - half, self.coefficients[j] + half)
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }
}

/// Least squares via Householder QR.
///
/// `columns` holds the design matrix column by column; callers include the
/// intercept column themselves. Requires `n > p` and a full-rank design.
pub fn ols(y: &[f64], columns: &[Vec<f64>]) -> Result<OlsFit> {
    let n = y.len();
    let p = columns.len();
    if p == 0 || columns.iter().any(|c| c.len() != n) {
        return Err(Error::DegenerateDesign(
            "design columns must match the response length",
        ));
    }
    if n <= p {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {p} coefficients"
        )));
    }
    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i]);
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if diag_max == 0.0 || (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * diag_max) {
        return Err(Error::RankDeficient);
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::RankDeficient)?;
    let fitted = &x * &beta;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let df_resid = n - p;
    let sigma2 = rss / df_resid as f64;
    let r_inv = r.try_inverse().ok_or(Error::RankDeficient)?;
    let cov = &r_inv * r_inv.transpose();
    let std_errors = (0..p).map(|j| (sigma2 * cov[(j, j)]).sqrt()).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r2 = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        residuals,
        rss,
        r2,
        df_resid,
        y_sumsq: y.iter().map(|v| v * v).sum(),
    })
}

/// Akaike information criterion in the `extractAIC` convention for linear
/// models: `n·ln(RSS/n) + 2p`. Exact fits return negative infinity.
pub fn aic(fit: &OlsFit) -> f64 {
    if fit.is_exact() {
        return f64::NEG_INFINITY;
    }
    let n = fit.n() as f64;
    n * (fit.rss / n).ln() + 2.0 * fit.p() as f64
}

fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Upper-tail probability `P(T > t)` of Student's t with (possibly fractional)
/// `df` degrees of freedom, via the regularized incomplete beta function.
pub fn t_distribution_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    if df.is_infinite() || df > 1e12 {
        return normal_sf(t);
    }
    let x = df / (df + t * t);
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, x);
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Lower-tail quantile: the `q` with `P(T ≤ q) = p`.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    let cdf = |q: f64| 1.0 - t_distribution_sf(q, df);
    let (mut lo, mut hi) = (-1.0, 1.0);
    while cdf(lo) > p {
        lo *= 2.0;
    }
    while cdf(hi) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * mid.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Outcome of a t-based test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    #[serde(with = "crate::report::nonfinite")]
    pub statistic: f64,
    pub df: f64,
    pub p_two_tailed: f64,
    pub estimate: f64,
    pub ci95: (f64, f64),
    /// Set when a zero standard error forced a conventional result.
    #[serde(default)]
    pub degenerate: bool,
}

fn degenerate_result(diff: f64, df: f64, estimate: f64) -> TestResult {
    let (statistic, p) = if diff == 0.0 {
        (0.0, 1.0)
    } else {
        (f64::INFINITY.copysign(diff), 0.0)
    };
    TestResult {
        statistic,
        df,
        p_two_tailed: p,
        estimate,
        ci95: (estimate, estimate),
        degenerate: true,
    }
}

/// Welch's unequal-variance test for two independent groups.
///
/// Equivalent to a one-way analysis of means without the equal-variance
/// assumption; the F statistic of that analysis is `statistic²`. The estimate is
/// `mean(a) − mean(b)`.
pub fn welch_anova_two_groups(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(
            "each group needs at least 2 values".into(),
        ));
    }
    let (ma, mb) = (mean(a).unwrap(), mean(b).unwrap());
    let (va, vb) = (sample_sd(a).unwrap().powi(2), sample_sd(b).unwrap().powi(2));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (wa, wb) = (va / na, vb / nb);
    let se2 = wa + wb;
    let diff = ma - mb;
    if se2 == 0.0 {
        return Ok(degenerate_result(diff, na + nb - 2.0, diff));
    }
    let se = se2.sqrt();
    let df = se2 * se2 / (wa * wa / (na - 1.0) + wb * wb / (nb - 1.0));
    let t = diff / se;
    let q = t_quantile(0.975, df);
    Ok(TestResult {
        statistic: t,
        df,
        p_two_tailed: (2.0 * t_distribution_sf(t.abs(), df)).min(1.0),
        estimate: diff,
        ci95: (diff - q * se, diff + q * se),
        degenerate: false,
    })
}

/// One-sample t-test of `mean(x)` against `mu0`.
pub fn one_sample_t(x: &[f64], mu0: f64) -> Result<TestResult> {
    if x.len() < 2 {
        return Err(Error::InsufficientData(
            "one-sample t-test needs at least 2 values".into(),
        ));
    }
    let n = x.len() as f64;
    let m = mean(x).unwrap();
    let s = sample_sd(x).unwrap();
    let df = n - 1.0;
    if s == 0.0 {
        return Ok(degenerate_result(m - mu0, df, m));
    }
    let se = s / n.sqrt();
    let t = (m - mu0) / se;
    let q = t_quantile(0.975, df);
    Ok(TestResult {
        statistic: t,
        df,
        p_two_tailed: (2.0 * t_distribution_sf(t.abs(), df)).min(1.0),
        estimate: m,
        ci95: (m - q * se, m + q * se),
        degenerate: false,
    })
}

/// Holm–Bonferroni step-down adjustment, returned in input order.
pub fn holm_adjust(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        let candidate = ((m - rank) as f64 * p_values[i]).min(1.0);
        running = running.max(candidate);
        adjusted[i] = running;
    }
    adjusted
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    /// Sign-preserving cube root.
    CubeRoot,
    /// `ln(x / (1 − x))`, with inputs clamped into `[ε, 1 − ε]`.
    Logit,
}

pub const LOGIT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub values: Vec<f64>,
    /// Number of logit inputs that had to be clamped.
    pub clamped: usize,
}

pub fn transform(values: &[f64], kind: TransformKind) -> Transformed {
    match kind {
        TransformKind::CubeRoot => Transformed {
            values: values.iter().map(|v| v.cbrt()).collect(),
            clamped: 0,
        },
        TransformKind::Logit => {
            let mut clamped = 0;
            let values = values
                .iter()
                .map(|&v| {
                    let c = v.clamp(LOGIT_EPSILON, 1.0 - LOGIT_EPSILON);
                    if c != v {
                        clamped += 1;
                    }
                    (c / (1.0 - c)).ln()
                })
                .collect();
            Transformed { values, clamped }
        }
    }
}

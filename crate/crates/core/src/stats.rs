//! Small statistical helpers shared by the estimators: Wilson proportion
//! intervals, sample moments, ordinary least squares, and percentile
//! bootstrap over count tables.

use rand::Rng;

/// 95% two-sided normal quantile, used by all confidence intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for a binomial proportion at 95% confidence.
pub fn wilson95(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (Z95 / denom) * ((p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt());
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ordinary least-squares line through `(x_i, y_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    LineFit {
        slope,
        intercept,
        residual,
    }
}

/// Total-variation distance between two probability vectors on the same
/// indexed universe: half the l1 distance.
pub fn tv_from_probs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Normalizes a count table into a probability vector.
pub fn probs_from_counts(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    let t = total.max(1) as f64;
    counts.iter().map(|&c| c as f64 / t).collect()
}

/// Percentile bootstrap (95%) of a statistic of an empirical count table.
/// Resampling is multinomial, implemented as a chain of binomials.
pub fn bootstrap_counts_ci(
    counts: &[u64],
    resamples: usize,
    rng: &mut impl Rng,
    stat: impl Fn(&[u64]) -> f64,
) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let mut stats = Vec::with_capacity(resamples);
    let mut buf = vec![0u64; counts.len()];
    for _ in 0..resamples {
        let mut remaining = total;
        let mut mass = 1.0f64;
        for (i, &c) in counts.iter().enumerate() {
            if remaining == 0 {
                buf[i] = 0;
                continue;
            }
            let p = (c as f64 / total as f64 / mass).clamp(0.0, 1.0);
            let draw = if i + 1 == counts.len() {
                remaining
            } else {
                binomial(remaining, p, rng)
            };
            buf[i] = draw;
            remaining -= draw;
            mass -= c as f64 / total as f64;
            if mass <= 0.0 {
                mass = f64::MIN_POSITIVE;
            }
        }
        stats.push(stat(&buf));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = stats[((resamples as f64) * 0.025) as usize];
    let hi = stats[(((resamples as f64) * 0.975) as usize).min(resamples - 1)];
    (lo, hi)
}

fn binomial(n: u64, p: f64, rng: &mut impl Rng) -> u64 {
    use rand_distr::{Binomial, Distribution};
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).unwrap().sample(rng)
}

/// Upper-tail quantile of the chi-squared distribution via the
/// Wilson-Hilferty normal approximation; adequate for the generous
/// significance levels used in the statistical law tests.
pub fn chi2_quantile(dof: f64, p: f64) -> f64 {
    let z = normal_quantile(p);
    let a = 2.0 / (9.0 * dof);
    dof * (1.0 - a + z * a.sqrt()).powi(3)
}

/// Inverse standard normal CDF (Acklam's rational approximation).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let plow = 0.02425;
    if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Pearson chi-squared statistic of observed counts against expected
/// probabilities. Cells with expected count below `min_expected` are pooled
/// into the last cell.
pub fn chi2_statistic(observed: &[u64], expected_probs: &[f64], min_expected: f64) -> (f64, usize) {
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut stat = 0.0;
    let mut pooled_obs = 0.0;
    let mut pooled_exp = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = n * p;
        if e < min_expected {
            pooled_obs += o as f64;
            pooled_exp += e;
        } else {
            stat += (o as f64 - e) * (o as f64 - e) / e;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
        cells += 1;
    }
    (stat, cells.saturating_sub(1))
}

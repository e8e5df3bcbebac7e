//! The reaction function `R(rho) = E_{nu_rho}[-2 xi_0 c(xi)]` as an exact
//! polynomial, its evaluation through the decomposition, and the
//! temperature-regime trichotomy.

use super::{Decomposition, FlipModelError, LocalRateTable};
use serde::{Deserialize, Serialize};

/// Exact coefficients of `R` in the monomial basis, degree at most
/// `|B(0,m)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionPolynomial {
    coeffs: Vec<f64>,
}

impl ReactionPolynomial {
    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        ReactionPolynomial { coeffs }
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, rho: f64) -> f64 {
        horner(&self.coeffs, rho)
    }

    pub fn derivative_coeffs(&self) -> Vec<f64> {
        derivative(&self.coeffs)
    }

    pub fn eval_derivative(&self, rho: f64) -> f64 {
        horner(&self.derivative_coeffs(), rho)
    }

    /// Max of `|R'|` over `[-1,1]`, sampled on a fine grid; used by the ODE
    /// step-size guard.
    pub fn derivative_bound(&self) -> f64 {
        let d = self.derivative_coeffs();
        (0..=2000)
            .map(|k| horner(&d, -1.0 + k as f64 / 1000.0).abs())
            .fold(0.0, f64::max)
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return vec![0.0];
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

/// Expands `R` exactly by convolving the per-vector product weights: a local
/// vector with `p` plus spins out of `n` carries the weight polynomial
/// `(1+rho)^p (1-rho)^(n-p) / 2^n`.
pub fn reaction_polynomial(c: &LocalRateTable) -> Result<ReactionPolynomial, FlipModelError> {
    let n = c.ball_size();
    // Weight polynomials per plus-count, computed once.
    let mut weight = Vec::with_capacity(n + 1);
    for p in 0..=n {
        let mut poly = vec![0.0f64; 1];
        poly[0] = 1.0;
        for _ in 0..p {
            poly = poly_mul(&poly, &[1.0, 1.0]);
        }
        for _ in 0..n - p {
            poly = poly_mul(&poly, &[1.0, -1.0]);
        }
        let scale = (2.0f64).powi(n as i32);
        for v in &mut poly {
            *v /= scale;
        }
        weight.push(poly);
    }
    let center_bit = 1u32 << c.geometry().center_index();
    let mut coeffs = vec![0.0f64; n + 1];
    for mask in 0..(1u32 << n) {
        let x0: f64 = if mask & center_bit != 0 { 1.0 } else { -1.0 };
        let factor = -2.0 * x0 * c.rate(mask);
        let w = &weight[mask.count_ones() as usize];
        for (k, &wk) in w.iter().enumerate() {
            coeffs[k] += factor * wk;
        }
    }
    Ok(ReactionPolynomial { coeffs })
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Evaluates `(R(rho), R'(rho))` through the decomposition:
/// `R = sum_i lambda_i E[f_i] - lambda rho` and
/// `R' = sum_i sum_j lambda_i E[grad_j f_i / 2] - lambda`,
/// both by direct enumeration under the product measure `nu_rho`.
pub fn reaction_via_decomposition(dec: &Decomposition, rho: f64) -> (f64, f64) {
    let n = dec.ball_size();
    let half = 0.5 * rho;
    // nu_rho weight of a mask with p plus spins.
    let w = |mask: u32| -> f64 {
        let p = mask.count_ones() as i32;
        (0.5 + half).powi(p) * (0.5 - half).powi(n as i32 - p)
    };
    let lambda = dec.lambda();
    let mut r = -lambda * rho;
    let mut rp = -lambda;
    for (rate, f) in dec.entries() {
        let mut ef = 0.0;
        let mut grad = 0.0;
        for mask in 0..(1u32 << n) {
            let wt = w(mask);
            ef += f.eval(mask) as f64 * wt;
            for j in 0..n {
                let bit = 1u32 << j;
                let up = f.eval(mask | bit) as f64;
                let down = f.eval(mask & !bit) as f64;
                grad += 0.5 * (up - down) * wt;
            }
        }
        r += rate * ef;
        rp += rate * grad;
    }
    (r, rp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    High,
    Critical,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootInfo {
    pub location: f64,
    /// True when `R` touches zero without changing sign there.
    pub tangential: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub roots: Vec<RootInfo>,
    pub regime: Regime,
    /// `R'(rho*)` when the root is unique.
    pub slope: Option<f64>,
}

/// Sign-change roots of `coeffs` inside `[lo, hi]`, by recursive
/// derivative-separated subdivision and bisection on each monotone piece.
/// Used to isolate critical points; touching roots of the derivative do not
/// matter there (the polynomial stays monotone through them).
fn crossing_roots(coeffs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let deg = coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0);
    let coeffs = &coeffs[..=deg];
    match deg {
        0 => Vec::new(),
        1 => {
            let r = -coeffs[0] / coeffs[1];
            if (lo..=hi).contains(&r) {
                vec![r]
            } else {
                Vec::new()
            }
        }
        _ => {
            let crits = crossing_roots(&derivative(coeffs), lo, hi);
            let mut cuts = vec![lo];
            cuts.extend(crits);
            cuts.push(hi);
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut roots = Vec::new();
            for win in cuts.windows(2) {
                let (a, b) = (win[0], win[1]);
                if let Some(r) = bisect(coeffs, a, b) {
                    if roots.last().is_none_or(|&p: &f64| (r - p).abs() > 1e-12) {
                        roots.push(r);
                    }
                }
            }
            roots
        }
    }
}

/// Root of a monotone piece via bisection, when the endpoint signs differ
/// (endpoints evaluating exactly to zero count).
fn bisect(coeffs: &[f64], mut a: f64, mut b: f64) -> Option<f64> {
    let (fa, fb) = (horner(coeffs, a), horner(coeffs, b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = horner(coeffs, mid);
        if fm == 0.0 || (b - a) < 1e-15 {
            return Some(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some(0.5 * (a + b))
}

/// Classifies the temperature regime from the root structure of `R` on
/// `[-1,1]`: one root with negative slope is High, one root with
/// `|R'(rho*)| <= tol` is Critical, two or more roots is Low.
///
/// Roots are isolated by subdividing at the critical points of `R`: the
/// polynomial is monotone on each segment, so each segment holds at most
/// one zero. A critical point where `|R| <= tol` counts as a root; it is
/// tangential (touching, multiple) when `R` keeps its sign on both sides.
pub fn classify_regime(
    p: &ReactionPolynomial,
    tol: f64,
) -> Result<RegimeReport, FlipModelError> {
    let at_minus = p.eval(-1.0);
    let at_plus = p.eval(1.0);
    if at_minus <= 0.0 || at_plus >= 0.0 {
        return Err(FlipModelError::BoundarySignViolation { at_minus, at_plus });
    }
    let mut cuts = vec![-1.0];
    cuts.extend(crossing_roots(&p.derivative_coeffs(), -1.0, 1.0));
    cuts.push(1.0);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    // Sign of R at each breakpoint, with |R| <= tol treated as zero.
    let signs: Vec<i8> = cuts
        .iter()
        .map(|&c| {
            let v = p.eval(c);
            if v.abs() <= tol {
                0
            } else if v > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    let mut roots: Vec<RootInfo> = Vec::new();
    // Zero breakpoints are roots; tangential iff the neighboring nonzero
    // signs agree (the polynomial touches without crossing).
    for (i, &c) in cuts.iter().enumerate() {
        if signs[i] != 0 {
            continue;
        }
        let left = signs[..i].iter().rev().find(|&&s| s != 0).copied();
        let right = signs[i + 1..].iter().find(|&&s| s != 0).copied();
        let tangential = match (left, right) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        };
        if roots
            .last()
            .is_none_or(|r| (r.location - c).abs() > 1e-9)
        {
            roots.push(RootInfo {
                location: c,
                tangential,
            });
        }
    }
    // Interior crossings on segments whose endpoints have strict opposite
    // signs; monotonicity gives at most one zero per segment.
    for i in 0..cuts.len() - 1 {
        if signs[i] != 0 && signs[i + 1] != 0 && signs[i] != signs[i + 1] {
            if let Some(r) = bisect(p.coeffs(), cuts[i], cuts[i + 1]) {
                roots.push(RootInfo {
                    location: r,
                    tangential: false,
                });
            }
        }
    }
    roots.sort_by(|a, b| a.location.partial_cmp(&b.location).unwrap());
    let (regime, slope) = match roots.as_slice() {
        [only] => {
            let s = p.eval_derivative(only.location);
            if s.abs() <= tol {
                (Regime::Critical, Some(s))
            } else {
                (Regime::High, Some(s))
            }
        }
        _ => (Regime::Low, None),
    };
    Ok(RegimeReport {
        roots,
        regime,
        slope,
    })
}

//! Flip-rate functions, attractiveness, the monotone boolean decomposition,
//! and the reaction polynomial with temperature-regime classification.

mod boolean;
mod decompose;
mod reaction;

pub use boolean::BooleanUpdate;
pub use decompose::{decompose, recompose, Decomposition};
pub use reaction::{
    classify_regime, reaction_polynomial, reaction_via_decomposition, ReactionPolynomial, Regime,
    RegimeReport, RootInfo,
};

use crate::lattice::{mask_spin, BallGeometry, LatticeError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ROOT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FlipModelError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("ball too large: {0} spins exceed the enumeration cap of {max}", max = BooleanUpdate::MAX_ARGS)]
    BallTooLarge(usize),
    #[error("rate table has {got} entries, expected {expected}")]
    WrongTableSize { got: usize, expected: usize },
    #[error("rate for local vector {mask:#b} is {rate}, rates must be finite and non-negative")]
    InvalidRate { mask: u32, rate: f64 },
    #[error("rate table is not strictly positive (zero rate at local vector {mask:#b})")]
    NotStrictlyPositive { mask: u32 },
    #[error("rate table is not attractive ({0} violating pairs)")]
    NotAttractive(usize),
    #[error("internal decomposition failure: support indicator not monotone")]
    SupportIndicatorNotMonotone,
    #[error("decomposition does not recompose to the rate table (first mismatch at local vector {mask:#b})")]
    DecompositionMismatch { mask: u32 },
    #[error("boundary sign violation: R(-1) = {at_minus} must be > 0 and R(1) = {at_plus} must be < 0")]
    BoundarySignViolation { at_minus: f64, at_plus: f64 },
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
}

/// The local flip-rate function `c` on `{-1,1}^{B(0,m)}`, stored as a table
/// over all `2^{|B(0,m)|}` local spin vectors in canonical ball order.
///
/// The process is well-defined only when every rate is strictly positive;
/// tables touching zero (the De Masi family at `gamma = 1`) are accepted for
/// algebraic operations (reaction polynomial) but rejected by
/// [`decompose`] and flagged by [`classify_regime`]'s boundary-sign check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRateTable {
    d: u8,
    m: usize,
    #[serde(skip, default = "default_geometry")]
    geom: BallGeometry,
    rates: Vec<f64>,
}

pub(crate) fn default_geometry() -> BallGeometry {
    BallGeometry::new(1, 1).expect("default geometry")
}

impl LocalRateTable {
    pub fn new(d: u8, m: usize, rates: Vec<f64>) -> Result<Self, FlipModelError> {
        let geom = BallGeometry::new(d, m)?;
        if geom.size() > BooleanUpdate::MAX_ARGS {
            return Err(FlipModelError::BallTooLarge(geom.size()));
        }
        let expected = 1usize << geom.size();
        if rates.len() != expected {
            return Err(FlipModelError::WrongTableSize {
                got: rates.len(),
                expected,
            });
        }
        for (mask, &r) in rates.iter().enumerate() {
            if !r.is_finite() || r < 0.0 {
                return Err(FlipModelError::InvalidRate {
                    mask: mask as u32,
                    rate: r,
                });
            }
        }
        Ok(LocalRateTable { d, m, geom, rates })
    }

    pub fn from_fn(d: u8, m: usize, f: impl Fn(u32) -> f64) -> Result<Self, FlipModelError> {
        let geom = BallGeometry::new(d, m)?;
        if geom.size() > BooleanUpdate::MAX_ARGS {
            return Err(FlipModelError::BallTooLarge(geom.size()));
        }
        let rates = (0..1u32 << geom.size()).map(f).collect();
        Self::new(d, m, rates)
    }

    #[inline]
    pub fn d(&self) -> u8 {
        self.d
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn geometry(&self) -> &BallGeometry {
        &self.geom
    }

    /// Number of spin arguments `|B(0,m)|`.
    #[inline]
    pub fn ball_size(&self) -> usize {
        self.geom.size()
    }

    #[inline]
    pub fn rate(&self, mask: u32) -> f64 {
        self.rates[mask as usize]
    }

    #[inline]
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn require_positive(&self) -> Result<(), FlipModelError> {
        for (mask, &r) in self.rates.iter().enumerate() {
            if r <= 0.0 {
                return Err(FlipModelError::NotStrictlyPositive { mask: mask as u32 });
            }
        }
        Ok(())
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().cloned().fold(0.0, f64::max)
    }
}

/// A pair of comparable local vectors on which attractiveness fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttractivenessViolation {
    /// The smaller vector (coordinate `flipped` reads -1).
    pub lower: u32,
    /// The larger vector (coordinate `flipped` reads +1).
    pub upper: u32,
    /// The non-center coordinate on which the two vectors differ.
    pub flipped: usize,
}

/// Checks attractiveness: with the center spin held fixed, `c` must be
/// decreasing in the other coordinates when the center is `+1` and
/// increasing when the center is `-1`. Returns every violating
/// single-coordinate pair; an empty list means the table is attractive.
pub fn check_attractive(c: &LocalRateTable) -> Vec<AttractivenessViolation> {
    let n = c.ball_size();
    let center_bit = 1u32 << c.geometry().center_index();
    let mut out = Vec::new();
    for mask in 0..(1u32 << n) {
        for j in 0..n {
            let bit = 1u32 << j;
            if bit == center_bit || mask & bit != 0 {
                continue;
            }
            let lower = mask;
            let upper = mask | bit;
            let (cl, cu) = (c.rate(lower), c.rate(upper));
            let bad = if mask & center_bit != 0 {
                cl < cu // center +1: must be decreasing
            } else {
                cl > cu // center -1: must be increasing
            };
            if bad {
                out.push(AttractivenessViolation {
                    lower,
                    upper,
                    flipped: j,
                });
            }
        }
    }
    out
}

/// De Masi-Ferrari-Lebowitz example: `d = 1`, `m = 1`,
/// `c(x) = 1 - gamma x(0)(x(1) + x(-1)) + gamma^2 x(1) x(-1)`.
pub fn builtin_demasi(gamma: f64) -> Result<LocalRateTable, FlipModelError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(FlipModelError::ParameterOutOfRange(format!(
            "demasi gamma must lie in [0,1], got {gamma}"
        )));
    }
    // Ball order for d=1, m=1 is offsets [-1, 0, +1] at bit positions 0,1,2.
    LocalRateTable::from_fn(1, 1, |mask| {
        let xm = mask_spin(mask, 0) as f64;
        let x0 = mask_spin(mask, 1) as f64;
        let xp = mask_spin(mask, 2) as f64;
        1.0 - gamma * x0 * (xp + xm) + gamma * gamma * xp * xm
    })
}

/// Asymmetric example: `d = 1`, `m = 1`,
/// `c(x) = theta + 2 * 1{x(0) = 1, x(1) = -1}`.
pub fn builtin_theta(theta: f64) -> Result<LocalRateTable, FlipModelError> {
    if !(theta > 0.0) {
        return Err(FlipModelError::ParameterOutOfRange(format!(
            "theta must be > 0, got {theta}"
        )));
    }
    LocalRateTable::from_fn(1, 1, |mask| {
        let x0 = mask_spin(mask, 1);
        let xp = mask_spin(mask, 2);
        theta + if x0 == 1 && xp == -1 { 2.0 } else { 0.0 }
    })
}

/// Constant rates `c = 1` on the given geometry.
pub fn builtin_constant(d: u8, m: usize) -> Result<LocalRateTable, FlipModelError> {
    LocalRateTable::from_fn(d, m, |_| 1.0)
}

/// The published five-function decomposition of the De Masi model:
/// oblivious pair at rate `(1-gamma)^2`, majority at `4 gamma^2`, and the
/// two neighbor dictators at `2(gamma - gamma^2)`. Its total rate
/// `2 + 2 gamma^2` is the smallest possible (for every window,
/// `c(x^{0,-1}) + c(x^{0,+1}) <= lambda`), which keeps the dual branching
/// processes as slow as the model allows. Zero-rate entries are dropped so
/// the boundary values of gamma stay valid.
pub fn demasi_decomposition(gamma: f64) -> Result<Decomposition, FlipModelError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(FlipModelError::ParameterOutOfRange(format!(
            "demasi decomposition needs gamma in [0,1), got {gamma}"
        )));
    }
    let mk = |f: fn(u32) -> i8| BooleanUpdate::from_fn(3, f);
    let mut entries: Vec<(f64, BooleanUpdate)> = vec![
        ((1.0 - gamma) * (1.0 - gamma), mk(|_| 1)),
        ((1.0 - gamma) * (1.0 - gamma), mk(|_| -1)),
    ];
    let majority = 4.0 * gamma * gamma;
    if majority > 0.0 {
        entries.push((
            majority,
            mk(|m| {
                let s = mask_spin(m, 0) + mask_spin(m, 1) + mask_spin(m, 2);
                if s > 0 {
                    1
                } else {
                    -1
                }
            }),
        ));
    }
    let dictator = 2.0 * (gamma - gamma * gamma);
    if dictator > 0.0 {
        entries.push((dictator, mk(|m| mask_spin(m, 0))));
        entries.push((dictator, mk(|m| mask_spin(m, 2))));
    }
    Decomposition::new(1, 1, entries)
}

/// A rate table bundled with everything the simulators derive from it.
#[derive(Debug, Clone)]
pub struct Model {
    pub table: LocalRateTable,
    pub dec: Decomposition,
    pub reaction: ReactionPolynomial,
    pub regime: RegimeReport,
}

impl Model {
    pub fn new(table: LocalRateTable) -> Result<Self, FlipModelError> {
        let dec = decompose(&table)?;
        Self::with_decomposition(table, dec)
    }

    /// Bundles a table with an explicitly chosen decomposition; the pair is
    /// validated by exact recomposition. Useful when a hand decomposition
    /// with a smaller total rate than the greedy one is known (the dual
    /// branching processes grow like `e^{2 m lambda t}`).
    pub fn with_decomposition(
        table: LocalRateTable,
        dec: Decomposition,
    ) -> Result<Self, FlipModelError> {
        let back = recompose(&dec);
        for mask in 0..(1u32 << table.ball_size()) {
            if (back.rate(mask) - table.rate(mask)).abs() > 1e-12 {
                return Err(FlipModelError::DecompositionMismatch { mask });
            }
        }
        let reaction = reaction_polynomial(&table)?;
        let regime = classify_regime(&reaction, DEFAULT_ROOT_TOL)?;
        Ok(Model {
            table,
            dec,
            reaction,
            regime,
        })
    }

    pub fn demasi(gamma: f64) -> Result<Self, FlipModelError> {
        Self::with_decomposition(builtin_demasi(gamma)?, demasi_decomposition(gamma)?)
    }

    pub fn theta(theta: f64) -> Result<Self, FlipModelError> {
        Self::new(builtin_theta(theta)?)
    }

    pub fn constant(d: u8, m: usize) -> Result<Self, FlipModelError> {
        Self::new(builtin_constant(d, m)?)
    }

    /// The unique root of `R` when the regime has one.
    pub fn rho_star(&self) -> Option<f64> {
        match self.regime.roots.as_slice() {
            [r] => Some(r.location),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_table_is_attractive() {
        let c = builtin_constant(1, 1).unwrap();
        assert!(check_attractive(&c).is_empty());
        let c2 = builtin_constant(2, 1).unwrap();
        assert_eq!(c2.ball_size(), 5);
        assert!(check_attractive(&c2).is_empty());
    }

    #[test]
    fn demasi_family_is_attractive() {
        for k in 0..=24 {
            let c = builtin_demasi(k as f64 / 24.0).unwrap();
            assert!(check_attractive(&c).is_empty(), "gamma = {}/24", k);
        }
    }

    #[test]
    fn theta_example_is_attractive_and_evaluates() {
        let c = builtin_theta(1.0).unwrap();
        assert!(check_attractive(&c).is_empty());
        // x = (x(-1), x(0), x(1)) = (-,+,-): indicator active, c = 1 + 2 = 3.
        let mask = 0b010;
        assert_eq!(c.rate(mask), 3.0);
    }

    #[test]
    fn demasi_values() {
        assert_eq!(builtin_demasi(0.0).unwrap().rates(), &[1.0; 8]);
        let c = builtin_demasi(0.5).unwrap();
        // all-plus: 1 - 2*gamma + gamma^2 = 1/4
        assert!((c.rate(0b111) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn non_attractive_example_detected() {
        // c(x) = 2 + x(0) x(1): increasing in x(1) when x(0) = +1.
        let c = LocalRateTable::from_fn(1, 1, |mask| {
            2.0 + (mask_spin(mask, 1) * mask_spin(mask, 2)) as f64
        })
        .unwrap();
        let v = check_attractive(&c);
        assert!(!v.is_empty());
        // Exactly the x(1)-flip family with x(0) = +1 is increasing the rate
        // (2 pairs over x(-1)), and the x(1)-flip family with x(0) = -1 is
        // decreasing it (2 pairs).
        assert_eq!(v.len(), 4);
        assert!(v.iter().all(|viol| viol.flipped == 2));
    }

    #[test]
    fn parameter_ranges() {
        assert!(builtin_demasi(-0.1).is_err());
        assert!(builtin_demasi(1.1).is_err());
        assert!(builtin_theta(0.0).is_err());
        // gamma = 1 constructs (paper's stated range) but is degenerate:
        let c = builtin_demasi(1.0).unwrap();
        assert!(c.require_positive().is_err());
    }
}

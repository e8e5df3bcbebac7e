//! Monotone boolean decomposition of attractive rate tables.
//!
//! Every attractive `c` can be rewritten as
//! `c(x) = sum_i lambda_i 1{f_i(x) = -x(0)}` with `f_i` increasing boolean
//! updates and `lambda_i > 0`, with `f_1 = +1` and `f_2 = -1` oblivious.
//! The construction peels the restrictions of `c` to a fixed center spin
//! into indicator layers greedily: each step subtracts
//! `min_{support} * 1{support}`, and the support of an increasing
//! non-negative function is an up-set, so each layer is monotone.

use super::boolean::BooleanUpdate;
use super::{check_attractive, FlipModelError, LocalRateTable};
use serde::{Deserialize, Serialize};

/// Absolute floor, relative to the largest rate, below which a peeled
/// residual is snapped to zero. Keeps floating-point dust from spawning
/// spurious layers.
const RESIDUAL_FLOOR: f64 = 1e-13;

/// Weighted list of increasing boolean update functions realizing a rate
/// table. Entry 0 is the oblivious all-plus update, entry 1 the oblivious
/// all-minus update.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decomposition {
    d: u8,
    m: usize,
    #[serde(skip, default = "super::default_geometry")]
    geom: crate::lattice::BallGeometry,
    entries: Vec<(f64, BooleanUpdate)>,
}

impl Decomposition {
    /// Builds from raw entries, validating the invariants: positive rates,
    /// increasing updates, oblivious `f_1 = +1` and `f_2 = -1`.
    pub fn new(d: u8, m: usize, entries: Vec<(f64, BooleanUpdate)>) -> Result<Self, FlipModelError> {
        if entries.len() < 2
            || entries[0].1.constant_value() != Some(1)
            || entries[1].1.constant_value() != Some(-1)
            || entries[0].0 <= 0.0
            || entries[1].0 <= 0.0
        {
            return Err(FlipModelError::SupportIndicatorNotMonotone);
        }
        for (rate, f) in &entries {
            if !(*rate > 0.0) || !f.is_increasing() {
                return Err(FlipModelError::SupportIndicatorNotMonotone);
            }
        }
        let geom = crate::lattice::BallGeometry::new(d, m)?;
        Ok(Decomposition {
            d,
            m,
            geom,
            entries,
        })
    }

    #[inline]
    pub fn geometry(&self) -> &crate::lattice::BallGeometry {
        &self.geom
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
    pub fn q(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn entries(&self) -> &[(f64, BooleanUpdate)] {
        &self.entries
    }

    #[inline]
    pub fn rate(&self, i: usize) -> f64 {
        self.entries[i].0
    }

    #[inline]
    pub fn update(&self, i: usize) -> &BooleanUpdate {
        &self.entries[i].1
    }

    /// Total update rate `lambda = sum_i lambda_i`.
    pub fn lambda(&self) -> f64 {
        self.entries.iter().map(|(l, _)| l).sum()
    }

    /// Mean of the refresh distribution, `(lambda_1 - lambda_2) / (lambda_1 + lambda_2)`.
    pub fn rho_bar(&self) -> f64 {
        let l1 = self.entries[0].0;
        let l2 = self.entries[1].0;
        (l1 - l2) / (l1 + l2)
    }

    /// Combined rate of the two oblivious updates, `lambda_1 + lambda_2`.
    pub fn refresh_rate(&self) -> f64 {
        self.entries[0].0 + self.entries[1].0
    }

    /// Number of spin arguments of each update function.
    pub fn ball_size(&self) -> usize {
        self.entries[0].1.n_args()
    }
}

/// Greedy layer peeling: writes a non-negative function `g` on `2^k` points
/// (increasing w.r.t. the orientation given by `up`) as a positive
/// combination of indicator layers. With `up = true` the support of each
/// residual must be an up-set; with `up = false`, a down-set.
fn peel_layers(mut g: Vec<f64>, k: usize, up: bool) -> Result<Vec<(f64, Vec<bool>)>, FlipModelError> {
    let size = 1usize << k;
    let scale = g.iter().cloned().fold(0.0, f64::max);
    let floor = scale * RESIDUAL_FLOOR;
    let mut layers = Vec::new();
    loop {
        let support: Vec<bool> = g.iter().map(|&v| v > floor).collect();
        if !support.iter().any(|&s| s) {
            break;
        }
        // The support must be monotone in the requested orientation.
        for mask in 0..size {
            for j in 0..k {
                let bit = 1usize << j;
                if mask & bit != 0 {
                    continue;
                }
                let (lo, hi) = (support[mask], support[mask | bit]);
                let ok = if up { !lo || hi } else { !hi || lo };
                if !ok {
                    return Err(FlipModelError::SupportIndicatorNotMonotone);
                }
            }
        }
        let lambda = g
            .iter()
            .zip(&support)
            .filter(|&(_, &s)| s)
            .map(|(&v, _)| v)
            .fold(f64::INFINITY, f64::min);
        for (v, &s) in g.iter_mut().zip(&support) {
            if s {
                *v -= lambda;
                if *v <= floor {
                    *v = 0.0;
                }
            }
        }
        layers.push((lambda, support));
    }
    Ok(layers)
}

/// Decomposes an attractive, strictly positive rate table into increasing
/// boolean updates. Deterministic: the greedy min-over-support peeling of
/// each center restriction, with the two oblivious layers first.
pub fn decompose(c: &LocalRateTable) -> Result<Decomposition, FlipModelError> {
    c.require_positive()?;
    let violations = check_attractive(c);
    if !violations.is_empty() {
        return Err(FlipModelError::NotAttractive(violations.len()));
    }

    let n = c.ball_size();
    let k = n - 1; // non-center arguments
    let center = c.geometry().center_index();
    let center_bit = 1u32 << center;

    // Packs the k non-center coordinates of a full mask into a dense mask.
    let split = |full: u32| -> u32 {
        let low = full & (center_bit - 1);
        let high = (full >> (center + 1)) << center;
        low | high
    };

    let mut minus_part = vec![0.0; 1 << k];
    let mut plus_part = vec![0.0; 1 << k];
    for full in 0..(1u32 << n) {
        let rest = split(full) as usize;
        if full & center_bit == 0 {
            minus_part[rest] = c.rate(full);
        } else {
            plus_part[rest] = c.rate(full);
        }
    }

    // Center -1: increasing restriction, up-set layers; lift sets +1 when the
    // center is already +1 and follows the layer indicator otherwise.
    let minus_layers = peel_layers(minus_part, k, true)?;
    // Center +1: decreasing restriction, down-set layers; lift mirrors.
    let plus_layers = peel_layers(plus_part, k, false)?;

    let lift_minus = |layer: &[bool]| {
        BooleanUpdate::from_fn(n, |mask| {
            if mask & center_bit != 0 {
                1
            } else if layer[split(mask) as usize] {
                1
            } else {
                -1
            }
        })
    };
    let lift_plus = |layer: &[bool]| {
        BooleanUpdate::from_fn(n, |mask| {
            if mask & center_bit == 0 {
                -1
            } else if layer[split(mask) as usize] {
                -1
            } else {
                1
            }
        })
    };
    // Strict positivity makes the first layer on each side full-support,
    // i.e. oblivious.
    let mut entries = Vec::with_capacity(minus_layers.len() + plus_layers.len());
    entries.push((minus_layers[0].0, lift_minus(&minus_layers[0].1)));
    entries.push((plus_layers[0].0, lift_plus(&plus_layers[0].1)));
    for (lambda, layer) in &minus_layers[1..] {
        entries.push((*lambda, lift_minus(layer)));
    }
    for (lambda, layer) in &plus_layers[1..] {
        entries.push((*lambda, lift_plus(layer)));
    }

    debug_assert!(entries[0].1.constant_value() == Some(1));
    debug_assert!(entries[1].1.constant_value() == Some(-1));
    Decomposition::new(c.d(), c.m(), entries)
}

/// Reassembles the rate table `c(x) = sum_i lambda_i 1{f_i(x) = -x(0)}`.
pub fn recompose(dec: &Decomposition) -> LocalRateTable {
    let geom = crate::lattice::BallGeometry::new(dec.d(), dec.m()).expect("valid geometry");
    let center_bit = 1u32 << geom.center_index();
    LocalRateTable::from_fn(dec.d(), dec.m(), |mask| {
        let x0: i8 = if mask & center_bit != 0 { 1 } else { -1 };
        dec.entries()
            .iter()
            .map(|(l, f)| if f.eval(mask) == -x0 { *l } else { 0.0 })
            .sum()
    })
    .expect("recomposed table is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flip_model::{builtin_constant, builtin_demasi, builtin_theta};
    use crate::lattice::mask_spin;

    fn assert_roundtrip(c: &LocalRateTable, tol: f64) {
        let dec = decompose(c).expect("decomposable");
        let back = recompose(&dec);
        for mask in 0..(1u32 << c.ball_size()) {
            assert!(
                (c.rate(mask) - back.rate(mask)).abs() <= tol,
                "mask {:#b}: {} vs {}",
                mask,
                c.rate(mask),
                back.rate(mask)
            );
        }
        for (l, f) in dec.entries() {
            assert!(*l > 0.0);
            assert!(f.is_increasing());
        }
        assert_eq!(dec.update(0).constant_value(), Some(1));
        assert_eq!(dec.update(1).constant_value(), Some(-1));
    }

    #[test]
    fn constant_table_decomposes_obliviously() {
        let c = builtin_constant(1, 1).unwrap();
        let dec = decompose(&c).unwrap();
        assert_eq!(dec.q(), 2);
        assert_eq!(dec.rate(0), 1.0);
        assert_eq!(dec.rate(1), 1.0);
        assert_eq!(dec.rho_bar(), 0.0);
        assert_roundtrip(&c, 0.0);
    }

    #[test]
    fn theta_roundtrip_and_oblivious_rates() {
        let c = builtin_theta(1.0).unwrap();
        let dec = decompose(&c).unwrap();
        assert!(dec.rate(0) >= 1.0);
        assert!(dec.rate(1) >= 1.0);
        assert_roundtrip(&c, 1e-12);
    }

    #[test]
    fn demasi_roundtrip() {
        for gamma in [5.0 / 12.0, 0.5, 7.0 / 12.0, 0.999] {
            assert_roundtrip(&builtin_demasi(gamma).unwrap(), 1e-12);
        }
    }

    /// The paper's hand decomposition of the De Masi model: recomposing it
    /// must give back the rate table exactly.
    #[test]
    fn demasi_published_decomposition_recomposes() {
        let gamma: f64 = 5.0 / 12.0;
        let mk = |f: fn(u32) -> i8| BooleanUpdate::from_fn(3, f);
        let entries = vec![
            ((1.0 - gamma) * (1.0 - gamma), mk(|_| 1)),
            ((1.0 - gamma) * (1.0 - gamma), mk(|_| -1)),
            (
                4.0 * gamma * gamma,
                mk(|m| {
                    let s = mask_spin(m, 0) + mask_spin(m, 1) + mask_spin(m, 2);
                    if s > 0 {
                        1
                    } else {
                        -1
                    }
                }),
            ),
            (2.0 * (gamma - gamma * gamma), mk(|m| mask_spin(m, 0))),
            (2.0 * (gamma - gamma * gamma), mk(|m| mask_spin(m, 2))),
        ];
        let dec = Decomposition::new(1, 1, entries).unwrap();
        let back = recompose(&dec);
        let c = builtin_demasi(gamma).unwrap();
        for mask in 0..8 {
            assert!((c.rate(mask) - back.rate(mask)).abs() < 1e-14, "mask {mask}");
        }
        assert_eq!(dec.rho_bar(), 0.0);
    }

    #[test]
    fn rejects_non_attractive_and_non_positive() {
        let bad = LocalRateTable::from_fn(1, 1, |mask| {
            2.0 + (mask_spin(mask, 1) * mask_spin(mask, 2)) as f64
        })
        .unwrap();
        assert!(matches!(
            decompose(&bad),
            Err(FlipModelError::NotAttractive(_))
        ));
        assert!(matches!(
            decompose(&builtin_demasi(1.0).unwrap()),
            Err(FlipModelError::NotStrictlyPositive { .. })
        ));
    }

    #[test]
    fn decomposition_constructor_rejects_non_monotone() {
        let entries = vec![
            (1.0, BooleanUpdate::constant(3, 1)),
            (1.0, BooleanUpdate::constant(3, -1)),
            (
                0.5,
                BooleanUpdate::from_fn(3, |m| if m & 1 == 0 { 1 } else { -1 }),
            ),
        ];
        assert!(Decomposition::new(1, 1, entries).is_err());
    }

    /// Exact-arithmetic mirror of the peel on dyadic-rational tables: the
    /// f64 path must agree with it bit for bit, confirming that greedy
    /// peeling is exact when the inputs are exactly representable.
    #[test]
    fn exact_rational_oracle_matches_f64_path() {
        use crate::rng::sim_rng;
        use rand::RngExt;

        // i128 dyadic fractions with denominator 2^20.
        const DEN: i128 = 1 << 20;
        let mut rng = sim_rng(2024);
        for _ in 0..50 {
            // Random attractive table built as a positive combination of
            // increasing threshold updates (weights on a dyadic grid).
            let n = 3usize;
            let mut weights: Vec<(i128, BooleanUpdate)> = vec![
                (1 + rng.random_range(0..DEN / 4), BooleanUpdate::constant(n, 1)),
                (1 + rng.random_range(0..DEN / 4), BooleanUpdate::constant(n, -1)),
            ];
            for _ in 0..rng.random_range(1..4usize) {
                let w: [i64; 3] = [
                    rng.random_range(0..4),
                    rng.random_range(0..4),
                    rng.random_range(0..4),
                ];
                let tau = rng.random_range(-4..=4i64);
                weights.push((
                    1 + rng.random_range(0..DEN / 4),
                    BooleanUpdate::from_fn(n, |m| {
                        let s: i64 = (0..3).map(|j| w[j] * mask_spin(m, j) as i64).sum();
                        if s >= tau {
                            1
                        } else {
                            -1
                        }
                    }),
                ));
            }
            let center_bit = 1u32 << 1;
            let exact_c: Vec<i128> = (0..8u32)
                .map(|mask| {
                    let x0: i8 = if mask & center_bit != 0 { 1 } else { -1 };
                    weights
                        .iter()
                        .map(|(l, f)| if f.eval(mask) == -x0 { *l } else { 0 })
                        .sum()
                })
                .collect();
            let c = LocalRateTable::new(
                1,
                1,
                exact_c.iter().map(|&v| v as f64 / DEN as f64).collect(),
            )
            .unwrap();
            let dec = decompose(&c).unwrap();
            let back = recompose(&dec);
            for mask in 0..8u32 {
                let expect = exact_c[mask as usize] as f64 / DEN as f64;
                assert_eq!(back.rate(mask), expect, "exactness lost at mask {mask}");
            }
        }
    }
}

//! Boolean update functions on local spin vectors.
//!
//! A [`BooleanUpdate`] is a function from `{-1,1}^n` to `{-1,1}` stored as a
//! truth table, `n` being the ball size (at most 20, so tables are at most
//! one megabit). Local spin vectors are encoded as bitmasks over the
//! canonical ball order: bit `j` set means the spin at ball position `j` is
//! `+1`.

use serde::{Deserialize, Serialize};

/// Truth table of a boolean function of `n_args <= 20` spin arguments.
/// Bit `mask` of the table is set iff `f(mask) = +1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BooleanUpdate {
    n_args: u8,
    table: Vec<u64>,
}

impl BooleanUpdate {
    pub const MAX_ARGS: usize = 20;

    pub fn from_fn(n_args: usize, f: impl Fn(u32) -> i8) -> Self {
        assert!(n_args <= Self::MAX_ARGS);
        let size = 1usize << n_args;
        let mut table = vec![0u64; size.div_ceil(64)];
        for mask in 0..size as u32 {
            if f(mask) > 0 {
                table[(mask >> 6) as usize] |= 1 << (mask & 63);
            }
        }
        BooleanUpdate {
            n_args: n_args as u8,
            table,
        }
    }

    pub fn constant(n_args: usize, value: i8) -> Self {
        Self::from_fn(n_args, |_| value)
    }

    #[inline]
    pub fn n_args(&self) -> usize {
        self.n_args as usize
    }

    #[inline]
    pub fn eval(&self, mask: u32) -> i8 {
        let bit = (self.table[(mask >> 6) as usize] >> (mask & 63)) & 1;
        (bit as i8) * 2 - 1
    }

    /// Checks monotonicity through all single-coordinate up-flips.
    pub fn is_increasing(&self) -> bool {
        let size = 1u32 << self.n_args;
        for mask in 0..size {
            for j in 0..self.n_args as u32 {
                if mask & (1 << j) == 0 && self.eval(mask) > self.eval(mask | (1 << j)) {
                    return false;
                }
            }
        }
        true
    }

    /// `Some(v)` iff `f` is constant with value `v`.
    pub fn constant_value(&self) -> Option<i8> {
        let v = self.eval(0);
        let size = 1u32 << self.n_args;
        for mask in 1..size {
            if self.eval(mask) != v {
                return None;
            }
        }
        Some(v)
    }

    /// Pivotal set of the restriction `f^{A,eta}` obtained by fixing the
    /// coordinates in `fixed_mask` to the spins encoded by `fixed_vals`
    /// (only bits inside `fixed_mask` are read).
    ///
    /// Returns the pivotal coordinates as a bitmask, and the constant value
    /// of the restriction when the pivotal set is empty. A full `2^n` table
    /// scan; callers keep `n` small (ball size of the model).
    pub fn restricted_pivotal(&self, fixed_mask: u32, fixed_vals: u32) -> (u32, Option<i8>) {
        let size = 1u32 << self.n_args;
        let pattern = fixed_vals & fixed_mask;
        let mut piv = 0u32;
        for mask in 0..size {
            if mask & fixed_mask != pattern {
                continue;
            }
            for j in 0..self.n_args as u32 {
                let bit = 1u32 << j;
                if fixed_mask & bit != 0 || mask & bit != 0 {
                    continue;
                }
                if self.eval(mask) != self.eval(mask | bit) {
                    piv |= bit;
                }
            }
        }
        if piv == 0 {
            (0, Some(self.eval(pattern)))
        } else {
            (piv, None)
        }
    }

    /// Pivotal set of the unrestricted function. For an increasing boolean
    /// function this is empty iff `f(all minus) = f(all plus)`.
    pub fn pivotal(&self) -> (u32, Option<i8>) {
        self.restricted_pivotal(0, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn majority3(mask: u32) -> i8 {
        if mask.count_ones() >= 2 {
            1
        } else {
            -1
        }
    }

    #[test]
    fn eval_and_monotone() {
        let f = BooleanUpdate::from_fn(3, majority3);
        assert_eq!(f.eval(0b000), -1);
        assert_eq!(f.eval(0b011), 1);
        assert!(f.is_increasing());
        assert!(f.constant_value().is_none());

        let dict = BooleanUpdate::from_fn(2, |m| if m & 1 == 1 { 1 } else { -1 });
        assert!(dict.is_increasing());
        let not_mono = BooleanUpdate::from_fn(1, |m| if m & 1 == 1 { -1 } else { 1 });
        assert!(!not_mono.is_increasing());
    }

    #[test]
    fn pivotal_emptiness_iff_extremes_for_monotone() {
        // Lemma-level check on every monotone function of 3 variables.
        let size = 1u32 << 3;
        for code in 0u32..(1 << size) {
            let f = BooleanUpdate::from_fn(3, |m| if code & (1 << m) != 0 { 1 } else { -1 });
            if !f.is_increasing() {
                continue;
            }
            let (piv, cst) = f.pivotal();
            let extremes_differ = f.eval(0) == -1 && f.eval(size - 1) == 1;
            assert_eq!(piv != 0, extremes_differ);
            assert_eq!(cst.is_none(), extremes_differ);
        }
    }

    #[test]
    fn restriction_shrinks_pivotal_set() {
        let f = BooleanUpdate::from_fn(3, majority3);
        let (piv, _) = f.pivotal();
        assert_eq!(piv, 0b111);
        // Fix coordinate 0 to +1: majority of remaining two = OR.
        let (piv1, cst1) = f.restricted_pivotal(0b001, 0b001);
        assert_eq!(piv1, 0b110);
        assert!(cst1.is_none());
        // Additionally fix coordinate 1 to +1: constant +1.
        let (piv2, cst2) = f.restricted_pivotal(0b011, 0b011);
        assert_eq!(piv2, 0);
        assert_eq!(cst2, Some(1));
    }
}

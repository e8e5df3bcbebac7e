//! The product-measure perturbation bound: for a mixture that resamples a
//! random subset `S` by an arbitrary law and fills the rest with
//! Rademacher(rho), `4 TV^2 <= E[theta^{|S cap S'|}] - 1` with
//! `theta = max(2/(1+rho), 2/(1-rho))` and `S, S'` independent copies.

use super::tv::{product_law, tv_exact_small};
use super::AnalysisError;

/// An explicit small instance: subset weights and per-subset perturbation
/// laws on `{-1,1}^S` (indexed by the packed bits of `S` in ascending
/// coordinate order).
#[derive(Debug, Clone)]
pub struct PerturbationInstance {
    pub n: usize,
    pub rho: f64,
    /// `(probability, subset mask, law over 2^{|S|} packed assignments)`.
    pub entries: Vec<(f64, u32, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationBound {
    /// `4 * TV(mu, nu)^2`, exact by enumeration.
    pub lhs: f64,
    /// `E[theta^{|S cap S'|}] - 1`, exact from the subset law.
    pub rhs: f64,
}

/// Packs the coordinates of `full` lying in `subset` into low bits.
fn pack(full: u32, subset: u32) -> u32 {
    let mut out = 0u32;
    let mut bit = 0;
    for j in 0..32 {
        if subset & (1 << j) != 0 {
            if full & (1 << j) != 0 {
                out |= 1 << bit;
            }
            bit += 1;
        }
    }
    out
}

pub fn perturbation_bound_check(
    inst: &PerturbationInstance,
) -> Result<PerturbationBound, AnalysisError> {
    if inst.rho.abs() >= 1.0 {
        return Err(AnalysisError::RhoDegenerate(inst.rho));
    }
    if inst.n > 10 {
        return Err(AnalysisError::SetTooLarge(inst.n));
    }
    let total_p: f64 = inst.entries.iter().map(|(p, _, _)| p).sum();
    if (total_p - 1.0).abs() > 1e-9 {
        return Err(AnalysisError::InvalidParam(format!(
            "subset probabilities sum to {total_p}"
        )));
    }
    let n = inst.n;
    let p_plus = (1.0 + inst.rho) / 2.0;
    let nu = product_law(n, inst.rho);
    // mu: mix over subsets, resampling S by phi_S, the rest Rademacher.
    let mut mu = vec![0.0f64; 1 << n];
    for (p, subset, phi) in &inst.entries {
        assert_eq!(phi.len(), 1 << subset.count_ones());
        for full in 0..(1u32 << n) {
            let mut w = *p * phi[pack(full, *subset) as usize];
            for j in 0..n {
                if subset & (1 << j) == 0 {
                    w *= if full & (1 << j) != 0 {
                        p_plus
                    } else {
                        1.0 - p_plus
                    };
                }
            }
            mu[full as usize] += w;
        }
    }
    let tv = tv_exact_small(&mu, &nu)?;
    let theta = (2.0 / (1.0 + inst.rho)).max(2.0 / (1.0 - inst.rho));
    let mut rhs = -1.0;
    for (p1, s1, _) in &inst.entries {
        for (p2, s2, _) in &inst.entries {
            rhs += p1 * p2 * theta.powi((s1 & s2).count_ones() as i32);
        }
    }
    Ok(PerturbationBound {
        lhs: 4.0 * tv * tv,
        rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sim_rng;
    use rand::RngExt;

    #[test]
    fn empty_subset_is_tight_at_zero() {
        let inst = PerturbationInstance {
            n: 3,
            rho: 0.2,
            entries: vec![(1.0, 0, vec![1.0])],
        };
        let b = perturbation_bound_check(&inst).unwrap();
        assert!(b.lhs.abs() < 1e-12);
        assert!(b.rhs.abs() < 1e-12);
    }

    #[test]
    fn point_mass_hand_case() {
        // n = 1, S = {1} a.s., perturbation = point mass at +1, rho = 0:
        // mu = delta_+, nu = uniform: TV = 1/2, lhs = 1, rhs = theta-1 = 1.
        let inst = PerturbationInstance {
            n: 1,
            rho: 0.0,
            entries: vec![(1.0, 0b1, vec![0.0, 1.0])],
        };
        let b = perturbation_bound_check(&inst).unwrap();
        assert!((b.lhs - 1.0).abs() < 1e-12);
        assert!((b.rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_instances_satisfy_bound() {
        let mut rng = sim_rng(2718);
        for trial in 0..100 {
            let n = 3;
            let rho = rng.random_range(-0.7..0.7);
            // Random subset law over a few subsets with random perturbations.
            let k = rng.random_range(1..4usize);
            let mut raw: Vec<(f64, u32, Vec<f64>)> = (0..k)
                .map(|_| {
                    let subset = rng.random_range(0..(1u32 << n));
                    let cells = 1usize << subset.count_ones();
                    let mut phi: Vec<f64> =
                        (0..cells).map(|_| rng.random_range(0.01..1.0)).collect();
                    let z: f64 = phi.iter().sum();
                    phi.iter_mut().for_each(|v| *v /= z);
                    (rng.random_range(0.01..1.0), subset, phi)
                })
                .collect();
            let z: f64 = raw.iter().map(|(p, _, _)| p).sum();
            raw.iter_mut().for_each(|(p, _, _)| *p /= z);
            let inst = PerturbationInstance {
                n,
                rho,
                entries: raw,
            };
            let b = perturbation_bound_check(&inst).unwrap();
            assert!(
                b.lhs <= b.rhs + 1e-12,
                "trial {trial}: lhs {} > rhs {}",
                b.lhs,
                b.rhs
            );
        }
    }

    #[test]
    fn degenerate_rho_rejected() {
        let inst = PerturbationInstance {
            n: 1,
            rho: 1.0,
            entries: vec![(1.0, 0, vec![1.0])],
        };
        assert!(matches!(
            perturbation_bound_check(&inst),
            Err(AnalysisError::RhoDegenerate(_))
        ));
    }
}

//! Forward evolution of spin configurations from a mark stream and the
//! grand coupling of several initial conditions on one stream.

use super::{AuxRandomness, Construction, GraphicalError, Mark, MarkKind, MarkStream};
use crate::flip_model::Decomposition;
use crate::lattice::SpinConfig;

/// Applies one mark to a configuration. Exclusion swaps are applied even
/// when the two spins are equal (the mark is consumed either way; couplings
/// and the Z-process rely on mark-level fidelity).
#[inline]
pub(crate) fn apply_mark(
    x: &mut SpinConfig,
    mark: &Mark,
    ms: &MarkStream,
    aux: &AuxRandomness,
    dec: &Decomposition,
) {
    match mark.kind {
        MarkKind::Exclusion { edge } => {
            let (u, v) = ms.torus().edge_endpoints(edge as usize);
            x.swap(u, v);
        }
        MarkKind::Glauber { ty, site } => {
            let mask = x.local_window(ms.torus(), site, dec.geometry());
            x.set(site, dec.update(ty as usize).eval(mask));
        }
        MarkKind::Refresh { site } => {
            x.set(site, aux.rademacher(mark.index, ms.rho_bar()));
        }
        MarkKind::Black { .. } | MarkKind::Blue { .. } => {
            unreachable!("GC3 marks are not forward spin updates")
        }
    }
}

fn check_compat(ms: &MarkStream, dec: &Decomposition) -> Result<(), GraphicalError> {
    if ms.construction() == Construction::Gc3 {
        return Err(GraphicalError::ConstructionMismatch {
            stream: Construction::Gc3,
            needed: Construction::Gc2,
        });
    }
    ms.check_dec(dec)
}

/// Runs the configuration through the whole stream.
pub fn evolve(
    x0: &SpinConfig,
    ms: &MarkStream,
    aux: &AuxRandomness,
    dec: &Decomposition,
) -> Result<SpinConfig, GraphicalError> {
    let (fin, _) = evolve_with_snapshots(x0, ms, aux, dec, &[])?;
    Ok(fin)
}

/// Runs the configuration through the stream, recording its state at each
/// requested time (times must be sorted, within the horizon).
pub fn evolve_with_snapshots(
    x0: &SpinConfig,
    ms: &MarkStream,
    aux: &AuxRandomness,
    dec: &Decomposition,
    times: &[f64],
) -> Result<(SpinConfig, Vec<SpinConfig>), GraphicalError> {
    check_compat(ms, dec)?;
    let mut x = x0.clone();
    let mut snaps = Vec::with_capacity(times.len());
    let mut next_time = times.iter().copied();
    let mut pending = next_time.next();
    for mark in ms.iter() {
        while let Some(t) = pending {
            if mark.time > t {
                snaps.push(x.clone());
                pending = next_time.next();
            } else {
                break;
            }
        }
        apply_mark(&mut x, &mark, ms, aux, dec);
    }
    while pending.is_some() {
        snaps.push(x.clone());
        pending = next_time.next();
    }
    Ok((x, snaps))
}

/// All trajectories of the grand coupling at the requested times.
#[derive(Debug, Clone)]
pub struct GrandCouplingRun {
    /// `snapshots[k][i]` = configuration `i` at `times[k]`.
    pub snapshots: Vec<Vec<SpinConfig>>,
    /// Final configurations at the horizon.
    pub finals: Vec<SpinConfig>,
    /// For each snapshot time, the set of sites on which all trajectories
    /// agree, as a boolean table.
    pub agreement: Vec<Vec<bool>>,
}

/// Drives every initial condition with the same marks and the same
/// auxiliary randomness. Under attractiveness this preserves the
/// coordinatewise order of initial conditions at every mark time.
pub fn grand_coupling(
    ms: &MarkStream,
    aux: &AuxRandomness,
    dec: &Decomposition,
    initials: &[SpinConfig],
    times: &[f64],
) -> Result<GrandCouplingRun, GraphicalError> {
    check_compat(ms, dec)?;
    let mut configs: Vec<SpinConfig> = initials.to_vec();
    let mut snapshots = Vec::with_capacity(times.len());
    let mut next_time = times.iter().copied();
    let mut pending = next_time.next();
    let snap = |configs: &[SpinConfig], snapshots: &mut Vec<Vec<SpinConfig>>| {
        snapshots.push(configs.to_vec());
    };
    for mark in ms.iter() {
        while let Some(t) = pending {
            if mark.time > t {
                snap(&configs, &mut snapshots);
                pending = next_time.next();
            } else {
                break;
            }
        }
        for x in &mut configs {
            apply_mark(x, &mark, ms, aux, dec);
        }
    }
    while pending.is_some() {
        snap(&configs, &mut snapshots);
        pending = next_time.next();
    }
    let agreement = snapshots
        .iter()
        .map(|cfgs| {
            let n = cfgs[0].len();
            (0..n)
                .map(|u| {
                    let v = cfgs[0].get(u as u32);
                    cfgs.iter().all(|c| c.get(u as u32) == v)
                })
                .collect()
        })
        .collect();
    Ok(GrandCouplingRun {
        snapshots,
        finals: configs,
        agreement,
    })
}

/// Mark-by-mark audit of the grand coupling for an ordered pair
/// `x_low <= x_high`.
#[derive(Debug, Clone, Copy)]
pub struct OrderAudit {
    /// Coordinatewise order held after every single mark.
    pub order_held: bool,
    /// Time of first coalescence, if any.
    pub coalesced_at: Option<f64>,
    /// Once coalesced, the trajectories stayed equal at every later mark.
    pub absorbing_held: bool,
}

/// Drives an ordered pair through the stream and checks the order and the
/// absorbing property of coalescence at every mark time.
pub fn audit_order_preservation(
    x_low: &SpinConfig,
    x_high: &SpinConfig,
    ms: &MarkStream,
    aux: &AuxRandomness,
    dec: &Decomposition,
) -> Result<OrderAudit, GraphicalError> {
    check_compat(ms, dec)?;
    let mut low = x_low.clone();
    let mut high = x_high.clone();
    let mut order_held = low.le(&high);
    let mut coalesced_at = None;
    let mut absorbing_held = true;
    for mark in ms.iter() {
        apply_mark(&mut low, &mark, ms, aux, dec);
        apply_mark(&mut high, &mark, ms, aux, dec);
        if !low.le(&high) {
            order_held = false;
        }
        let equal = low == high;
        match (coalesced_at, equal) {
            (None, true) => coalesced_at = Some(mark.time),
            (Some(_), false) => absorbing_held = false,
            _ => {}
        }
    }
    Ok(OrderAudit {
        order_held,
        coalesced_at,
        absorbing_held,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flip_model::{builtin_constant, decompose, Model};
    use crate::graphical::generate_marks;
    use crate::lattice::{SpinConfig, Torus};
    use crate::rng::{replica_seed, sim_rng};
    use crate::stats::wilson95;
    use rand::RngExt;

    #[test]
    fn empty_stream_is_identity() {
        let t = Torus::new(1, 8).unwrap();
        let dec = decompose(&builtin_constant(1, 1).unwrap()).unwrap();
        let ms = generate_marks(&t, &dec, Construction::Gc2, 1e-9, 3, false).unwrap();
        assert!(ms.collect().is_empty());
        let aux = AuxRandomness::new(0);
        let x0 = SpinConfig::all_plus(&t);
        assert_eq!(evolve(&x0, &ms, &aux, &dec).unwrap(), x0);
    }

    #[test]
    fn single_exclusion_swaps() {
        // Drain streams until one whose first mark is an exclusion mark on
        // edge (0,1); verify the swap against a hand-updated configuration.
        let t = Torus::new(1, 4).unwrap();
        let dec = decompose(&builtin_constant(1, 1).unwrap()).unwrap();
        let aux = AuxRandomness::new(0);
        for seed in 0..200u64 {
            let ms = generate_marks(&t, &dec, Construction::Gc2, 10.0, seed, false).unwrap();
            let first = ms.iter().next().unwrap();
            if let MarkKind::Exclusion { edge: 0 } = first.kind {
                let tiny = generate_marks(
                    &t,
                    &dec,
                    Construction::Gc2,
                    first.time * 1.0000001,
                    seed,
                    false,
                )
                .unwrap();
                let x0 = SpinConfig::from_spins(vec![1, -1, -1, -1]);
                let x1 = evolve(&x0, &tiny, &aux, &dec).unwrap();
                assert_eq!(x1.spins(), &[-1, 1, -1, -1]);
                return;
            }
        }
        panic!("no seed produced a leading exclusion mark on edge 0");
    }

    #[test]
    fn gc3_stream_rejected() {
        let t = Torus::new(1, 8).unwrap();
        let dec = decompose(&builtin_constant(1, 1).unwrap()).unwrap();
        let ms = generate_marks(&t, &dec, Construction::Gc3, 0.1, 3, false).unwrap();
        let aux = AuxRandomness::new(0);
        assert!(matches!(
            evolve(&SpinConfig::all_plus(&t), &ms, &aux, &dec),
            Err(GraphicalError::ConstructionMismatch { .. })
        ));
    }

    #[test]
    fn constant_model_refresh_only_law() {
        // Under GC2 with c = 1, rho_bar = 0: after T = 5 every site has been
        // refreshed with probability 1 - e^{-10}; per-site magnetization over
        // replicas should vanish like 1/sqrt(reps).
        let t = Torus::new(1, 32).unwrap();
        let model = Model::constant(1, 1).unwrap();
        let reps = 2000u64;
        let mut sums = vec![0i64; t.sites()];
        for r in 0..reps {
            let seed = replica_seed(99, r);
            let ms = generate_marks(&t, &model.dec, Construction::Gc2, 5.0, seed, false).unwrap();
            let aux = AuxRandomness::new(seed);
            let x = evolve(&SpinConfig::all_plus(&t), &ms, &aux, &model.dec).unwrap();
            for (u, s) in sums.iter_mut().enumerate() {
                *s += x.get(u as u32) as i64;
            }
        }
        let bound = 4.0 / (reps as f64).sqrt();
        for (u, &s) in sums.iter().enumerate() {
            let mean = s as f64 / reps as f64;
            assert!(mean.abs() <= bound, "site {u}: mean {mean}");
        }
    }

    #[test]
    fn grand_coupling_preserves_order_and_duplicates() {
        let t = Torus::new(1, 32).unwrap();
        let model = Model::demasi(5.0 / 12.0).unwrap();
        let mut rng = sim_rng(7);
        for trial in 0..20u64 {
            // Random ordered pair x <= y.
            let a = SpinConfig::random(&t, -0.3, &mut rng);
            let mut b = a.clone();
            for u in 0..t.sites() as u32 {
                if rng.random::<f64>() < 0.3 {
                    b.set(u, 1);
                }
            }
            assert!(a.le(&b));
            let ms = generate_marks(&t, &model.dec, Construction::Gc2, 1.0, trial, false).unwrap();
            let aux = AuxRandomness::new(trial);
            let times: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
            let run =
                grand_coupling(&ms, &aux, &model.dec, &[a.clone(), b.clone(), a.clone()], &times)
                    .unwrap();
            for snap in &run.snapshots {
                assert!(snap[0].le(&snap[1]));
                assert_eq!(snap[0], snap[2]); // identical initials stay identical
            }
            assert!(run.finals[0].le(&run.finals[1]));
        }
    }

    #[test]
    fn refresh_only_coalescence_probability() {
        // c = 1, L = 32, T = 3: P(X+ != X-) = 1 - (1 - e^{-2T})^L exactly.
        let t = Torus::new(1, 32).unwrap();
        let model = Model::constant(1, 1).unwrap();
        let reps = 2000u64;
        let mut not_coalesced = 0u64;
        for r in 0..reps {
            let seed = replica_seed(17, r);
            let ms = generate_marks(&t, &model.dec, Construction::Gc2, 3.0, seed, false).unwrap();
            let aux = AuxRandomness::new(seed);
            let run = grand_coupling(
                &ms,
                &aux,
                &model.dec,
                &[SpinConfig::all_plus(&t), SpinConfig::all_minus(&t)],
                &[],
            )
            .unwrap();
            if run.finals[0] != run.finals[1] {
                not_coalesced += 1;
            }
        }
        let p_exact = 1.0 - (1.0 - (-6.0f64).exp()).powi(32);
        let (lo, hi) = wilson95(not_coalesced, reps);
        // Wilson 95% plus slack to keep the law test at ~3 sigma.
        let slack = 0.01;
        assert!(
            lo - slack <= p_exact && p_exact <= hi + slack,
            "exact {p_exact} outside [{lo}, {hi}]"
        );
    }
}

//! The independent-site process `Z`, the red/blue/green partition of the
//! torus under the grand coupling, and the BAD-set membership test.

use super::evolve::apply_mark;
use super::{AuxRandomness, Construction, GraphicalError, MarkKind, MarkStream};
use crate::flip_model::Decomposition;
use crate::lattice::{BallGeometry, Site, SpinConfig, Torus};

/// A subset of the torus: the sites whose spins are conditionally
/// independent Rademacher(rho_bar) given the marks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZConfig {
    member: Vec<bool>,
    count: usize,
}

impl ZConfig {
    pub fn empty(t: &Torus) -> Self {
        ZConfig {
            member: vec![false; t.sites()],
            count: 0,
        }
    }

    pub fn full(t: &Torus) -> Self {
        ZConfig {
            member: vec![true; t.sites()],
            count: t.sites(),
        }
    }

    pub fn from_sites(t: &Torus, sites: &[Site]) -> Self {
        let mut z = Self::empty(t);
        for &u in sites {
            z.insert(u);
        }
        z
    }

    #[inline]
    pub fn contains(&self, u: Site) -> bool {
        self.member[u as usize]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn insert(&mut self, u: Site) {
        if !self.member[u as usize] {
            self.member[u as usize] = true;
            self.count += 1;
        }
    }

    #[inline]
    pub fn remove(&mut self, u: Site) {
        if self.member[u as usize] {
            self.member[u as usize] = false;
            self.count -= 1;
        }
    }

    #[inline]
    pub fn swap(&mut self, u: Site, v: Site) {
        self.member.swap(u as usize, v as usize);
    }

    pub fn sites(&self) -> Vec<Site> {
        self.member
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(u, _)| u as Site)
            .collect()
    }

    /// Subset order.
    pub fn le(&self, other: &Self) -> bool {
        self.member
            .iter()
            .zip(&other.member)
            .all(|(&a, &b)| !a || b)
    }

    /// Applies one GC2 mark: exclusion swaps membership, refresh inserts,
    /// a Glauber mark removes its whole correlation ball.
    pub(crate) fn apply_mark(&mut self, kind: &MarkKind, t: &Torus, geom: &BallGeometry) {
        match *kind {
            MarkKind::Exclusion { edge } => {
                let (u, v) = t.edge_endpoints(edge as usize);
                self.swap(u, v);
            }
            MarkKind::Refresh { site } => self.insert(site),
            MarkKind::Glauber { site, .. } => {
                for &off in geom.offsets() {
                    self.remove(t.offset_site(site, off));
                }
            }
            MarkKind::Black { .. } | MarkKind::Blue { .. } => {
                unreachable!("GC3 marks are not Z updates under GC2")
            }
        }
    }
}

/// Runs the independent-site process through a GC2 stream, recording its
/// state at each requested time.
pub fn z_process(
    z0: &ZConfig,
    ms: &MarkStream,
    times: &[f64],
) -> Result<(ZConfig, Vec<ZConfig>), GraphicalError> {
    ms.require(Construction::Gc2)?;
    let geom = BallGeometry::new(ms.torus().d(), ms.m())?;
    let mut z = z0.clone();
    let mut snaps = Vec::with_capacity(times.len());
    let mut next_time = times.iter().copied();
    let mut pending = next_time.next();
    for mark in ms.iter() {
        while let Some(t) = pending {
            if mark.time > t {
                snaps.push(z.clone());
                pending = next_time.next();
            } else {
                break;
            }
        }
        z.apply_mark(&mark.kind, ms.torus(), &geom);
    }
    while pending.is_some() {
        snaps.push(z.clone());
        pending = next_time.next();
    }
    Ok((z, snaps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Disagreement set of the two extreme trajectories.
    Red,
    /// The independent-site set `Z` started from empty.
    Blue,
    /// Everything else: possibly correlated, but independent of the initial
    /// condition.
    Green,
}

#[derive(Debug, Clone)]
pub struct RegionSnapshot {
    pub time: f64,
    pub region: Vec<Region>,
    /// The all-plus trajectory at this time (Green and Blue spins agree
    /// across all initial conditions).
    pub spins_plus: SpinConfig,
    pub n_red: usize,
    pub n_blue: usize,
    pub n_green: usize,
}

/// Runs the two extreme trajectories and `Z` from empty on one GC2 stream
/// and takes the red/blue/green partition at each requested time.
pub fn regions(
    ms: &MarkStream,
    aux: &AuxRandomness,
    dec: &Decomposition,
    times: &[f64],
) -> Result<Vec<RegionSnapshot>, GraphicalError> {
    ms.require(Construction::Gc2)?;
    ms.check_dec(dec)?;
    let t = ms.torus();
    let geom = BallGeometry::new(t.d(), ms.m())?;
    let mut plus = SpinConfig::all_plus(t);
    let mut minus = SpinConfig::all_minus(t);
    let mut z = ZConfig::empty(t);
    let mut out = Vec::with_capacity(times.len());
    let mut next_time = times.iter().copied();
    let mut pending = next_time.next();
    let snap = |time: f64, plus: &SpinConfig, minus: &SpinConfig, z: &ZConfig| {
        let mut region = Vec::with_capacity(t.sites());
        let (mut nr, mut nb, mut ng) = (0, 0, 0);
        for u in 0..t.sites() as u32 {
            let r = if plus.get(u) != minus.get(u) {
                nr += 1;
                Region::Red
            } else if z.contains(u) {
                nb += 1;
                Region::Blue
            } else {
                ng += 1;
                Region::Green
            };
            // A refreshed (blue) site always agrees across the coupling.
            debug_assert!(!(r == Region::Red && z.contains(u)));
            region.push(r);
        }
        RegionSnapshot {
            time,
            region,
            spins_plus: plus.clone(),
            n_red: nr,
            n_blue: nb,
            n_green: ng,
        }
    };
    for mark in ms.iter() {
        while let Some(tq) = pending {
            if mark.time > tq {
                out.push(snap(tq, &plus, &minus, &z));
                pending = next_time.next();
            } else {
                break;
            }
        }
        apply_mark(&mut plus, &mark, ms, aux, dec);
        apply_mark(&mut minus, &mark, ms, aux, dec);
        z.apply_mark(&mark.kind, t, &geom);
    }
    while let Some(tq) = pending {
        out.push(snap(tq, &plus, &minus, &z));
        pending = next_time.next();
    }
    Ok(out)
}

/// BAD-set membership for `d = 1`: true iff some window of the fixed tiling
/// of width `ceil(beta2 * ln L)` contains no site of `z`. Windows tile
/// `[0, L)` from the left; the last window is truncated at the boundary.
pub fn is_bad(z: &ZConfig, t: &Torus, beta2: f64) -> Result<bool, GraphicalError> {
    if t.d() != 1 {
        return Err(GraphicalError::DimensionUnsupported(t.d()));
    }
    let l = t.sites() as u32;
    let w = ((beta2 * (l as f64).ln()).ceil() as u32).max(1);
    let mut start = 0u32;
    while start < l {
        let end = (start + w).min(l);
        if !(start..end).any(|u| z.contains(u)) {
            return Ok(true);
        }
        start = end;
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flip_model::Model;
    use crate::graphical::{generate_marks, Construction};
    use crate::hydro::derived_functions;
    use crate::rng::{replica_seed, sim_rng};
    use crate::stats::mean_se;
    use rand::RngExt;

    #[test]
    fn z_basic_transitions() {
        let t = Torus::new(1, 8).unwrap();
        let geom = BallGeometry::new(1, 1).unwrap();
        let mut z = ZConfig::empty(&t);
        z.apply_mark(&MarkKind::Refresh { site: 3 }, &t, &geom);
        assert_eq!(z.sites(), vec![3]);
        z.apply_mark(&MarkKind::Glauber { ty: 2, site: 3 }, &t, &geom);
        assert!(z.is_empty());
        // Refresh then exclusion moves membership along the edge.
        z.apply_mark(&MarkKind::Refresh { site: 0 }, &t, &geom);
        z.apply_mark(&MarkKind::Exclusion { edge: 0 }, &t, &geom);
        assert_eq!(z.sites(), vec![1]);
    }

    #[test]
    fn z_rejects_gc1() {
        let t = Torus::new(1, 8).unwrap();
        let model = Model::constant(1, 1).unwrap();
        let ms = generate_marks(&t, &model.dec, Construction::Gc1, 0.5, 1, false).unwrap();
        assert!(matches!(
            z_process(&ZConfig::empty(&t), &ms, &[]),
            Err(GraphicalError::ConstructionMismatch { .. })
        ));
    }

    #[test]
    fn z_is_attractive_under_shared_stream() {
        let t = Torus::new(1, 16).unwrap();
        let model = Model::demasi(5.0 / 12.0).unwrap();
        let mut rng = sim_rng(3);
        for seed in 0..30u64 {
            let ms = generate_marks(&t, &model.dec, Construction::Gc2, 0.8, seed, false).unwrap();
            let mut small = ZConfig::empty(&t);
            let mut big = ZConfig::empty(&t);
            for u in 0..16u32 {
                if rng.random::<f64>() < 0.3 {
                    small.insert(u);
                }
            }
            for u in 0..16u32 {
                if small.contains(u) || rng.random::<f64>() < 0.3 {
                    big.insert(u);
                }
            }
            let times = [0.2, 0.4, 0.6];
            let (fs, snaps_s) = z_process(&small, &ms, &times).unwrap();
            let (fb, snaps_b) = z_process(&big, &ms, &times).unwrap();
            for (a, b) in snaps_s.iter().zip(&snaps_b) {
                assert!(a.le(b));
            }
            assert!(fs.le(&fb));
        }
    }

    #[test]
    fn regions_at_time_zero_and_partition() {
        let t = Torus::new(1, 16).unwrap();
        let model = Model::demasi(5.0 / 12.0).unwrap();
        let ms = generate_marks(&t, &model.dec, Construction::Gc2, 0.5, 5, false).unwrap();
        let aux = AuxRandomness::new(5);
        let snaps = regions(&ms, &aux, &model.dec, &[0.0, 0.25, 0.5]).unwrap();
        assert_eq!(snaps[0].n_red, 16);
        assert_eq!(snaps[0].n_blue, 0);
        assert_eq!(snaps[0].n_green, 0);
        for s in &snaps {
            assert_eq!(s.n_red + s.n_blue + s.n_green, 16);
        }
    }

    #[test]
    fn refresh_only_red_mean() {
        // c = 1: E|Red(t)| = L e^{-2t} (a site is red iff its occupant pair
        // was never refreshed).
        let t = Torus::new(1, 32).unwrap();
        let model = Model::constant(1, 1).unwrap();
        let reps = 2000u64;
        let mut reds = Vec::with_capacity(reps as usize);
        for r in 0..reps {
            let seed = replica_seed(23, r);
            let ms = generate_marks(&t, &model.dec, Construction::Gc2, 2.0, seed, false).unwrap();
            let aux = AuxRandomness::new(seed);
            let snaps = regions(&ms, &aux, &model.dec, &[2.0]).unwrap();
            reds.push(snaps[0].n_red as f64);
        }
        let (mean, se) = mean_se(&reds);
        let expect = 32.0 * (-4.0f64).exp();
        assert!(
            (mean - expect).abs() <= 3.0 * se + 1e-9,
            "mean {mean} vs {expect} (se {se})"
        );
    }

    #[test]
    fn demasi_red_mean_tracks_ode() {
        // E|Red(t)| ~ (L/2)(rho_+ - rho_-) + O(1).
        let t = Torus::new(1, 64).unwrap();
        let model = Model::demasi(5.0 / 12.0).unwrap();
        let d = derived_functions(&model.reaction, 2.0, 1e-3).unwrap();
        let reps = 400u64;
        let mut reds = Vec::with_capacity(reps as usize);
        for r in 0..reps {
            let seed = replica_seed(31, r);
            let ms = generate_marks(&t, &model.dec, Construction::Gc2, 1.5, seed, false).unwrap();
            let aux = AuxRandomness::new(seed);
            let snaps = regions(&ms, &aux, &model.dec, &[1.5]).unwrap();
            reds.push(snaps[0].n_red as f64);
        }
        let (mean, se) = mean_se(&reds);
        let ode = 32.0 * (d.rho_plus_at(1.5) - d.rho_minus_at(1.5));
        // Monte Carlo error plus the theorem's O(1) slack.
        assert!(
            (mean - ode).abs() <= 3.0 * se + 4.0,
            "mean {mean} vs ode {ode} (se {se})"
        );
    }

    #[test]
    fn bad_set_examples() {
        let t = Torus::new(1, 64).unwrap();
        // Window = 8 needs beta2 * ln 64 in (7, 8]: beta2 = 1.92 gives 7.99.
        let beta2 = 8.0 / (64.0f64).ln() - 1e-9;
        assert_eq!(((beta2 * (64.0f64).ln()).ceil()) as u32, 8);
        assert!(is_bad(&ZConfig::empty(&t), &t, beta2).unwrap());
        assert!(!is_bad(&ZConfig::full(&t), &t, beta2).unwrap());
        // Every 4th site occupied: each window of 8 holds two members.
        let every4 = ZConfig::from_sites(&t, &(0..64).step_by(4).map(|u| u as u32).collect::<Vec<_>>());
        assert!(!is_bad(&every4, &t, beta2).unwrap());
        // Empty a single window.
        let mut z = ZConfig::full(&t);
        for u in 8..16 {
            z.remove(u);
        }
        assert!(is_bad(&z, &t, beta2).unwrap());

        let t2 = Torus::new(2, 8).unwrap();
        assert!(matches!(
            is_bad(&ZConfig::empty(&t2), &t2, 1.0),
            Err(GraphicalError::DimensionUnsupported(2))
        ));
    }
}

//! Poisson mark streams and everything driven directly by them: forward
//! evolution, the grand monotone coupling, the independent-site process,
//! red/blue/green regions, and the averaging process.
//!
//! A [`MarkStream`] is a deterministic function of `(torus, rates, horizon,
//! seed)`: it carries no materialized marks, only the generator state, and
//! yields time-ordered marks lazily (event counts reach `T * d * L^(d+2)`,
//! far too many to store at the larger sizes). Auxiliary randomness (refresh
//! draws, coin flips) is keyed by mark identity through [`AuxRandomness`],
//! never by consumption order, so every trajectory coupled to the same
//! stream sees the same draws.

mod averaging;
mod evolve;
mod zprocess;

pub use averaging::{averaging_process, AveragingRun};
pub use evolve::{
    audit_order_preservation, evolve, evolve_with_snapshots, grand_coupling, GrandCouplingRun,
    OrderAudit,
};
pub use zprocess::{is_bad, regions, z_process, Region, RegionSnapshot, ZConfig};

use crate::flip_model::Decomposition;
use crate::lattice::{LatticeError, Site, Torus};
use crate::rng::{self, sim_rng, split_seed, SimRng};
use rand::RngExt;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

/// Default desk-scale guards on the side length; event rates grow like
/// `d * L^(d+2)`, so larger sizes are opt-in via `force_large`.
pub const MAX_SIDE_D1: u32 = 512;
pub const MAX_SIDE_D2: u32 = 64;

#[derive(Debug, Error)]
pub enum GraphicalError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("desk-scale guard: L = {l} exceeds {max} for d = {d}; pass force_large to override")]
    GuardTripped { l: u32, max: u32, d: u8 },
    #[error("construction mismatch: stream is {stream:?}, operation needs {needed:?}")]
    ConstructionMismatch {
        stream: Construction,
        needed: Construction,
    },
    #[error("stream was generated for a different decomposition (q = {stream_q}, got {dec_q})")]
    DecompositionMismatch { stream_q: usize, dec_q: usize },
    #[error("dimension {0} unsupported for this operation")]
    DimensionUnsupported(u8),
    #[error("origin site must be in the initial blue set")]
    OriginNotBlue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    /// Per-site Glauber clocks for every update type.
    Gc1,
    /// Types 1 and 2 merged into refresh marks of rate `lambda_1 + lambda_2`.
    Gc2,
    /// GC2 with exclusion split into black (rate `L^2`) and blue (rate
    /// `2 L^2`) edge marks; substrate of the averaging process.
    Gc3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarkKind {
    /// Swap the contents of the edge's endpoints.
    Exclusion { edge: u32 },
    /// Update the site by the decomposition's function of this type.
    Glauber { ty: u16, site: Site },
    /// Resample the site by an independent Rademacher(rho_bar).
    Refresh { site: Site },
    /// GC3: swap contents when at least one endpoint is black.
    Black { edge: u32 },
    /// GC3: both-blue spin exchange decided by a fair coin; averages mass.
    Blue { edge: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mark {
    pub time: f64,
    /// Sequential identity within the stream; keys auxiliary randomness.
    pub index: u64,
    pub kind: MarkKind,
}

/// Lazily generated, time-ordered Poisson marks on the space-time slab.
#[derive(Debug, Clone)]
pub struct MarkStream {
    torus: Torus,
    m: usize,
    construction: Construction,
    horizon: f64,
    seed: u64,
    /// Per-site component rates in stream order: under GC1 the q update
    /// types; under GC2/GC3 the refresh rate followed by types 3..q.
    site_components: Vec<(f64, MarkTemplate)>,
    site_rate: f64,
    q: usize,
    rho_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MarkTemplate {
    Glauber(u16),
    Refresh,
}

impl MarkStream {
    #[inline]
    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn construction(&self) -> Construction {
        self.construction
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn rho_bar(&self) -> f64 {
        self.rho_bar
    }

    /// Validates that `dec` matches the decomposition the stream was built
    /// from (same number of update types).
    pub fn check_dec(&self, dec: &Decomposition) -> Result<(), GraphicalError> {
        if dec.q() != self.q {
            return Err(GraphicalError::DecompositionMismatch {
                stream_q: self.q,
                dec_q: dec.q(),
            });
        }
        Ok(())
    }

    pub fn require(&self, needed: Construction) -> Result<(), GraphicalError> {
        if self.construction != needed {
            return Err(GraphicalError::ConstructionMismatch {
                stream: self.construction,
                needed,
            });
        }
        Ok(())
    }

    /// Total Poisson intensity of the stream.
    pub fn total_rate(&self) -> f64 {
        let l2 = (self.torus.side() as f64).powi(2);
        let edges = self.torus.edges() as f64;
        let edge_rate = match self.construction {
            Construction::Gc3 => 3.0 * l2,
            _ => l2,
        };
        edges * edge_rate + self.torus.sites() as f64 * self.site_rate
    }

    pub fn iter(&self) -> MarkIter<'_> {
        let l2 = (self.torus.side() as f64).powi(2);
        let edges = self.torus.edges() as f64;
        let edge_rate_total = match self.construction {
            Construction::Gc3 => 3.0 * l2 * edges,
            _ => l2 * edges,
        };
        let total = self.total_rate();
        MarkIter {
            stream: self,
            rng: sim_rng(split_seed(self.seed, rng::tags::MARKS, 0)),
            exp: Exp::new(total).expect("positive rate"),
            p_edge: edge_rate_total / total,
            t: 0.0,
            index: 0,
        }
    }

    /// Materializes the stream; only sensible for small instances.
    pub fn collect(&self) -> Vec<Mark> {
        self.iter().collect()
    }
}

pub struct MarkIter<'a> {
    stream: &'a MarkStream,
    rng: SimRng,
    exp: Exp<f64>,
    p_edge: f64,
    t: f64,
    index: u64,
}

impl Iterator for MarkIter<'_> {
    type Item = Mark;

    fn next(&mut self) -> Option<Mark> {
        let gap = self.exp.sample(&mut self.rng);
        // Ties between marks would break the at-most-one-mark-at-a-time
        // structure; with 64-bit entropy this never fires in practice.
        assert!(gap > 0.0, "mark timestamp collision");
        self.t += gap;
        if self.t > self.stream.horizon {
            return None;
        }
        let kind = if self.rng.random::<f64>() < self.p_edge {
            let e = self.rng.random_range(0..self.stream.torus.edges() as u32);
            match self.stream.construction {
                Construction::Gc3 => {
                    // black : blue = L^2 : 2 L^2 per edge
                    if self.rng.random::<f64>() < 1.0 / 3.0 {
                        MarkKind::Black { edge: e }
                    } else {
                        MarkKind::Blue { edge: e }
                    }
                }
                _ => MarkKind::Exclusion { edge: e },
            }
        } else {
            let site = self.rng.random_range(0..self.stream.torus.sites() as u32);
            let mut pick = self.rng.random::<f64>() * self.stream.site_rate;
            let mut template = self.stream.site_components.last().unwrap().1;
            for &(rate, tpl) in &self.stream.site_components {
                if pick < rate {
                    template = tpl;
                    break;
                }
                pick -= rate;
            }
            match template {
                MarkTemplate::Glauber(ty) => MarkKind::Glauber { ty, site },
                MarkTemplate::Refresh => MarkKind::Refresh { site },
            }
        };
        let mark = Mark {
            time: self.t,
            index: self.index,
            kind,
        };
        self.index += 1;
        Some(mark)
    }
}

/// Builds the Poisson mark stream for the given construction.
pub fn generate_marks(
    torus: &Torus,
    dec: &Decomposition,
    construction: Construction,
    horizon: f64,
    seed: u64,
    force_large: bool,
) -> Result<MarkStream, GraphicalError> {
    if !(horizon > 0.0) {
        return Err(GraphicalError::BadHorizon(horizon));
    }
    torus.check_radius(dec.m())?;
    let max = match torus.d() {
        1 => MAX_SIDE_D1,
        _ => MAX_SIDE_D2,
    };
    if torus.side() > max && !force_large {
        return Err(GraphicalError::GuardTripped {
            l: torus.side(),
            max,
            d: torus.d(),
        });
    }
    let mut site_components = Vec::new();
    match construction {
        Construction::Gc1 => {
            for (i, (rate, _)) in dec.entries().iter().enumerate() {
                site_components.push((*rate, MarkTemplate::Glauber(i as u16)));
            }
        }
        Construction::Gc2 | Construction::Gc3 => {
            site_components.push((dec.refresh_rate(), MarkTemplate::Refresh));
            for (i, (rate, _)) in dec.entries().iter().enumerate().skip(2) {
                site_components.push((*rate, MarkTemplate::Glauber(i as u16)));
            }
        }
    }
    let site_rate = site_components.iter().map(|(r, _)| r).sum();
    Ok(MarkStream {
        torus: *torus,
        m: dec.m(),
        construction,
        horizon,
        seed,
        site_components,
        site_rate,
        q: dec.q(),
        rho_bar: dec.rho_bar(),
    })
}

/// Deterministic auxiliary randomness, keyed by `(seed, mark index, salt)`.
/// The grand coupling relies on different initial conditions consuming the
/// same refresh draw for the same mark.
#[derive(Debug, Clone, Copy)]
pub struct AuxRandomness {
    seed: u64,
}

impl AuxRandomness {
    pub fn new(seed: u64) -> Self {
        AuxRandomness {
            seed: split_seed(seed, rng::tags::AUX, 0),
        }
    }

    #[inline]
    fn word(&self, mark_index: u64, salt: u64) -> u64 {
        rng::splitmix64(
            self.seed ^ rng::splitmix64(mark_index.wrapping_add(salt.wrapping_mul(0x9e37_79b9))),
        )
    }

    /// Uniform draw in `[0,1)` attached to a mark.
    #[inline]
    pub fn uniform(&self, mark_index: u64, salt: u64) -> f64 {
        (self.word(mark_index, salt) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Rademacher(rho_bar) spin attached to a refresh mark.
    #[inline]
    pub fn rademacher(&self, mark_index: u64, rho_bar: f64) -> i8 {
        if self.uniform(mark_index, 0) < (1.0 + rho_bar) / 2.0 {
            1
        } else {
            -1
        }
    }

    /// Fair coin attached to a mark (blue-mark walker decisions).
    #[inline]
    pub fn coin(&self, mark_index: u64, salt: u64) -> bool {
        self.word(mark_index, salt) & 1 == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flip_model::{builtin_constant, decompose};
    use crate::stats::mean_se;

    fn constant_dec() -> Decomposition {
        decompose(&builtin_constant(1, 1).unwrap()).unwrap()
    }

    #[test]
    fn same_seed_same_stream() {
        let t = Torus::new(1, 8).unwrap();
        let dec = constant_dec();
        let a = generate_marks(&t, &dec, Construction::Gc2, 0.5, 7, false).unwrap();
        let b = generate_marks(&t, &dec, Construction::Gc2, 0.5, 7, false).unwrap();
        assert_eq!(a.collect(), b.collect());
        let c = generate_marks(&t, &dec, Construction::Gc2, 0.5, 8, false).unwrap();
        assert_ne!(a.collect(), c.collect());
    }

    #[test]
    fn tiny_horizon_can_be_empty() {
        let t = Torus::new(1, 4).unwrap();
        let dec = constant_dec();
        // Rate = 4^3 + 2*4 = 72; with T = 1e-9 the stream is almost surely empty.
        let ms = generate_marks(&t, &dec, Construction::Gc1, 1e-9, 3, false).unwrap();
        assert!(ms.collect().is_empty());
    }

    #[test]
    fn expected_mark_counts() {
        // d=1, L=16, constant c, T=1: exclusion mean 16^3 = 4096,
        // site events (refresh) mean 2*16 = 32.
        let t = Torus::new(1, 16).unwrap();
        let dec = constant_dec();
        let mut excl = Vec::new();
        let mut site = Vec::new();
        for seed in 0..200u64 {
            let ms = generate_marks(&t, &dec, Construction::Gc2, 1.0, seed, false).unwrap();
            let (mut ne, mut ns) = (0.0, 0.0);
            for mark in ms.iter() {
                match mark.kind {
                    MarkKind::Exclusion { .. } => ne += 1.0,
                    _ => ns += 1.0,
                }
            }
            excl.push(ne);
            site.push(ns);
        }
        let (me, se_e) = mean_se(&excl);
        let (ms_, se_s) = mean_se(&site);
        assert!((me - 4096.0).abs() <= 3.0 * se_e, "excl mean {me} se {se_e}");
        assert!((ms_ - 32.0).abs() <= 3.0 * se_s, "site mean {ms_} se {se_s}");
    }

    #[test]
    fn guards_trip_and_override() {
        let t = Torus::new(1, 1024).unwrap();
        let dec = constant_dec();
        assert!(matches!(
            generate_marks(&t, &dec, Construction::Gc2, 0.1, 0, false),
            Err(GraphicalError::GuardTripped { .. })
        ));
        assert!(generate_marks(&t, &dec, Construction::Gc2, 1e-6, 0, true).is_ok());
        assert!(matches!(
            generate_marks(&t, &dec, Construction::Gc2, 0.0, 0, false),
            Err(GraphicalError::BadHorizon(_))
        ));
    }

    #[test]
    fn times_strictly_increase() {
        let t = Torus::new(1, 8).unwrap();
        let dec = constant_dec();
        let ms = generate_marks(&t, &dec, Construction::Gc1, 1.0, 11, false).unwrap();
        let marks = ms.collect();
        assert!(!marks.is_empty());
        for w in marks.windows(2) {
            assert!(w[0].time < w[1].time);
        }
        assert!(marks.iter().enumerate().all(|(i, m)| m.index == i as u64));
    }

    #[test]
    fn aux_is_mark_keyed() {
        let aux = AuxRandomness::new(5);
        assert_eq!(aux.rademacher(10, 0.0), aux.rademacher(10, 0.0));
        let draws: Vec<i8> = (0..2000).map(|i| aux.rademacher(i, 0.5)).collect();
        let plus = draws.iter().filter(|&&s| s == 1).count() as f64;
        // Mean 0.75 * 2000 = 1500, sd ~ 19.4
        assert!((plus - 1500.0).abs() < 80.0, "plus = {plus}");
    }
}

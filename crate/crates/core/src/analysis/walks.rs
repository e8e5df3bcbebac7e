//! Random-walk lemmas at the base of the coupling bound: IP(2)
//! anticoncentration at an exponential time, the dominance coupling of the
//! IP(2) distance over the independent-SRW distance, and the exact local
//! limit bound for one tagged walker.
//!
//! Distance processes are simulated as lumped birth-death chains: by
//! symmetry the torus distance of a difference walk is Markov, with rates
//! `2L^2` up / `2L^2` down in the bulk, `4L^2` inward at the antipode, and
//! the IP(2) special structure at distance 1 (the inward move is replaced
//! by the adjacent swap, which fixes the distance). The paper's explicit
//! signed-coordinate kernel matches these chains away from the antipode;
//! the lumped form extends the order-preserving coupling across it, which
//! is where a literal signed kernel breaks on the torus.

use super::AnalysisError;
use crate::lattice::{Site, Torus};
use crate::rng::{replica_seed, sim_rng, split_seed, tags, SimRng};
use crate::stats::wilson95;
use rand::RngExt;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy)]
pub struct AnticoncentrationEstimate {
    pub hits: u64,
    pub reps: u64,
    pub rate: f64,
    pub ci: (f64, f64),
}

/// Estimates `P(dist(U1(zeta), U2(zeta)) <= k)` for the IP(2) with edge
/// conductance `L^2` and an independent `zeta ~ Exp(theta)`, by direct
/// simulation of the two tagged walkers.
pub fn anticoncentration(
    torus: &Torus,
    start: (Site, Site),
    theta: f64,
    k: u32,
    reps: u64,
    seed: u64,
) -> Result<AnticoncentrationEstimate, AnalysisError> {
    if start.0 == start.1 {
        return Err(AnalysisError::CoincidentStart);
    }
    if !(theta > 0.0) {
        return Err(AnalysisError::InvalidParam(format!("theta = {theta}")));
    }
    let hits: u64 = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = sim_rng(split_seed(replica_seed(seed, r), tags::WALK, 0));
            let zeta = Exp::new(theta).unwrap().sample(&mut rng);
            let (u1, u2) = ip2_at(torus, start, zeta, &mut rng);
            u64::from(torus.distance(u1, u2) <= k)
        })
        .sum();
    let rate = hits as f64 / reps as f64;
    Ok(AnticoncentrationEstimate {
        hits,
        reps,
        rate,
        ci: wilson95(hits, reps),
    })
}

/// Runs the IP(2) (two tagged walkers of the interchange process) to time
/// `horizon`, thinned to the edges incident to the walkers.
fn ip2_at(torus: &Torus, start: (Site, Site), horizon: f64, rng: &mut SimRng) -> (Site, Site) {
    let l2 = (torus.side() as f64).powi(2);
    let n = torus.sites() as u32;
    let (mut u1, mut u2) = start;
    let mut t = 0.0f64;
    let mut edges: Vec<u32> = Vec::with_capacity(4 * torus.d() as usize);
    loop {
        edges.clear();
        for &w in &[u1, u2] {
            for axis in 0..torus.d() {
                edges.push(axis as u32 * n + w);
                edges.push(axis as u32 * n + torus.step(w, axis, -1));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let rate = l2 * edges.len() as f64;
        t += Exp::new(rate).unwrap().sample(rng);
        if t > horizon {
            return (u1, u2);
        }
        let e = edges[rng.random_range(0..edges.len())];
        let (a, b) = torus.edge_endpoints(e as usize);
        // The edge ring moves whichever tagged walkers sit on its endpoints.
        let move_walker = |w: Site| -> Site {
            if w == a {
                b
            } else if w == b {
                a
            } else {
                w
            }
        };
        u1 = move_walker(u1);
        u2 = move_walker(u2);
    }
}

/// Per-coordinate distance move of a difference walk on an even torus:
/// `(new_distance, rate)` entries. `ip2` adds the blocking at total
/// distance 1 (handled by the caller since it depends on the other
/// coordinates).
fn dist_moves(a: u32, half: u32) -> Vec<(u32, f64)> {
    // Rates in units of 2L^2.
    if a == 0 {
        vec![(1, 2.0)]
    } else if a == half {
        vec![(half - 1, 2.0)]
    } else {
        vec![(a + 1, 1.0), (a - 1, 1.0)]
    }
}

/// One jump record of the coupled chains.
#[derive(Debug, Clone, Copy)]
enum CoupledMove {
    /// Move only the IP(2) coordinate `i` to the given distance.
    Ip2(usize, u32),
    /// Move only the SRW coordinate `j`.
    Srw(usize, u32),
    /// Move matched coordinates together.
    Both(usize, u32, usize, u32),
}

/// Runs the order-preserving coupling of the IP(2)-difference distance and
/// the independent-SRW-difference distance, both lumped to per-coordinate
/// torus distances, and counts violations of
/// `dist(SRW) <= dist(IP2)` at jump times (the coupling is the oracle: any
/// violation is an implementation bug). Starts are given as per-coordinate
/// distances; the SRW start must be dominated by the IP(2) start after
/// sorting.
pub fn ip2_dominance_check(
    torus: &Torus,
    ip2_start: &[u32],
    srw_start: &[u32],
    horizon: f64,
    reps: u64,
    seed: u64,
) -> Result<u64, AnalysisError> {
    let d = torus.d() as usize;
    if torus.side() % 2 != 0 {
        return Err(AnalysisError::OddSide(torus.side()));
    }
    if ip2_start.len() != d || srw_start.len() != d {
        return Err(AnalysisError::InvalidParam(
            "start distances must have one entry per axis".into(),
        ));
    }
    let half = torus.side() / 2;
    let mut a0 = ip2_start.to_vec();
    let mut b0 = srw_start.to_vec();
    a0.sort_unstable();
    b0.sort_unstable();
    if a0.iter().sum::<u32>() == 0 {
        return Err(AnalysisError::CoincidentStart);
    }
    if a0.iter().any(|&x| x > half) || b0.iter().any(|&x| x > half) {
        return Err(AnalysisError::InvalidParam(
            "distances exceed the torus diameter per axis".into(),
        ));
    }
    if a0.iter().zip(&b0).any(|(x, y)| y > x) {
        return Err(AnalysisError::PreconditionViolated {
            srw: b0,
            ip2: a0,
        });
    }
    let l2 = (torus.side() as f64).powi(2);
    let violations: u64 = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = sim_rng(split_seed(replica_seed(seed, r), tags::WALK, 1));
            coupled_replica(&a0, &b0, half, l2, horizon, &mut rng)
        })
        .sum();
    Ok(violations)
}

fn coupled_replica(
    a0: &[u32],
    b0: &[u32],
    half: u32,
    l2: f64,
    horizon: f64,
    rng: &mut SimRng,
) -> u64 {
    let mut a = a0.to_vec(); // IP(2) per-coordinate distances, sorted
    let mut b = b0.to_vec(); // SRW per-coordinate distances, sorted
    let mut t = 0.0f64;
    let mut violations = 0u64;
    let unit = 2.0 * l2;
    loop {
        // Build the coupled transition list. Matched coordinates with equal
        // distances move together; strict pairs move independently. The
        // IP(2) blocks its move to total distance 0 (replaced by the swap,
        // which fixes the distance, hence a dropped self-loop).
        let a_total: u32 = a.iter().sum();
        let mut moves: Vec<(CoupledMove, f64)> = Vec::new();
        for i in 0..a.len() {
            let (ai, bi) = (a[i], b[i]);
            let a_moves: Vec<(u32, f64)> = dist_moves(ai, half)
                .into_iter()
                .filter(|&(na, _)| !(a_total - ai + na == 0))
                .collect();
            let b_moves = dist_moves(bi, half);
            if ai == bi {
                // Couple equal-direction moves; unmatched residues move alone.
                for &(na, ra) in &a_moves {
                    let dir_up = na > ai;
                    match b_moves.iter().find(|&&(nb, _)| (nb > bi) == dir_up) {
                        Some(&(nb, rb)) => {
                            let shared = ra.min(rb);
                            moves.push((CoupledMove::Both(i, na, i, nb), shared));
                            if ra > rb {
                                moves.push((CoupledMove::Ip2(i, na), ra - rb));
                            }
                        }
                        None => moves.push((CoupledMove::Ip2(i, na), ra)),
                    }
                }
                for &(nb, rb) in &b_moves {
                    let dir_up = nb > bi;
                    match a_moves.iter().find(|&&(na, _)| (na > ai) == dir_up) {
                        Some(&(_, ra)) => {
                            if rb > ra {
                                moves.push((CoupledMove::Srw(i, nb), rb - ra));
                            }
                        }
                        None => moves.push((CoupledMove::Srw(i, nb), rb)),
                    }
                }
            } else {
                for &(na, ra) in &a_moves {
                    moves.push((CoupledMove::Ip2(i, na), ra));
                }
                for &(nb, rb) in &b_moves {
                    moves.push((CoupledMove::Srw(i, nb), rb));
                }
            }
        }
        let total: f64 = moves.iter().map(|(_, r)| r).sum::<f64>() * unit;
        if total <= 0.0 {
            return violations;
        }
        t += Exp::new(total).unwrap().sample(rng);
        if t > horizon {
            return violations;
        }
        let mut pick = rng.random::<f64>() * total / unit;
        let mut chosen = moves[moves.len() - 1].0;
        for &(mv, r) in &moves {
            if pick < r {
                chosen = mv;
                break;
            }
            pick -= r;
        }
        match chosen {
            CoupledMove::Ip2(i, na) => a[i] = na,
            CoupledMove::Srw(j, nb) => b[j] = nb,
            CoupledMove::Both(i, na, j, nb) => {
                a[i] = na;
                b[j] = nb;
            }
        }
        a.sort_unstable();
        b.sort_unstable();
        if a.iter().zip(&b).any(|(x, y)| y > x) {
            violations += 1;
        }
    }
}

/// Exact maximal occupation probability of a single SRW on the circle
/// (conductance `L^2` per edge) at time `t`, via the Fourier heat kernel:
/// `max_u P_t(0, u) = P_t(0, 0) = (1/L) sum_k exp(-2 L^2 t (1 - cos(2 pi k / L)))`.
pub fn srw_max_occupation(l: u32, t: f64) -> f64 {
    let lf = l as f64;
    (0..l)
        .map(|k| (-2.0 * lf * lf * t * (1.0 - (2.0 * PI * k as f64 / lf).cos())).exp())
        .sum::<f64>()
        / lf
}

//! The BEP-IBP coupling: pivotal particles of both processes share their
//! Glauber clocks until a pivotal particle splits within distance `m` of
//! another pivotal particle (an interaction). On success the two pivotal
//! sets coincide, with identical clock assignments, and spins atop agree
//! whenever the shared pivotal spins agree.
//!
//! Two routes are provided. [`couple_bep_ibp`] materializes both processes
//! jointly (genealogies, positions, pivotal correspondence) and is meant
//! for structural checks at desk scale. [`coupling_failure_probability`]
//! simulates only the pivotal skeleton on the lattice: a pivotal carrier's
//! ring time is Exp(lambda) regardless of its merge history and the motion
//! law of pivotal sites is the same with or without the untracked groups,
//! so the pruned process has the same failure law at a fraction of the
//! cost.

use super::bep::{BepHistory, BepOptions, Death, EdgeAdjacency, Group};
use super::ibp::{draw_type, IbpNode, IbpTree, ROOT_PARENT};
use super::piv::PivCore;
use super::{DualError, Label};
use crate::flip_model::Decomposition;
use crate::lattice::{Site, Torus};
use crate::rng::{replica_seed, sim_rng, split_seed, tags, SimRng};
use rand::RngExt;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingOutcome {
    /// No interaction; `extinct_at` is the pivotal-set extinction time when
    /// it happened before the simulation horizon.
    Success { extinct_at: Option<f64> },
    Failure { time: f64 },
}

/// Monte Carlo estimate of the coupling failure probability from the
/// pruned pivotal skeleton. Each replica runs until the pivotal set goes
/// extinct, an interaction occurs, or `t_max` elapses (by then survival is
/// exponentially unlikely, so the truncation bias is negligible).
#[derive(Debug, Clone)]
pub struct FailureEstimate {
    pub reps: u64,
    pub failures: u64,
    /// Replicas whose pivotal set was still alive at `t_max`.
    pub undecided: u64,
}

impl FailureEstimate {
    pub fn rate(&self) -> f64 {
        self.failures as f64 / self.reps as f64
    }
}

pub fn coupling_failure_probability(
    torus: &Torus,
    initial: &[Site],
    dec: &Decomposition,
    t_max: f64,
    reps: u64,
    seed: u64,
) -> Result<FailureEstimate, DualError> {
    torus.check_radius(dec.m())?;
    let outcomes: Vec<CouplingOutcome> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = sim_rng(split_seed(replica_seed(seed, r), tags::DUAL, 3));
            pruned_replica(torus, initial, dec, t_max, &mut rng)
        })
        .collect();
    let failures = outcomes
        .iter()
        .filter(|o| matches!(o, CouplingOutcome::Failure { .. }))
        .count() as u64;
    let undecided = outcomes
        .iter()
        .filter(|o| matches!(o, CouplingOutcome::Success { extinct_at: None }))
        .count() as u64;
    Ok(FailureEstimate {
        reps,
        failures,
        undecided,
    })
}

/// One pruned-skeleton replica on the lattice.
fn pruned_replica(
    torus: &Torus,
    initial: &[Site],
    dec: &Decomposition,
    t_max: f64,
    rng: &mut SimRng,
) -> CouplingOutcome {
    let geom = dec.geometry();
    let lambda = dec.lambda();
    let l2 = (torus.side() as f64).powi(2);
    let mut core = PivCore::new(dec, initial);
    let mut occ: Vec<u32> = vec![NONE; torus.sites()];
    let mut adj = EdgeAdjacency::new(*torus);
    for (i, &u) in initial.iter().enumerate() {
        assert!(occ[u as usize] == NONE, "initial sites must be distinct");
        occ[u as usize] = i as u32;
        adj.occupy(u);
    }
    let mut t = 0.0f64;
    loop {
        let n = core.live_count();
        if n == 0 {
            return CouplingOutcome::Success { extinct_at: Some(t) };
        }
        let excl_rate = l2 * adj.len() as f64;
        let ring_rate = lambda * n as f64;
        let total = excl_rate + ring_rate;
        t += Exp::new(total).unwrap().sample(rng);
        if t > t_max {
            return CouplingOutcome::Success { extinct_at: None };
        }
        if rng.random::<f64>() * total < excl_rate {
            let e = adj.edge_at(rng.random_range(0..adj.len()));
            let (u, v) = torus.edge_endpoints(e as usize);
            let (a, b) = (occ[u as usize], occ[v as usize]);
            match (a != NONE, b != NONE) {
                (true, true) => {
                    occ.swap(u as usize, v as usize);
                    core.set_site(a, v);
                    core.set_site(b, u);
                }
                (true, false) => {
                    occ[u as usize] = NONE;
                    occ[v as usize] = a;
                    core.set_site(a, v);
                    adj.vacate(u);
                    adj.occupy(v);
                }
                (false, true) => {
                    occ[v as usize] = NONE;
                    occ[u as usize] = b;
                    core.set_site(b, u);
                    adj.vacate(v);
                    adj.occupy(u);
                }
                (false, false) => unreachable!("non-adjacent edge sampled"),
            }
        } else {
            let id = core.pick(rng.random_range(0..n));
            let u = core.leaf(id).site;
            // Interaction: another pivotal particle within distance m.
            for &off in geom.offsets() {
                let w = torus.offset_site(u, off);
                if w != u && occ[w as usize] != NONE {
                    return CouplingOutcome::Failure { time: t };
                }
            }
            let ty = draw_type(dec, rng);
            occ[u as usize] = NONE;
            adj.vacate(u);
            let newborn = core.ring(
                dec,
                id,
                ty,
                |s| torus.offset_site(u, geom.offsets()[s as usize]),
                &mut |leaf| {
                    // Cascade-pruned leaves vacate their sites.
                    if occ[leaf.site as usize] != NONE {
                        occ[leaf.site as usize] = NONE;
                        adj.vacate(leaf.site);
                    }
                },
            );
            for &(_, new_id) in &newborn {
                let w = core.leaf(new_id).site;
                debug_assert!(occ[w as usize] == NONE);
                occ[w as usize] = new_id;
                adj.occupy(w);
            }
        }
    }
}

/// The materialized joint run: both genealogies plus the pivotal
/// correspondence at the horizon.
#[derive(Debug)]
pub struct CouplingRun {
    pub success: bool,
    pub first_interaction: Option<f64>,
    pub bep: BepHistory,
    pub ibp: IbpTree,
    /// While successful: pivotal pairs `(BEP group id, IBP node id)` alive
    /// at the horizon. Empty after a failure.
    pub pivotal_pairs: Vec<(u32, u32)>,
}

/// Simulates the BEP and the IBP jointly from the site set `E`, sharing the
/// Glauber clocks of pivotal particles per the coupling rules, and returns
/// both materialized structures. A pivotal carrier's clock is always the
/// shared one (when a newborn on a pivotal slot merges into a resident
/// group, that group becomes the carrier and inherits the shared clock;
/// memorylessness keeps the law unchanged).
pub fn couple_bep_ibp(
    torus: &Torus,
    initial: &[Site],
    dec: &Decomposition,
    horizon: f64,
    seed: u64,
    opts: BepOptions,
) -> Result<CouplingRun, DualError> {
    torus.check_radius(dec.m())?;
    let geom = dec.geometry().clone();
    let ball = geom.size();
    let lambda = dec.lambda();
    let l2 = (torus.side() as f64).powi(2);
    let mut rng = sim_rng(split_seed(seed, tags::DUAL, 4));

    // --- BEP state ---
    let mut groups: Vec<Group> = Vec::new();
    let mut occ: Vec<u32> = vec![NONE; torus.sites()];
    let mut bep_alive: Vec<u32> = Vec::new();
    let mut adj = EdgeAdjacency::new(*torus);
    let mut excl_marks = 0u64;
    let mut splits_by_type = vec![0u64; dec.q()];
    // --- IBP state ---
    let mut nodes: Vec<IbpNode> = Vec::new();
    let mut ibp_alive: Vec<u32> = Vec::new();
    // --- shared pivotal skeleton ---
    let mut core = PivCore::new(dec, initial);
    // leaf id -> (BEP group, IBP node); NONE entries for dead ids.
    let mut pair: Vec<(u32, u32)> = Vec::new();
    // pivotal flags for clock classification
    let mut bep_pivotal: Vec<bool> = Vec::new();
    let mut ibp_pivotal: Vec<bool> = Vec::new();

    for (i, &u) in initial.iter().enumerate() {
        assert!(occ[u as usize] == NONE, "initial sites must be distinct");
        let gid = groups.len() as u32;
        groups.push(Group {
            label: Label::root(i as u32),
            birth: 0.0,
            death: None,
            site: u,
            traj: Vec::new(),
        });
        occ[u as usize] = gid;
        bep_alive.push(gid);
        bep_pivotal.push(true);
        adj.occupy(u);
        nodes.push(IbpNode {
            parent: ROOT_PARENT,
            slot: 0,
            split_time: f64::INFINITY,
            ty: 0,
            first_child: NONE,
            birth: 0.0,
        });
        ibp_alive.push(i as u32);
        ibp_pivotal.push(true);
        pair.push((gid, i as u32));
    }

    let mut success = true;
    let mut first_interaction = None;
    let mut t = 0.0f64;

    // Splits one BEP group at `site`; returns children (slot, gid, fresh).
    let bep_split = |groups: &mut Vec<Group>,
                     occ: &mut Vec<u32>,
                     bep_alive: &mut Vec<u32>,
                     bep_pivotal: &mut Vec<bool>,
                     adj: &mut EdgeAdjacency,
                     gid: u32,
                     ty: u16,
                     t: f64|
     -> Vec<(u8, u32, bool)> {
        let u = groups[gid as usize].site;
        occ[u as usize] = NONE;
        adj.vacate(u);
        let at = bep_alive.iter().position(|&g| g == gid).unwrap();
        bep_alive.swap_remove(at);
        let parent_label = groups[gid as usize].label.clone();
        let mut children = Vec::with_capacity(ball);
        for (s, &off) in geom.offsets().iter().enumerate() {
            let w = torus.offset_site(u, off);
            let child_label = parent_label.child(s as u8);
            let resident = occ[w as usize];
            if resident != NONE {
                if child_label < groups[resident as usize].label {
                    groups[resident as usize].label = child_label;
                }
                children.push((s as u8, resident, false));
            } else {
                let fresh = groups.len() as u32;
                groups.push(Group {
                    label: child_label,
                    birth: t,
                    death: None,
                    site: w,
                    traj: Vec::new(),
                });
                occ[w as usize] = fresh;
                bep_alive.push(fresh);
                bep_pivotal.push(false);
                adj.occupy(w);
                children.push((s as u8, fresh, true));
            }
        }
        groups[gid as usize].death = Some(Death {
            time: t,
            ty,
            site: u,
            children,
        });
        groups[gid as usize].death.as_ref().unwrap().children.clone()
    };

    let ibp_split = |nodes: &mut Vec<IbpNode>,
                     ibp_alive: &mut Vec<u32>,
                     ibp_pivotal: &mut Vec<bool>,
                     id: u32,
                     ty: u16,
                     t: f64|
     -> u32 {
        let first_child = nodes.len() as u32;
        nodes[id as usize].split_time = t;
        nodes[id as usize].ty = ty;
        nodes[id as usize].first_child = first_child;
        let at = ibp_alive.iter().position(|&n| n == id).unwrap();
        ibp_alive.swap_remove(at);
        for s in 0..ball {
            nodes.push(IbpNode {
                parent: id,
                slot: s as u8,
                split_time: f64::INFINITY,
                ty: 0,
                first_child: NONE,
                birth: t,
            });
            ibp_alive.push(first_child + s as u32);
            ibp_pivotal.push(false);
        }
        first_child
    };

    loop {
        let p = if success { core.live_count() } else { 0 };
        let g_nonpiv = bep_alive.len() - if success { p } else { 0 };
        let i_nonpiv = ibp_alive.len() - if success { p } else { 0 };
        let rate_excl = l2 * adj.len() as f64;
        let rate_shared = lambda * p as f64;
        let rate_bep = lambda * g_nonpiv as f64;
        let rate_ibp = lambda * i_nonpiv as f64;
        let total = rate_excl + rate_shared + rate_bep + rate_ibp;
        if total <= 0.0 {
            break;
        }
        t += Exp::new(total).unwrap().sample(&mut rng);
        if t > horizon {
            break;
        }
        let mut pick = rng.random::<f64>() * total;
        if pick < rate_excl {
            excl_marks += 1;
            let e = adj.edge_at(rng.random_range(0..adj.len()));
            let (u, v) = torus.edge_endpoints(e as usize);
            let (gu, gv) = (occ[u as usize], occ[v as usize]);
            match (gu != NONE, gv != NONE) {
                (true, true) => {
                    occ.swap(u as usize, v as usize);
                    groups[gu as usize].site = v;
                    groups[gv as usize].site = u;
                }
                (true, false) => {
                    occ[u as usize] = NONE;
                    occ[v as usize] = gu;
                    groups[gu as usize].site = v;
                    adj.vacate(u);
                    adj.occupy(v);
                }
                (false, true) => {
                    occ[v as usize] = NONE;
                    occ[u as usize] = gv;
                    groups[gv as usize].site = u;
                    adj.vacate(v);
                    adj.occupy(u);
                }
                (false, false) => unreachable!(),
            }
            // Positions live on the BEP groups; the skeleton's own site
            // field is unused in the materialized run.
            continue;
        }
        pick -= rate_excl;
        if success && pick < rate_shared {
            // Shared ring of a pivotal pair.
            let id = core.pick(rng.random_range(0..p));
            let (gid, nid) = pair[id as usize];
            let ty = draw_type(dec, &mut rng);
            let u = groups[gid as usize].site;
            // Interaction test: another pivotal carrier within distance m.
            let mut interaction = false;
            for &off in geom.offsets() {
                let w = torus.offset_site(u, off);
                let resident = occ[w as usize];
                if resident != NONE && resident != gid && bep_pivotal[resident as usize] {
                    interaction = true;
                    break;
                }
            }
            splits_by_type[ty as usize] += 1;
            let children = bep_split(
                &mut groups,
                &mut occ,
                &mut bep_alive,
                &mut bep_pivotal,
                &mut adj,
                gid,
                ty,
                t,
            );
            let first_child = ibp_split(&mut nodes, &mut ibp_alive, &mut ibp_pivotal, nid, ty, t);
            bep_pivotal[gid as usize] = false;
            ibp_pivotal[nid as usize] = false;
            if interaction {
                success = false;
                first_interaction = Some(t);
                // Dissolve the correspondence: every remaining carrier goes
                // back to its own clocks.
                for id in core.dense_ids().to_vec() {
                    let (g2, n2) = pair[id as usize];
                    bep_pivotal[g2 as usize] = false;
                    ibp_pivotal[n2 as usize] = false;
                }
            } else {
                let newborn = core.ring(
                    dec,
                    id,
                    ty,
                    |s| torus.offset_site(u, geom.offsets()[s as usize]),
                    &mut |leaf| {
                        // Cascade-pruned pair loses pivotal status; both
                        // sides keep evolving on their own clocks.
                        // leaf.site is stale here; use the pair table.
                        let _ = leaf;
                    },
                );
                // Clear flags of cascade-pruned pairs: recompute from the
                // skeleton's live set.
                if pair.len() < core.leaf_slab_len() {
                    pair.resize(core.leaf_slab_len(), (NONE, NONE));
                }
                for &(slot, new_id) in &newborn {
                    let bep_child = children
                        .iter()
                        .find(|(s, _, _)| *s == slot)
                        .map(|&(_, g, _)| g)
                        .unwrap();
                    let ibp_child = first_child + slot as u32;
                    pair[new_id as usize] = (bep_child, ibp_child);
                }
                // Reset flags from the live skeleton (handles pruning).
                for flag in bep_pivotal.iter_mut() {
                    *flag = false;
                }
                for flag in ibp_pivotal.iter_mut() {
                    *flag = false;
                }
                for id in core.dense_ids() {
                    let (g2, n2) = pair[*id as usize];
                    bep_pivotal[g2 as usize] = true;
                    ibp_pivotal[n2 as usize] = true;
                }
            }
            if bep_alive.len() > opts.cap || ibp_alive.len() > opts.cap {
                return Err(DualError::TreeSizeExplosion(opts.cap));
            }
            continue;
        }
        if success {
            pick -= rate_shared;
        }
        if pick < rate_bep {
            // Ring of a non-pivotal BEP group (rejection over alive list).
            let gid = loop {
                let cand = bep_alive[rng.random_range(0..bep_alive.len())];
                if !(success && bep_pivotal[cand as usize]) {
                    break cand;
                }
            };
            let ty = draw_type(dec, &mut rng);
            splits_by_type[ty as usize] += 1;
            bep_split(
                &mut groups,
                &mut occ,
                &mut bep_alive,
                &mut bep_pivotal,
                &mut adj,
                gid,
                ty,
                t,
            );
            if bep_alive.len() > opts.cap {
                return Err(DualError::TreeSizeExplosion(opts.cap));
            }
            continue;
        }
        // Ring of a non-pivotal IBP particle.
        let nid = loop {
            let cand = ibp_alive[rng.random_range(0..ibp_alive.len())];
            if !(success && ibp_pivotal[cand as usize]) {
                break cand;
            }
        };
        let ty = draw_type(dec, &mut rng);
        ibp_split(&mut nodes, &mut ibp_alive, &mut ibp_pivotal, nid, ty, t);
        if ibp_alive.len() > opts.cap {
            return Err(DualError::TreeSizeExplosion(opts.cap));
        }
    }

    let pivotal_pairs: Vec<(u32, u32)> = if success {
        core.dense_ids().iter().map(|&id| pair[id as usize]).collect()
    } else {
        Vec::new()
    };
    let bep = BepHistory {
        torus: *torus,
        ball,
        horizon,
        groups,
        roots: (0..initial.len() as u32).collect(),
        excl_marks,
        splits_by_type,
        size_snapshots: Vec::new(),
    };
    let ibp = IbpTree::from_raw(nodes, (0..initial.len() as u32).collect(), ball, horizon);
    Ok(CouplingRun {
        success,
        first_interaction,
        bep,
        ibp,
        pivotal_pairs,
    })
}

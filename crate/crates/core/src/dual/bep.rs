//! The branching exclusion process: the update history of a site set, run
//! forward as a Markov process on the lattice. Particles ride exclusion
//! marks; a Glauber ring removes a group and spawns newborns on its ball,
//! newborns landing on occupied sites merge into the resident group
//! permanently; a group's label is its minimal member.
//!
//! Event generation is thinned to the active region: only exclusion clocks
//! on edges adjacent to occupied sites are sampled. Distant marks never
//! touch tracked particles, so the law of the history is unchanged.

use super::ibp::draw_type;
use super::{DualError, Label};
use crate::flip_model::Decomposition;
use crate::graphical::{Construction, MarkKind, MarkStream};
use crate::lattice::{BallGeometry, Site, Torus};
use crate::rng::{sim_rng, split_seed, tags};
use rand::RngExt;
use rand_distr::{Distribution, Exp};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub(crate) struct Death {
    pub time: f64,
    pub ty: u16,
    pub site: Site,
    /// Per ball slot: the group the newborn ended in and whether it was
    /// freshly created (false = merged into a resident group).
    pub children: Vec<(u8, u32, bool)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Group {
    pub label: Label,
    pub birth: f64,
    pub death: Option<Death>,
    /// Site at death, or at the horizon while alive.
    pub site: Site,
    /// Arrival times and sites, recorded when trajectory recording is on
    /// (the run-length encoding of the piecewise-constant trajectory).
    pub traj: Vec<(f64, Site)>,
}

#[derive(Debug, Clone, Copy)]
pub struct BepOptions {
    pub cap: usize,
    /// Record per-group site trajectories (debug dumps only; hot paths
    /// leave this off).
    pub record_trajectories: bool,
}

impl Default for BepOptions {
    fn default() -> Self {
        BepOptions {
            cap: super::DEFAULT_PARTICLE_CAP,
            record_trajectories: false,
        }
    }
}

/// A materialized BEP run: the genealogy of groups, the consumed mark
/// counts, and the group-count trajectory at requested times.
#[derive(Debug, Clone)]
pub struct BepHistory {
    pub(crate) torus: Torus,
    pub(crate) ball: usize,
    pub(crate) horizon: f64,
    pub(crate) groups: Vec<Group>,
    pub(crate) roots: Vec<u32>,
    /// Exclusion marks consumed (edges adjacent to occupied sites).
    pub excl_marks: u64,
    /// Glauber splits per update type.
    pub splits_by_type: Vec<u64>,
    /// `|W_t|` (alive group count) at each requested snapshot time.
    pub size_snapshots: Vec<usize>,
}

impl BepHistory {
    #[inline]
    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    /// Number of newborn slots per split, `|B(0,m)|`.
    #[inline]
    pub fn ball(&self) -> usize {
        self.ball
    }

    pub fn check_horizon(&self, t: f64) -> Result<(), DualError> {
        if t > self.horizon {
            return Err(DualError::HorizonExceeded {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Alive groups at the horizon, in creation order (this order indexes
    /// leaf-spin vectors).
    pub fn alive(&self) -> Vec<u32> {
        (0..self.groups.len() as u32)
            .filter(|&g| self.groups[g as usize].death.is_none())
            .collect()
    }

    /// Minimal labels per alive group, the set `W_t` at the horizon.
    pub fn alive_labels(&self) -> Vec<Label> {
        let mut labels: Vec<Label> = self
            .alive()
            .iter()
            .map(|&g| self.groups[g as usize].label.clone())
            .collect();
        labels.sort();
        labels
    }

    /// Splits total.
    pub fn total_splits(&self) -> u64 {
        self.splits_by_type.iter().sum()
    }

    /// Evaluates the spins atop at the horizon: `leaf_spins[i]` is the spin
    /// of the `i`-th alive group (in `alive()` order); every dead group's
    /// spin is its update function applied to its children's spins.
    /// Returns one spin per root (the initial particles of `E`).
    pub fn spins_atop(&self, dec: &Decomposition, leaf_spins: &[i8]) -> Result<Vec<i8>, DualError> {
        let alive = self.alive();
        if alive.len() != leaf_spins.len() {
            return Err(DualError::MissingLeafSpin {
                expected: alive.len(),
                got: leaf_spins.len(),
            });
        }
        let mut value = vec![0i8; self.groups.len()];
        for (&g, &s) in alive.iter().zip(leaf_spins) {
            value[g as usize] = s;
        }
        // Children die strictly after their parent, so resolving in death
        // time descending order sees resolved children.
        let mut dead: Vec<u32> = (0..self.groups.len() as u32)
            .filter(|&g| self.groups[g as usize].death.is_some())
            .collect();
        dead.sort_by(|a, b| {
            let ta = self.groups[*a as usize].death.as_ref().unwrap().time;
            let tb = self.groups[*b as usize].death.as_ref().unwrap().time;
            tb.partial_cmp(&ta).unwrap()
        });
        for &g in &dead {
            let death = self.groups[g as usize].death.as_ref().unwrap();
            let mut mask = 0u32;
            for &(slot, child, _) in &death.children {
                if value[child as usize] > 0 {
                    mask |= 1 << slot;
                }
            }
            value[g as usize] = dec.update(death.ty as usize).eval(mask);
        }
        Ok(self.roots.iter().map(|&g| value[g as usize]).collect())
    }
}

/// Tracks which edges touch occupied sites, with O(1) sampling.
pub(crate) struct EdgeAdjacency {
    torus: Torus,
    counter: Vec<u8>,
    list: Vec<u32>,
    pos: Vec<u32>,
}

impl EdgeAdjacency {
    pub fn new(torus: Torus) -> Self {
        let e = torus.edges();
        EdgeAdjacency {
            torus,
            counter: vec![0; e],
            list: Vec::new(),
            pos: vec![NONE; e],
        }
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn edge_at(&self, k: usize) -> u32 {
        self.list[k]
    }

    fn bump(&mut self, e: u32, delta: i8) {
        let c = &mut self.counter[e as usize];
        if delta > 0 {
            *c += 1;
            if *c == 1 {
                self.pos[e as usize] = self.list.len() as u32;
                self.list.push(e);
            }
        } else {
            *c -= 1;
            if *c == 0 {
                let at = self.pos[e as usize];
                self.list.swap_remove(at as usize);
                if (at as usize) < self.list.len() {
                    let moved = self.list[at as usize];
                    self.pos[moved as usize] = at;
                }
                self.pos[e as usize] = NONE;
            }
        }
    }

    /// Edge ids incident to `u`: `(axis, +1)` is `axis*N + u`; `(axis, -1)`
    /// is `axis*N + (u - e_axis)`.
    fn incident(&self, u: Site) -> impl Iterator<Item = u32> + '_ {
        let n = self.torus.sites() as u32;
        (0..self.torus.d()).flat_map(move |axis| {
            let fwd = axis as u32 * n + u;
            let back = axis as u32 * n + self.torus.step(u, axis, -1);
            [fwd, back]
        })
    }

    pub fn occupy(&mut self, u: Site) {
        let edges: Vec<u32> = self.incident(u).collect();
        for e in edges {
            self.bump(e, 1);
        }
    }

    pub fn vacate(&mut self, u: Site) {
        let edges: Vec<u32> = self.incident(u).collect();
        for e in edges {
            self.bump(e, -1);
        }
    }
}

/// Runs the BEP from the site set `E` up to the horizon, recording `|W_t|`
/// at each requested time.
pub fn run_bep(
    torus: &Torus,
    initial: &[Site],
    dec: &Decomposition,
    horizon: f64,
    seed: u64,
    opts: BepOptions,
    times: &[f64],
) -> Result<BepHistory, DualError> {
    torus.check_radius(dec.m())?;
    let geom = dec.geometry().clone();
    let ball = geom.size();
    let lambda = dec.lambda();
    let l2 = (torus.side() as f64).powi(2);
    let mut rng = sim_rng(split_seed(seed, tags::DUAL, 2));

    let mut groups: Vec<Group> = Vec::new();
    let mut occ: Vec<u32> = vec![NONE; torus.sites()];
    let mut alive: Vec<u32> = Vec::new();
    let mut adj = EdgeAdjacency::new(*torus);
    for (i, &u) in initial.iter().enumerate() {
        assert!(occ[u as usize] == NONE, "initial sites must be distinct");
        let gid = groups.len() as u32;
        groups.push(Group {
            label: Label::root(i as u32),
            birth: 0.0,
            death: None,
            site: u,
            traj: if opts.record_trajectories {
                vec![(0.0, u)]
            } else {
                Vec::new()
            },
        });
        occ[u as usize] = gid;
        alive.push(gid);
        adj.occupy(u);
    }
    let roots: Vec<u32> = (0..initial.len() as u32).collect();

    let mut excl_marks = 0u64;
    let mut splits_by_type = vec![0u64; dec.q()];
    let mut size_snapshots = Vec::with_capacity(times.len());
    let mut cursor = 0usize;
    let mut t = 0.0f64;
    loop {
        let excl_rate = l2 * adj.len() as f64;
        let glauber_rate = lambda * alive.len() as f64;
        let total = excl_rate + glauber_rate;
        let t_next = if total > 0.0 {
            t + Exp::new(total).unwrap().sample(&mut rng)
        } else {
            f64::INFINITY
        };
        while cursor < times.len() && times[cursor] < t_next {
            size_snapshots.push(alive.len());
            cursor += 1;
        }
        if t_next > horizon {
            break;
        }
        t = t_next;
        if rng.random::<f64>() * total < excl_rate {
            excl_marks += 1;
            let e = adj.edge_at(rng.random_range(0..adj.len()));
            let (u, v) = torus.edge_endpoints(e as usize);
            let (gu, gv) = (occ[u as usize], occ[v as usize]);
            match (gu != NONE, gv != NONE) {
                (true, true) => {
                    occ.swap(u as usize, v as usize);
                    groups[gu as usize].site = v;
                    groups[gv as usize].site = u;
                    if opts.record_trajectories {
                        groups[gu as usize].traj.push((t, v));
                        groups[gv as usize].traj.push((t, u));
                    }
                }
                (true, false) => {
                    occ[u as usize] = NONE;
                    occ[v as usize] = gu;
                    groups[gu as usize].site = v;
                    adj.vacate(u);
                    adj.occupy(v);
                    if opts.record_trajectories {
                        groups[gu as usize].traj.push((t, v));
                    }
                }
                (false, true) => {
                    occ[v as usize] = NONE;
                    occ[u as usize] = gv;
                    groups[gv as usize].site = u;
                    adj.vacate(v);
                    adj.occupy(u);
                    if opts.record_trajectories {
                        groups[gv as usize].traj.push((t, u));
                    }
                }
                (false, false) => unreachable!("non-adjacent edge sampled"),
            }
        } else {
            let gid = alive[rng.random_range(0..alive.len())];
            let ty = draw_type(dec, &mut rng);
            splits_by_type[ty as usize] += 1;
            let u = groups[gid as usize].site;
            // Remove the group, then place newborns on the ball; the center
            // slot refills the vacated site.
            occ[u as usize] = NONE;
            adj.vacate(u);
            let at = alive.iter().position(|&g| g == gid).unwrap();
            alive.swap_remove(at);
            let parent_label = groups[gid as usize].label.clone();
            let mut children = Vec::with_capacity(ball);
            for (s, &off) in geom.offsets().iter().enumerate() {
                let w = torus.offset_site(u, off);
                let child_label = parent_label.child(s as u8);
                let resident = occ[w as usize];
                if resident != NONE {
                    // Merge: the newborn joins the resident group forever.
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
                        traj: if opts.record_trajectories {
                            vec![(t, w)]
                        } else {
                            Vec::new()
                        },
                    });
                    occ[w as usize] = fresh;
                    alive.push(fresh);
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
            if alive.len() > opts.cap {
                return Err(DualError::TreeSizeExplosion(opts.cap));
            }
        }
    }
    while cursor < times.len() {
        size_snapshots.push(alive.len());
        cursor += 1;
    }
    Ok(BepHistory {
        torus: *torus,
        ball,
        horizon,
        groups,
        roots,
        excl_marks,
        splits_by_type,
        size_snapshots,
    })
}

impl BepHistory {
    /// Debug dump, one group per line:
    /// `label birth death type death_site traj=t:site;t:site;...`
    /// (death fields are `-` for groups alive at the horizon; the
    /// trajectory field is present when recording was enabled).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            out.push_str(&g.label.to_string());
            out.push_str(&format!(" {:.6}", g.birth));
            match &g.death {
                Some(d) => out.push_str(&format!(" {:.6} {} {}", d.time, d.ty, d.site)),
                None => out.push_str(" - - -"),
            }
            if !g.traj.is_empty() {
                out.push_str(" traj=");
                let parts: Vec<String> = g
                    .traj
                    .iter()
                    .map(|(t, s)| format!("{t:.6}:{s}"))
                    .collect();
                out.push_str(&parts.join(";"));
            }
            out.push('\n');
        }
        out
    }
}

/// Mark-count statistics of an update history, used to compare the
/// backward-traced history of a forward stream with a directly simulated
/// BEP (the two must agree in law).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryStats {
    pub excl_marks: u64,
    pub splits_by_type: Vec<u64>,
    /// Number of particle groups when time 0 is reached.
    pub final_groups: usize,
}

impl From<&BepHistory> for HistoryStats {
    fn from(h: &BepHistory) -> Self {
        HistoryStats {
            excl_marks: h.excl_marks,
            splits_by_type: h.splits_by_type.clone(),
            final_groups: h.alive().len(),
        }
    }
}

/// Traces the update history of `E` at time `horizon` backward through a
/// GC1 stream and returns the marks met on the particle trajectories.
pub fn extract_backward_history(
    ms: &MarkStream,
    dec: &Decomposition,
    initial: &[Site],
    horizon: f64,
) -> Result<HistoryStats, DualError> {
    ms.require(Construction::Gc1)?;
    ms.check_dec(dec)?;
    let torus = *ms.torus();
    let geom = BallGeometry::new(torus.d(), ms.m())?;
    let mut marks: Vec<(f64, MarkKind)> = ms
        .iter()
        .take_while(|m| m.time <= horizon)
        .map(|m| (m.time, m.kind))
        .collect();
    marks.reverse();
    // Occupancy of backward particles; groups are anonymous counters here.
    let mut occ = vec![false; torus.sites()];
    let mut n_groups = 0usize;
    for &u in initial {
        if !occ[u as usize] {
            occ[u as usize] = true;
            n_groups += 1;
        }
    }
    let mut excl_marks = 0u64;
    let mut splits_by_type = vec![0u64; dec.q()];
    for (_, kind) in marks {
        match kind {
            MarkKind::Exclusion { edge } => {
                let (u, v) = torus.edge_endpoints(edge as usize);
                if occ[u as usize] || occ[v as usize] {
                    excl_marks += 1;
                    occ.swap(u as usize, v as usize);
                }
            }
            MarkKind::Glauber { ty, site } => {
                if occ[site as usize] {
                    splits_by_type[ty as usize] += 1;
                    occ[site as usize] = false;
                    n_groups -= 1;
                    for &off in geom.offsets() {
                        let w = torus.offset_site(site, off);
                        if !occ[w as usize] {
                            occ[w as usize] = true;
                            n_groups += 1;
                        }
                    }
                }
            }
            _ => unreachable!("GC1 streams only carry exclusion and Glauber marks"),
        }
    }
    Ok(HistoryStats {
        excl_marks,
        splits_by_type,
        final_groups: n_groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::run_ibp;
    use crate::flip_model::Model;
    use crate::graphical::generate_marks;
    use crate::rng::replica_seed;

    #[test]
    fn zero_horizon_keeps_initial_particles() {
        let t = Torus::new(1, 16).unwrap();
        let model = Model::demasi(0.25).unwrap();
        let h = run_bep(&t, &[2, 9], &model.dec, 0.0, 1, BepOptions::default(), &[]).unwrap();
        assert_eq!(h.alive().len(), 2);
        assert_eq!(h.excl_marks, 0);
        assert_eq!(h.alive_labels(), vec![Label::root(0), Label::root(1)]);
    }

    #[test]
    fn ibp_size_stochastically_dominates_bep_size() {
        // |W_t| (BEP) is dominated by |W~_t| (IBP): merging only loses
        // particles. Empirical CDFs ordered at every level, 4000 runs each.
        let t = Torus::new(1, 32).unwrap();
        let model = Model::demasi(5.0 / 12.0).unwrap();
        let reps = 4000u64;
        let horizon = 1.0;
        let mut bep_sizes = Vec::new();
        let mut ibp_sizes = Vec::new();
        for r in 0..reps {
            let seed = replica_seed(55, r);
            let h = run_bep(
                &t,
                &[0, 7, 19],
                &model.dec,
                horizon,
                seed,
                BepOptions::default(),
                &[],
            )
            .unwrap();
            bep_sizes.push(h.alive().len());
            let tree = run_ibp(3, &model.dec, horizon, seed ^ 0x5555, 1_000_000).unwrap();
            ibp_sizes.push(tree.alive_at(horizon).unwrap().len());
        }
        let max = *ibp_sizes.iter().max().unwrap();
        let cdf = |data: &[usize], k: usize| {
            data.iter().filter(|&&x| x <= k).count() as f64 / data.len() as f64
        };
        for k in 0..=max {
            let fb = cdf(&bep_sizes, k);
            let fi = cdf(&ibp_sizes, k);
            assert!(
                fb >= fi - 0.03,
                "CDF dominance violated at level {k}: BEP {fb} < IBP {fi}"
            );
        }
    }

    #[test]
    fn spins_atop_with_no_events_returns_leaf_spins() {
        let t = Torus::new(1, 16).unwrap();
        let model = Model::demasi(0.25).unwrap();
        let h = run_bep(&t, &[2, 9], &model.dec, 0.0, 1, BepOptions::default(), &[]).unwrap();
        let spins = h.spins_atop(&model.dec, &[1, -1]).unwrap();
        assert_eq!(spins, vec![1, -1]);
    }

    #[test]
    fn history_equals_bep_in_law() {
        // Joint law of (exclusion marks met, total splits, final groups):
        // backward-traced histories of forward GC1 streams vs direct BEP
        // runs, compared by chi-squared on a coarse histogram.
        let t = Torus::new(1, 4).unwrap();
        let model = Model::demasi(5.0 / 12.0).unwrap();
        let horizon = 0.3;
        let reps = 20_000u64;
        let cell = |s: &HistoryStats| -> usize {
            let e = (s.excl_marks as usize).min(5);
            let g = (s.splits_by_type.iter().sum::<u64>() as usize).min(3);
            let f = s.final_groups.min(4);
            (e * 4 + g) * 5 + f
        };
        let mut hist_counts = vec![0u64; 6 * 4 * 5];
        let mut bep_counts = vec![0u64; 6 * 4 * 5];
        for r in 0..reps {
            let seed = replica_seed(123, r);
            let ms = generate_marks(&t, &model.dec, Construction::Gc1, horizon, seed, false)
                .unwrap();
            let hs = extract_backward_history(&ms, &model.dec, &[0, 1], horizon).unwrap();
            hist_counts[cell(&hs)] += 1;
            let bh = run_bep(
                &t,
                &[0, 1],
                &model.dec,
                horizon,
                seed ^ 0xabcd,
                BepOptions::default(),
                &[],
            )
            .unwrap();
            bep_counts[cell(&HistoryStats::from(&bh))] += 1;
        }
        // Two-sample chi-squared over occupied cells (equal sample sizes).
        let mut stat = 0.0f64;
        let mut dof = 0usize;
        for (a, b) in hist_counts.iter().zip(&bep_counts) {
            let tot = (a + b) as f64;
            if tot < 10.0 {
                continue;
            }
            let d = *a as f64 - *b as f64;
            stat += d * d / tot;
            dof += 1;
        }
        let crit = crate::stats::chi2_quantile(dof.saturating_sub(1).max(1) as f64, 0.9999);
        assert!(
            stat < crit,
            "history vs BEP law mismatch: chi2 = {stat} > {crit} (dof {dof})"
        );
    }
}

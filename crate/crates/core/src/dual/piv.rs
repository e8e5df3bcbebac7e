//! Pivotal-set machinery: the exact recursion on materialized IBP trees,
//! the superset recursion on BEP histories, the pruned pivotal-only IBP
//! simulator, and the Monte Carlo survival estimators.

use super::bep::BepHistory;
use super::ibp::{draw_type, IbpTree};
use super::{DualError, Label};
use crate::flip_model::Decomposition;
use crate::rng::{replica_seed, sim_rng, split_seed, tags};
use crate::stats::mean_se;
use rand::RngExt;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

/// Constancy report of one root's update function at the query time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotalReport {
    /// The update function is the constant `value`: the spin atop no longer
    /// depends on the leaf spins.
    Constant { value: i8 },
    /// The update function still depends on its pivotal leaves.
    Alive,
}

/// Pivotal leaves of a set of roots at a query time.
#[derive(Debug, Clone)]
pub struct PivotalSet {
    pub labels: Vec<Label>,
    /// True for the IBP recursion (read-once, exact); false for the BEP
    /// superset recursion.
    pub exact: bool,
    /// One report per root, in root order.
    pub root_reports: Vec<PivotalReport>,
}

impl PivotalSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Rep {
    Const(i8),
    Var,
    Node { piv: u32 },
}

/// Exact pivotal set of a materialized IBP tree at time `t`.
///
/// Bottom-up constant propagation: an internal node restricted by its
/// constant children is constant iff the restricted pivotal set is empty;
/// a leaf is pivotal iff every ancestor edge sits in the restricted pivotal
/// set of its node. Exact because IBP trees are read-once.
pub fn pivotal_ibp(tree: &IbpTree, t: f64, dec: &Decomposition) -> Result<PivotalSet, DualError> {
    tree.check_horizon(t)?;
    let ball = tree.ball();
    let mut rep = vec![Rep::Var; tree.nodes.len()];
    // Post-order evaluation of the time-t view.
    for &root in tree.roots() {
        let mut stack = vec![(root, false)];
        while let Some((id, expanded)) = stack.pop() {
            let node = tree.nodes[id as usize];
            if tree.is_leaf_at(id, t) {
                continue; // leaves stay Var
            }
            if !expanded {
                stack.push((id, true));
                for s in 0..ball {
                    stack.push((node.first_child + s as u32, false));
                }
            } else {
                let mut fixed_mask = 0u32;
                let mut fixed_vals = 0u32;
                for s in 0..ball {
                    if let Rep::Const(v) = rep[(node.first_child + s as u32) as usize] {
                        fixed_mask |= 1 << s;
                        if v > 0 {
                            fixed_vals |= 1 << s;
                        }
                    }
                }
                let (piv, cst) = dec
                    .update(node.ty as usize)
                    .restricted_pivotal(fixed_mask, fixed_vals);
                rep[id as usize] = match cst {
                    Some(v) => Rep::Const(v),
                    None => Rep::Node { piv },
                };
            }
        }
    }
    // Collect leaves reachable through pivotal slots only.
    let mut labels = Vec::new();
    let mut root_reports = Vec::with_capacity(tree.roots().len());
    for &root in tree.roots() {
        match rep[root as usize] {
            Rep::Const(v) => root_reports.push(PivotalReport::Constant { value: v }),
            _ => root_reports.push(PivotalReport::Alive),
        }
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            match rep[id as usize] {
                Rep::Const(_) => {}
                Rep::Var => labels.push(tree.label(id)),
                Rep::Node { piv } => {
                    let node = tree.nodes[id as usize];
                    for s in 0..ball {
                        if piv & (1 << s) != 0 {
                            stack.push(node.first_child + s as u32);
                        }
                    }
                }
            }
        }
    }
    labels.sort();
    Ok(PivotalSet {
        labels,
        exact: true,
        root_reports,
    })
}

/// Superset of the pivotal set of a BEP history at time `t`: the same
/// recursion with every group occurrence treated as an independent
/// argument. Shared groups break read-once-ness, so only the superset
/// direction is guaranteed.
pub fn pivotal_bep_superset(
    hist: &BepHistory,
    t: f64,
    dec: &Decomposition,
) -> Result<PivotalSet, DualError> {
    hist.check_horizon(t)?;
    // Dead groups in death-time descending order: children die strictly
    // later than their parent, so reports are ready when needed.
    let mut dead: Vec<u32> = (0..hist.groups.len() as u32)
        .filter(|&g| hist.groups[g as usize].death.as_ref().is_some_and(|d| d.time <= t))
        .collect();
    dead.sort_by(|a, b| {
        let ta = hist.groups[*a as usize].death.as_ref().unwrap().time;
        let tb = hist.groups[*b as usize].death.as_ref().unwrap().time;
        tb.partial_cmp(&ta).unwrap()
    });
    let mut rep = vec![Rep::Var; hist.groups.len()];
    for &g in &dead {
        let death = hist.groups[g as usize].death.as_ref().unwrap();
        let mut fixed_mask = 0u32;
        let mut fixed_vals = 0u32;
        for &(slot, child, _) in &death.children {
            if let Rep::Const(v) = rep[child as usize] {
                fixed_mask |= 1 << slot;
                if v > 0 {
                    fixed_vals |= 1 << slot;
                }
            }
        }
        let (piv, cst) = dec
            .update(death.ty as usize)
            .restricted_pivotal(fixed_mask, fixed_vals);
        rep[g as usize] = match cst {
            Some(v) => Rep::Const(v),
            None => Rep::Node { piv },
        };
    }
    let mut pivotal_groups = vec![false; hist.groups.len()];
    let mut root_reports = Vec::with_capacity(hist.roots.len());
    for &root in &hist.roots {
        match rep[root as usize] {
            Rep::Const(v) => root_reports.push(PivotalReport::Constant { value: v }),
            _ => root_reports.push(PivotalReport::Alive),
        }
        let mut stack = vec![root];
        while let Some(g) = stack.pop() {
            match rep[g as usize] {
                Rep::Const(_) => {}
                Rep::Var => pivotal_groups[g as usize] = true,
                Rep::Node { piv } => {
                    let death = hist.groups[g as usize].death.as_ref().unwrap();
                    for &(slot, child, _) in &death.children {
                        if piv & (1 << slot) != 0 {
                            stack.push(child);
                        }
                    }
                }
            }
        }
    }
    let mut labels: Vec<Label> = pivotal_groups
        .iter()
        .enumerate()
        .filter(|(_, &p)| p)
        .map(|(g, _)| hist.groups[g].label.clone())
        .collect();
    labels.sort();
    Ok(PivotalSet {
        labels,
        exact: false,
        root_reports,
    })
}

// ---------------------------------------------------------------------------
// Pruned pivotal-only IBP: simulates only the particles that can still
// influence a spin atop. Sound because an argument outside the restricted
// pivotal set never re-enters it (restrictions of monotone functions only
// shrink pivotal sets), so non-pivotal branches are dropped the moment they
// leave the set, together with their whole subtrees.
// ---------------------------------------------------------------------------

pub(crate) const ROOT: u32 = u32::MAX;
const DEAD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Child {
    /// Stable leaf identifier (slab index).
    Leaf(u32),
    Node(u32),
}

#[derive(Debug)]
pub(crate) struct PNode {
    pub parent: u32,
    pub slot: u8,
    pub ty: u16,
    pub fixed_mask: u32,
    pub fixed_vals: u32,
    pub children: Vec<(u8, Child)>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PLeaf {
    pub parent: u32,
    pub slot: u8,
    /// Lattice position; unused by the lattice-free survival estimator.
    pub site: u32,
}

/// The live part of a pivotal genealogy: nodes still carrying pivotal
/// branches plus the current pivotal leaves. Leaves live in a slab keyed by
/// stable ids with a dense side list for uniform clock sampling.
#[derive(Debug)]
pub(crate) struct PivCore {
    pub nodes: Vec<PNode>,
    leaf_data: Vec<PLeaf>,
    free_ids: Vec<u32>,
    /// Dense list of live leaf ids.
    dense: Vec<u32>,
    /// Leaf id -> index in `dense`, or `DEAD`.
    pos: Vec<u32>,
    /// Set when the whole structure became constant.
    pub extinct_value: Option<i8>,
    /// Precomputed unrestricted pivotal data per update type.
    type_piv: Vec<(u32, Option<i8>)>,
}

impl PivCore {
    pub fn new(dec: &Decomposition, root_sites: &[u32]) -> Self {
        // Root particles hang off a virtual ROOT parent at distinct slots.
        let leaf_data: Vec<PLeaf> = root_sites
            .iter()
            .enumerate()
            .map(|(i, &site)| PLeaf {
                parent: ROOT,
                slot: i as u8,
                site,
            })
            .collect();
        let n = leaf_data.len() as u32;
        PivCore {
            nodes: Vec::new(),
            leaf_data,
            free_ids: Vec::new(),
            dense: (0..n).collect(),
            pos: (0..n).collect(),
            extinct_value: None,
            type_piv: dec.entries().iter().map(|(_, f)| f.pivotal()).collect(),
        }
    }

    #[inline]
    pub fn live_count(&self) -> usize {
        self.dense.len()
    }

    #[inline]
    pub fn leaf(&self, id: u32) -> PLeaf {
        self.leaf_data[id as usize]
    }

    #[inline]
    pub fn dense_ids(&self) -> &[u32] {
        &self.dense
    }

    /// The id of the `k`-th live leaf (for uniform sampling).
    #[inline]
    pub fn pick(&self, k: usize) -> u32 {
        self.dense[k]
    }

    /// Upper bound on leaf ids handed out so far (slab length), for sizing
    /// side tables keyed by leaf id.
    #[inline]
    pub fn leaf_slab_len(&self) -> usize {
        self.leaf_data.len()
    }

    #[inline]
    pub fn set_site(&mut self, id: u32, site: u32) {
        self.leaf_data[id as usize].site = site;
    }

    fn alloc_leaf(&mut self, leaf: PLeaf) -> u32 {
        let id = match self.free_ids.pop() {
            Some(id) => {
                self.leaf_data[id as usize] = leaf;
                id
            }
            None => {
                self.leaf_data.push(leaf);
                self.pos.push(DEAD);
                (self.leaf_data.len() - 1) as u32
            }
        };
        self.pos[id as usize] = self.dense.len() as u32;
        self.dense.push(id);
        id
    }

    fn remove_leaf(&mut self, id: u32) -> PLeaf {
        let at = self.pos[id as usize];
        debug_assert!(at != DEAD);
        self.dense.swap_remove(at as usize);
        if (at as usize) < self.dense.len() {
            let moved = self.dense[at as usize];
            self.pos[moved as usize] = at;
        }
        self.pos[id as usize] = DEAD;
        self.free_ids.push(id);
        self.leaf_data[id as usize]
    }

    fn detach_child(&mut self, parent: u32, slot: u8) {
        if parent == ROOT {
            return;
        }
        let children = &mut self.nodes[parent as usize].children;
        if let Some(idx) = children.iter().position(|(s, _)| *s == slot) {
            children.swap_remove(idx);
        }
    }

    fn prune_subtree(&mut self, child: Child, mut on_leaf_removed: impl FnMut(PLeaf)) {
        let mut stack = vec![child];
        while let Some(c) = stack.pop() {
            match c {
                Child::Leaf(id) => {
                    let leaf = self.remove_leaf(id);
                    on_leaf_removed(leaf);
                }
                Child::Node(n) => {
                    let children = std::mem::take(&mut self.nodes[n as usize].children);
                    for (_, c2) in children {
                        stack.push(c2);
                    }
                }
            }
        }
    }

    /// Records that the child at `(parent, slot)` became the constant `v`
    /// (its entry must already be detached) and cascades constancy upward,
    /// pruning branches that fall out of the restricted pivotal sets.
    /// `on_leaf_removed` observes every pruned leaf (lattice bookkeeping).
    fn propagate_fix(
        &mut self,
        dec: &Decomposition,
        mut parent: u32,
        mut slot: u8,
        mut v: i8,
        on_leaf_removed: &mut impl FnMut(PLeaf),
    ) {
        loop {
            if parent == ROOT {
                // A root's function became constant; the tracked structure
                // is extinct once no pivotal leaf remains anywhere.
                if self.dense.is_empty() {
                    self.extinct_value = Some(v);
                }
                return;
            }
            {
                let node = &mut self.nodes[parent as usize];
                node.fixed_mask |= 1 << slot;
                if v > 0 {
                    node.fixed_vals |= 1 << slot;
                }
            }
            let (ty, fixed_mask, fixed_vals) = {
                let node = &self.nodes[parent as usize];
                (node.ty, node.fixed_mask, node.fixed_vals)
            };
            let (piv, cst) = dec
                .update(ty as usize)
                .restricted_pivotal(fixed_mask, fixed_vals);
            // Prune branches that fell out of the pivotal set; the
            // restricted set only ever shrinks, so nothing re-enters.
            let to_prune: Vec<(u8, Child)> = self.nodes[parent as usize]
                .children
                .iter()
                .filter(|(s, _)| piv & (1 << *s) == 0)
                .copied()
                .collect();
            for (s, child) in to_prune {
                self.detach_child(parent, s);
                self.prune_subtree(child, &mut *on_leaf_removed);
            }
            match cst {
                Some(v2) => {
                    let (p, s) = {
                        let node = &self.nodes[parent as usize];
                        debug_assert!(node.children.is_empty());
                        (node.parent, node.slot)
                    };
                    self.detach_child(p, s);
                    parent = p;
                    slot = s;
                    v = v2;
                }
                None => return,
            }
        }
    }

    /// Applies a ring of type `ty` to the live leaf `id`; `child_site(s)`
    /// gives the lattice position of the newborn at pivotal slot `s` (the
    /// lattice-free variant passes zeros). Reports pruned leaves to the
    /// callback and returns the newborn pivotal leaf ids (empty when the
    /// update was constant).
    pub(crate) fn ring(
        &mut self,
        dec: &Decomposition,
        id: u32,
        ty: u16,
        child_site: impl Fn(u8) -> u32,
        on_leaf_removed: &mut impl FnMut(PLeaf),
    ) -> Vec<(u8, u32)> {
        let leaf = self.remove_leaf(id);
        on_leaf_removed(leaf);
        let (piv, cst) = self.type_piv[ty as usize];
        if let Some(v) = cst {
            self.detach_child(leaf.parent, leaf.slot);
            self.propagate_fix(dec, leaf.parent, leaf.slot, v, on_leaf_removed);
            return Vec::new();
        }
        let node_idx = self.nodes.len() as u32;
        let mut newborn = Vec::with_capacity(piv.count_ones() as usize);
        let mut children = Vec::with_capacity(piv.count_ones() as usize);
        for s in 0..dec.ball_size() as u8 {
            if piv & (1 << s) != 0 {
                let new_id = self.alloc_leaf(PLeaf {
                    parent: node_idx,
                    slot: s,
                    site: child_site(s),
                });
                children.push((s, Child::Leaf(new_id)));
                newborn.push((s, new_id));
            }
        }
        self.nodes.push(PNode {
            parent: leaf.parent,
            slot: leaf.slot,
            ty,
            fixed_mask: 0,
            fixed_vals: 0,
            children,
        });
        if leaf.parent != ROOT {
            for (s, child) in &mut self.nodes[leaf.parent as usize].children {
                if *s == leaf.slot {
                    *child = Child::Node(node_idx);
                    break;
                }
            }
        }
        newborn
    }
}

/// Monte Carlo estimates of the IBP survival functions from one root:
/// `phi(t) = P(pivotal set alive)`, `psi(t) = E|pivotal set|`, and
/// `vartheta(t) = E[spin atop | extinct]`, the last one decided purely by
/// the constant report of the pivotal recursion (leaf spins never enter).
#[derive(Debug, Clone)]
pub struct SurvivalEstimates {
    pub times: Vec<f64>,
    /// `(mean, standard error)` per grid time.
    pub phi: Vec<(f64, f64)>,
    pub psi: Vec<(f64, f64)>,
    /// `None` when no replica had gone extinct by that time.
    pub vartheta: Vec<Option<(f64, f64)>>,
    pub reps: u64,
}

pub fn estimate_survival_functions(
    dec: &Decomposition,
    times: &[f64],
    reps: u64,
    seed: u64,
) -> Result<SurvivalEstimates, DualError> {
    if reps < 100 {
        return Err(DualError::TooFewReplicas {
            min: 100,
            got: reps,
        });
    }
    let records: Vec<(Vec<u32>, Vec<Option<i8>>)> = (0..reps)
        .into_par_iter()
        .map(|r| survival_replica(dec, times, replica_seed(seed, r)))
        .collect();
    let mut phi = Vec::with_capacity(times.len());
    let mut psi = Vec::with_capacity(times.len());
    let mut vartheta = Vec::with_capacity(times.len());
    for (k, _) in times.iter().enumerate() {
        let sizes: Vec<f64> = records.iter().map(|(s, _)| s[k] as f64).collect();
        let alive: Vec<f64> = records
            .iter()
            .map(|(s, _)| if s[k] > 0 { 1.0 } else { 0.0 })
            .collect();
        let spins: Vec<f64> = records
            .iter()
            .filter_map(|(_, v)| v[k].map(|s| s as f64))
            .collect();
        phi.push(mean_se(&alive));
        psi.push(mean_se(&sizes));
        vartheta.push(if spins.is_empty() {
            None
        } else {
            Some(mean_se(&spins))
        });
    }
    if vartheta.iter().all(|v| v.is_none()) {
        return Err(DualError::NoExtinctionSamples);
    }
    Ok(SurvivalEstimates {
        times: times.to_vec(),
        phi,
        psi,
        vartheta,
        reps,
    })
}

/// One pruned-IBP replica: `|Piv|` at each grid time and, once extinct, the
/// constant spin atop.
fn survival_replica(dec: &Decomposition, times: &[f64], seed: u64) -> (Vec<u32>, Vec<Option<i8>>) {
    let mut rng = sim_rng(split_seed(seed, tags::DUAL, 1));
    let lambda = dec.lambda();
    let mut core = PivCore::new(dec, &[0]);
    let mut sizes = vec![0u32; times.len()];
    let mut spins = vec![None; times.len()];
    let horizon = times.last().copied().unwrap_or(0.0);
    let mut t = 0.0f64;
    let mut cursor = 0usize;
    loop {
        let n = core.live_count();
        let t_next = if n == 0 {
            f64::INFINITY
        } else {
            t + Exp::new(lambda * n as f64).unwrap().sample(&mut rng)
        };
        while cursor < times.len() && times[cursor] < t_next {
            sizes[cursor] = n as u32;
            if n == 0 {
                spins[cursor] = core.extinct_value;
            }
            cursor += 1;
        }
        if cursor >= times.len() || t_next > horizon {
            break;
        }
        t = t_next;
        let id = core.pick(rng.random_range(0..n));
        let ty = draw_type(dec, &mut rng);
        core.ring(dec, id, ty, |_| 0, &mut |_| {});
    }
    (sizes, spins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::run_ibp;
    use crate::flip_model::Model;
    use crate::stats::wilson95;

    /// Exhaustive pivotality by definition: leaf `j` is pivotal for root `r`
    /// iff some assignment of the other leaves lets flipping `j` flip the
    /// spin atop of `r`.
    fn exhaustive_pivotal(tree: &IbpTree, t: f64, dec: &Decomposition) -> Vec<Label> {
        let alive = tree.alive_at(t).unwrap();
        let k = alive.len();
        assert!(k <= 14, "oracle needs small trees");
        let n_roots = tree.roots().len();
        let mut pivotal = vec![false; k];
        for assign in 0..(1u32 << k) {
            let spins: Vec<i8> = (0..k)
                .map(|j| if assign & (1 << j) != 0 { 1 } else { -1 })
                .collect();
            let base = tree.spins_atop(t, dec, &spins).unwrap();
            for j in 0..k {
                if pivotal[j] {
                    continue;
                }
                let mut flipped = spins.clone();
                flipped[j] = -flipped[j];
                let alt = tree.spins_atop(t, dec, &flipped).unwrap();
                if (0..n_roots).any(|r| alt[r] != base[r]) {
                    pivotal[j] = true;
                }
            }
        }
        let mut labels: Vec<Label> = alive
            .iter()
            .zip(&pivotal)
            .filter(|(_, &p)| p)
            .map(|(&id, _)| tree.label(id))
            .collect();
        labels.sort();
        labels
    }

    fn small_tree(model: &Model, seed: u64) -> Option<IbpTree> {
        for sub in 0..20u64 {
            let tree = run_ibp(1, &model.dec, 0.7, seed * 1000 + sub, 200).ok()?;
            let n = tree.alive_at(0.7).unwrap().len();
            if n <= 12 {
                return Some(tree);
            }
        }
        None
    }

    #[test]
    fn pivotal_matches_exhaustive_oracle() {
        for model in [
            Model::demasi(5.0 / 12.0).unwrap(),
            Model::theta(1.0).unwrap(),
        ] {
            let mut checked = 0;
            for seed in 0..200u64 {
                let Some(tree) = small_tree(&model, seed) else {
                    continue;
                };
                let fast = pivotal_ibp(&tree, 0.7, &model.dec).unwrap();
                let slow = exhaustive_pivotal(&tree, 0.7, &model.dec);
                assert_eq!(fast.labels, slow, "seed {seed}");
                checked += 1;
                if checked >= 60 {
                    break;
                }
            }
            assert!(checked >= 40);
        }
    }

    #[test]
    fn no_rings_pivotal_is_root() {
        let model = Model::demasi(0.25).unwrap();
        let tree = run_ibp(1, &model.dec, 0.0, 1, 10).unwrap();
        let piv = pivotal_ibp(&tree, 0.0, &model.dec).unwrap();
        assert_eq!(piv.labels, vec![Label::root(0)]);
        assert_eq!(piv.root_reports, vec![PivotalReport::Alive]);
    }

    #[test]
    fn oblivious_ring_kills_pivotal_set() {
        let model = Model::constant(1, 1).unwrap();
        for seed in 0..40u64 {
            let tree = run_ibp(1, &model.dec, 1.0, seed, 100_000).unwrap();
            let piv = pivotal_ibp(&tree, 1.0, &model.dec).unwrap();
            if tree.node_count() > 1 {
                assert!(piv.is_empty());
                assert!(matches!(
                    piv.root_reports[0],
                    PivotalReport::Constant { .. }
                ));
            } else {
                assert_eq!(piv.len(), 1);
            }
        }
    }

    #[test]
    fn pruned_sim_matches_materialized_distribution() {
        // Two routes to P(pivotal set alive at t): the pruned simulator and
        // the exact recursion over full trees.
        let model = Model::demasi(5.0 / 12.0).unwrap();
        let t = 1.0;
        let reps = 4000u64;
        let mut full_alive = 0u64;
        let mut full_sizes = Vec::new();
        for r in 0..reps {
            let tree = run_ibp(1, &model.dec, t, replica_seed(77, r), 1_000_000).unwrap();
            let piv = pivotal_ibp(&tree, t, &model.dec).unwrap();
            if !piv.is_empty() {
                full_alive += 1;
            }
            full_sizes.push(piv.len() as f64);
        }
        let est = estimate_survival_functions(&model.dec, &[t], reps, 99).unwrap();
        let (lo, hi) = wilson95(full_alive, reps);
        let (phi_hat, phi_se) = est.phi[0];
        assert!(
            phi_hat + 3.0 * phi_se >= lo && phi_hat - 3.0 * phi_se <= hi,
            "phi {phi_hat} (se {phi_se}) vs full-tree [{lo},{hi}]"
        );
        let (full_mean, full_se) = mean_se(&full_sizes);
        let (psi_hat, psi_se) = est.psi[0];
        let gap = (psi_hat - full_mean).abs();
        assert!(
            gap <= 3.0 * (psi_se + full_se),
            "psi {psi_hat} vs {full_mean}"
        );
    }

    #[test]
    fn constant_model_survival_closed_form() {
        // c = 1: lambda = 2, extinction at the first ring: phi(t) = e^{-2t}.
        let model = Model::constant(1, 1).unwrap();
        let times = [0.25, 0.5, 1.0];
        let est = estimate_survival_functions(&model.dec, &times, 20_000, 3).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let expect = (-2.0 * t).exp();
            let (phi, se) = est.phi[k];
            assert!(
                (phi - expect).abs() <= 3.0 * se,
                "t={t}: {phi} vs {expect} (se {se})"
            );
            // psi = phi here: the set is {root} until the first ring.
            let (psi, pse) = est.psi[k];
            assert!((psi - expect).abs() <= 3.0 * pse);
        }
        // rho_bar = 0: conditional spin atop is a fair coin.
        let v = est.vartheta[2].unwrap();
        assert!(v.0.abs() <= 3.0 * v.1 + 1e-12);
    }

    #[test]
    fn too_few_replicas_rejected() {
        let model = Model::constant(1, 1).unwrap();
        assert!(matches!(
            estimate_survival_functions(&model.dec, &[1.0], 50, 0),
            Err(DualError::TooFewReplicas { .. })
        ));
    }
}

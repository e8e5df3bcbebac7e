//! The idealized branching process: lattice-free, every particle carries
//! independent Glauber clocks of rates `lambda_1, ..., lambda_q`; a ring of
//! type `i` replaces the particle by `|B(0,m)|` fresh children.

use super::{DualError, Label};
use crate::flip_model::Decomposition;
use crate::rng::{sim_rng, split_seed, tags};
use rand::RngExt;
use rand_distr::{Distribution, Exp};

const NO_CHILD: u32 = u32::MAX;
pub(crate) const ROOT_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
pub(crate) struct IbpNode {
    pub parent: u32,
    pub slot: u8,
    /// Time the particle was removed; `INFINITY` while it is a leaf.
    pub split_time: f64,
    /// Update type of the removing ring.
    pub ty: u16,
    /// First child index; children are contiguous, one per ball slot.
    pub first_child: u32,
    pub birth: f64,
}

/// A materialized IBP genealogy up to a horizon.
#[derive(Debug, Clone)]
pub struct IbpTree {
    pub(crate) nodes: Vec<IbpNode>,
    roots: Vec<u32>,
    ball: usize,
    horizon: f64,
}

impl IbpTree {
    pub(crate) fn from_raw(nodes: Vec<IbpNode>, roots: Vec<u32>, ball: usize, horizon: f64) -> Self {
        IbpTree {
            nodes,
            roots,
            ball,
            horizon,
        }
    }

    #[inline]
    pub fn ball(&self) -> usize {
        self.ball
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn roots(&self) -> &[u32] {
        &self.roots
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

    #[inline]
    pub(crate) fn is_leaf_at(&self, id: u32, t: f64) -> bool {
        self.nodes[id as usize].split_time > t
    }

    pub fn label(&self, id: u32) -> Label {
        let mut path = Vec::new();
        let mut cur = id;
        loop {
            let node = &self.nodes[cur as usize];
            if node.parent == ROOT_PARENT {
                path.reverse();
                return Label {
                    root: cur,
                    path,
                };
            }
            path.push(node.slot);
            cur = node.parent;
        }
    }

    /// Particles alive at time `t` (leaves of the time-`t` view) in
    /// depth-first order: roots in order, children by ball slot. This order
    /// indexes leaf-spin vectors.
    pub fn alive_at(&self, t: f64) -> Result<Vec<u32>, DualError> {
        self.check_horizon(t)?;
        let mut out = Vec::new();
        let mut stack: Vec<u32> = self.roots.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            debug_assert!(node.birth <= t);
            if self.is_leaf_at(id, t) {
                out.push(id);
            } else {
                for s in (0..self.ball).rev() {
                    stack.push(node.first_child + s as u32);
                }
            }
        }
        Ok(out)
    }

    /// Evaluates the spins atop: assigns `leaf_spins[i]` to the `i`-th alive
    /// leaf (in `alive_at(t)` order) and folds each removed particle's spin
    /// through its update function, bottom up. Returns one spin per root.
    pub fn spins_atop(&self, t: f64, dec: &Decomposition, leaf_spins: &[i8]) -> Result<Vec<i8>, DualError> {
        let alive = self.alive_at(t)?;
        if leaf_spins.len() != alive.len() {
            return Err(DualError::MissingLeafSpin {
                expected: alive.len(),
                got: leaf_spins.len(),
            });
        }
        let mut value = vec![0i8; self.nodes.len()];
        for (id, &s) in alive.iter().zip(leaf_spins) {
            value[*id as usize] = s;
        }
        // Post-order by explicit stack: children first.
        let mut out = Vec::with_capacity(self.roots.len());
        for &root in &self.roots {
            let mut stack = vec![(root, false)];
            while let Some((id, expanded)) = stack.pop() {
                let node = self.nodes[id as usize];
                if self.is_leaf_at(id, t) {
                    continue;
                }
                if !expanded {
                    stack.push((id, true));
                    for s in 0..self.ball {
                        stack.push((node.first_child + s as u32, false));
                    }
                } else {
                    let mut mask = 0u32;
                    for s in 0..self.ball {
                        if value[(node.first_child + s as u32) as usize] > 0 {
                            mask |= 1 << s;
                        }
                    }
                    value[id as usize] = dec.update(node.ty as usize).eval(mask);
                }
            }
            out.push(value[root as usize]);
        }
        Ok(out)
    }
}

impl IbpTree {
    /// Debug dump, one particle per line:
    /// `label birth death type` (death fields are `-` for particles alive
    /// at the horizon). The IBP is lattice-free, so there is no trajectory
    /// field.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for id in 0..self.nodes.len() as u32 {
            let node = &self.nodes[id as usize];
            out.push_str(&self.label(id).to_string());
            out.push_str(&format!(" {:.6}", node.birth));
            if node.split_time.is_finite() {
                out.push_str(&format!(" {:.6} {}", node.split_time, node.ty));
            } else {
                out.push_str(" - -");
            }
            out.push('\n');
        }
        out
    }
}

/// Simulates the IBP from `n_roots` independent root particles up to the
/// horizon. Every alive particle carries total ring rate `lambda`; types
/// are drawn proportionally to `lambda_i`.
pub fn run_ibp(
    n_roots: usize,
    dec: &Decomposition,
    horizon: f64,
    seed: u64,
    cap: usize,
) -> Result<IbpTree, DualError> {
    let ball = dec.ball_size();
    let lambda = dec.lambda();
    let mut rng = sim_rng(split_seed(seed, tags::DUAL, 0));
    let mut nodes: Vec<IbpNode> = (0..n_roots)
        .map(|_| IbpNode {
            parent: ROOT_PARENT,
            slot: 0,
            split_time: f64::INFINITY,
            ty: 0,
            first_child: NO_CHILD,
            birth: 0.0,
        })
        .collect();
    let roots: Vec<u32> = (0..n_roots as u32).collect();
    let mut alive: Vec<u32> = roots.clone();
    let mut t = 0.0f64;
    while !alive.is_empty() {
        let rate = lambda * alive.len() as f64;
        t += Exp::new(rate).unwrap().sample(&mut rng);
        if t > horizon {
            break;
        }
        let pick = rng.random_range(0..alive.len());
        let id = alive.swap_remove(pick);
        let ty = draw_type(dec, &mut rng);
        let first_child = nodes.len() as u32;
        {
            let node = &mut nodes[id as usize];
            node.split_time = t;
            node.ty = ty;
            node.first_child = first_child;
        }
        for s in 0..ball {
            nodes.push(IbpNode {
                parent: id,
                slot: s as u8,
                split_time: f64::INFINITY,
                ty: 0,
                first_child: NO_CHILD,
                birth: t,
            });
            alive.push(first_child + s as u32);
        }
        if alive.len() > cap {
            return Err(DualError::TreeSizeExplosion(cap));
        }
    }
    Ok(IbpTree {
        nodes,
        roots,
        ball,
        horizon,
    })
}

pub(crate) fn draw_type(dec: &Decomposition, rng: &mut impl rand::Rng) -> u16 {
    use rand::RngExt;
    let mut pick = rng.random::<f64>() * dec.lambda();
    for (i, (rate, _)) in dec.entries().iter().enumerate() {
        if pick < *rate {
            return i as u16;
        }
        pick -= rate;
    }
    (dec.q() - 1) as u16
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flip_model::{decompose, Model};
    use crate::rng::replica_seed;
    use crate::stats::mean_se;

    #[test]
    fn zero_horizon_keeps_roots() {
        let model = Model::demasi(0.25).unwrap();
        let tree = run_ibp(3, &model.dec, 0.0, 1, 1000).unwrap();
        assert_eq!(tree.node_count(), 3);
        assert_eq!(tree.alive_at(0.0).unwrap().len(), 3);
        assert!(tree.alive_at(0.1).is_err());
    }

    #[test]
    fn mean_growth_matches_linear_birth_ode() {
        // d/dt E|W| = 2m lambda E|W| for d=1, m=1.
        let model = Model::demasi(5.0 / 12.0).unwrap();
        let lambda = model.dec.lambda();
        let t = 0.6;
        let expect = (2.0 * lambda * t).exp();
        let reps = 4000u64;
        let mut sizes = Vec::with_capacity(reps as usize);
        for r in 0..reps {
            let tree = run_ibp(1, &model.dec, t, replica_seed(5, r), 100_000).unwrap();
            sizes.push(tree.alive_at(t).unwrap().len() as f64);
        }
        let (mean, se) = mean_se(&sizes);
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "mean {mean} vs {expect} (se {se})"
        );
    }

    #[test]
    fn second_moment_respects_gronwall_bound() {
        // E|W_t|^2 <= e^{(4m + 4m^2) lambda t} |E|^2 for d=1.
        let model = Model::demasi(5.0 / 12.0).unwrap();
        let lambda = model.dec.lambda();
        let t = 0.5;
        let kappa = 8.0 * lambda;
        let reps = 10_000u64;
        let mut sq = Vec::with_capacity(reps as usize);
        for r in 0..reps {
            let tree = run_ibp(2, &model.dec, t, replica_seed(9, r), 100_000).unwrap();
            let n = tree.alive_at(t).unwrap().len() as f64;
            sq.push(n * n);
        }
        let (mean, se) = mean_se(&sq);
        let bound = (kappa * t).exp() * 4.0;
        assert!(
            mean - 3.0 * se <= bound,
            "second moment {mean} (se {se}) exceeds bound {bound}"
        );
    }

    #[test]
    fn explosion_guard() {
        let model = Model::demasi(5.0 / 12.0).unwrap();
        assert!(matches!(
            run_ibp(1, &model.dec, 8.0, 3, 50),
            Err(DualError::TreeSizeExplosion(50))
        ));
    }

    #[test]
    fn spins_atop_identity_and_oblivious() {
        let model = Model::constant(1, 1).unwrap();
        // No rings: spins atop = leaf spins.
        let tree = run_ibp(2, &model.dec, 0.0, 4, 100).unwrap();
        let spins = tree.spins_atop(0.0, &model.dec, &[1, -1]).unwrap();
        assert_eq!(spins, vec![1, -1]);
        // Constant model: once the root rang, the root spin is the oblivious
        // value regardless of leaf spins.
        let dec = decompose(&crate::flip_model::builtin_constant(1, 1).unwrap()).unwrap();
        for seed in 0..50u64 {
            let tree = run_ibp(1, &dec, 1.0, seed, 10_000).unwrap();
            let alive = tree.alive_at(1.0).unwrap();
            if tree.node_count() == 1 {
                continue; // no ring
            }
            let plus = tree.spins_atop(1.0, &dec, &vec![1; alive.len()]).unwrap();
            let minus = tree.spins_atop(1.0, &dec, &vec![-1; alive.len()]).unwrap();
            assert_eq!(plus, minus);
        }
    }

    #[test]
    fn labels_reconstruct() {
        let model = Model::demasi(0.25).unwrap();
        let tree = run_ibp(2, &model.dec, 0.8, 11, 100_000).unwrap();
        for &id in tree.alive_at(0.8).unwrap().iter().take(10) {
            let label = tree.label(id);
            assert!(label.root < 2);
            // Walking down from the root by the path reaches the node.
            let mut cur = label.root;
            for &s in &label.path {
                cur = tree.nodes[cur as usize].first_child + s as u32;
            }
            assert_eq!(cur, id);
        }
    }
}

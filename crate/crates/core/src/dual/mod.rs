//! The update history viewed backward in time: the idealized branching
//! process (IBP), the branching exclusion process (BEP), spins atop,
//! pivotal-set tracking, and the BEP-IBP coupling.
//!
//! Pivotal sets are the engine of everything here. A particle's update
//! function is an increasing boolean function of the spins alive at the
//! horizon; it degenerates to a constant exactly when its pivotal set
//! empties, and from then on the spin atop no longer depends on the leaves.
//! The IBP is read-once (all leaves distinct), so pivotal sets factor
//! through the genealogy: a leaf is pivotal iff every ancestor edge is
//! pivotal in that node's restriction by its constant children. The same
//! recursion on the BEP, treating shared groups as independent arguments,
//! yields a guaranteed superset.

mod bep;
mod coupling;
mod ibp;
mod piv;

pub use bep::{extract_backward_history, run_bep, BepHistory, BepOptions, HistoryStats};
pub use coupling::{couple_bep_ibp, coupling_failure_probability, CouplingOutcome, CouplingRun};
pub use ibp::{run_ibp, IbpTree};
pub use piv::{
    estimate_survival_functions, pivotal_bep_superset, pivotal_ibp, PivotalReport, PivotalSet,
    SurvivalEstimates,
};

use thiserror::Error;

/// Default cap on simultaneously alive particles/groups.
pub const DEFAULT_PARTICLE_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum DualError {
    #[error("alive particle count exceeded the cap of {0}")]
    TreeSizeExplosion(usize),
    #[error("query time {t} exceeds the simulated horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },
    #[error("leaf spins: expected {expected} values, got {got}")]
    MissingLeafSpin { expected: usize, got: usize },
    #[error("no extinction samples to condition on")]
    NoExtinctionSamples,
    #[error("replicas must be >= {min}, got {got}")]
    TooFewReplicas { min: u64, got: u64 },
    #[error(transparent)]
    Graphical(#[from] crate::graphical::GraphicalError),
    #[error(transparent)]
    Lattice(#[from] crate::lattice::LatticeError),
}

/// A particle label: a root identifier followed by the path of ball-offset
/// positions taken at each split. Lexicographic order; the children of `w`
/// are `w` extended by one ball position.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub root: u32,
    pub path: Vec<u8>,
}

impl Label {
    pub fn root(root: u32) -> Self {
        Label {
            root,
            path: Vec::new(),
        }
    }

    pub fn child(&self, slot: u8) -> Self {
        let mut path = self.path.clone();
        path.push(slot);
        Label {
            root: self.root,
            path,
        }
    }

    pub fn is_descendant_of(&self, other: &Label) -> bool {
        self.root == other.root
            && self.path.len() > other.path.len()
            && self.path[..other.path.len()] == other.path[..]
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.root)?;
        for p in &self.path {
            write!(f, ".{p}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_order_and_descendants() {
        let w = Label::root(3);
        let c0 = w.child(0);
        let c1 = w.child(1);
        assert!(w < c0 && c0 < c1);
        assert!(c0.is_descendant_of(&w));
        assert!(!w.is_descendant_of(&c0));
        assert!(!c1.is_descendant_of(&c0));
        assert!(Label::root(2) < w);
        assert_eq!(c0.child(2).to_string(), "3.0.2");
    }
}

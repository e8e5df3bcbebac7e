//! Statistical estimators and theorem checks: exact and empirical total
//! variation, mixing profiles with upper (coalescence) and lower
//! (magnetization statistic) estimates, correlation and replacement checks,
//! the product-measure perturbation bound, and random-walk
//! anticoncentration with the IP(2) dominance coupling.

mod correlation;
mod mixing;
mod perturbation;
mod tv;
mod walks;

pub use correlation::{correlation_report, replacement_check, CorrelationReport, ReplacementReport};
pub use mixing::{
    estimate_mixing_time, mixing_profile, MixingParams, MixingProfile, MixingTimeEstimate,
};
pub use perturbation::{perturbation_bound_check, PerturbationBound, PerturbationInstance};
pub use tv::{product_law, threshold_tv, tv_exact_small};
pub use walks::{
    anticoncentration, ip2_dominance_check, srw_max_occupation, AnticoncentrationEstimate,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("distributions live on different supports ({a} vs {b} states)")]
    SupportMismatch { a: usize, b: usize },
    #[error("subset too large: |E| = {0} exceeds 8")]
    SetTooLarge(usize),
    #[error("|rho| must be < 1, got {0}")]
    RhoDegenerate(f64),
    #[error("walkers must start on distinct sites")]
    CoincidentStart,
    #[error("domination precondition violated: SRW distances {srw:?} do not precede IP(2) distances {ip2:?}")]
    PreconditionViolated { srw: Vec<u32>, ip2: Vec<u32> },
    #[error("side length must be even for the lumped distance chains, got {0}")]
    OddSide(u32),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Graphical(#[from] crate::graphical::GraphicalError),
    #[error(transparent)]
    Lattice(#[from] crate::lattice::LatticeError),
}

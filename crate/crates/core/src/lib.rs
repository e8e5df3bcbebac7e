//! Simulation laboratory for the attractive Glauber-Exclusion process on the
//! d-dimensional torus (d = 1 or 2).
//!
//! The process superposes single-site Glauber flips, driven by a strictly
//! positive local flip-rate function `c` on the window `B(0,m)`, with a
//! symmetric simple exclusion process accelerated by `L^2`. The library
//! provides:
//!
//! * [`lattice`] — torus geometry, spin configurations, local windows;
//! * [`flip_model`] — rate tables, the attractiveness check, the monotone
//!   boolean decomposition that rewrites every attractive `c` as a rate
//!   mixture of increasing update functions, and the reaction polynomial
//!   `R(rho)` with its temperature-regime classification;
//! * [`hydro`] — the limit ODE `rho' = R(rho)` and the survival/average
//!   functions derived from its extreme solutions;
//! * [`graphical`] — Poisson mark streams (graphical constructions 1-3),
//!   forward evolution, the grand monotone coupling, the independent-site
//!   process `Z`, red/blue/green regions and the averaging process;
//! * [`dual`] — the update history run backward: branching exclusion process
//!   (BEP), its idealized lattice-free counterpart (IBP), exact pivotal-set
//!   tracking and the BEP-IBP coupling with its success probability;
//! * [`analysis`] — total-variation machinery, mixing profiles and
//!   mixing-time estimation, correlation and replacement checks, the
//!   product-measure perturbation bound and random-walk anticoncentration.
//!
//! Everything is driven deterministically from explicit seeds; replicas are
//! parallelized over seeds and merged in replica order, so results do not
//! depend on the worker count.

pub mod analysis;
pub mod dual;
pub mod flip_model;
pub mod graphical;
pub mod hydro;
pub mod lattice;
pub mod rng;
pub mod stats;

pub use flip_model::Model;

//! Mixing profiles and mixing-time estimation.
//!
//! The upper estimate is the coalescence probability of the grand coupling
//! started from the two extreme configurations (a valid upper bound on
//! `max_x d_TV` by monotonicity); the lower estimate projects onto the
//! total magnetization and compares the law at time `t` against a
//! stationary proxy sampled at `T* >> t`.
//!
//! The driver batches marks per grid interval: the total Poisson count, a
//! binomial split into site events, and uniform positions for those events
//! reproduce the law of the timestamped stream exactly at the grid times
//! while skipping the per-mark exponential gaps. Event rates reach
//! `d L^(d+2)`, so this is the hot loop of the whole crate.

use super::tv::threshold_tv;
use super::AnalysisError;
use crate::flip_model::Model;
use crate::graphical::{MAX_SIDE_D1, MAX_SIDE_D2};
use crate::lattice::Torus;
use crate::rng::{replica_seed, sim_rng, split_seed, tags, SimRng};
use crate::stats::{probs_from_counts, tv_from_probs, wilson95};
use rand::RngExt;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use std::collections::HashSet;

/// GC2 dynamics batched per interval, for one or two coupled
/// configurations on the same marks and refresh draws.
struct BatchedGc2<'a> {
    torus: &'a Torus,
    model: &'a Model,
    total_rate: f64,
    p_site: f64,
    n_edges: u64,
    n_sites: u64,
    site_rate: f64,
    /// Component thresholds within a site event: refresh first, then the
    /// non-oblivious types.
    comps: Vec<(f64, u16)>,
    refresh_plus_prob: f64,
}

const REFRESH: u16 = u16::MAX;

impl<'a> BatchedGc2<'a> {
    fn new(torus: &'a Torus, model: &'a Model) -> Self {
        let l2 = (torus.side() as f64).powi(2);
        let n_edges = torus.edges() as u64;
        let n_sites = torus.sites() as u64;
        let dec = &model.dec;
        let mut comps = vec![(dec.refresh_rate(), REFRESH)];
        for (i, (rate, _)) in dec.entries().iter().enumerate().skip(2) {
            comps.push((*rate, i as u16));
        }
        let site_rate: f64 = comps.iter().map(|(r, _)| r).sum();
        let total_rate = n_edges as f64 * l2 + n_sites as f64 * site_rate;
        BatchedGc2 {
            torus,
            model,
            total_rate,
            p_site: n_sites as f64 * site_rate / total_rate,
            n_edges,
            n_sites,
            site_rate,
            comps,
            refresh_plus_prob: (1.0 + dec.rho_bar()) / 2.0,
        }
    }

    #[inline]
    fn lemire(word: u64, n: u64) -> u64 {
        ((word as u128 * n as u128) >> 64) as u64
    }

    #[inline]
    fn edge_endpoints(&self, e: u64) -> (u32, u32) {
        if self.torus.d() == 1 {
            let u = e as u32;
            let v = if u + 1 == self.n_sites as u32 { 0 } else { u + 1 };
            (u, v)
        } else {
            self.torus.edge_endpoints(e as usize)
        }
    }

    /// Draws the site-event layout of an interval: total mark count, and
    /// the sorted positions of the site events among them.
    fn interval_layout(&self, dt: f64, rng: &mut SimRng) -> (u64, Vec<u64>) {
        let n_total = Poisson::new(self.total_rate * dt)
            .map(|p| p.sample(rng) as u64)
            .unwrap_or(0);
        if n_total == 0 {
            return (0, Vec::new());
        }
        let n_site = Binomial::new(n_total, self.p_site).unwrap().sample(rng);
        let mut seen = HashSet::with_capacity(n_site as usize);
        let mut positions = Vec::with_capacity(n_site as usize);
        while (positions.len() as u64) < n_site {
            let q = Self::lemire(rng.random::<u64>(), n_total);
            if seen.insert(q) {
                positions.push(q);
            }
        }
        positions.sort_unstable();
        (n_total, positions)
    }
}

/// Two coupled trajectories plus bookkeeping for coalescence and the
/// magnetization statistic. After coalescence only one array is advanced.
struct PairState {
    plus: Vec<i8>,
    minus: Vec<i8>,
    diff: Vec<bool>,
    diff_count: usize,
    mag_plus: i64,
}

impl PairState {
    fn new(torus: &Torus) -> Self {
        let n = torus.sites();
        PairState {
            plus: vec![1; n],
            minus: vec![-1; n],
            diff: vec![true; n],
            diff_count: n,
            mag_plus: n as i64,
        }
    }

    #[inline]
    fn coalesced(&self) -> bool {
        self.diff_count == 0
    }
}

impl BatchedGc2<'_> {
    /// Advances the coupled pair by one interval.
    fn advance_pair(&self, st: &mut PairState, dt: f64, rng: &mut SimRng) {
        let (n_total, site_positions) = self.interval_layout(dt, rng);
        let mut next_site = site_positions.iter().copied();
        let mut pending = next_site.next();
        let geom = self.model.dec.geometry();
        for q in 0..n_total {
            if pending == Some(q) {
                pending = next_site.next();
                // Site event: location, component, effect.
                let u = Self::lemire(rng.random::<u64>(), self.n_sites) as u32;
                let mut pick = rng.random::<f64>() * self.site_rate;
                let mut comp = self.comps.last().unwrap().1;
                for &(rate, c) in &self.comps {
                    if pick < rate {
                        comp = c;
                        break;
                    }
                    pick -= rate;
                }
                if comp == REFRESH {
                    let val: i8 = if rng.random::<f64>() < self.refresh_plus_prob {
                        1
                    } else {
                        -1
                    };
                    self.set_site(st, u, val, val);
                } else {
                    let f = self.model.dec.update(comp as usize);
                    let mut mask_p = 0u32;
                    let mut mask_m = 0u32;
                    for (j, &off) in geom.offsets().iter().enumerate() {
                        let w = self.torus.offset_site(u, off) as usize;
                        mask_p |= (((st.plus[w] >> 1) & 1) as u32 ^ 1) << j;
                        if !st.coalesced() {
                            mask_m |= (((st.minus[w] >> 1) & 1) as u32 ^ 1) << j;
                        }
                    }
                    let vp = f.eval(mask_p);
                    let vm = if st.coalesced() { vp } else { f.eval(mask_m) };
                    self.set_site(st, u, vp, vm);
                }
            } else {
                // Exclusion mark: swap contents on both trajectories.
                let e = Self::lemire(rng.random::<u64>(), self.n_edges);
                let (u, v) = self.edge_endpoints(e);
                let (u, v) = (u as usize, v as usize);
                st.plus.swap(u, v);
                if !st.coalesced() {
                    st.minus.swap(u, v);
                    st.diff.swap(u, v);
                }
            }
        }
    }

    #[inline]
    fn set_site(&self, st: &mut PairState, u: u32, vp: i8, vm: i8) {
        let u = u as usize;
        st.mag_plus += (vp - st.plus[u]) as i64;
        st.plus[u] = vp;
        if !st.coalesced() {
            st.minus[u] = vm;
            let was = st.diff[u];
            let now = vp != vm;
            st.diff[u] = now;
            match (was, now) {
                (true, false) => st.diff_count -= 1,
                (false, true) => st.diff_count += 1,
                _ => {}
            }
        }
    }

    /// Advances a single trajectory (stationary-proxy chain).
    fn advance_single(&self, spins: &mut [i8], mag: &mut i64, dt: f64, rng: &mut SimRng) {
        let (n_total, site_positions) = self.interval_layout(dt, rng);
        let mut next_site = site_positions.iter().copied();
        let mut pending = next_site.next();
        let geom = self.model.dec.geometry();
        for q in 0..n_total {
            if pending == Some(q) {
                pending = next_site.next();
                let u = Self::lemire(rng.random::<u64>(), self.n_sites) as usize;
                let mut pick = rng.random::<f64>() * self.site_rate;
                let mut comp = self.comps.last().unwrap().1;
                for &(rate, c) in &self.comps {
                    if pick < rate {
                        comp = c;
                        break;
                    }
                    pick -= rate;
                }
                let val = if comp == REFRESH {
                    if rng.random::<f64>() < self.refresh_plus_prob {
                        1
                    } else {
                        -1
                    }
                } else {
                    let f = self.model.dec.update(comp as usize);
                    let mut mask = 0u32;
                    for (j, &off) in geom.offsets().iter().enumerate() {
                        let w = self.torus.offset_site(u as u32, off) as usize;
                        mask |= (((spins[w] >> 1) & 1) as u32 ^ 1) << j;
                    }
                    f.eval(mask)
                };
                *mag += (val - spins[u]) as i64;
                spins[u] = val;
            } else {
                let e = Self::lemire(rng.random::<u64>(), self.n_edges);
                let (u, v) = self.edge_endpoints(e);
                spins.swap(u as usize, v as usize);
            }
        }
    }
}

/// Runs one GC2 trajectory from `init` to time `t` with the batched driver
/// and returns the final spins. Shared by the correlation estimators.
pub(crate) fn run_single_chain(
    model: &Model,
    torus: &Torus,
    t: f64,
    init: Vec<i8>,
    rng: &mut SimRng,
) -> Vec<i8> {
    let mut spins = init;
    if t > 0.0 {
        let driver = BatchedGc2::new(torus, model);
        let mut mag: i64 = spins.iter().map(|&s| s as i64).sum();
        driver.advance_single(&mut spins, &mut mag, t, rng);
    }
    spins
}

#[derive(Debug, Clone)]
pub struct MixingParams {
    /// Sorted grid of observation times.
    pub times: Vec<f64>,
    /// Coupled replicas (drives both the upper estimate and the
    /// magnetization samples of the lower estimate).
    pub reps: u64,
    /// Whether to run the stationary-proxy chain for the lower estimate.
    pub compute_lower: bool,
    /// Number of stationary-proxy samples.
    pub n_pi: u64,
    /// Burn-in of the proxy chain, in units of `ln N / (2|R'(rho*)|)`.
    pub pi_burn_factor: f64,
    /// Spacing between proxy samples, in the same units.
    pub pi_spacing_factor: f64,
    pub force_large: bool,
}

impl Default for MixingParams {
    fn default() -> Self {
        MixingParams {
            times: Vec::new(),
            reps: 1000,
            compute_lower: true,
            n_pi: 500,
            pi_burn_factor: 4.0,
            pi_spacing_factor: 1.0,
            force_large: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MixingProfile {
    pub times: Vec<f64>,
    /// Coalescence-based upper estimates with Wilson 95% bands.
    pub d_up: Vec<f64>,
    pub d_up_lo: Vec<f64>,
    pub d_up_hi: Vec<f64>,
    /// Magnetization-statistic lower estimates (best threshold event);
    /// empty when the lower estimate was not computed.
    pub d_low: Vec<f64>,
    /// Same statistic restricted to proxy samples taken after twice the
    /// burn-in: a sensitivity report on the stationary proxy.
    pub d_low_doubled_burn: Vec<f64>,
    /// Half-l1 distance between the magnetization histograms (the full
    /// best-event bound over bins; noisier than the threshold version).
    pub d_low_half_l1: Vec<f64>,
    pub reps: u64,
    pub n_pi: u64,
    pub seed: u64,
    /// Set when the model's regime is not High (estimates still computed).
    pub regime_warning: bool,
}

/// Runs the mixing-profile experiment: `reps` coupled pairs from the two
/// extreme configurations (upper estimate and time-t magnetization law) and
/// one long stationary-proxy chain (lower estimate).
pub fn mixing_profile(
    model: &Model,
    torus: &Torus,
    params: &MixingParams,
    seed: u64,
) -> Result<MixingProfile, AnalysisError> {
    let max = match torus.d() {
        1 => MAX_SIDE_D1,
        _ => MAX_SIDE_D2,
    };
    if torus.side() > max && !params.force_large {
        return Err(AnalysisError::Graphical(
            crate::graphical::GraphicalError::GuardTripped {
                l: torus.side(),
                max,
                d: torus.d(),
            },
        ));
    }
    torus.check_radius(model.dec.m())?;
    let times = &params.times;
    if times.is_empty() || times.windows(2).any(|w| w[0] >= w[1]) || times[0] < 0.0 {
        return Err(AnalysisError::InvalidParam(
            "times must be sorted, positive and non-empty".into(),
        ));
    }
    let driver = BatchedGc2::new(torus, model);

    // Coupled replicas: per grid time, disagreement flag and M(X+_t).
    let per_rep: Vec<(Vec<bool>, Vec<i64>)> = (0..params.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = sim_rng(split_seed(replica_seed(seed, r), tags::MARKS, 10));
            let mut st = PairState::new(torus);
            let mut disagree = Vec::with_capacity(times.len());
            let mut mags = Vec::with_capacity(times.len());
            let mut prev = 0.0;
            for &t in times {
                driver.advance_pair(&mut st, t - prev, &mut rng);
                prev = t;
                disagree.push(!st.coalesced());
                mags.push(st.mag_plus);
            }
            (disagree, mags)
        })
        .collect();

    let mut d_up = Vec::with_capacity(times.len());
    let mut d_up_lo = Vec::with_capacity(times.len());
    let mut d_up_hi = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let not_coalesced = per_rep.iter().filter(|(d, _)| d[k]).count() as u64;
        let (lo, hi) = wilson95(not_coalesced, params.reps);
        d_up.push(not_coalesced as f64 / params.reps as f64);
        d_up_lo.push(lo);
        d_up_hi.push(hi);
    }

    let (mut d_low, mut d_low2, mut d_low_l1) = (Vec::new(), Vec::new(), Vec::new());
    if params.compute_lower {
        // Stationary proxy: one long chain, sampled after burn-in; the
        // doubled-burn-in subset reports proxy sensitivity.
        let slope = model.regime.slope.unwrap_or(-1.0).abs().max(1e-9);
        let unit = (torus.sites() as f64).ln() / (2.0 * slope);
        let burn = params.pi_burn_factor * unit;
        let spacing = (params.pi_spacing_factor * unit).max(1e-3);
        let mut rng = sim_rng(split_seed(seed, tags::MARKS, 11));
        let mut spins = vec![1i8; torus.sites()];
        let mut mag = torus.sites() as i64;
        driver.advance_single(&mut spins, &mut mag, burn, &mut rng);
        let mut pi_samples = Vec::with_capacity(params.n_pi as usize);
        let mut pi_late = Vec::new();
        for i in 0..params.n_pi {
            driver.advance_single(&mut spins, &mut mag, spacing, &mut rng);
            pi_samples.push(mag);
            if burn + (i + 1) as f64 * spacing >= 2.0 * burn {
                pi_late.push(mag);
            }
        }
        for k in 0..times.len() {
            let mags_t: Vec<i64> = per_rep.iter().map(|(_, m)| m[k]).collect();
            d_low.push(threshold_tv(&mags_t, &pi_samples));
            d_low2.push(if pi_late.len() >= 50 {
                threshold_tv(&mags_t, &pi_late)
            } else {
                f64::NAN
            });
            d_low_l1.push(half_l1_over_bins(&mags_t, &pi_samples));
        }
    }
    Ok(MixingProfile {
        times: times.clone(),
        d_up,
        d_up_lo,
        d_up_hi,
        d_low,
        d_low_doubled_burn: d_low2,
        d_low_half_l1: d_low_l1,
        reps: params.reps,
        n_pi: params.n_pi,
        seed,
        regime_warning: model.regime.regime != crate::flip_model::Regime::High,
    })
}

/// Half-l1 distance between two empirical integer histograms.
fn half_l1_over_bins(a: &[i64], b: &[i64]) -> f64 {
    let lo = a.iter().chain(b).min().copied().unwrap_or(0);
    let hi = a.iter().chain(b).max().copied().unwrap_or(0);
    let n = (hi - lo + 1) as usize;
    let mut ca = vec![0u64; n];
    let mut cb = vec![0u64; n];
    for &v in a {
        ca[(v - lo) as usize] += 1;
    }
    for &v in b {
        cb[(v - lo) as usize] += 1;
    }
    tv_from_probs(&probs_from_counts(&ca), &probs_from_counts(&cb))
}

#[derive(Debug, Clone, Copy)]
pub struct MixingTimeEstimate {
    /// Crossing of the lower estimate (monotone envelope) with epsilon;
    /// the sharp side of the bracket at desk scale.
    pub lower_edge: Option<f64>,
    /// Conservative upper edge: crossing of the Wilson upper band of the
    /// coalescence estimate.
    pub upper_edge: Option<f64>,
    /// Point crossing of the coalescence estimate itself.
    pub upper_point: Option<f64>,
    /// False when one of the crossings fell outside the profile's grid
    /// (the answer is one-sided).
    pub bracketed: bool,
}

/// Reads the mixing-time bracket off a profile: the upper edge is where
/// the Wilson upper band of the coalescence estimate drops through `eps`
/// (the estimate is monotone by construction: coalescence is absorbing and
/// all grid times share the replicas); the lower edge is where the
/// monotone envelope of the magnetization estimate drops through `eps`.
pub fn estimate_mixing_time(profile: &MixingProfile, eps: f64) -> MixingTimeEstimate {
    let upper_edge = crossing(&profile.times, &profile.d_up_hi, eps);
    let upper_point = crossing(&profile.times, &profile.d_up, eps);
    let lower_edge = if profile.d_low.is_empty() {
        None
    } else {
        // Non-increasing envelope from the right tames estimator noise.
        let mut env = profile.d_low.clone();
        for k in (0..env.len().saturating_sub(1)).rev() {
            env[k] = env[k].max(env[k + 1]);
        }
        match crossing(&profile.times, &env, eps) {
            Some(t) => Some(t),
            // Identically below eps: the crossing precedes the grid.
            None if env.first().is_some_and(|&v| v <= eps) => Some(profile.times[0]),
            None => None,
        }
    };
    MixingTimeEstimate {
        lower_edge,
        upper_edge,
        upper_point,
        bracketed: lower_edge.is_some() && upper_edge.is_some(),
    }
}

/// First downward crossing of `eps` by linear interpolation; the series is
/// treated as non-increasing.
fn crossing(times: &[f64], values: &[f64], eps: f64) -> Option<f64> {
    if values.first().is_some_and(|&v| v <= eps) {
        return Some(times[0]);
    }
    for k in 1..values.len() {
        if values[k] <= eps && values[k - 1] > eps {
            let (t0, t1) = (times[k - 1], times[k]);
            let (v0, v1) = (values[k - 1], values[k]);
            let frac = if (v0 - v1).abs() < 1e-15 {
                1.0
            } else {
                (v0 - eps) / (v0 - v1)
            };
            return Some(t0 + frac * (t1 - t0));
        }
    }
    None
}

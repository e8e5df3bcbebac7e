//! Correlation functions against the hydrodynamic prediction and the
//! replacement check (joint law of a few sites against the product law).
//!
//! Both estimators average over translations: the dynamics and the initial
//! conditions used here are translation invariant, so every site (or site
//! tuple, up to translation) estimates the same quantity, which buys a
//! factor-of-L variance reduction at fixed runtime.

use super::AnalysisError;
use crate::flip_model::Model;
use crate::hydro::solve_ode;
use crate::lattice::Torus;
use crate::rng::{replica_seed, sim_rng, split_seed, tags};
use crate::stats::{mean_se, probs_from_counts, tv_from_probs};
use rand::RngExt;
use rayon::prelude::*;

use super::mixing::run_single_chain;
use super::tv::product_law;

#[derive(Debug, Clone)]
pub struct CorrelationReport {
    /// ODE prediction `rho_+(t)` (started from all-plus).
    pub rho_ode: f64,
    /// Translation-averaged 1-point deviation `|mean X_t - rho(t)|` and its
    /// standard error.
    pub avg_dev: f64,
    pub avg_dev_se: f64,
    /// Per-site deviations (the max-site statistic is noise-limited at
    /// small rep counts; reported alongside the averaged one).
    pub max_site_dev: f64,
    /// Displacement-averaged covariances, index = displacement - 1
    /// (d = 1 only; empty otherwise).
    pub disp_cov: Vec<f64>,
    pub disp_cov_se: Vec<f64>,
    pub max_disp_cov: f64,
    /// Covariance matrix over the requested sites.
    pub pair_cov: Vec<Vec<f64>>,
    pub reps: u64,
}

/// Monte Carlo from all-plus under GC2 to time `t`.
pub fn correlation_report(
    model: &Model,
    torus: &Torus,
    t: f64,
    reps: u64,
    sites: &[u32],
    seed: u64,
) -> Result<CorrelationReport, AnalysisError> {
    if reps < 1000 {
        return Err(AnalysisError::InvalidParam(format!(
            "reps must be >= 1000, got {reps}"
        )));
    }
    torus.check_radius(model.dec.m())?;
    let rho_ode = *solve_ode(&model.reaction, 1.0, t, 1e-3)
        .map_err(|e| AnalysisError::InvalidParam(e.to_string()))?
        .values()
        .last()
        .unwrap();
    let n = torus.sites();
    let half = if torus.d() == 1 { n / 2 } else { 0 };

    struct Acc {
        site_sum: Vec<f64>,
        mag: Vec<f64>,
        disp: Vec<Vec<f64>>,
        picked: Vec<Vec<f64>>,
    }
    let accs: Vec<Acc> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = sim_rng(split_seed(replica_seed(seed, r), tags::MARKS, 12));
            let spins = run_single_chain(model, torus, t, vec![1i8; n], &mut rng);
            let mut site_sum = vec![0.0; n];
            for (u, &s) in spins.iter().enumerate() {
                site_sum[u] = s as f64;
            }
            let mag = vec![spins.iter().map(|&s| s as f64).sum::<f64>() / n as f64];
            let mut disp = Vec::new();
            if torus.d() == 1 {
                let mut row = Vec::with_capacity(half);
                for delta in 1..=half {
                    let mut acc = 0.0;
                    for u in 0..n {
                        acc += (spins[u] * spins[(u + delta) % n]) as f64;
                    }
                    row.push(acc / n as f64);
                }
                disp.push(row);
            }
            let picked = vec![sites.iter().map(|&u| spins[u as usize] as f64).collect()];
            Acc {
                site_sum,
                mag,
                disp,
                picked,
            }
        })
        .collect();

    let mags: Vec<f64> = accs.iter().map(|a| a.mag[0]).collect();
    let (mag_mean, mag_se) = mean_se(&mags);
    let avg_dev = (mag_mean - rho_ode).abs();

    let mut max_site_dev: f64 = 0.0;
    for u in 0..n {
        let mean: f64 = accs.iter().map(|a| a.site_sum[u]).sum::<f64>() / reps as f64;
        max_site_dev = max_site_dev.max((mean - rho_ode).abs());
    }

    let (mut disp_cov, mut disp_cov_se) = (Vec::new(), Vec::new());
    let mut max_disp_cov: f64 = 0.0;
    if torus.d() == 1 {
        for k in 0..half {
            let vals: Vec<f64> = accs.iter().map(|a| a.disp[0][k]).collect();
            let (m, se) = mean_se(&vals);
            let cov = m - mag_mean * mag_mean;
            disp_cov.push(cov);
            disp_cov_se.push(se);
            max_disp_cov = max_disp_cov.max(cov.abs());
        }
    }

    let k = sites.len();
    let mut pair_cov = vec![vec![0.0; k]; k];
    if k > 0 {
        let means: Vec<f64> = (0..k)
            .map(|i| accs.iter().map(|a| a.picked[0][i]).sum::<f64>() / reps as f64)
            .collect();
        for i in 0..k {
            for j in 0..k {
                let e_xy: f64 = accs
                    .iter()
                    .map(|a| a.picked[0][i] * a.picked[0][j])
                    .sum::<f64>()
                    / reps as f64;
                pair_cov[i][j] = e_xy - means[i] * means[j];
            }
        }
    }
    Ok(CorrelationReport {
        rho_ode,
        avg_dev,
        avg_dev_se: mag_se,
        max_site_dev,
        disp_cov,
        disp_cov_se,
        max_disp_cov,
        pair_cov,
        reps,
    })
}

#[derive(Debug, Clone)]
pub struct ReplacementReport {
    /// TV between the translation-averaged joint law of the offsets and the
    /// product Rademacher(rho(t)).
    pub tv: f64,
    /// Bootstrap-percentile 95% interval over replicas.
    pub ci: (f64, f64),
    pub rho_ode: f64,
    pub cells: Vec<u64>,
    pub reps: u64,
}

/// Joint law of `X_t` at a tuple of offsets, started from a product
/// Rademacher(rho0), against `Rademacher(rho(t))^{|E|}`. The histogram
/// pools all translates of the offset tuple.
pub fn replacement_check(
    model: &Model,
    torus: &Torus,
    offsets: &[u32],
    t: f64,
    rho0: f64,
    reps: u64,
    seed: u64,
) -> Result<ReplacementReport, AnalysisError> {
    if offsets.is_empty() {
        return Ok(ReplacementReport {
            tv: 0.0,
            ci: (0.0, 0.0),
            rho_ode: rho0,
            cells: Vec::new(),
            reps,
        });
    }
    if offsets.len() > 8 {
        return Err(AnalysisError::SetTooLarge(offsets.len()));
    }
    if rho0.abs() >= 1.0 {
        return Err(AnalysisError::RhoDegenerate(rho0));
    }
    torus.check_radius(model.dec.m())?;
    let rho_ode = *solve_ode(&model.reaction, rho0, t, 1e-3)
        .map_err(|e| AnalysisError::InvalidParam(e.to_string()))?
        .values()
        .last()
        .unwrap();
    let n = torus.sites();
    let k = offsets.len();
    let cells_n = 1usize << k;
    let p_plus = (1.0 + rho0) / 2.0;

    // Per-replica joint histograms over all translates.
    let per_rep: Vec<Vec<u64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = sim_rng(split_seed(replica_seed(seed, r), tags::MARKS, 13));
            let init: Vec<i8> = (0..n)
                .map(|_| if rng.random::<f64>() < p_plus { 1 } else { -1 })
                .collect();
            let spins = run_single_chain(model, torus, t, init, &mut rng);
            let mut counts = vec![0u64; cells_n];
            for u in 0..n as u32 {
                let mut cell = 0usize;
                for (j, &off) in offsets.iter().enumerate() {
                    let w = torus.site([torus.coords(u)[0] + off, torus.coords(u)[1]]);
                    if spins[w as usize] == 1 {
                        cell |= 1 << j;
                    }
                }
                counts[cell] += 1;
            }
            counts
        })
        .collect();

    let mut cells = vec![0u64; cells_n];
    for rep in &per_rep {
        for (c, v) in cells.iter_mut().zip(rep) {
            *c += v;
        }
    }
    let target = product_law(k, rho_ode);
    let point = tv_from_probs(&probs_from_counts(&cells), &target);
    // Bootstrap over replicas (sites within a replica are correlated).
    let mut rng = sim_rng(split_seed(seed, tags::MARKS, 14));
    let resamples = 1000;
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut acc = vec![0u64; cells_n];
            for _ in 0..per_rep.len() {
                let pick = rng.random_range(0..per_rep.len());
                for (a, v) in acc.iter_mut().zip(&per_rep[pick]) {
                    *a += v;
                }
            }
            tv_from_probs(&probs_from_counts(&acc), &target)
        })
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ci = (
        stats[(resamples as f64 * 0.025) as usize],
        stats[((resamples as f64 * 0.975) as usize).min(resamples - 1)],
    );
    Ok(ReplacementReport {
        tv: point,
        ci,
        rho_ode,
        cells,
        reps,
    })
}

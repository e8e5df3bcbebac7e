//! The averaging process: the conditional location law of a tagged
//! perturbation walker, driven by a GC3 stream jointly with the
//! independent-site process.
//!
//! Mass at blue sites moves by black-mark swaps (when the `Z` transition
//! happens), averages across both-blue edges at blue marks, and is zeroed
//! out by refresh and correlation marks (walker killed).

use super::{Construction, GraphicalError, MarkKind, MarkStream};
use super::zprocess::ZConfig;
use crate::lattice::{BallGeometry, Site};

#[derive(Debug, Clone)]
pub struct AveragingRun {
    /// Sample times (requested grid).
    pub times: Vec<f64>,
    /// `||H_t||_2^2` at each sample time.
    pub l2_mass: Vec<f64>,
    /// Mass function at the horizon.
    pub final_mass: Vec<f64>,
    /// Blue set at the horizon.
    pub final_blue: ZConfig,
}

/// Runs `(Z, H)` through a GC3 stream from `H_0 = indicator(origin)` and
/// `Z_0 = z0` (which must contain the origin: the walker starts blue).
pub fn averaging_process(
    ms: &MarkStream,
    origin: Site,
    z0: &ZConfig,
    times: &[f64],
) -> Result<AveragingRun, GraphicalError> {
    ms.require(Construction::Gc3)?;
    if !z0.contains(origin) {
        return Err(GraphicalError::OriginNotBlue);
    }
    let t = ms.torus();
    let geom = BallGeometry::new(t.d(), ms.m())?;
    let mut z = z0.clone();
    let mut h = vec![0.0f64; t.sites()];
    h[origin as usize] = 1.0;
    let l2 = |h: &[f64]| h.iter().map(|v| v * v).sum::<f64>();
    let mut out_times = Vec::with_capacity(times.len());
    let mut l2_mass = Vec::with_capacity(times.len());
    let mut next_time = times.iter().copied();
    let mut pending = next_time.next();
    for mark in ms.iter() {
        while let Some(tq) = pending {
            if mark.time > tq {
                out_times.push(tq);
                l2_mass.push(l2(&h));
                pending = next_time.next();
            } else {
                break;
            }
        }
        match mark.kind {
            MarkKind::Refresh { site } => {
                z.insert(site);
                h[site as usize] = 0.0;
            }
            MarkKind::Glauber { site, .. } => {
                for &off in geom.offsets() {
                    let u = t.offset_site(site, off);
                    z.remove(u);
                    h[u as usize] = 0.0;
                }
            }
            MarkKind::Black { edge } => {
                let (u, v) = t.edge_endpoints(edge as usize);
                if !z.contains(u) || !z.contains(v) {
                    z.swap(u, v);
                    h.swap(u as usize, v as usize);
                }
            }
            MarkKind::Blue { edge } => {
                let (u, v) = t.edge_endpoints(edge as usize);
                if z.contains(u) && z.contains(v) {
                    let avg = 0.5 * (h[u as usize] + h[v as usize]);
                    h[u as usize] = avg;
                    h[v as usize] = avg;
                }
            }
            MarkKind::Exclusion { .. } => unreachable!("GC3 streams carry no exclusion marks"),
        }
    }
    while let Some(tq) = pending {
        out_times.push(tq);
        l2_mass.push(l2(&h));
        pending = next_time.next();
    }
    Ok(AveragingRun {
        times: out_times,
        l2_mass,
        final_mass: h,
        final_blue: z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flip_model::Model;
    use crate::graphical::generate_marks;
    use crate::lattice::Torus;

    #[test]
    fn empty_stream_keeps_indicator() {
        let t = Torus::new(1, 8).unwrap();
        let model = Model::constant(1, 1).unwrap();
        let ms = generate_marks(&t, &model.dec, Construction::Gc3, 1e-9, 1, false).unwrap();
        assert!(ms.collect().is_empty());
        let run = averaging_process(&ms, 2, &ZConfig::full(&t), &[0.0]).unwrap();
        assert_eq!(run.l2_mass, vec![1.0]);
        assert_eq!(run.final_mass[2], 1.0);
    }

    #[test]
    fn one_blue_average_halves_mass() {
        // Find a stream whose first mark is a blue mark on an edge touching
        // the origin; with a full blue set this averages to two cells of 1/2.
        let t = Torus::new(1, 6).unwrap();
        let model = Model::constant(1, 1).unwrap();
        for seed in 0..300u64 {
            let ms = generate_marks(&t, &model.dec, Construction::Gc3, 5.0, seed, false).unwrap();
            let first = ms.iter().next().unwrap();
            if let MarkKind::Blue { edge } = first.kind {
                let (u, v) = t.edge_endpoints(edge as usize);
                if u != 0 && v != 0 {
                    continue;
                }
                let tiny =
                    generate_marks(&t, &model.dec, Construction::Gc3, first.time * 1.0000001, seed, false)
                        .unwrap();
                let run = averaging_process(&tiny, 0, &ZConfig::full(&t), &[]).unwrap();
                assert_eq!(run.final_mass[u as usize], 0.5);
                assert_eq!(run.final_mass[v as usize], 0.5);
                let l2: f64 = run.final_mass.iter().map(|x| x * x).sum();
                assert!((l2 - 0.5).abs() < 1e-15);
                return;
            }
        }
        panic!("no seed produced a leading blue mark at the origin");
    }

    #[test]
    fn l2_mass_never_increases() {
        let t = Torus::new(1, 16).unwrap();
        let model = Model::demasi(5.0 / 12.0).unwrap();
        for seed in 0..20u64 {
            let ms = generate_marks(&t, &model.dec, Construction::Gc3, 0.4, seed, false).unwrap();
            let times: Vec<f64> = (0..=40).map(|k| 0.01 * k as f64).collect();
            let run = averaging_process(&ms, 3, &ZConfig::full(&t), &times).unwrap();
            for w in run.l2_mass.windows(2) {
                assert!(w[1] <= w[0] + 1e-15);
            }
        }
    }

    #[test]
    fn origin_must_be_blue() {
        let t = Torus::new(1, 8).unwrap();
        let model = Model::constant(1, 1).unwrap();
        let ms = generate_marks(&t, &model.dec, Construction::Gc3, 0.1, 2, false).unwrap();
        assert!(matches!(
            averaging_process(&ms, 0, &ZConfig::empty(&t), &[]),
            Err(GraphicalError::OriginNotBlue)
        ));
    }
}

//! The spatially-constant hydrodynamic limit: the ODE `rho' = R(rho)`, the
//! survival/average functions `phi` and `vartheta` built from its extreme
//! solutions, and exponential decay-rate fitting.

use crate::flip_model::ReactionPolynomial;
use crate::stats::{least_squares, LineFit};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HydroError {
    #[error("step too large: h * max|R'| = {0} exceeds 0.5")]
    StepTooLarge(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("1 - phi(t) vanished at t = {0}; grid too coarse near 0")]
    DivisionNearZero(f64),
    #[error("decay fit requires strictly positive values, got {0}")]
    NonPositiveValue(f64),
}

/// Numerical solution of `rho' = R(rho)` on a uniform grid.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    h: f64,
    values: Vec<f64>,
    max_overshoot: f64,
}

impl OdeSolution {
    #[inline]
    pub fn step(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    /// Value at time `t` by linear interpolation on the grid.
    pub fn at(&self, t: f64) -> f64 {
        let pos = t / self.h;
        let k = pos.floor() as usize;
        if k + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let frac = pos - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }

    /// Largest clamp applied to keep values inside `[-1,1]`.
    pub fn max_overshoot(&self) -> f64 {
        self.max_overshoot
    }
}

/// Classical fourth-order Runge-Kutta on a fixed grid of step `h` up to
/// horizon `T`. Polynomial `R` is smooth, so the global error is `O(h^4)`.
pub fn solve_ode(
    p: &ReactionPolynomial,
    rho0: f64,
    horizon: f64,
    h: f64,
) -> Result<OdeSolution, HydroError> {
    if !(-1.0..=1.0).contains(&rho0) || h <= 0.0 || horizon < 0.0 {
        return Err(HydroError::InvalidParams(format!(
            "rho0 = {rho0}, T = {horizon}, h = {h}"
        )));
    }
    let stiffness = h * p.derivative_bound();
    if stiffness > 0.5 {
        return Err(HydroError::StepTooLarge(stiffness));
    }
    let steps = (horizon / h).ceil() as usize;
    let mut values = Vec::with_capacity(steps + 1);
    let mut y = rho0;
    let mut max_overshoot = 0.0f64;
    values.push(y);
    for _ in 0..steps {
        let k1 = p.eval(y);
        let k2 = p.eval(y + 0.5 * h * k1);
        let k3 = p.eval(y + 0.5 * h * k2);
        let k4 = p.eval(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if y > 1.0 {
            max_overshoot = max_overshoot.max(y - 1.0);
            y = 1.0;
        } else if y < -1.0 {
            max_overshoot = max_overshoot.max(-1.0 - y);
            y = -1.0;
        }
        values.push(y);
    }
    Ok(OdeSolution {
        h,
        values,
        max_overshoot,
    })
}

/// The functions derived from the extreme solutions:
/// `phi = (rho_+ - rho_-)/2` and
/// `vartheta = (rho_+ + rho_-) / (2 (1 - phi))`, with `vartheta(0)` defined
/// by its right limit (the formula is 0/0 at t = 0).
#[derive(Debug, Clone)]
pub struct DerivedFunctions {
    pub h: f64,
    pub rho_plus: Vec<f64>,
    pub rho_minus: Vec<f64>,
    pub phi: Vec<f64>,
    pub vartheta: Vec<f64>,
}

impl DerivedFunctions {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    fn interp(series: &[f64], h: f64, t: f64) -> f64 {
        let pos = t / h;
        let k = pos.floor() as usize;
        if k + 1 >= series.len() {
            return *series.last().unwrap();
        }
        let frac = pos - k as f64;
        series[k] * (1.0 - frac) + series[k + 1] * frac
    }

    pub fn phi_at(&self, t: f64) -> f64 {
        Self::interp(&self.phi, self.h, t)
    }

    pub fn rho_plus_at(&self, t: f64) -> f64 {
        Self::interp(&self.rho_plus, self.h, t)
    }

    pub fn rho_minus_at(&self, t: f64) -> f64 {
        Self::interp(&self.rho_minus, self.h, t)
    }

    pub fn vartheta_at(&self, t: f64) -> f64 {
        Self::interp(&self.vartheta, self.h, t)
    }
}

pub fn derived_functions(
    p: &ReactionPolynomial,
    horizon: f64,
    h: f64,
) -> Result<DerivedFunctions, HydroError> {
    let plus = solve_ode(p, 1.0, horizon, h)?;
    let minus = solve_ode(p, -1.0, horizon, h)?;
    let n = plus.len().min(minus.len());
    let mut phi = Vec::with_capacity(n);
    let mut vartheta = Vec::with_capacity(n);
    for k in 0..n {
        let (rp, rm) = (plus.values()[k], minus.values()[k]);
        let f = (rp - rm) / 2.0;
        phi.push(f);
        if k == 0 {
            vartheta.push(f64::NAN); // patched to the right limit below
        } else {
            let denom = 1.0 - f;
            if denom < 1e-12 {
                return Err(HydroError::DivisionNearZero(k as f64 * h));
            }
            vartheta.push((rp + rm) / (2.0 * denom));
        }
    }
    if vartheta.len() > 1 {
        vartheta[0] = vartheta[1];
    }
    Ok(DerivedFunctions {
        h,
        rho_plus: plus.values()[..n].to_vec(),
        rho_minus: minus.values()[..n].to_vec(),
        phi,
        vartheta,
    })
}

/// Least-squares fit of `log(values)` against `times`.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Result<LineFit, HydroError> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(HydroError::InvalidParams(format!(
            "need >= 3 matched points, got {} and {}",
            times.len(),
            values.len()
        )));
    }
    let mut logs = Vec::with_capacity(values.len());
    for &v in values {
        if v <= 0.0 {
            return Err(HydroError::NonPositiveValue(v));
        }
        logs.push(v.ln());
    }
    Ok(least_squares(times, &logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flip_model::{
        builtin_constant, builtin_demasi, builtin_theta, classify_regime, reaction_polynomial,
        Model, DEFAULT_ROOT_TOL,
    };
    use proptest::prelude::*;

    fn constant_reaction() -> ReactionPolynomial {
        reaction_polynomial(&builtin_constant(1, 1).unwrap()).unwrap()
    }

    #[test]
    fn linear_ode_matches_exponential() {
        let p = constant_reaction(); // R = -2 rho
        let sol = solve_ode(&p, 1.0, 1.0, 1e-3).unwrap();
        let expect = (-2.0f64).exp();
        assert!((sol.at(1.0) - expect).abs() < 1e-8);
        assert!(sol.max_overshoot() == 0.0);
    }

    #[test]
    fn equilibrium_is_constant() {
        let p = reaction_polynomial(&builtin_theta(1.0).unwrap()).unwrap();
        let rho_star = classify_regime(&p, DEFAULT_ROOT_TOL).unwrap().roots[0].location;
        let sol = solve_ode(&p, rho_star, 2.0, 1e-3).unwrap();
        for &v in sol.values() {
            assert!((v - rho_star).abs() < 1e-9);
        }
    }

    #[test]
    fn demasi_high_decreases_without_sign_flip() {
        let p = reaction_polynomial(&builtin_demasi(5.0 / 12.0).unwrap()).unwrap();
        let sol = solve_ode(&p, 1.0, 8.0, 1e-3).unwrap();
        // Reference with a 10x finer step agrees to 1e-10.
        let fine = solve_ode(&p, 1.0, 8.0, 1e-4).unwrap();
        for k in [100, 1000, 4000, 8000] {
            assert!((sol.values()[k] - fine.at(sol.time(k))).abs() < 1e-10);
        }
        for w in sol.values().windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
            assert!(w[1] >= 0.0);
        }
    }

    #[test]
    fn step_guard_trips() {
        let p = constant_reaction();
        assert!(matches!(
            solve_ode(&p, 1.0, 1.0, 0.3),
            Err(HydroError::StepTooLarge(_))
        ));
    }

    #[test]
    fn derived_functions_constant_model() {
        let p = constant_reaction();
        let d = derived_functions(&p, 4.0, 1e-3).unwrap();
        for k in (0..d.phi.len()).step_by(500) {
            let t = d.time(k);
            assert!((d.phi[k] - (-2.0 * t).exp()).abs() < 1e-8);
            if k > 0 {
                assert!(d.vartheta[k].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn demasi_vartheta_vanishes_by_symmetry() {
        let p = reaction_polynomial(&builtin_demasi(5.0 / 12.0).unwrap()).unwrap();
        let d = derived_functions(&p, 6.0, 1e-3).unwrap();
        for k in (1..d.vartheta.len()).step_by(700) {
            assert!(d.vartheta[k].abs() < 1e-8);
        }
        assert!((d.phi[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn theta_vartheta_converges_to_root() {
        let model = Model::theta(1.0).unwrap();
        let d = derived_functions(&model.reaction, 8.0, 1e-3).unwrap();
        let rho_star = model.rho_star().unwrap();
        assert!((d.vartheta_at(8.0) - rho_star).abs() <= 1e-3);
    }

    #[test]
    fn self_consistency_identities() {
        // rho_+ = phi + (1 - phi) vartheta and rho_- = -phi + (1 - phi) vartheta.
        for model in [Model::theta(1.0).unwrap(), Model::demasi(0.25).unwrap()] {
            let d = derived_functions(&model.reaction, 5.0, 1e-3).unwrap();
            for k in (1..d.phi.len()).step_by(333) {
                let lhs_p = d.phi[k] + (1.0 - d.phi[k]) * d.vartheta[k];
                let lhs_m = -d.phi[k] + (1.0 - d.phi[k]) * d.vartheta[k];
                assert!((lhs_p - d.rho_plus[k]).abs() < 1e-10);
                assert!((lhs_m - d.rho_minus[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn decay_fit_exact_on_exponential() {
        let times = [1.0f64, 2.0, 3.0];
        let values: Vec<f64> = times.iter().map(|t| (-2.0 * t).exp()).collect();
        let fit = fit_decay_rate(&times, &values).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);

        let constant = [3.0, 3.0, 3.0];
        let fit0 = fit_decay_rate(&times, &constant).unwrap();
        assert!(fit0.slope.abs() < 1e-12);

        assert!(matches!(
            fit_decay_rate(&times, &[1.0, 0.0, 1.0]),
            Err(HydroError::NonPositiveValue(_))
        ));
    }

    #[test]
    fn phi_decay_rate_matches_slope_at_root() {
        // Derived phi for De Masi gamma = 5/12 decays at rate R'(0) = -1/3.
        let model = Model::demasi(5.0 / 12.0).unwrap();
        let d = derived_functions(&model.reaction, 6.0, 1e-3).unwrap();
        let times: Vec<f64> = (0..=8).map(|k| 2.0 + 0.5 * k as f64).collect();
        let values: Vec<f64> = times.iter().map(|&t| d.phi_at(t)).collect();
        let fit = fit_decay_rate(&times, &values).unwrap();
        let expect = model.regime.slope.unwrap();
        assert!(
            (fit.slope - expect).abs() < 0.05 * expect.abs(),
            "slope {} vs {}",
            fit.slope,
            expect
        );
    }

    #[test]
    fn high_regime_gap_to_root_is_monotone() {
        let model = Model::theta(1.0).unwrap();
        let rho_star = model.rho_star().unwrap();
        let sol = solve_ode(&model.reaction, 1.0, 6.0, 1e-3).unwrap();
        for w in sol.values().windows(2) {
            assert!((w[1] - rho_star).abs() <= (w[0] - rho_star).abs() + 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn solutions_never_cross(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let model = Model::demasi(5.0/12.0).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let sa = solve_ode(&model.reaction, lo, 3.0, 1e-3).unwrap();
            let sb = solve_ode(&model.reaction, hi, 3.0, 1e-3).unwrap();
            for (x, y) in sa.values().iter().zip(sb.values()) {
                prop_assert!(x <= &(y + 1e-12));
            }
        }
    }
}

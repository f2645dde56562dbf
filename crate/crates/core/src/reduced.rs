//! The two-mode shadow system `a0' = a0`, `a2' = c* a2^2` and the
//! intermediate-region system `u' = e^{p v}`, `v' = e^{q u}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::columns_to_string;
use crate::ode::{Control, Dopri5};
use crate::params::{BlowupConstants, Nonlinearity, Parameters};

/// `|a0|` or `|a2|` above this ends a reduced run as a blowup.
pub const REDUCED_BLOWUP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub a0: f64,
    pub a2: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedTrajectory {
    pub states: Vec<ReducedState>,
    /// Set when the run stopped early because a mode left every bounded set.
    pub blew_up: bool,
}

impl ReducedTrajectory {
    pub fn last(&self) -> ReducedState {
        *self.states.last().expect("trajectory holds the initial state")
    }

    pub fn to_csv(&self) -> Result<String> {
        columns_to_string(&["s", "a0", "a2"], self.states.iter().map(|st| vec![st.s, st.a0, st.a2]))
    }
}

pub fn integrate_reduced(c: &BlowupConstants, init: ReducedState, s_end: f64) -> Result<ReducedTrajectory> {
    if !(s_end > init.s) {
        return Err(Error::OutOfDomain(format!("s_end = {s_end} must exceed s = {}", init.s)));
    }
    let c_star = c.c_star;
    let mut states = Vec::new();
    let mut blew_up = false;
    Dopri5::with_tol(1e-11, 1e-14).solve(
        |_, y, dy| {
            dy[0] = y[0];
            dy[1] = c_star * y[1] * y[1];
            Ok(())
        },
        init.s,
        vec![init.a0, init.a2],
        s_end,
        |s, y| {
            states.push(ReducedState { a0: y[0], a2: y[1], s });
            if y[0].abs() > REDUCED_BLOWUP || y[1].abs() > REDUCED_BLOWUP {
                blew_up = true;
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    Ok(ReducedTrajectory { states, blew_up })
}

/// Exact solution of `a' = c* a^2` through `(s0, a20)`.
pub fn riccati_exact(c_star: f64, s0: f64, a20: f64, s: f64) -> f64 {
    a20 / (1.0 - c_star * a20 * (s - s0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntermediateState {
    pub u_hat: f64,
    pub v_hat: f64,
    pub tau: f64,
}

fn intermediate_offset(params: &Parameters, k0: f64) -> f64 {
    1.0 + k0 * k0 / (32.0 * (params.mu + 1.0))
}

/// Closed-form solution `(-(1/q) ln[p(c - tau)], -(1/p) ln[q(c - tau)])`
/// with `c = 1 + K0^2/(32(mu+1))`.
pub fn intermediate_closed_form(params: &Parameters, k0: f64, tau: f64) -> Result<IntermediateState> {
    let c = intermediate_offset(params, k0);
    if !(tau < c) {
        return Err(Error::OutOfDomain(format!("tau = {tau} at or past the singularity {c}")));
    }
    let Parameters { p, q, .. } = *params;
    Ok(IntermediateState { u_hat: -(p * (c - tau)).ln() / q, v_hat: -(q * (c - tau)).ln() / p, tau })
}

/// Initial data of the intermediate system built from `K0`.
pub fn intermediate_initial(params: &Parameters, k0: f64) -> IntermediateState {
    intermediate_closed_form(params, k0, 0.0).expect("tau = 0 is before the singularity")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediateTrajectory {
    pub states: Vec<IntermediateState>,
}

impl IntermediateTrajectory {
    pub fn last(&self) -> IntermediateState {
        *self.states.last().expect("trajectory holds the initial state")
    }

    pub fn to_csv(&self) -> Result<String> {
        columns_to_string(&["tau", "u_hat", "v_hat"], self.states.iter().map(|st| vec![st.tau, st.u_hat, st.v_hat]))
    }
}

/// Integrates the intermediate system. `outputs` lists extra `tau` values
/// to land on exactly; every accepted step is recorded as well.
pub fn integrate_intermediate(
    params: &Parameters,
    k0: f64,
    init: IntermediateState,
    tau_end: f64,
    outputs: &[f64],
) -> Result<IntermediateTrajectory> {
    if params.case != Nonlinearity::Exponential {
        return Err(Error::InvalidParameters("the intermediate system belongs to the exponential case".into()));
    }
    let sing = intermediate_offset(params, k0);
    if tau_end >= sing {
        return Err(Error::OutOfDomain(format!("tau_end = {tau_end} at or past the singularity {sing}")));
    }
    let mut states = vec![init];
    if tau_end <= init.tau {
        return Ok(IntermediateTrajectory { states });
    }
    let Parameters { p, q, .. } = *params;
    let mut stops: Vec<f64> = outputs.iter().copied().filter(|&t| t > init.tau && t < tau_end).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    stops.push(tau_end);
    let solver = Dopri5::with_tol(1e-12, 1e-14);
    let mut y = vec![init.u_hat, init.v_hat];
    let mut t0 = init.tau;
    for stop in stops {
        let out = solver.solve(
            |_, y, dy| {
                dy[0] = (p * y[1]).exp();
                dy[1] = (q * y[0]).exp();
                Ok(())
            },
            t0,
            y,
            stop,
            |t, y| {
                if t > t0 {
                    states.push(IntermediateState { u_hat: y[0], v_hat: y[1], tau: t });
                }
                Control::Continue
            },
        )?;
        y = out.y;
        t0 = stop;
    }
    Ok(IntermediateTrajectory { states })
}

/// `(Gamma (1 - tau + bK^2)^{-alpha}, gamma (1 - tau + bK^2)^{-beta})`, the
/// spatially constant solution started from the outer profile at `K`.
pub fn hat_gh(params: &Parameters, c: &BlowupConstants, k: f64, tau: f64) -> Result<(f64, f64)> {
    if params.case != Nonlinearity::Power {
        return Err(Error::InvalidParameters("hat_gh is defined for the power case".into()));
    }
    let base = 1.0 - tau + c.b * k * k;
    if !(base > 0.0) {
        return Err(Error::OutOfDomain(format!("tau = {tau} at or past the pole {}", 1.0 + c.b * k * k)));
    }
    Ok((c.gamma_cap * base.powf(-c.alpha), c.gamma_small * base.powf(-c.beta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{compute_constants, outer_profile};
    use approx::assert_relative_eq;

    fn p22() -> (Parameters, BlowupConstants) {
        let p = Parameters::power(2.0, 2.0, 1.0).unwrap();
        let c = compute_constants(&p).unwrap();
        (p, c)
    }

    #[test]
    fn zero_a0_is_invariant() {
        let (_, c) = p22();
        let traj = integrate_reduced(&c, ReducedState { a0: 0.0, a2: -0.01, s: 1.0 }, 50.0).unwrap();
        assert!(traj.states.iter().all(|st| st.a0 == 0.0));
        assert!(!traj.blew_up);
    }

    #[test]
    fn exact_attractor_is_followed() {
        let (_, c) = p22();
        let s0 = 5.0;
        let traj = integrate_reduced(&c, ReducedState { a0: 0.0, a2: -1.0 / (c.c_star * s0), s: s0 }, 500.0).unwrap();
        for st in &traj.states {
            assert_relative_eq!(st.a2, -1.0 / (c.c_star * st.s), max_relative = 1e-9);
        }
    }

    #[test]
    fn generic_a0_blows_up() {
        let (_, c) = p22();
        let traj = integrate_reduced(&c, ReducedState { a0: 1e-3, a2: -0.01, s: 1.0 }, 100.0).unwrap();
        assert!(traj.blew_up);
        assert!(traj.last().s < 30.0);
    }

    #[test]
    fn riccati_matches_exact() {
        let (_, c) = p22();
        let traj = integrate_reduced(&c, ReducedState { a0: 0.0, a2: -0.3, s: 2.0 }, 300.0).unwrap();
        let end = traj.last();
        assert_relative_eq!(end.a2, riccati_exact(c.c_star, 2.0, -0.3, 300.0), max_relative = 1e-9);
        let csv = traj.to_csv().unwrap();
        assert!(csv.starts_with("s,a0,a2\n2,0,-0.3\n"));
    }

    #[test]
    fn intermediate_closed_form_match() {
        for (pp, qq, mu) in [(1.0, 1.0, 1.0), (2.0, 3.0, 0.5)] {
            let params = Parameters::exponential(pp, qq, mu).unwrap();
            for k0 in [4.0, 10.0] {
                let init = intermediate_initial(&params, k0);
                let grid: Vec<f64> = (1..=99).map(|i| i as f64 / 100.0).collect();
                let traj = integrate_intermediate(&params, k0, init, 0.99, &grid).unwrap();
                for st in &traj.states {
                    let exact = intermediate_closed_form(&params, k0, st.tau).unwrap();
                    assert!((st.u_hat - exact.u_hat).abs() < 1e-6);
                    assert!((st.v_hat - exact.v_hat).abs() < 1e-6);
                }
                assert_eq!(traj.last().tau, 0.99);
            }
        }
    }

    #[test]
    fn intermediate_symmetry_and_trivial_cases() {
        let params = Parameters::exponential(2.0, 2.0, 1.0).unwrap();
        let init = IntermediateState { u_hat: 0.1, v_hat: 0.1, tau: 0.0 };
        let traj = integrate_intermediate(&params, 4.0, init, 0.3, &[]).unwrap();
        assert!(traj.states.iter().all(|st| st.u_hat == st.v_hat));
        let same = integrate_intermediate(&params, 4.0, init, 0.0, &[]).unwrap();
        assert_eq!(same.states, vec![init]);
        assert!(integrate_intermediate(&params, 4.0, init, 1.0 + 16.0 / 64.0, &[]).is_err());
    }

    #[test]
    fn hat_gh_examples() {
        let (p, c) = p22();
        let (g, h) = hat_gh(&p, &c, 8f64.sqrt(), 1.0).unwrap();
        assert_relative_eq!(g, 1.0, epsilon = 1e-14);
        assert_relative_eq!(h, 1.0, epsilon = 1e-14);
        let k = 1.7;
        let at0 = hat_gh(&p, &c, k, 0.0).unwrap();
        let outer = outer_profile(&p, &c, k);
        assert_relative_eq!(at0.0, outer.0, epsilon = 1e-14);
        assert!(hat_gh(&p, &c, k, 1.0 + c.b * k * k).is_err());
    }

    #[test]
    fn hat_gh_solves_ode() {
        let params = Parameters::power(3.0, 2.0, 0.5).unwrap();
        let c = compute_constants(&params).unwrap();
        for tau in [0.0, 0.5, 0.9] {
            let h = 1e-6;
            let (gp, hp) = hat_gh(&params, &c, 2.0, tau + h).unwrap();
            let (gm, hm) = hat_gh(&params, &c, 2.0, tau - h).unwrap();
            let (g, hh) = hat_gh(&params, &c, 2.0, tau).unwrap();
            assert_relative_eq!((gp - gm) / (2.0 * h), hh.powf(3.0), max_relative = 1e-6);
            assert_relative_eq!((hp - hm) / (2.0 * h), g.powf(2.0), max_relative = 1e-6);
        }
    }
}

//! Shooting on the unstable amplitude `d0`.
//!
//! A run is classified by the sign of `theta_0` when it first leaves the
//! band `|theta_0| <= A/s^2`. In double precision the unstable mode grows
//! like `e^s` from rounding level, so one shot stays in the band for only
//! about 30 units of `s`. The power shoot therefore restarts: each stage
//! bisects an additive correction `delta (A/s_k^2) (f0, g0) chi` to the
//! state reached halfway to the previous stage's escape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Frame, RadialField};
use crate::ode::Control;
use crate::params::{approx_profile, BlowupConstants, Nonlinearity, Parameters};
use crate::pde::{evolve_physical_with, evolve_similarity_with, SimilarityRun, SolverConfig};
use crate::sim_frame::{uniform_grid, CutoffSpec};
use crate::spectral::{Basis, Family};
use crate::verifier::{build_initial_data_exp, build_initial_data_power, project_perturbation, ExpDataOptions};

/// How a candidate run left the band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exit {
    /// Sign of `theta_0` at exit; 0 when the run stayed in the band to the end.
    pub sign: i8,
    /// `s` of the exit, or the last `s` reached.
    pub s: f64,
}

/// `theta_0` sampled along a run, with the exit if there was one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaTrace {
    pub s: Vec<f64>,
    pub theta0: Vec<f64>,
    pub exit: Exit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bisection {
    pub lo: f64,
    pub hi: f64,
    pub exit_lo: Exit,
    pub exit_hi: Exit,
    pub iterations: usize,
    /// Set when a candidate stayed in the band to the end.
    pub trapped: Option<f64>,
}

impl Bisection {
    pub fn mid(&self) -> f64 {
        self.trapped.unwrap_or(0.5 * (self.lo + self.hi))
    }

    /// The endpoint that stayed in the band longer.
    pub fn best(&self) -> (f64, Exit) {
        if let Some(d) = self.trapped {
            let e = if self.exit_lo.sign == 0 { self.exit_lo } else { self.exit_hi };
            return (d, e);
        }
        if self.exit_lo.s >= self.exit_hi.s {
            (self.lo, self.exit_lo)
        } else {
            (self.hi, self.exit_hi)
        }
    }
}

/// Bisects `run` on `[lo, hi]` until the endpoints are adjacent doubles,
/// `max_iter` is hit, or a candidate stays in the band.
pub fn bisect_escape<F>(mut run: F, lo: f64, hi: f64, max_iter: usize) -> Result<Bisection>
where
    F: FnMut(f64) -> Result<Exit>,
{
    let exit_lo = run(lo)?;
    let exit_hi = run(hi)?;
    let mut b = Bisection { lo, hi, exit_lo, exit_hi, iterations: 0, trapped: None };
    if exit_lo.sign == 0 {
        b.trapped = Some(lo);
        return Ok(b);
    }
    if exit_hi.sign == 0 {
        b.trapped = Some(hi);
        return Ok(b);
    }
    if exit_lo.sign == exit_hi.sign {
        return Err(Error::NoBracket { sign: exit_lo.sign });
    }
    while b.iterations < max_iter {
        let mid = 0.5 * (b.lo + b.hi);
        if mid <= b.lo || mid >= b.hi {
            break;
        }
        b.iterations += 1;
        let e = run(mid)?;
        if e.sign == 0 {
            if b.exit_lo.s >= b.exit_hi.s {
                b.hi = mid;
                b.exit_hi = e;
            } else {
                b.lo = mid;
                b.exit_lo = e;
            }
            b.trapped = Some(mid);
            break;
        }
        if e.sign == b.exit_lo.sign {
            b.lo = mid;
            b.exit_lo = e;
        } else {
            b.hi = mid;
            b.exit_hi = e;
        }
    }
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootConfig {
    #[serde(rename = "A")]
    pub a: f64,
    pub s0: f64,
    pub s_end: f64,
    pub bracket: (f64, f64),
    /// `K` of the cutoff `chi`.
    pub k_cutoff: f64,
    /// Outer radius of the similarity grid.
    pub y_max: f64,
    /// Grid intervals.
    pub points: usize,
    /// Spacing in `s` of the band checks.
    pub check_every: f64,
    /// Bisection steps per stage.
    pub max_iter: usize,
    /// A new stage starts this fraction of the way to the last escape.
    pub stage_fraction: f64,
    pub max_stages: usize,
    pub solver: SolverConfig,
}

impl ShootConfig {
    /// Defaults for a shoot from `s0` to `s_end`: `A = 10`, `K = 2`, grid out
    /// to `8 K sqrt(s_end)`.
    pub fn new(s0: f64, s_end: f64) -> Self {
        let k_cutoff = 2.0;
        ShootConfig {
            a: 10.0,
            s0,
            s_end,
            bracket: (-10.0, 10.0),
            k_cutoff,
            y_max: 8.0 * k_cutoff * s_end.sqrt(),
            points: 2048,
            check_every: 0.1,
            max_iter: 64,
            stage_fraction: 0.5,
            max_stages: 40,
            solver: SolverConfig { dt_max: 0.02, checkpoint_every: 1.0, keep_checkpoints: false, ..Default::default() },
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.s0 >= 1.0 && self.s_end > self.s0 && self.bracket.0 < self.bracket.1) {
            return Err(Error::InvalidParameters(format!("bad shoot settings {self:?}")));
        }
        if !(self.stage_fraction > 0.0 && self.stage_fraction < 1.0) || self.points < 4 || !(self.check_every > 0.0) {
            return Err(Error::InvalidParameters(format!("bad shoot settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootStage {
    pub s_start: f64,
    /// `d0` for the first stage, the correction `delta` afterwards.
    pub value: f64,
    pub bisection: Bisection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootResult {
    pub d0_star: f64,
    pub stages: Vec<ShootStage>,
    /// Checkpoints (every `solver.checkpoint_every`) of the spliced trajectory.
    pub trajectory: Vec<RadialField>,
    /// Last `s` at which the spliced trajectory is in the band.
    pub reached: f64,
    pub initial: RadialField,
}

/// Runs a similarity field, watching `theta_0` every `check_every` until it
/// leaves the band or `s_end`. `keep` receives each checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn trace_theta0<K>(
    init: &RadialField,
    params: &Parameters,
    c: &BlowupConstants,
    basis: &Basis,
    cfg: &ShootConfig,
    s_end: f64,
    stop_at_exit: bool,
    mut keep: K,
) -> Result<(ThetaTrace, SimilarityRun)>
where
    K: FnMut(&RadialField),
{
    let mut solver = cfg.solver;
    solver.t_end = s_end;
    solver.checkpoint_every = cfg.check_every;
    let mut trace = ThetaTrace { s: Vec::new(), theta0: Vec::new(), exit: Exit { sign: 0, s: s_end } };
    let mut exited = false;
    let run = evolve_similarity_with(init, params, c, &solver, |field| {
        keep(field);
        let coeffs = project_perturbation(field, params, c, basis, None)?;
        let th = coeffs.theta[0];
        trace.s.push(field.time);
        trace.theta0.push(th);
        let band = cfg.a / (field.time * field.time);
        if !exited && th.abs() > band {
            exited = true;
            trace.exit = Exit { sign: if th > 0.0 { 1 } else { -1 }, s: field.time };
            if stop_at_exit {
                return Ok(Control::Stop);
            }
        }
        Ok(Control::Continue)
    })?;
    if let Some(s) = run.escaped_at {
        if !exited {
            let (phi, _) = approx_profile(params, c, 0.0, run.last.time)?;
            trace.exit = Exit { sign: if run.last.first[0] > phi { 1 } else { -1 }, s };
        }
    } else if !exited {
        trace.exit.s = run.last.time;
    }
    Ok((trace, run))
}

fn unstable_vector(basis: &Basis) -> Result<(f64, f64)> {
    Ok(basis.find(Family::Plus, 0).ok_or_else(|| Error::InvalidParameters("basis has no degree-0 mode".into()))?.eval(0.0))
}

/// Adds `delta (A/s^2) (f0, g0) chi(., s)` to a similarity state.
pub fn add_unstable_mode(field: &RadialField, basis: &Basis, a: f64, k_cutoff: f64, delta: f64) -> Result<RadialField> {
    let (f0, g0) = unstable_vector(basis)?;
    let s = field.time;
    let cutoff = CutoffSpec::new(k_cutoff, s)?;
    let amp = delta * a / (s * s);
    let mut out = field.clone();
    for j in 0..out.len() {
        let w = amp * cutoff.chi(out.grid[j]);
        out.first[j] += w * f0;
        out.second[j] += w * g0;
    }
    Ok(out)
}

/// Multi-stage bisection shoot for the power case in the similarity frame.
pub fn shoot(params: &Parameters, c: &BlowupConstants, basis: &Basis, cfg: &ShootConfig) -> Result<ShootResult> {
    cfg.validate()?;
    if params.case != Nonlinearity::Power {
        return Err(Error::InvalidParameters("the similarity shoot is for the power case; use shoot_exp".into()));
    }
    let grid = uniform_grid(cfg.y_max, cfg.points);
    let initial_of = |d: f64| build_initial_data_power(params, c, basis, cfg.a, cfg.s0, d, 0.0, cfg.k_cutoff, grid.clone());
    multi_stage(params, c, basis, cfg, initial_of)
}

/// [`shoot`] with stage-0 candidates `base + (d - d_ref)(A/s0^2)(f0, g0) chi`,
/// so the reported `d0_star` is on the same scale as `d_ref`.
pub fn shoot_from(
    params: &Parameters,
    c: &BlowupConstants,
    basis: &Basis,
    cfg: &ShootConfig,
    base: &RadialField,
    d_ref: f64,
) -> Result<ShootResult> {
    cfg.validate()?;
    if params.case != Nonlinearity::Power || base.frame != Frame::Similarity || (base.time - cfg.s0).abs() > 1e-12 {
        return Err(Error::InvalidParameters("shoot_from needs a power similarity state at s0".into()));
    }
    multi_stage(params, c, basis, cfg, |d| add_unstable_mode(base, basis, cfg.a, cfg.k_cutoff, d - d_ref))
}

fn multi_stage<F>(params: &Parameters, c: &BlowupConstants, basis: &Basis, cfg: &ShootConfig, initial_of: F) -> Result<ShootResult>
where
    F: Fn(f64) -> Result<RadialField>,
{
    let exit_of = |state: &RadialField| -> Result<Exit> { Ok(trace_theta0(state, params, c, basis, cfg, cfg.s_end, true, |_| {})?.0.exit) };

    let first = bisect_escape(|d| exit_of(&initial_of(d)?), cfg.bracket.0, cfg.bracket.1, cfg.max_iter)?;
    let d0_star = first.best().0;
    let initial = initial_of(d0_star)?;
    let mut stages = vec![ShootStage { s_start: cfg.s0, value: d0_star, bisection: first }];
    let mut state = initial.clone();
    let mut trajectory = Vec::new();
    let keep_every = cfg.solver.checkpoint_every;
    let mut next_keep = cfg.s0;
    let mut keep = |f: &RadialField, traj: &mut Vec<RadialField>| {
        if f.time >= next_keep - 1e-9 {
            traj.push(f.clone());
            next_keep += keep_every;
        }
    };
    loop {
        let b = &stages.last().expect("one stage").bisection;
        let (value, exit) = b.best();
        let start = if stages.len() == 1 { initial.clone() } else { add_unstable_mode(&state, basis, cfg.a, cfg.k_cutoff, value)? };
        let done = exit.sign == 0 || stages.len() >= cfg.max_stages;
        let target = if done {
            exit.s.min(cfg.s_end)
        } else {
            ((state.time + cfg.stage_fraction * (exit.s - state.time)) / cfg.check_every).round() * cfg.check_every
        };
        if !(target > state.time) {
            return Ok(ShootResult { d0_star, stages, trajectory, reached: state.time, initial });
        }
        let (_, run) = trace_theta0(&start, params, c, basis, cfg, target, false, |f| keep(f, &mut trajectory))?;
        if run.escaped_at.is_some() {
            return Ok(ShootResult { d0_star, stages, trajectory, reached: run.last.time, initial });
        }
        state = run.last;
        if done {
            let reached = if exit.sign == 0 { state.time } else { exit.s };
            return Ok(ShootResult { d0_star, stages, trajectory, reached, initial });
        }
        let s_k = state.time;
        let bis = bisect_escape(|delta| exit_of(&add_unstable_mode(&state, basis, cfg.a, cfg.k_cutoff, delta)?), -1.0, 1.0, cfg.max_iter)?;
        stages.push(ShootStage { s_start: s_k, value: bis.mid(), bisection: bis });
    }
}

/// `theta_0` at the quadrature nodes of a physical exponential field.
pub fn exp_theta0(field: &RadialField, params: &Parameters, c: &BlowupConstants, basis: &Basis, t_blowup: f64) -> Result<(f64, f64)> {
    let left = t_blowup - field.time;
    let s = -left.ln();
    let scale = left.sqrt();
    let support = field.r_max() / scale;
    let coeffs = basis.project(
        |y| {
            let (u, v) = field.interpolate(y * scale).expect("inside the support");
            let (phi, psi) = approx_profile(params, c, y, s).expect("s >= 1");
            ((params.q * u + left.ln()).min(700.0).exp() - phi, (params.p * v + left.ln()).min(700.0).exp() - psi)
        },
        support,
    )?;
    Ok((s, coeffs.theta[0]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpShootConfig {
    #[serde(rename = "A")]
    pub a: f64,
    pub s0: f64,
    pub s_end: f64,
    pub bracket: (f64, f64),
    pub data: ExpDataOptions,
    pub check_every: f64,
    pub max_iter: usize,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpShootResult {
    pub d0_star: f64,
    pub bisection: Bisection,
    pub initial: RadialField,
    /// Physical states at the band checks of the chosen run.
    pub trajectory: Vec<RadialField>,
    pub reached: f64,
}

/// Single-stage shoot for the exponential case in the physical frame with
/// blowup time `T = e^{-s0}`. The bracket is clipped to the range where
/// the initial data exist.
pub fn shoot_exp(params: &Parameters, c: &BlowupConstants, basis: &Basis, grid: &[f64], cfg: &ExpShootConfig) -> Result<ExpShootResult> {
    if params.case != Nonlinearity::Exponential {
        return Err(Error::InvalidParameters("shoot_exp is for the exponential case".into()));
    }
    let t_blowup = (-cfg.s0).exp();
    let build = |d: f64| build_initial_data_exp(params, c, basis, cfg.a, cfg.s0, d, 0.0, &cfg.data, grid.to_vec());
    let (lo, hi) = admissible_bracket(&build, cfg.bracket)?;
    let checks: Vec<f64> = {
        let count = ((cfg.s_end - cfg.s0) / cfg.check_every).round() as usize;
        (1..=count).map(|k| t_blowup - (-(cfg.s0 + k as f64 * cfg.check_every)).exp()).collect()
    };
    let mut solver = cfg.solver;
    // e^{q ||u||} is already ~e^{s} on a trapped run
    solver.blowup_threshold = solver.blowup_threshold.max((cfg.s_end + 5.0).exp());
    solver.t_end = *checks.last().ok_or_else(|| Error::InvalidParameters("s_end must exceed s0".into()))?;
    let run_one = |d: f64, keep: &mut Vec<RadialField>| -> Result<Exit> {
        let init = build(d)?;
        let mut exit = Exit { sign: 0, s: cfg.s_end };
        let res = evolve_physical_with(&init, params, &solver, &checks, |field| {
            keep.push(field.clone());
            let (s, th) = exp_theta0(field, params, c, basis, t_blowup)?;
            if th.abs() > cfg.a / (s * s) {
                exit = Exit { sign: if th > 0.0 { 1 } else { -1 }, s };
                return Ok(Control::Stop);
            }
            Ok(Control::Continue)
        });
        match res {
            Ok(run) => {
                if exit.sign == 0 && run.blew_up {
                    exit = Exit { sign: 1, s: -(t_blowup - run.last.time).ln() };
                }
                Ok(exit)
            }
            Err(Error::Overflow { .. }) | Err(Error::Stiffness { .. }) => Ok(Exit { sign: 1, s: cfg.s0 }),
            Err(e) => Err(e),
        }
    };
    let bisection = bisect_escape(|d| run_one(d, &mut Vec::new()), lo, hi, cfg.max_iter)?;
    let (best, _) = bisection.best();
    let mut trajectory = Vec::new();
    let exit = run_one(best, &mut trajectory)?;
    Ok(ExpShootResult { d0_star: bisection.mid(), bisection, initial: build(best)?, trajectory, reached: exit.s })
}

/// Shrinks `bracket` towards 0 until both ends produce valid data.
fn admissible_bracket(build: &impl Fn(f64) -> Result<RadialField>, bracket: (f64, f64)) -> Result<(f64, f64)> {
    let clip = |mut d: f64| -> Result<f64> {
        for _ in 0..200 {
            match build(d) {
                Ok(_) => return Ok(d),
                Err(Error::Gluing { .. }) => d *= 0.95,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Gluing { r: 0.0, jump: d, tolerance: 0.0 })
    };
    Ok((clip(bracket.0)?, clip(bracket.1)?))
}

/// Similarity-frame view of a physical exponential state at the nodes of
/// `grid` (which must fit inside the physical support).
pub fn exp_to_similarity(field: &RadialField, params: &Parameters, t_blowup: f64, grid: &[f64]) -> Result<RadialField> {
    let left = t_blowup - field.time;
    let scale = left.sqrt();
    let ln_left = left.ln();
    let mut first = Vec::with_capacity(grid.len());
    let mut second = Vec::with_capacity(grid.len());
    for &y in grid {
        let (u, v) = field.interpolate(y * scale).ok_or_else(|| Error::OutOfDomain(format!("y = {y} beyond the physical support")))?;
        first.push((params.q * u + ln_left).exp());
        second.push((params.p * v + ln_left).exp());
    }
    RadialField::new(grid.to_vec(), first, second, Frame::Similarity, -ln_left, field.case)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::compute_constants;
    use crate::verifier::check_shrinking;

    fn model(root: f64) -> impl FnMut(f64) -> Result<Exit> {
        move |d| Ok(Exit { sign: if d > root { 1 } else { -1 }, s: 20.0 - (d - root).abs().ln() })
    }

    #[test]
    fn bisection_closes_on_the_switch_point() {
        let b = bisect_escape(model(0.3), -10.0, 10.0, 200).unwrap();
        assert!(b.hi - b.lo <= 4.0 * f64::EPSILON);
        assert!((b.mid() - 0.3).abs() < 1e-15);
        assert_eq!((b.exit_lo.sign, b.exit_hi.sign), (-1, 1));
        assert!(b.best().1.s > 50.0);
    }

    #[test]
    fn bisection_respects_the_iteration_cap() {
        let b = bisect_escape(model(0.3), -10.0, 10.0, 5).unwrap();
        assert_eq!(b.iterations, 5);
        assert!((b.hi - b.lo - 20.0 / 32.0).abs() < 1e-12);
        assert!(b.lo <= 0.3 && 0.3 <= b.hi);
    }

    #[test]
    fn same_sign_ends_are_not_a_bracket() {
        let r = bisect_escape(model(20.0), -10.0, 10.0, 10);
        assert!(matches!(r, Err(Error::NoBracket { sign: -1 })));
    }

    #[test]
    fn trapped_candidate_ends_the_search() {
        let run = |d: f64| Ok(Exit { sign: if d.abs() < 1.0 { 0 } else { d.signum() as i8 }, s: 30.0 });
        let b = bisect_escape(run, -10.0, 10.0, 64).unwrap();
        assert_eq!(b.trapped, Some(0.0));
        assert_eq!(b.mid(), 0.0);
    }

    #[test]
    fn short_shoot_stays_in_the_shrinking_set() {
        let params = Parameters::power(2.0, 2.0, 1.0).unwrap();
        let c = compute_constants(&params).unwrap();
        let basis = Basis::new(&params, &c, 4).unwrap();
        let mut cfg = ShootConfig::new(20.0, 30.0);
        cfg.points = 512;
        let r = shoot(&params, &c, &basis, &cfg).unwrap();
        assert!(r.d0_star.abs() < 10.0);
        assert!(r.reached >= 30.0 - 1e-9, "{}", r.reached);
        assert!(r.trajectory.len() >= 10, "{}", r.trajectory.len());
        for cp in &r.trajectory {
            let m = check_shrinking(cp, &params, &c, &basis, cfg.a, cfg.k_cutoff).unwrap();
            assert!(m.holds(), "s = {} {:?}", cp.time, m.binding());
        }
    }
}

//! Time integration in the physical and similarity frames.
//!
//! The physical solver runs until the solution passes a blowup threshold and
//! estimates the blowup time from the last decade of growth. The similarity
//! solver advances `(Phi, Psi)` in `s` on a fixed grid and reports escapes.
//! Both offer an adaptive Dormand-Prince path and an IMEX path that treats
//! diffusion (and, in the similarity frame, the linear damping) implicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::{check_grid, solve_tridiagonal, RadialOperator};
use crate::field::{Frame, RadialField};
use crate::ode::{Control, Dopri5};
use crate::params::{approx_profile, approx_profile_ds, compute_constants, BlowupConstants, Nonlinearity, Parameters};
use crate::sim_frame::{signed_pow, SimilaritySystem};

/// Largest exponent passed to `exp` in the physical exponential rhs.
const EXP_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Adaptive Dormand-Prince 5(4) on the method-of-lines system.
    Explicit,
    /// Physical frame: backward Euler with step doubling. Similarity frame:
    /// second-order semi-implicit BDF with a fixed step.
    Imex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterBoundary {
    /// Dirichlet, pinned to the approximate profile at the current `s`.
    Profile,
    /// Dirichlet, held at the initial value.
    Initial,
    /// Zero flux through the mirrored ghost node.
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Fraction of the explicit diffusion limit used as the first step.
    pub cfl: f64,
    /// Largest step (physical), or the fixed IMEX step (similarity).
    pub dt_max: f64,
    /// `||u||` (power) or `exp(q ||u||)` (exponential) that ends a physical run.
    pub blowup_threshold: f64,
    /// Final `t` (physical) or `s` (similarity).
    pub t_end: f64,
    /// Relative local error tolerance of the adaptive paths.
    pub tolerance: f64,
    pub integrator: Integrator,
    /// Similarity checkpoint spacing in `s`.
    pub checkpoint_every: f64,
    pub outer_boundary: OuterBoundary,
    /// A similarity run escapes once `sup |Phi|` or `sup |Psi|` exceeds this
    /// multiple of `max(Gamma, gamma)`.
    pub escape_factor: f64,
    /// Keep every similarity checkpoint in the returned run.
    pub keep_checkpoints: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cfl: 0.4,
            dt_max: 0.02,
            blowup_threshold: 1e8,
            t_end: 10.0,
            tolerance: 1e-6,
            integrator: Integrator::Imex,
            checkpoint_every: 0.5,
            outer_boundary: OuterBoundary::Profile,
            escape_factor: 10.0,
            keep_checkpoints: true,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        let positive = [self.cfl, self.dt_max, self.blowup_threshold, self.tolerance, self.checkpoint_every, self.escape_factor];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameters(format!("solver settings must be positive and finite: {self:?}")));
        }
        Ok(())
    }
}

/// Grid on `[0, length]` with `points` intervals whose spacing grows
/// geometrically from about `h_min` at the origin.
pub fn graded_grid(length: f64, points: usize, h_min: f64) -> Result<Vec<f64>> {
    if !(length > 0.0) || points < 2 || !(h_min > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "graded grid needs length, h_min > 0 and points >= 2 (got {length}, {h_min}, {points})"
        )));
    }
    let uniform = length / points as f64;
    if h_min >= uniform {
        return Ok((0..=points).map(|j| uniform * j as f64).collect());
    }
    // first spacing L (e^{k/J} - 1)/(e^k - 1) = h_min, solved for k by bisection
    let n = points as f64;
    let first = |k: f64| length * (k / n).exp_m1() / k.exp_m1();
    let (mut lo, mut hi) = (1e-9, 1.0);
    while first(hi) > h_min {
        hi *= 2.0;
        if hi > 700.0 {
            return Err(Error::InvalidParameters(format!("h_min = {h_min} too small for {points} points")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if first(mid) > h_min {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k = 0.5 * (lo + hi);
    let mut grid: Vec<f64> = (0..=points).map(|j| length * (k * j as f64 / n).exp_m1() / k.exp_m1()).collect();
    grid[points] = length;
    Ok(grid)
}

/// `u_t = Lap u + F(v)`, `v_t = mu Lap v + G(u)` on a radial grid with a
/// Neumann outer row.
#[derive(Debug, Clone)]
pub struct PhysicalSystem {
    pub params: Parameters,
    pub grid: Vec<f64>,
    op_first: RadialOperator,
    op_second: RadialOperator,
}

impl PhysicalSystem {
    pub fn new(params: &Parameters, grid: Vec<f64>) -> Result<Self> {
        params.validate()?;
        check_grid(&grid)?;
        Ok(PhysicalSystem {
            op_first: RadialOperator::new(&grid, params.dim, 1.0, 0.0),
            op_second: RadialOperator::new(&grid, params.dim, params.mu, 0.0),
            params: *params,
            grid,
        })
    }

    /// `(F(v), G(u))`.
    pub fn reaction(&self, u: &[f64], v: &[f64], out_u: &mut [f64], out_v: &mut [f64]) -> Result<()> {
        let Parameters { p, q, .. } = self.params;
        match self.params.case {
            Nonlinearity::Power => {
                for j in 0..u.len() {
                    out_u[j] = signed_pow(v[j], p);
                    out_v[j] = signed_pow(u[j], q);
                }
            }
            Nonlinearity::Exponential => {
                for j in 0..u.len() {
                    let (eu, ev) = (p * v[j], q * u[j]);
                    if eu > EXP_LIMIT || ev > EXP_LIMIT {
                        return Err(Error::Overflow { r: self.grid[j], exponent: eu.max(ev) });
                    }
                    out_u[j] = eu.exp();
                    out_v[j] = ev.exp();
                }
            }
        }
        Ok(())
    }

    pub fn rhs(&self, u: &[f64], v: &[f64], out_u: &mut [f64], out_v: &mut [f64]) -> Result<()> {
        self.reaction(u, v, out_u, out_v)?;
        let n = u.len();
        let mut lu = vec![0.0; n];
        let mut lv = vec![0.0; n];
        self.op_first.apply(u, &mut lu);
        self.op_second.apply(v, &mut lv);
        for j in 0..n {
            out_u[j] += lu[j];
            out_v[j] += lv[j];
        }
        Ok(())
    }

    /// One IMEX Euler step: `(I - dt D) u' = u + dt F`.
    fn imex_euler(&self, u: &[f64], v: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = u.len();
        let mut fu = vec![0.0; n];
        let mut fv = vec![0.0; n];
        self.reaction(u, v, &mut fu, &mut fv)?;
        let bu = (0..n).map(|j| u[j] + dt * fu[j]).collect();
        let bv = (0..n).map(|j| v[j] + dt * fv[j]).collect();
        Ok((implicit_solve(&self.op_first, dt, 1.0, 0.0, bu)?, implicit_solve(&self.op_second, dt, 1.0, 0.0, bv)?))
    }

    fn sup_metric(&self, u: &[f64]) -> f64 {
        let sup = u.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.abs()));
        match self.params.case {
            Nonlinearity::Power => sup,
            Nonlinearity::Exponential => (self.params.q * sup).min(EXP_LIMIT).exp(),
        }
    }
}

/// Solves `(lead - dt (op - damp)) x = b` with the operator's own rows.
fn implicit_solve(op: &RadialOperator, dt: f64, lead: f64, damp: f64, b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let d = (0..n).map(|j| lead - dt * (op.diag[j] - damp)).collect();
    let dl = (1..n).map(|j| -dt * op.lower[j]).collect();
    let du = (0..n - 1).map(|j| -dt * op.upper[j]).collect();
    solve_tridiagonal(dl, d, du, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSample {
    pub t: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    /// Node where `|u|` peaks.
    pub argmax: f64,
}

/// Blowup estimates from the tail of a physical run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    /// Set only once the Type-I ratio has settled over the last decade.
    #[serde(rename = "T_est")]
    pub t_est: Option<f64>,
    /// Spread between fits over the last two decades.
    #[serde(rename = "T_ci")]
    pub t_ci: Option<f64>,
    /// `(t, (T_est - t)^alpha ||u||)` for power data, `(t, (T_est - t) e^{q ||u||})`
    /// for exponential data.
    #[serde(rename = "typeI_ratio_series")]
    pub type_i_ratio_series: Vec<(f64, f64)>,
    pub blowup_point_est: f64,
    /// Unconditioned fit, kept even when `t_est` is withheld.
    pub t_fit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalRun {
    pub samples: Vec<PhysicalSample>,
    /// States at the requested stop times that were reached.
    pub stops: Vec<RadialField>,
    pub last: RadialField,
    pub blew_up: bool,
    pub report: BlowupReport,
}

/// `||u||` rewritten to be roughly linear in `T - t`.
fn linearized_sup(params: &Parameters, c: &BlowupConstants, sup_u: f64) -> f64 {
    match params.case {
        Nonlinearity::Power => sup_u.powf(-1.0 / c.alpha),
        Nonlinearity::Exponential => (-params.q * sup_u).exp(),
    }
}

fn type_i_ratio(params: &Parameters, c: &BlowupConstants, left: f64, sup_u: f64) -> f64 {
    match params.case {
        Nonlinearity::Power => left.powf(c.alpha) * sup_u,
        Nonlinearity::Exponential => left * (params.q * sup_u).exp(),
    }
}

/// Least-squares root of the line through `(t, w)`.
fn fit_root(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let (mt, mw) = points.iter().fold((0.0, 0.0), |(a, b), (t, w)| (a + t / n, b + w / n));
    let (mut stt, mut stw) = (0.0, 0.0);
    for (t, w) in points {
        stt += (t - mt) * (t - mt);
        stw += (t - mt) * (w - mw);
    }
    let slope = stw / stt;
    if !(slope < 0.0) {
        return None;
    }
    Some(mt - mw / slope)
}

/// Fits `T` from the last decade of `T - t` (read off the growth of
/// `||u||`) and checks that the Type-I ratio has settled there.
pub fn blowup_report(params: &Parameters, samples: &[PhysicalSample]) -> Result<BlowupReport> {
    let c = compute_constants(params)?;
    let blowup_point_est = samples.last().map_or(0.0, |s| s.argmax);
    let empty = BlowupReport { t_est: None, t_ci: None, type_i_ratio_series: Vec::new(), blowup_point_est, t_fit: None };
    let Some(last) = samples.last() else { return Ok(empty) };
    let w: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, linearized_sup(params, &c, s.sup_u))).collect();
    let w_last = linearized_sup(params, &c, last.sup_u);
    let window = |lo: f64, hi: f64| -> Vec<(f64, f64)> { w.iter().copied().filter(|&(_, x)| x >= lo && x <= hi).collect() };
    let Some(t_fit) = fit_root(&window(w_last, 10.0 * w_last)) else { return Ok(empty) };
    let t_prev = fit_root(&window(10.0 * w_last, 100.0 * w_last));
    let type_i_ratio_series: Vec<(f64, f64)> =
        samples.iter().filter(|s| s.t < t_fit).map(|s| (s.t, type_i_ratio(params, &c, t_fit - s.t, s.sup_u))).collect();
    let tail: Vec<f64> = samples
        .iter()
        .filter(|s| {
            let x = linearized_sup(params, &c, s.sup_u);
            x >= w_last && x <= 10.0 * w_last && s.t < t_fit
        })
        .map(|s| type_i_ratio(params, &c, t_fit - s.t, s.sup_u))
        .collect();
    let settled = !tail.is_empty() && {
        let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        (hi - lo) / mean.abs() < 0.1
    };
    Ok(BlowupReport {
        t_est: settled.then_some(t_fit),
        t_ci: t_prev.map(|t| (t - t_fit).abs()),
        type_i_ratio_series,
        blowup_point_est,
        t_fit: Some(t_fit),
    })
}

fn sample_of(grid: &[f64], t: f64, u: &[f64], v: &[f64]) -> PhysicalSample {
    let (mut arg, mut sup_u) = (0, 0.0f64);
    for (j, x) in u.iter().enumerate() {
        if x.abs() > sup_u {
            sup_u = x.abs();
            arg = j;
        }
    }
    let sup_v = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    PhysicalSample { t, sup_u, sup_v, argmax: grid[arg] }
}

/// Runs the physical system from `init` until blowup or `config.t_end`.
pub fn evolve_physical(init: &RadialField, params: &Parameters, config: &SolverConfig) -> Result<PhysicalRun> {
    evolve_physical_with(init, params, config, &[], |_| Ok(Control::Continue))
}

/// As [`evolve_physical`], landing exactly on each of `stops` and handing
/// those states to `observer`, which may end the run.
pub fn evolve_physical_with<O>(
    init: &RadialField,
    params: &Parameters,
    config: &SolverConfig,
    stops: &[f64],
    mut observer: O,
) -> Result<PhysicalRun>
where
    O: FnMut(&RadialField) -> Result<Control>,
{
    config.validate()?;
    if init.frame != Frame::Physical {
        return Err(Error::InvalidParameters("evolve_physical expects a physical field".into()));
    }
    if !init.is_finite() {
        return Err(Error::InvalidParameters("initial data is not finite".into()));
    }
    let sys = PhysicalSystem::new(params, init.grid.clone())?;
    let mut stops: Vec<f64> = stops.iter().copied().filter(|&t| t > init.time && t <= config.t_end).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let state = match config.integrator {
        Integrator::Imex => physical_imex(&sys, init, config, &stops, &mut observer)?,
        Integrator::Explicit => physical_explicit(&sys, init, config, &stops, &mut observer)?,
    };
    let report = blowup_report(params, &state.samples)?;
    let last = RadialField::new(init.grid.clone(), state.u, state.v, Frame::Physical, state.t, init.case)?;
    Ok(PhysicalRun { samples: state.samples, stops: state.stopped_fields, last, blew_up: state.blew_up, report })
}

struct PhysicalState {
    t: f64,
    u: Vec<f64>,
    v: Vec<f64>,
    samples: Vec<PhysicalSample>,
    stopped_fields: Vec<RadialField>,
    blew_up: bool,
}

fn dt_floor(config: &SolverConfig, t: f64) -> f64 {
    1e-14 * config.t_end.abs().max(t.abs()).max(f64::MIN_POSITIVE)
}

fn physical_imex<O>(
    sys: &PhysicalSystem,
    init: &RadialField,
    config: &SolverConfig,
    stops: &[f64],
    observer: &mut O,
) -> Result<PhysicalState>
where
    O: FnMut(&RadialField) -> Result<Control>,
{
    let grid = &sys.grid;
    let mut st = PhysicalState {
        t: init.time,
        u: init.first.clone(),
        v: init.second.clone(),
        samples: vec![sample_of(grid, init.time, &init.first, &init.second)],
        stopped_fields: Vec::new(),
        blew_up: false,
    };
    let h_min = grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let mut dt = (config.cfl * h_min * h_min / (2.0 * sys.params.dim_f64() * sys.params.mu.max(1.0))).min(config.dt_max);
    let mut next_stop = 0;
    let tol = config.tolerance;
    loop {
        if sys.sup_metric(&st.u) >= config.blowup_threshold {
            st.blew_up = true;
            break;
        }
        if st.t >= config.t_end {
            break;
        }
        let target = stops.get(next_stop).copied().unwrap_or(config.t_end).min(config.t_end);
        let step = dt.min(target - st.t);
        let lands = step >= target - st.t;
        let full = sys.imex_euler(&st.u, &st.v, step);
        let half = sys.imex_euler(&st.u, &st.v, 0.5 * step).and_then(|(u, v)| sys.imex_euler(&u, &v, 0.5 * step));
        let (err, new) = match (full, half) {
            (Ok((fu, fv)), Ok((hu, hv))) => {
                let mut err = 0.0f64;
                let mut nu = Vec::with_capacity(hu.len());
                let mut nv = Vec::with_capacity(hv.len());
                for j in 0..hu.len() {
                    let su = tol * (1.0 + hu[j].abs());
                    let sv = tol * (1.0 + hv[j].abs());
                    err = err.max((hu[j] - fu[j]).abs() / su).max((hv[j] - fv[j]).abs() / sv);
                    nu.push(2.0 * hu[j] - fu[j]);
                    nv.push(2.0 * hv[j] - fv[j]);
                }
                (if err.is_finite() { err } else { f64::INFINITY }, Some((nu, nv)))
            }
            (Err(Error::Overflow { .. }), _) | (_, Err(Error::Overflow { .. })) => (f64::INFINITY, None),
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        if err <= 1.0 {
            let (nu, nv) = new.expect("accepted step has a state");
            st.t = if lands { target } else { st.t + step };
            st.u = nu;
            st.v = nv;
            st.samples.push(sample_of(grid, st.t, &st.u, &st.v));
            if !lands {
                dt = step * (0.9 / err.max(1e-10).sqrt()).clamp(0.2, 2.0);
            }
            dt = dt.min(config.dt_max);
            if lands && next_stop < stops.len() && target == stops[next_stop] {
                next_stop += 1;
                let field = RadialField::new(grid.clone(), st.u.clone(), st.v.clone(), Frame::Physical, st.t, init.case)?;
                let ctl = observer(&field)?;
                st.stopped_fields.push(field);
                if ctl == Control::Stop {
                    break;
                }
            }
        } else {
            dt = step * (0.9 / err.sqrt()).clamp(0.1, 0.5);
            if dt < dt_floor(config, st.t) {
                return Err(Error::Stiffness { t: st.t, dt });
            }
        }
    }
    Ok(st)
}

fn physical_explicit<O>(
    sys: &PhysicalSystem,
    init: &RadialField,
    config: &SolverConfig,
    stops: &[f64],
    observer: &mut O,
) -> Result<PhysicalState>
where
    O: FnMut(&RadialField) -> Result<Control>,
{
    let grid = &sys.grid;
    let n = grid.len();
    let mut st = PhysicalState {
        t: init.time,
        u: init.first.clone(),
        v: init.second.clone(),
        samples: Vec::new(),
        stopped_fields: Vec::new(),
        blew_up: false,
    };
    let h_min = grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let mut solver = Dopri5::with_tol(config.tolerance, config.tolerance);
    solver.h_max = config.dt_max;
    solver.h0 = Some((config.cfl * h_min * h_min / (2.0 * sys.params.dim_f64() * sys.params.mu.max(1.0))).min(config.dt_max));
    let mut y: Vec<f64> = init.first.iter().chain(&init.second).copied().collect();
    let mut targets: Vec<f64> = stops.to_vec();
    if targets.last() != Some(&config.t_end) {
        targets.push(config.t_end);
    }
    let mut t0 = init.time;
    for (k, target) in targets.iter().copied().enumerate() {
        let mut hit = false;
        let out = solver.solve(
            |_, y, dy| {
                let (u, v) = y.split_at(n);
                let (du, dv) = dy.split_at_mut(n);
                sys.rhs(u, v, du, dv)
            },
            t0,
            y,
            target,
            |t, y| {
                let (u, v) = y.split_at(n);
                if t > t0 || st.samples.is_empty() {
                    st.samples.push(sample_of(grid, t, u, v));
                }
                if sys.sup_metric(u) >= config.blowup_threshold {
                    hit = true;
                    Control::Stop
                } else {
                    Control::Continue
                }
            },
        )?;
        y = out.y;
        t0 = out.t;
        if hit {
            st.blew_up = true;
            break;
        }
        if k < stops.len() {
            let field = RadialField::new(grid.clone(), y[..n].to_vec(), y[n..].to_vec(), Frame::Physical, t0, init.case)?;
            let ctl = observer(&field)?;
            st.stopped_fields.push(field);
            if ctl == Control::Stop {
                break;
            }
        }
    }
    st.t = t0;
    st.u = y[..n].to_vec();
    st.v = y[n..].to_vec();
    Ok(st)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRun {
    /// Checkpoints at multiples of `checkpoint_every` past the start
    /// (empty unless `keep_checkpoints`). The initial state is included.
    pub checkpoints: Vec<RadialField>,
    pub last: RadialField,
    /// First checkpoint-free `s` at which the solution left every bounded set.
    pub escaped_at: Option<f64>,
    /// True when the observer ended the run.
    pub stopped: bool,
}

fn escape_level(c: &BlowupConstants, config: &SolverConfig) -> f64 {
    config.escape_factor * c.gamma_cap.max(c.gamma_small)
}

fn escaped(f: &[f64], g: &[f64], level: f64) -> bool {
    f.iter().chain(g).any(|x| !(x.abs() <= level))
}

/// Advances a similarity field to `config.t_end`.
pub fn evolve_similarity(init: &RadialField, params: &Parameters, c: &BlowupConstants, config: &SolverConfig) -> Result<SimilarityRun> {
    evolve_similarity_with(init, params, c, config, |_| Ok(Control::Continue))
}

/// As [`evolve_similarity`], calling `observer` at every checkpoint
/// (including the initial state).
pub fn evolve_similarity_with<O>(
    init: &RadialField,
    params: &Parameters,
    c: &BlowupConstants,
    config: &SolverConfig,
    mut observer: O,
) -> Result<SimilarityRun>
where
    O: FnMut(&RadialField) -> Result<Control>,
{
    config.validate()?;
    if init.frame != Frame::Similarity {
        return Err(Error::InvalidParameters("evolve_similarity expects a similarity field".into()));
    }
    if config.outer_boundary == OuterBoundary::Profile && init.time < 1.0 {
        return Err(Error::OutOfDomain(format!("profile boundary needs s >= 1 (got {})", init.time)));
    }
    let sys = SimilaritySystem::new(params, c, init.grid.clone())?;
    let level = escape_level(c, config);
    let mut run = SimilarityRun { checkpoints: Vec::new(), last: init.clone(), escaped_at: None, stopped: false };
    if escaped(&init.first, &init.second, level) {
        run.escaped_at = Some(init.time);
        return Ok(run);
    }
    if config.keep_checkpoints {
        run.checkpoints.push(init.clone());
    }
    if observer(init)? == Control::Stop {
        run.stopped = true;
        return Ok(run);
    }
    match config.integrator {
        Integrator::Imex => similarity_imex(&sys, init, config, level, &mut run, &mut observer)?,
        Integrator::Explicit => similarity_explicit(&sys, init, config, level, &mut run, &mut observer)?,
    }
    Ok(run)
}

/// Boundary values at the outer node for time `s`.
fn outer_value(sys: &SimilaritySystem, init: &RadialField, boundary: OuterBoundary, s: f64) -> Option<(f64, f64)> {
    let n = init.len();
    match boundary {
        OuterBoundary::Profile => approx_profile(&sys.params, &sys.constants, init.grid[n - 1], s).ok(),
        OuterBoundary::Initial => Some((init.first[n - 1], init.second[n - 1])),
        OuterBoundary::Neumann => None,
    }
}

/// Multiples of `every` in `(s0, s_end)`, then `s_end`.
fn checkpoint_times(s0: f64, every: f64, s_end: f64) -> Vec<f64> {
    let first = (s0 / every + 1e-9).floor() as i64 + 1;
    let mut out: Vec<f64> = (first..).map(|k| k as f64 * every).take_while(|&t| t < s_end - 1e-9 * every).collect();
    if s_end > s0 {
        out.push(s_end);
    }
    out
}

fn similarity_imex<O>(
    sys: &SimilaritySystem,
    init: &RadialField,
    config: &SolverConfig,
    level: f64,
    run: &mut SimilarityRun,
    observer: &mut O,
) -> Result<()>
where
    O: FnMut(&RadialField) -> Result<Control>,
{
    let n = init.len();
    let c = &sys.constants;
    let (op_f, op_g) = sys.operators();
    // the implicit part is (L - alpha) per component; alpha = beta = 1 in the exponential frame
    let (damp_f, damp_g) = match sys.params.case {
        Nonlinearity::Power => (c.alpha, c.beta),
        Nonlinearity::Exponential => (1.0, 1.0),
    };
    let mut op_f = op_f.clone();
    let mut op_g = op_g.clone();
    let dirichlet = config.outer_boundary != OuterBoundary::Neumann;
    if dirichlet {
        for op in [&mut op_f, &mut op_g] {
            op.lower[n - 1] = 0.0;
            op.diag[n - 1] = 0.0;
        }
    }
    let explicit = |f: &[f64], g: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rf = vec![0.0; n];
        let mut rg = vec![0.0; n];
        sys.rhs(f, g, &mut rf, &mut rg)?;
        let mut lf = vec![0.0; n];
        let mut lg = vec![0.0; n];
        op_f.apply(f, &mut lf);
        op_g.apply(g, &mut lg);
        for j in 0..n {
            rf[j] -= lf[j] - damp_f * f[j];
            rg[j] -= lg[j] - damp_g * g[j];
        }
        if dirichlet {
            rf[n - 1] = 0.0;
            rg[n - 1] = 0.0;
        }
        Ok((rf, rg))
    };
    let solve = |lead: f64, dt: f64, mut bf: Vec<f64>, mut bg: Vec<f64>, s_new: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        if let Some((a, b)) = outer_value(sys, init, config.outer_boundary, s_new) {
            bf[n - 1] = a * lead;
            bg[n - 1] = b * lead;
        }
        let f = implicit_solve_damped(&op_f, dt, lead, damp_f, bf, dirichlet)?;
        let g = implicit_solve_damped(&op_g, dt, lead, damp_g, bg, dirichlet)?;
        Ok((f, g))
    };

    let s0 = init.time;
    let mut s = s0;
    let mut cur = (init.first.clone(), init.second.clone());
    let mut prev: Option<History> = None;
    for target in checkpoint_times(s0, config.checkpoint_every, config.t_end) {
        let span = target - s;
        let steps = (span / config.dt_max - 1e-9).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for k in 0..steps {
            let s_new = if k + 1 == steps { target } else { s + dt };
            let n_cur = explicit(&cur.0, &cur.1)?;
            let next = match prev.take() {
                // a change of step restarts with one Euler step
                Some(History { dt: old_dt, state: (uo, vo), explicit: n_old }) if (old_dt - dt).abs() <= 1e-12 * dt => {
                    let bf = (0..n).map(|j| 2.0 * cur.0[j] - 0.5 * uo[j] + dt * (2.0 * n_cur.0[j] - n_old.0[j])).collect();
                    let bg = (0..n).map(|j| 2.0 * cur.1[j] - 0.5 * vo[j] + dt * (2.0 * n_cur.1[j] - n_old.1[j])).collect();
                    solve(1.5, dt, bf, bg, s_new)?
                }
                _ => {
                    let bf = (0..n).map(|j| cur.0[j] + dt * n_cur.0[j]).collect();
                    let bg = (0..n).map(|j| cur.1[j] + dt * n_cur.1[j]).collect();
                    solve(1.0, dt, bf, bg, s_new)?
                }
            };
            prev = Some(History { dt, state: std::mem::replace(&mut cur, next), explicit: n_cur });
            s = s_new;
            if escaped(&cur.0, &cur.1, level) {
                run.escaped_at = Some(s);
                run.last = RadialField::new(init.grid.clone(), cur.0.clone(), cur.1.clone(), Frame::Similarity, s, init.case)?;
                return Ok(());
            }
        }
        let field = RadialField::new(init.grid.clone(), cur.0.clone(), cur.1.clone(), Frame::Similarity, s, init.case)?;
        if config.keep_checkpoints {
            run.checkpoints.push(field.clone());
        }
        let ctl = observer(&field)?;
        run.last = field;
        if ctl == Control::Stop {
            run.stopped = true;
            return Ok(());
        }
    }
    Ok(())
}

/// Previous state and explicit term of the two-step scheme.
struct History {
    dt: f64,
    state: (Vec<f64>, Vec<f64>),
    explicit: (Vec<f64>, Vec<f64>),
}

/// `(lead - dt (op - damp)) x = b`; with a Dirichlet outer row the last
/// equation is `lead x = b`.
fn implicit_solve_damped(op: &RadialOperator, dt: f64, lead: f64, damp: f64, b: Vec<f64>, dirichlet: bool) -> Result<Vec<f64>> {
    let n = b.len();
    let mut d: Vec<f64> = (0..n).map(|j| lead - dt * (op.diag[j] - damp)).collect();
    if dirichlet {
        d[n - 1] = lead;
    }
    let dl = (1..n).map(|j| -dt * op.lower[j]).collect();
    let du = (0..n - 1).map(|j| -dt * op.upper[j]).collect();
    solve_tridiagonal(dl, d, du, b)
}

fn similarity_explicit<O>(
    sys: &SimilaritySystem,
    init: &RadialField,
    config: &SolverConfig,
    level: f64,
    run: &mut SimilarityRun,
    observer: &mut O,
) -> Result<()>
where
    O: FnMut(&RadialField) -> Result<Control>,
{
    let n = init.len();
    let y_max = init.r_max();
    let boundary = config.outer_boundary;
    let params = sys.params;
    let c = sys.constants;
    let mut solver = Dopri5::with_tol(config.tolerance, config.tolerance);
    solver.h_max = config.dt_max;
    let mut y: Vec<f64> = init.first.iter().chain(&init.second).copied().collect();
    let mut s = init.time;
    for target in checkpoint_times(init.time, config.checkpoint_every, config.t_end) {
        let mut esc = None;
        let out = solver.solve(
            |s, y, dy| {
                let (f, g) = y.split_at(n);
                let (df, dg) = dy.split_at_mut(n);
                sys.rhs(f, g, df, dg)?;
                match boundary {
                    OuterBoundary::Profile => {
                        let (a, b) = approx_profile_ds(&params, &c, y_max, s);
                        df[n - 1] = a;
                        dg[n - 1] = b;
                    }
                    OuterBoundary::Initial => {
                        df[n - 1] = 0.0;
                        dg[n - 1] = 0.0;
                    }
                    OuterBoundary::Neumann => {}
                }
                Ok(())
            },
            s,
            y,
            target,
            |s, y| {
                let (f, g) = y.split_at(n);
                if escaped(f, g, level) {
                    esc = Some(s);
                    Control::Stop
                } else {
                    Control::Continue
                }
            },
        );
        let out = match out {
            Ok(out) => out,
            Err(Error::Stiffness { t, .. }) => {
                run.escaped_at = Some(t);
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        y = out.y;
        s = out.t;
        let field = RadialField::new(init.grid.clone(), y[..n].to_vec(), y[n..].to_vec(), Frame::Similarity, s, init.case)?;
        if esc.is_some() {
            run.escaped_at = esc;
            run.last = field;
            return Ok(());
        }
        if config.keep_checkpoints {
            run.checkpoints.push(field.clone());
        }
        let ctl = observer(&field)?;
        run.last = field;
        if ctl == Control::Stop {
            run.stopped = true;
            return Ok(());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ode_blowup_solution;
    use crate::sim_frame::uniform_grid;

    fn p22() -> (Parameters, BlowupConstants) {
        let p = Parameters::power(2.0, 2.0, 1.0).unwrap();
        let c = compute_constants(&p).unwrap();
        (p, c)
    }

    #[test]
    fn graded_grid_hits_requested_spacing() {
        let g = graded_grid(2.0, 1000, 1e-6).unwrap();
        assert_eq!(g.len(), 1001);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1000], 2.0);
        assert!((g[1] - 1e-6).abs() < 1e-9);
        assert!(g.windows(3).all(|w| w[2] - w[1] >= w[1] - w[0]));
        let u = graded_grid(1.0, 10, 0.5).unwrap();
        assert!((u[1] - 0.1).abs() < 1e-15);
        assert!(graded_grid(1.0, 10, 0.0).is_err());
    }

    #[test]
    fn constant_state_is_stationary() {
        for case in [Nonlinearity::Power, Nonlinearity::Exponential] {
            let params = Parameters::new(case, 2.0, 3.0, 0.5, 1).unwrap();
            let c = compute_constants(&params).unwrap();
            let [a, b] = c.constant_state();
            let init = RadialField::from_fn(uniform_grid(20.0, 200), Frame::Similarity, 5.0, case, |_| (a, b)).unwrap();
            for integrator in [Integrator::Imex, Integrator::Explicit] {
                let cfg =
                    SolverConfig { t_end: 8.0, integrator, tolerance: 1e-12, outer_boundary: OuterBoundary::Neumann, ..Default::default() };
                let run = evolve_similarity(&init, &params, &c, &cfg).unwrap();
                assert!(run.escaped_at.is_none());
                assert_eq!(run.last.time, 8.0);
                assert_eq!(run.checkpoints.len(), 7);
                for j in 0..init.len() {
                    assert!((run.last.first[j] - a).abs() < 1e-10, "{case:?} {integrator:?} {j} {}", run.last.first[j] - a);
                    assert!((run.last.second[j] - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn perturbed_constant_state_escapes() {
        let (params, c) = p22();
        let [a, b] = c.constant_state();
        for (sign, above) in [(1.0, true), (-1.0, false)] {
            let init = RadialField::from_fn(uniform_grid(20.0, 200), Frame::Similarity, 5.0, Nonlinearity::Power, |_| {
                (a * (1.0 + sign * 1e-3), b * (1.0 + sign * 1e-3))
            })
            .unwrap();
            let cfg = SolverConfig { t_end: 40.0, outer_boundary: OuterBoundary::Neumann, escape_factor: 2.0, ..Default::default() };
            let run = evolve_similarity(&init, &params, &c, &cfg).unwrap();
            if above {
                let s = run.escaped_at.expect("escapes upward");
                assert!((s - 5.0 - (1e3f64).ln()).abs() < 1.5, "escape at {s}");
            } else {
                assert!(run.escaped_at.is_none());
                assert!(run.last.sup_first() < 1e-3);
            }
        }
    }

    #[test]
    fn constant_data_blowup_time() {
        let (params, c) = p22();
        let (u0, v0) = ode_blowup_solution(&params, &c, 0.0).unwrap();
        let init = RadialField::from_fn(uniform_grid(1.0, 20), Frame::Physical, 0.0, Nonlinearity::Power, |_| (u0, v0)).unwrap();
        let cfg = SolverConfig { t_end: 2.0, dt_max: 0.01, tolerance: 1e-7, ..Default::default() };
        let run = evolve_physical(&init, &params, &cfg).unwrap();
        assert!(run.blew_up);
        let t = run.report.t_est.expect("ratio settles");
        assert!((t - 1.0).abs() < 1e-3, "T_est = {t}");
        let tail = run.report.type_i_ratio_series.iter().rev().take(20);
        for &(_, r) in tail {
            assert!((r / c.gamma_cap - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn exponential_constant_data_blowup_time() {
        let params = Parameters::exponential(2.0, 1.0, 1.0).unwrap();
        let c = compute_constants(&params).unwrap();
        let (u0, v0) = ode_blowup_solution(&params, &c, 0.0).unwrap();
        let init = RadialField::from_fn(uniform_grid(1.0, 20), Frame::Physical, 0.0, Nonlinearity::Exponential, |_| (u0, v0)).unwrap();
        let cfg = SolverConfig { t_end: 2.0, dt_max: 0.01, tolerance: 1e-7, ..Default::default() };
        let run = evolve_physical(&init, &params, &cfg).unwrap();
        assert!(run.blew_up);
        let t = run.report.t_est.expect("ratio settles");
        assert!((t - 1.0).abs() < 1e-3, "T_est = {t}");
    }

    #[test]
    fn integrators_agree_on_a_short_run() {
        let (params, _) = p22();
        let init = RadialField::from_fn(uniform_grid(4.0, 80), Frame::Physical, 0.0, Nonlinearity::Power, |x| {
            ((-x * x).exp(), 0.5 * (-x * x).exp())
        })
        .unwrap();
        let mut out = Vec::new();
        for integrator in [Integrator::Imex, Integrator::Explicit] {
            let cfg = SolverConfig { t_end: 0.2, integrator, tolerance: 1e-8, dt_max: 1e-3, ..Default::default() };
            let run = evolve_physical_with(&init, &params, &cfg, &[0.1], |_| Ok(Control::Continue)).unwrap();
            assert!(!run.blew_up);
            assert_eq!(run.stops.len(), 1);
            assert_eq!(run.stops[0].time, 0.1);
            assert_eq!(run.last.time, 0.2);
            assert!(run.report.t_est.is_none());
            out.push(run.last);
        }
        for j in 0..out[0].len() {
            assert!((out[0].first[j] - out[1].first[j]).abs() < 1e-5);
        }
    }

    #[test]
    fn observer_can_stop_runs() {
        let (params, c) = p22();
        let [a, b] = c.constant_state();
        let init = RadialField::from_fn(uniform_grid(10.0, 50), Frame::Similarity, 5.0, Nonlinearity::Power, |_| (a, b)).unwrap();
        let cfg = SolverConfig { t_end: 10.0, outer_boundary: OuterBoundary::Initial, ..Default::default() };
        let mut seen = 0;
        let run = evolve_similarity_with(&init, &params, &c, &cfg, |_| {
            seen += 1;
            Ok(if seen == 3 { Control::Stop } else { Control::Continue })
        })
        .unwrap();
        assert!(run.stopped);
        assert_eq!(run.last.time, 6.0);
    }
}

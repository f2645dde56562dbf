//! Multi-step pipelines built on the core solvers: trapped shots, escape
//! fits, final-profile runs, the exponential trapped run and stability.

use blowup_core::error::{Error, Result};
use blowup_core::field::{Frame, RadialField};
use blowup_core::params::{approx_profile, BlowupConstants, Nonlinearity, Parameters};
use blowup_core::pde::{evolve_physical, graded_grid, BlowupReport, SolverConfig};
use blowup_core::shoot::{shoot, shoot_exp, trace_theta0, ExpShootConfig, ShootConfig, ShootResult};
use blowup_core::sim_frame::{from_similarity, uniform_grid, CutoffSpec};
use blowup_core::spectral::Basis;
use blowup_core::verifier::{
    build_initial_data_power, check_regions, check_shrinking, extract_final_profile, fit_final_profile, outer_profile_deviation,
    ExpDataOptions, FinalProfileFit, FinalProfileSample, InnerCheck, RegionReport, RegionThresholds, ShrinkingSetMargins,
};
use serde::{Deserialize, Serialize};

/// Margins and profile deviation of one checkpoint of a trapped run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrappedPoint {
    pub s: f64,
    pub min_margin: f64,
    pub binding: Option<String>,
    /// `sup_{|z| <= 2} |Phi - Phi_0|`.
    pub profile_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct TrappedShot {
    pub shot: ShootResult,
    pub points: Vec<TrappedPoint>,
    pub margins: Vec<ShrinkingSetMargins>,
}

impl TrappedShot {
    pub fn at(&self, s: f64) -> Option<&TrappedPoint> {
        self.points.iter().find(|p| (p.s - s).abs() < 1e-9)
    }

    /// Smallest margin over checkpoints with `s` in `[from, to]`.
    pub fn min_margin_on(&self, from: f64, to: f64) -> f64 {
        self.points.iter().filter(|p| p.s >= from - 1e-9 && p.s <= to + 1e-9).map(|p| p.min_margin).fold(f64::INFINITY, f64::min)
    }
}

/// Shoots, then evaluates every kept checkpoint against the shrinking set.
pub fn trapped_shot(params: &Parameters, c: &BlowupConstants, basis: &Basis, cfg: &ShootConfig) -> Result<TrappedShot> {
    let shot = shoot(params, c, basis, cfg)?;
    let mut points = Vec::new();
    let mut margins = Vec::new();
    let mut states = vec![&shot.initial];
    states.extend(shot.trajectory.iter().filter(|f| f.time > shot.initial.time));
    for field in states {
        let m = check_shrinking(field, params, c, basis, cfg.a, cfg.k_cutoff)?;
        points.push(TrappedPoint {
            s: field.time,
            min_margin: m.min_margin(),
            binding: m.binding().map(str::to_owned),
            profile_deviation: outer_profile_deviation(field, params, c, 2.0, 400)?,
        });
        margins.push(m);
    }
    Ok(TrappedShot { shot, points, margins })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeFit {
    pub d0: f64,
    /// Sign of `theta_0` at the exit from the band.
    pub sign: i8,
    pub exit_s: f64,
    /// Fitted rate of `|theta_0| ~ e^{lambda s}` after the exit.
    pub lambda: f64,
    pub fit_from: f64,
    pub fit_to: f64,
    pub samples: usize,
    pub trace: Vec<(f64, f64)>,
}

/// Runs `d0` from `cfg.s0`, waits for `theta_0` to leave the band and fits
/// the growth of its departure from the `d0_ref` run, from the exit until
/// `|theta_0|` reaches `cap`.
pub fn escape_fit(
    params: &Parameters,
    c: &BlowupConstants,
    basis: &Basis,
    cfg: &ShootConfig,
    d0: f64,
    d0_ref: f64,
    cap: f64,
) -> Result<EscapeFit> {
    let grid = uniform_grid(cfg.y_max, cfg.points);
    let run = |d: f64| -> Result<_> {
        let init = build_initial_data_power(params, c, basis, cfg.a, cfg.s0, d, 0.0, cfg.k_cutoff, grid.clone())?;
        Ok(trace_theta0(&init, params, c, basis, cfg, cfg.s_end, false, |_| {})?.0)
    };
    let trace = run(d0)?;
    let reference = run(d0_ref)?;
    if trace.exit.sign == 0 {
        return Err(Error::OutOfDomain(format!("d0 = {d0} stayed in the band up to s = {}", trace.exit.s)));
    }
    let pts: Vec<(f64, f64)> = trace
        .s
        .iter()
        .zip(&trace.theta0)
        .zip(&reference.theta0)
        .filter(|((s, _), _)| **s >= trace.exit.s - 1e-9)
        .take_while(|((_, th), _)| th.abs() <= cap)
        .map(|((s, th), r)| (*s, (th - r).abs().ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::OutOfDomain(format!("only {} samples between exit and cap", pts.len())));
    }
    let n = pts.len() as f64;
    let ms = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - ms).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - ms) * (p.1 - ml)).sum();
    Ok(EscapeFit {
        d0,
        sign: trace.exit.sign,
        exit_s: trace.exit.s,
        lambda: sxy / sxx,
        fit_from: pts[0].0,
        fit_to: pts[pts.len() - 1].0,
        samples: pts.len(),
        trace: trace.s.iter().copied().zip(trace.theta0.iter().copied()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalProfileConfig {
    /// The run starts from the approximate profile at `s0`, so `T = e^{-s0}`.
    pub s0: f64,
    pub length: f64,
    pub points: usize,
    pub h_min: f64,
    pub blowup_threshold: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub samples: usize,
    pub tolerance: f64,
}

impl Default for FinalProfileConfig {
    fn default() -> Self {
        FinalProfileConfig {
            s0: 6.0,
            length: 1.0,
            points: 2500,
            h_min: 5e-7,
            blowup_threshold: 1e12,
            x_lo: 1e-3,
            x_hi: 1e-2,
            samples: 41,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalProfileResult {
    pub samples: Vec<FinalProfileSample>,
    pub fit: FinalProfileFit,
    pub report: BlowupReport,
    pub t_last: f64,
    /// Time of the comparison state (threshold lowered a hundredfold).
    pub previous_time: Option<f64>,
}

/// The approximate profile at `s0` as physical data on `grid`, blowing up
/// near `T = e^{-s0}`.
pub fn profile_physical_data(params: &Parameters, c: &BlowupConstants, s0: f64, grid: &[f64]) -> Result<RadialField> {
    let t_blowup = (-s0).exp();
    let sim_grid: Vec<f64> = grid.iter().map(|x| x / t_blowup.sqrt()).collect();
    let sim = RadialField::from_fn(sim_grid, Frame::Similarity, s0, params.case, |y| approx_profile(params, c, y, s0).expect("s0 >= 1"))?;
    from_similarity(&sim, params, c, t_blowup, Some(grid))
}

/// Runs the approximate profile at `s0` to the blowup threshold on a graded
/// grid and reads off `u*` on `[x_lo, x_hi]`.
pub fn final_profile_run(params: &Parameters, c: &BlowupConstants, cfg: &FinalProfileConfig) -> Result<FinalProfileResult> {
    let t_blowup = (-cfg.s0).exp();
    let grid = graded_grid(cfg.length, cfg.points, cfg.h_min)?;
    let init = profile_physical_data(params, c, cfg.s0, &grid)?;
    let solver = SolverConfig {
        blowup_threshold: cfg.blowup_threshold,
        t_end: 2.0 * t_blowup,
        tolerance: cfg.tolerance,
        dt_max: t_blowup / 100.0,
        ..Default::default()
    };
    let run = evolve_physical(&init, params, &solver)?;
    if !run.blew_up {
        return Err(Error::OutOfDomain("final-profile run did not reach the blowup threshold".into()));
    }
    // the same run stopped two decades earlier gives the convergence estimate
    let early = SolverConfig { blowup_threshold: cfg.blowup_threshold / 100.0, ..solver };
    let previous = Some(evolve_physical(&init, params, &early)?.last);
    let xs: Vec<f64> = (0..cfg.samples).map(|k| cfg.x_lo * (cfg.x_hi / cfg.x_lo).powf(k as f64 / (cfg.samples - 1) as f64)).collect();
    let samples = extract_final_profile(&run.last, previous.as_ref(), params, c, &xs)?;
    let fit = fit_final_profile(&samples, params, c, cfg.x_lo, cfg.x_hi)?;
    Ok(FinalProfileResult { samples, fit, report: run.report, t_last: run.last.time, previous_time: previous.map(|p| p.time) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCheckpoint {
    pub s: f64,
    pub reports: Vec<RegionReport>,
}

#[derive(Debug, Clone)]
pub struct ExpTrappedRun {
    pub d0_star: f64,
    pub reached: f64,
    pub checkpoints: Vec<RegionCheckpoint>,
    pub initial: RadialField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpRunConfig {
    pub shoot: ExpShootConfig,
    pub length: f64,
    pub points: usize,
    pub h_min: f64,
    pub thresholds: RegionThresholds,
    /// Region checks run on every `check_stride`-th band check.
    pub check_stride: usize,
    #[serde(rename = "M")]
    pub m: usize,
    /// `K` of the shrinking-set cutoff in D1.
    pub k_cutoff: f64,
}

impl ExpRunConfig {
    pub fn new(s0: f64, s_end: f64) -> Self {
        ExpRunConfig {
            shoot: ExpShootConfig {
                a: 10.0,
                s0,
                s_end,
                bracket: (-10.0, 10.0),
                data: ExpDataOptions::default(),
                check_every: 0.1,
                max_iter: 48,
                solver: SolverConfig { tolerance: 1e-7, ..Default::default() },
            },
            length: 2.0,
            points: 2000,
            h_min: 3e-8,
            thresholds: RegionThresholds::default(),
            check_stride: 10,
            m: 4,
            k_cutoff: 2.0,
        }
    }
}

/// Exponential shoot in the physical frame, then the region checks along
/// the chosen run.
pub fn exp_trapped_run(params: &Parameters, c: &BlowupConstants, cfg: &ExpRunConfig) -> Result<ExpTrappedRun> {
    if params.case != Nonlinearity::Exponential {
        return Err(Error::InvalidParameters("exp_trapped_run is for the exponential case".into()));
    }
    let basis = Basis::new(params, c, cfg.m)?;
    let grid = graded_grid(cfg.length, cfg.points, cfg.h_min)?;
    let res = shoot_exp(params, c, &basis, &grid, &cfg.shoot)?;
    let t_blowup = (-cfg.shoot.s0).exp();
    let mut checkpoints = Vec::new();
    let states = std::iter::once(&res.initial).chain(res.trajectory.iter().skip(cfg.check_stride - 1).step_by(cfg.check_stride.max(1)));
    for field in states {
        let s = -(t_blowup - field.time).ln();
        let inner =
            InnerCheck { basis: &basis, a: cfg.shoot.a, k_cutoff: cfg.k_cutoff, y_max: 8.0 * cfg.k_cutoff * s.sqrt(), points: 1024 };
        let reports = check_regions(field, params, c, t_blowup, &cfg.thresholds, &res.initial, Some(inner))?;
        checkpoints.push(RegionCheckpoint { s, reports });
    }
    Ok(ExpTrappedRun { d0_star: res.d0_star, reached: res.reached, checkpoints, initial: res.initial })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub epsilon: f64,
    /// Re-shot `d0`, when the bisection bracketed.
    pub d0: Option<f64>,
    /// Shift of the blowup time implied by the change in the unstable mode.
    pub t_shift: Option<f64>,
    /// Blowup point moves only through odd modes, which radial data lack.
    pub point_shift: f64,
    pub reached: f64,
    pub profile_deviation: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub d0_star: f64,
    pub rows: Vec<StabilityRow>,
    /// Slope of `ln |t_shift|` against `ln epsilon` over the rows with a shift.
    pub fit_exponent: Option<f64>,
}

/// Perturbs the trapped data by `X (1 + eps chi)`, re-shoots `d0` and
/// converts the change of `d0` into a blowup-time shift.
pub fn stability_experiment(
    params: &Parameters,
    c: &BlowupConstants,
    basis: &Basis,
    cfg: &ShootConfig,
    epsilons: &[f64],
) -> Result<StabilityReport> {
    if params.case != Nonlinearity::Power {
        return Err(Error::InvalidParameters("the stability experiment re-shoots in the power similarity frame".into()));
    }
    let base = shoot(params, c, basis, cfg)?;
    let cutoff = CutoffSpec::new(cfg.k_cutoff, cfg.s0)?;
    // theta_0 produced by a unit shift of T, i.e. -e^{s0} (alpha Gamma, beta gamma)
    let per_shift = {
        let e = cfg.s0.exp();
        basis
            .project(|y| (-e * c.alpha * c.gamma_cap * cutoff.chi(y), -e * c.beta * c.gamma_small * cutoff.chi(y)), base.initial.r_max())?
            .theta[0]
    };
    let per_d0 = cfg.a / (cfg.s0 * cfg.s0);
    let mut rows = Vec::new();
    for &eps in epsilons {
        let row = if eps == 0.0 {
            let dev = base.trajectory.last().map(|f| outer_profile_deviation(f, params, c, 2.0, 400)).transpose()?;
            StabilityRow {
                epsilon: eps,
                d0: Some(base.d0_star),
                t_shift: Some(0.0),
                point_shift: 0.0,
                reached: base.reached,
                profile_deviation: dev,
                converged: dev.is_some_and(|d| d <= 0.1),
                error: None,
            }
        } else {
            match reshoot(params, c, basis, cfg, &base.initial, base.d0_star, eps, &cutoff) {
                Ok(shot) => {
                    let dev = shot.trajectory.last().map(|f| outer_profile_deviation(f, params, c, 2.0, 400)).transpose()?;
                    let d_theta = per_d0 * (shot.d0_star - base.d0_star);
                    StabilityRow {
                        epsilon: eps,
                        d0: Some(shot.d0_star),
                        t_shift: Some(-d_theta / per_shift),
                        point_shift: 0.0,
                        reached: shot.reached,
                        profile_deviation: dev,
                        converged: shot.reached >= cfg.s_end - 1e-9 && dev.is_some_and(|d| d <= 0.1),
                        error: None,
                    }
                }
                Err(e) => StabilityRow {
                    epsilon: eps,
                    d0: None,
                    t_shift: None,
                    point_shift: 0.0,
                    reached: cfg.s0,
                    profile_deviation: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        };
        rows.push(row);
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| match r.t_shift {
            Some(t) if r.epsilon > 0.0 && t != 0.0 => Some((r.epsilon.ln(), t.abs().ln())),
            _ => None,
        })
        .collect();
    let fit_exponent = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx
    });
    Ok(StabilityReport { d0_star: base.d0_star, rows, fit_exponent })
}

/// Shoot whose stage-0 candidates are `X* (1 + eps chi) + (d - d0*) (A/s0^2) (f0, g0) chi`.
#[allow(clippy::too_many_arguments)]
fn reshoot(
    params: &Parameters,
    c: &BlowupConstants,
    basis: &Basis,
    cfg: &ShootConfig,
    trapped: &RadialField,
    d0_star: f64,
    eps: f64,
    cutoff: &CutoffSpec,
) -> Result<ShootResult> {
    let mut perturbed = trapped.clone();
    for j in 0..perturbed.len() {
        let w = 1.0 + eps * cutoff.chi(perturbed.grid[j]);
        perturbed.first[j] *= w;
        perturbed.second[j] *= w;
    }
    blowup_core::shoot::shoot_from(params, c, basis, cfg, &perturbed, d0_star)
}

//! Single-experiment dispatch. Every pipeline returns its files in memory;
//! `run` writes them, hashes them and records the manifest.

use blowup_core::field::{Frame, RadialField};
use blowup_core::io::columns_to_string;
use blowup_core::params::{ode_blowup_solution, outer_profile, BlowupConstants, Nonlinearity, Parameters};
use blowup_core::pde::{evolve_physical, evolve_similarity, graded_grid, SolverConfig};
use blowup_core::reduced::{integrate_intermediate, integrate_reduced, intermediate_closed_form, intermediate_initial, ReducedState};
use blowup_core::shoot::{add_unstable_mode, ShootConfig};
use blowup_core::sim_frame::uniform_grid;
use blowup_core::spectral::Basis;
use blowup_core::verifier::{build_initial_data_power, outer_profile_deviation, Region};
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig, PhysicalData};
use crate::error::{LabError, Result};
use crate::experiments::{
    exp_trapped_run, final_profile_run, profile_physical_data, stability_experiment, trapped_shot, ExpRunConfig, FinalProfileConfig,
};
use crate::manifest::{now, FileRecord, RunManifest};
use crate::sweep::sweep;

/// Files and verdict produced by one pipeline.
#[derive(Debug, Default)]
pub struct Output {
    pub files: Vec<(String, Vec<u8>)>,
    pub passed: Option<bool>,
    pub summary: serde_json::Value,
}

impl Output {
    fn add(&mut self, name: &str, content: impl Into<Vec<u8>>) {
        self.files.push((name.to_owned(), content.into()));
    }

    fn add_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.add(name, serde_json::to_string_pretty(value)? + "\n");
        Ok(())
    }
}

/// Runs one experiment and writes its files and `manifest.json` into
/// `config.output_dir`. Pipeline errors are recorded in the manifest;
/// only failure to write the output is returned as `Err`.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest> {
    let mut manifest = RunManifest::new(config.clone());
    let outcome = config.validate().and_then(|()| execute(config));
    match outcome {
        Ok(out) => {
            for (name, content) in &out.files {
                let path = config.output_dir.join(name);
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                std::fs::write(&path, content)?;
                manifest.files.push(FileRecord::of(name, content));
            }
            manifest.passed = out.passed;
            manifest.summary = out.summary;
        }
        Err(e) => {
            manifest.error = Some(e.to_string());
            std::fs::create_dir_all(&config.output_dir)?;
        }
    }
    manifest.finished = now();
    manifest.write(&config.output_dir)?;
    Ok(manifest)
}

/// Runs the pipeline without touching the filesystem (sweeps excepted).
pub fn execute(config: &ExperimentConfig) -> Result<Output> {
    let params = config.params()?;
    let c = config.constants()?;
    match config.experiment {
        Experiment::Constants => constants(&params, &c),
        Experiment::Spectrum => spectrum(config, &params, &c),
        Experiment::ReducedOde => reduced(config, &params, &c),
        Experiment::SimulatePhysical => simulate_physical(config, &params, &c),
        Experiment::SimulateSimilarity => simulate_similarity(config, &params, &c),
        Experiment::Shoot | Experiment::VerifyShrinking => match params.case {
            Nonlinearity::Power => power_shoot(config, &params, &c),
            Nonlinearity::Exponential => exp_shoot(config, &params, &c),
        },
        Experiment::FinalProfile => final_profile(config, &params, &c),
        Experiment::Stability => stability(config, &params, &c),
        Experiment::Sweep => sweep_run(config),
    }
}

fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<Vec<u8>> {
    Ok(columns_to_string(header, rows)?.into_bytes())
}

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn constants(params: &Parameters, c: &BlowupConstants) -> Result<Output> {
    let mut out = Output::default();
    let mut summary = serde_json::to_value(c)?;
    if params.case == Nonlinearity::Power {
        // gamma^p = alpha Gamma, Gamma^q = beta gamma
        let r1 = (c.gamma_small.powf(params.p) - c.alpha * c.gamma_cap).abs();
        let r2 = (c.gamma_cap.powf(params.q) - c.beta * c.gamma_small).abs();
        summary["identity_residual"] = json!(r1.max(r2));
        out.passed = Some(r1.max(r2) < 1e-12);
    }
    out.add_json("constants.json", &summary)?;
    out.summary = summary;
    Ok(out)
}

fn spectrum(config: &ExperimentConfig, params: &Parameters, c: &BlowupConstants) -> Result<Output> {
    let basis = Basis::new(params, c, config.m)?;
    let mut out = Output::default();
    out.add("spectrum.json", basis.to_json()? + "\n");
    let rows = basis.pairs.iter().map(|p| vec![p.degree as f64, p.eigenvalue, flag(p.family == blowup_core::spectral::Family::Plus)]);
    out.add("eigenvalues.csv", csv(&["degree", "eigenvalue", "plus_family"], rows)?);
    let eig: Vec<f64> = basis.pairs.iter().map(|p| p.eigenvalue).collect();
    out.summary = json!({ "M": config.m, "eigenvalues": eig });
    Ok(out)
}

fn reduced(config: &ExperimentConfig, params: &Parameters, c: &BlowupConstants) -> Result<Output> {
    let mut out = Output::default();
    let (a0, a2) = config.reduced_init;
    let traj = integrate_reduced(c, ReducedState { a0, a2, s: config.s0() }, config.s_end())?;
    out.add("reduced.csv", traj.to_csv()?);
    let last = traj.last();
    let mut summary = json!({
        "last": last,
        "blew_up": traj.blew_up,
        "riccati_scaled_error": (last.s * last.a2 + 1.0 / c.c_star).abs() * c.c_star,
    });
    if params.case == Nonlinearity::Exponential {
        let k0 = config.thresholds.k0;
        let tr = integrate_intermediate(params, k0, intermediate_initial(params, k0), config.tau_end, &[])?;
        let mut dev = 0.0f64;
        for st in &tr.states {
            let exact = intermediate_closed_form(params, k0, st.tau)?;
            dev = dev.max((st.u_hat - exact.u_hat).abs()).max((st.v_hat - exact.v_hat).abs());
        }
        out.add("intermediate.csv", tr.to_csv()?);
        summary["intermediate_max_deviation"] = json!(dev);
        out.passed = Some(dev < 1e-6);
    }
    out.summary = summary;
    Ok(out)
}

fn simulate_physical(config: &ExperimentConfig, params: &Parameters, c: &BlowupConstants) -> Result<Output> {
    let (init, solver) = match config.physical_data {
        PhysicalData::Constant => {
            let (u0, v0) = ode_blowup_solution(params, c, 0.0)?;
            let init = RadialField::from_fn(uniform_grid(1.0, config.grid_points()), Frame::Physical, 0.0, params.case, |_| (u0, v0))?;
            let solver = SolverConfig { t_end: config.solver.t_end.max(2.0 * c.t_blowup), ..config.solver };
            (init, solver)
        }
        PhysicalData::Profile => {
            let s0 = config.s0();
            let t_blowup = (-s0).exp();
            let grid = graded_grid(1.0, config.grid_points(), 1e-3 * t_blowup.sqrt())?;
            let solver = SolverConfig { t_end: 2.0 * t_blowup, dt_max: config.solver.dt_max.min(t_blowup / 100.0), ..config.solver };
            (profile_physical_data(params, c, s0, &grid)?, solver)
        }
    };
    let run = evolve_physical(&init, params, &solver)?;
    let mut out = Output::default();
    out.add("samples.csv", csv(&["t", "sup_u", "sup_v", "argmax"], run.samples.iter().map(|s| vec![s.t, s.sup_u, s.sup_v, s.argmax]))?);
    out.add_json("report.json", &run.report)?;
    out.add("field.csv", run.last.to_csv()?);
    out.passed = Some(run.blew_up && run.report.t_est.is_some());
    out.summary = json!({ "blew_up": run.blew_up, "t_last": run.last.time, "T_est": run.report.t_est, "T_ci": run.report.t_ci });
    Ok(out)
}

fn simulate_similarity(config: &ExperimentConfig, params: &Parameters, c: &BlowupConstants) -> Result<Output> {
    let s0 = config.s0();
    let grid = uniform_grid(config.y_max(), config.grid_points());
    let basis = Basis::new(params, c, config.m)?;
    let init = match params.case {
        Nonlinearity::Power => build_initial_data_power(params, c, &basis, config.a, s0, config.d0, 0.0, config.k_cutoff, grid)?,
        Nonlinearity::Exponential => {
            let base = RadialField::from_fn(grid, Frame::Similarity, s0, params.case, |y| outer_profile(params, c, y / s0.sqrt()))?;
            add_unstable_mode(&base, &basis, config.a, config.k_cutoff, config.d0)?
        }
    };
    let solver = SolverConfig { t_end: config.s_end(), keep_checkpoints: true, ..config.solver };
    let run = evolve_similarity(&init, params, c, &solver)?;
    let mut rows = Vec::new();
    for f in &run.checkpoints {
        rows.push(vec![f.time, f.sup_first(), f.sup_second(), outer_profile_deviation(f, params, c, 2.0, 400)?]);
    }
    let mut out = Output::default();
    out.add("checkpoints.csv", csv(&["s", "sup_first", "sup_second", "profile_deviation"], rows)?);
    out.add("field.csv", run.last.to_csv()?);
    out.summary = json!({ "s_last": run.last.time, "escaped_at": run.escaped_at });
    Ok(out)
}

fn shoot_config(config: &ExperimentConfig) -> ShootConfig {
    ShootConfig {
        a: config.a,
        k_cutoff: config.k_cutoff,
        y_max: config.y_max(),
        points: config.grid_points(),
        solver: SolverConfig { checkpoint_every: 1.0, keep_checkpoints: false, ..config.solver },
        ..ShootConfig::new(config.s0(), config.s_end())
    }
}

fn power_shoot(config: &ExperimentConfig, params: &Parameters, c: &BlowupConstants) -> Result<Output> {
    let basis = Basis::new(params, c, config.m)?;
    let cfg = shoot_config(config);
    let res = trapped_shot(params, c, &basis, &cfg)?;
    let mut out = Output::default();
    let min_margin = res.min_margin_on(cfg.s0, cfg.s_end);
    let reached = res.shot.reached >= cfg.s_end - 1e-9;
    if config.experiment == Experiment::Shoot {
        let rows = res.points.iter().map(|p| vec![p.s, p.min_margin, p.profile_deviation]);
        out.add("margins.csv", csv(&["s", "min_margin", "profile_deviation"], rows)?);
        out.add_json("shoot.json", &json!({ "d0_star": res.shot.d0_star, "reached": res.shot.reached, "stages": res.shot.stages }))?;
        if let Some(last) = res.shot.trajectory.last() {
            out.add("field.csv", last.to_csv()?);
        }
        out.passed = Some(reached);
    } else {
        let names: Vec<String> = res.margins.first().map(|m| m.margins.iter().map(|x| x.name.clone()).collect()).unwrap_or_default();
        let mut header = vec!["s"];
        header.extend(names.iter().map(String::as_str));
        let rows = res.margins.iter().map(|m| std::iter::once(m.s).chain(names.iter().map(|n| opt(m.get(n).map(|x| x.margin)))).collect());
        out.add("margins.csv", csv(&header, rows)?);
        out.add_json("verify.json", &res.points)?;
        out.passed = Some(reached && min_margin >= 0.0);
    }
    out.summary = json!({ "d0_star": res.shot.d0_star, "reached": res.shot.reached, "min_margin": min_margin });
    Ok(out)
}

fn exp_shoot(config: &ExperimentConfig, params: &Parameters, c: &BlowupConstants) -> Result<Output> {
    let mut cfg = ExpRunConfig::new(config.s0(), config.s_end());
    cfg.shoot.a = config.a;
    cfg.points = config.grid_points();
    cfg.thresholds = config.thresholds;
    cfg.m = config.m;
    cfg.k_cutoff = config.k_cutoff;
    let res = exp_trapped_run(params, c, &cfg)?;
    let region = |cp: &crate::experiments::RegionCheckpoint, r: Region| cp.reports.iter().find(|x| x.region == r).cloned();
    let mut rows = Vec::new();
    let mut holds = [true; 3];
    for cp in &res.checkpoints {
        let mut row = vec![cp.s];
        for (k, r) in [Region::D1, Region::D2, Region::D3].into_iter().enumerate() {
            let rep = region(cp, r);
            holds[k] &= rep.as_ref().is_some_and(|x| x.holds);
            row.push(opt(rep.as_ref().map(|x| x.sup_deviation)));
            row.push(flag(rep.is_some_and(|x| x.holds)));
        }
        rows.push(row);
    }
    let mut out = Output::default();
    out.add("regions.csv", csv(&["s", "d1_sup", "d1_holds", "d2_sup", "d2_holds", "d3_sup", "d3_holds"], rows)?);
    out.add_json("shoot.json", &json!({ "d0_star": res.d0_star, "reached": res.reached, "checkpoints": res.checkpoints }))?;
    let reached = res.reached >= config.s_end() - 1e-9;
    out.passed = Some(match config.experiment {
        Experiment::Shoot => reached,
        _ => reached && holds.iter().all(|h| *h),
    });
    out.summary = json!({ "d0_star": res.d0_star, "reached": res.reached, "D1": holds[0], "D2": holds[1], "D3": holds[2] });
    Ok(out)
}

fn final_profile(config: &ExperimentConfig, params: &Parameters, c: &BlowupConstants) -> Result<Output> {
    let cfg = FinalProfileConfig { s0: config.s0(), points: config.grid_points(), ..Default::default() };
    let res = final_profile_run(params, c, &cfg)?;
    let rows = res.samples.iter().map(|s| vec![s.x, s.u_star, s.v_star, s.predicted_u, s.predicted_v, s.ratio_u, s.ratio_v, s.change_u]);
    let mut out = Output::default();
    out.add("final_profile.csv", csv(&["r", "u_star", "v_star", "predicted_u", "predicted_v", "ratio_u", "ratio_v", "change_u"], rows)?);
    out.add_json("fit.json", &json!({ "fit": res.fit, "report": res.report, "t_last": res.t_last, "previous_time": res.previous_time }))?;
    out.passed = Some(res.fit.slope_error() <= 0.1 && res.fit.residual_log < res.fit.residual_power);
    out.summary = json!({ "slope": res.fit.slope, "expected_slope": res.fit.expected_slope, "residual_power": res.fit.residual_power, "residual_log": res.fit.residual_log });
    Ok(out)
}

fn stability(config: &ExperimentConfig, params: &Parameters, c: &BlowupConstants) -> Result<Output> {
    let basis = Basis::new(params, c, config.m)?;
    let report = stability_experiment(params, c, &basis, &shoot_config(config), &config.epsilons)?;
    let rows = report
        .rows
        .iter()
        .map(|r| vec![r.epsilon, opt(r.d0), opt(r.t_shift), r.point_shift, r.reached, opt(r.profile_deviation), flag(r.converged)]);
    let mut out = Output::default();
    out.add("stability.csv", csv(&["epsilon", "d0", "t_shift", "point_shift", "reached", "profile_deviation", "converged"], rows)?);
    out.add_json("stability.json", &report)?;
    let linear = report.fit_exponent.is_none_or(|k| (k - 1.0).abs() <= 0.3);
    out.passed = Some(report.rows.iter().all(|r| r.converged) && linear);
    out.summary = json!({ "d0_star": report.d0_star, "fit_exponent": report.fit_exponent });
    Ok(out)
}

/// Child configs of a sweep, each writing to `run_NNN` under the parent.
pub fn sweep_configs(config: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
    let spec = config.sweep.as_ref().ok_or_else(|| LabError::Config("missing sweep section".into()))?;
    Ok(spec
        .values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut child = config.with_value(spec.parameter, v);
            child.experiment = spec.experiment;
            child.sweep = None;
            child.output_dir = config.output_dir.join(format!("run_{k:03}"));
            child
        })
        .collect())
}

fn sweep_run(config: &ExperimentConfig) -> Result<Output> {
    let spec = config.sweep.as_ref().expect("validated");
    let manifests = sweep(&sweep_configs(config)?, config.parallelism);
    let mut out = Output::default();
    let rows = spec.values.iter().zip(&manifests).map(|(&v, m)| vec![v, flag(m.ok())]);
    out.add("sweep.csv", csv(&[spec_column(spec.parameter), "ok"], rows)?);
    out.passed = Some(manifests.iter().all(RunManifest::ok));
    out.summary = json!({
        "runs": manifests.iter().map(|m| json!({ "ok": m.ok(), "error": m.error, "summary": m.summary })).collect::<Vec<_>>(),
    });
    Ok(out)
}

fn spec_column(p: crate::config::SweepParameter) -> &'static str {
    use crate::config::SweepParameter::*;
    match p {
        P => "p",
        Q => "q",
        Mu => "mu",
        A => "A",
        S0 => "s0",
        K0 => "K0",
        GridPoints => "grid_points",
    }
}

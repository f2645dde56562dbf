//! Initial data for the trapped runs, shrinking-set margins, region
//! checks for the exponential case and final-profile extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Frame, RadialField};
use crate::params::{approx_profile, BlowupConstants, Nonlinearity, Parameters};
use crate::sim_frame::{chi0, CutoffSpec};
use crate::spectral::{Basis, Family, ModeCoefficients};

/// Arguments of `ln` in the exponential initial data below this are rejected.
pub const LOG_FLOOR: f64 = 1e-8;

fn unstable_pair(basis: &Basis) -> Result<&crate::spectral::PolyPair> {
    basis.find(Family::Plus, 0).ok_or_else(|| Error::InvalidParameters("basis has no degree-0 mode".into()))
}

fn radial_only(d1: f64) -> Result<()> {
    if d1 != 0.0 {
        return Err(Error::InvalidParameters("radial fields carry no odd modes; d1 must be 0".into()));
    }
    Ok(())
}

/// Approximate profile plus `(A/s0^2) d0 (f0, g0) chi(., s0)` on `grid`.
#[allow(clippy::too_many_arguments)]
pub fn build_initial_data_power(
    params: &Parameters,
    c: &BlowupConstants,
    basis: &Basis,
    a: f64,
    s0: f64,
    d0: f64,
    d1: f64,
    k_cutoff: f64,
    grid: Vec<f64>,
) -> Result<RadialField> {
    radial_only(d1)?;
    let (f0, g0) = unstable_pair(basis)?.eval(0.0);
    let cutoff = CutoffSpec::new(k_cutoff, s0)?;
    let amp = a / (s0 * s0) * d0;
    RadialField::from_fn(grid, Frame::Similarity, s0, params.case, |y| {
        let (phi, psi) = approx_profile(params, c, y, s0).expect("s0 >= 1 checked by the cutoff");
        let w = amp * cutoff.chi(y);
        (phi + w * f0, psi + w * g0)
    })
}

/// Settings of the exponential initial data that the construction leaves
/// free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpDataOptions {
    /// `a` in the far tail `-ln(1 + a |x|^2)`.
    pub a_tail: f64,
    /// Radius below which the tail takes its logarithmic form.
    pub inner_radius: f64,
    /// `K` of the cutoff `chi(16 y0, s0)`.
    pub k_cutoff: f64,
    /// Largest allowed jump between the tail and the core on the gluing annulus.
    pub jump_tolerance: f64,
}

impl Default for ExpDataOptions {
    fn default() -> Self {
        ExpDataOptions { a_tail: 1.0, inner_radius: 0.5, k_cutoff: 4.0, jump_tolerance: 1.0 }
    }
}

/// `(hat u_*, hat v_*)`, i.e. `(q u, p v)` of the singular tail.
pub fn exp_tail(params: &Parameters, opts: &ExpDataOptions, x: f64) -> (f64, f64) {
    let x = x.abs();
    let far = -(opts.a_tail * x * x).ln_1p();
    let near = |k: f64| (4.0 * (params.mu + 1.0) * x.ln().abs() / (k * x * x)).ln();
    if x >= 1.0 {
        return (far, far);
    }
    let r = opts.inner_radius;
    let w = if x <= r { 1.0 } else { chi0(1.0 + (x - r) / (1.0 - r)) };
    if w == 1.0 {
        (near(params.p), near(params.q))
    } else {
        (w * near(params.p) + (1.0 - w) * far, w * near(params.q) + (1.0 - w) * far)
    }
}

/// Physical `(u, v)` at `t = 0` for blowup time `T = e^{-s0}`: the singular
/// tail glued to the log of the core profile, with the unstable mode
/// `d0 (A/s0)^2 (f0, g0) chi(16 y0, s0)` added inside the logarithm.
#[allow(clippy::too_many_arguments)]
pub fn build_initial_data_exp(
    params: &Parameters,
    c: &BlowupConstants,
    basis: &Basis,
    a: f64,
    s0: f64,
    d0: f64,
    d1: f64,
    opts: &ExpDataOptions,
    grid: Vec<f64>,
) -> Result<RadialField> {
    if params.case != Nonlinearity::Exponential {
        return Err(Error::InvalidParameters("exponential initial data needs the exponential case".into()));
    }
    radial_only(d1)?;
    if !(opts.a_tail > 0.0) || !(opts.inner_radius > 0.0 && opts.inner_radius < 1.0) {
        return Err(Error::InvalidParameters(format!("bad tail options {opts:?}")));
    }
    let (f0, g0) = unstable_pair(basis)?.eval(0.0);
    let cutoff = CutoffSpec::new(opts.k_cutoff, s0)?;
    let amp = d0 * a * a / (s0 * s0);
    let scale = (0.5 * s0).exp();
    let mut first = Vec::with_capacity(grid.len());
    let mut second = Vec::with_capacity(grid.len());
    for &x in &grid {
        let y0 = x * scale;
        let chi1 = chi0(y0 / s0);
        let tail = if chi1 < 1.0 { exp_tail(params, opts, x) } else { (0.0, 0.0) };
        let (mut qu, mut pv) = tail;
        if chi1 > 0.0 {
            let (phi, psi) = approx_profile(params, c, y0, s0)?;
            let w = amp * cutoff.chi(16.0 * y0);
            let (arg_f, arg_g) = (phi + w * f0, psi + w * g0);
            if !(arg_f > LOG_FLOOR && arg_g > LOG_FLOOR) {
                return Err(Error::Gluing { r: x, jump: arg_f.min(arg_g), tolerance: LOG_FLOOR });
            }
            let core = (s0 + arg_f.ln(), s0 + arg_g.ln());
            if chi1 < 1.0 {
                let jump = (core.0 - tail.0).abs().max((core.1 - tail.1).abs());
                if jump > opts.jump_tolerance {
                    return Err(Error::Gluing { r: x, jump, tolerance: opts.jump_tolerance });
                }
            }
            qu = core.0 * chi1 + if chi1 < 1.0 { tail.0 * (1.0 - chi1) } else { 0.0 };
            pv = core.1 * chi1 + if chi1 < 1.0 { tail.1 * (1.0 - chi1) } else { 0.0 };
        }
        first.push(qu / params.q);
        second.push(pv / params.p);
    }
    RadialField::new(grid, first, second, Frame::Physical, 0.0, params.case)
}

/// Projection of `(Phi, Psi) - (phi, psi)` onto the basis, optionally
/// truncated by `chi(., s)` first. `field` is sampled by interpolation, so
/// its grid only needs to cover the quadrature support.
pub fn project_perturbation(
    field: &RadialField,
    params: &Parameters,
    c: &BlowupConstants,
    basis: &Basis,
    cutoff: Option<&CutoffSpec>,
) -> Result<ModeCoefficients> {
    if field.frame != Frame::Similarity {
        return Err(Error::InvalidParameters("projection expects a similarity field".into()));
    }
    let s = field.time;
    basis.project(
        |y| {
            let (f, g) = field.interpolate(y).expect("inside the support");
            let (phi, psi) = approx_profile(params, c, y, s).expect("s >= 1");
            let w = cutoff.map_or(1.0, |k| k.chi(y));
            (w * (f - phi), w * (g - psi))
        },
        field.r_max(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `(bound - |value|) / bound`.
    pub margin: f64,
}

impl Margin {
    fn new(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Margin { name: name.into(), value, bound, margin: (bound - value.abs()) / bound }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkingSetMargins {
    pub s: f64,
    pub margins: Vec<Margin>,
}

impl ShrinkingSetMargins {
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn get(&self, name: &str) -> Option<&Margin> {
        self.margins.iter().find(|m| m.name == name)
    }

    pub fn holds(&self) -> bool {
        self.min_margin() >= 0.0
    }

    /// Name of the tightest inequality.
    pub fn binding(&self) -> Option<&str> {
        self.margins.iter().min_by(|a, b| a.margin.total_cmp(&b.margin)).map(|m| m.name.as_str())
    }
}

/// Every inequality of the shrinking set at the checkpoint's `s`. The
/// perturbation is split into `chi Lambda` (projected, remainder weighted
/// by `1 + |y|^{M+1}`) and `(1 - chi) Lambda` (sup norm).
pub fn check_shrinking(
    checkpoint: &RadialField,
    params: &Parameters,
    c: &BlowupConstants,
    basis: &Basis,
    a: f64,
    k_cutoff: f64,
) -> Result<ShrinkingSetMargins> {
    let m = basis.m;
    let s = checkpoint.time;
    let cutoff = CutoffSpec::new(k_cutoff, s)?;
    let coeffs = project_perturbation(checkpoint, params, c, basis, Some(&cutoff))?;
    let mut margins = Vec::new();
    let has = |family: Family, n: usize| basis.find(family, n).is_some();
    for n in 0..=m {
        if has(Family::Plus, n) {
            let bound = match n {
                0 | 1 => a / (s * s),
                2 => a.powi(4) * s.ln() / (s * s),
                _ => a.powi(n as i32) / s.powf((n as f64 + 1.0) / 2.0),
            };
            margins.push(Margin::new(format!("theta_{n}"), coeffs.theta[n], bound));
        }
    }
    for n in 0..=m {
        if has(Family::Minus, n) {
            let bound = if n <= 2 { a * a / (s * s) } else { a.powi(n as i32) / s.powf((n as f64 + 1.0) / 2.0) };
            margins.push(Margin::new(format!("theta_tilde_{n}"), coeffs.theta_tilde[n], bound));
        }
    }
    let (mut minus_f, mut minus_g, mut outer_f, mut outer_g) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let weight_pow = m as i32 + 1;
    for j in 0..checkpoint.len() {
        let y = checkpoint.grid[j];
        let (phi, psi) = approx_profile(params, c, y, s)?;
        let (lf, lg) = (checkpoint.first[j] - phi, checkpoint.second[j] - psi);
        let chi = cutoff.chi(y);
        let (pf, pg) = basis.reconstruct(&coeffs, y);
        let w = 1.0 + y.powi(weight_pow);
        minus_f = minus_f.max((chi * lf - pf).abs() / w);
        minus_g = minus_g.max((chi * lg - pg).abs() / w);
        outer_f = outer_f.max(((1.0 - chi) * lf).abs());
        outer_g = outer_g.max(((1.0 - chi) * lg).abs());
    }
    let minus_bound = a.powi(m as i32 + 1) / s.powf((m as f64 + 2.0) / 2.0);
    let outer_bound = a.powi(m as i32 + 2) / s.sqrt();
    margins.push(Margin::new("lambda_minus_first", minus_f, minus_bound));
    margins.push(Margin::new("lambda_minus_second", minus_g, minus_bound));
    margins.push(Margin::new("lambda_e_first", outer_f, outer_bound));
    margins.push(Margin::new("lambda_e_second", outer_g, outer_bound));
    Ok(ShrinkingSetMargins { s, margins })
}

/// `sup_{|z| <= z_max} |Phi(z sqrt(s), s) - Phi_0(z)|` of the first component,
/// sampled at `samples + 1` evenly spaced `z`.
pub fn outer_profile_deviation(field: &RadialField, params: &Parameters, c: &BlowupConstants, z_max: f64, samples: usize) -> Result<f64> {
    if field.frame != Frame::Similarity || samples == 0 {
        return Err(Error::InvalidParameters("profile deviation needs a similarity field and samples > 0".into()));
    }
    let root = field.time.sqrt();
    let mut sup: f64 = 0.0;
    for k in 0..=samples {
        let z = z_max * k as f64 / samples as f64;
        let (f, _) = field.interpolate(z * root).ok_or_else(|| Error::OutOfDomain(format!("z = {z} beyond the grid")))?;
        sup = sup.max((f - crate::params::outer_profile(params, c, z).0).abs());
    }
    Ok(sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    D1,
    D2,
    D3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionThresholds {
    #[serde(rename = "K0")]
    pub k0: f64,
    pub eps0: f64,
    pub alpha0: f64,
    pub delta0: f64,
    pub eta0: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
}

impl Default for RegionThresholds {
    fn default() -> Self {
        RegionThresholds { k0: 10.0, eps0: 0.1, alpha0: 0.5, delta0: 0.05, eta0: 0.05, c0: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: Region,
    /// D1: largest `|value| / bound` over the shrinking-set quantities.
    /// D2: largest `|u~ - u^|`, `|v~ - v^|`. D3: largest change since `t0`.
    pub sup_deviation: f64,
    /// D2: largest `sqrt(|ln sigma|) |grad_xi u~|`, compared with `C0`.
    /// D3: largest change of `|u_x|`, `|v_x|` since `t0`.
    pub grad_deviation: Option<f64>,
    pub holds: bool,
    /// Where `sup_deviation` was attained (`|x|`).
    pub worst_x: f64,
}

/// `sigma` in `(0, 1/e)` with `|x| = (K0/4) sqrt(sigma |ln sigma|)`.
pub fn sigma_of_x(x: f64, k0: f64) -> Result<f64> {
    let target = (4.0 * x.abs() / k0).powi(2);
    let g = |s: f64| s * s.ln().abs();
    let top = (-1.0f64).exp();
    if !(target > 0.0 && target < g(top)) {
        return Err(Error::RootFind(format!("no sigma in (0, 1/e) for |x| = {x} and K0 = {k0}")));
    }
    // g is increasing on (0, 1/e); bisect in log sigma
    let (mut lo, mut hi) = (-745.0f64, -1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Centered nodal derivatives of both components, zero at the origin.
fn nodal_gradient(field: &RadialField) -> RadialField {
    let g = crate::fd::Gradient::new(&field.grid);
    let mut out = field.clone();
    g.apply(&field.first, &mut out.first);
    g.apply(&field.second, &mut out.second);
    let n = field.len();
    let h = field.grid[n - 1] - field.grid[n - 2];
    out.first[n - 1] = (field.first[n - 1] - field.first[n - 2]) / h;
    out.second[n - 1] = (field.second[n - 1] - field.second[n - 2]) / h;
    out
}

/// Optional D1 ingredients: the spectral basis, `A`, the cutoff `K` and
/// the similarity grid `(y_max, points)` used for the frame change.
#[derive(Debug, Clone, Copy)]
pub struct InnerCheck<'a> {
    pub basis: &'a Basis,
    pub a: f64,
    pub k_cutoff: f64,
    pub y_max: f64,
    pub points: usize,
}

/// The three-region test of an exponential physical state at `t < T`
/// against the thresholds, with `t0_snapshot` the initial state on the
/// same grid. D1 is skipped when `inner` is `None`.
pub fn check_regions(
    checkpoint: &RadialField,
    params: &Parameters,
    c: &BlowupConstants,
    t_blowup: f64,
    th: &RegionThresholds,
    t0_snapshot: &RadialField,
    inner: Option<InnerCheck<'_>>,
) -> Result<Vec<RegionReport>> {
    if params.case != Nonlinearity::Exponential || checkpoint.frame != Frame::Physical {
        return Err(Error::InvalidParameters("region checks take a physical exponential state".into()));
    }
    let left = t_blowup - checkpoint.time;
    if !(left > 0.0 && left < (-1.0f64).exp()) {
        return Err(Error::OutOfDomain(format!("T - t = {left} outside (0, 1/e)")));
    }
    let mut out = Vec::new();
    if let Some(ic) = inner {
        let s = -left.ln();
        let y_max = ic.y_max.min(checkpoint.r_max() / left.sqrt());
        let grid = crate::sim_frame::uniform_grid(y_max, ic.points);
        let sim = crate::shoot::exp_to_similarity(checkpoint, params, t_blowup, &grid)?;
        let m = check_shrinking(&sim, params, c, ic.basis, ic.a, ic.k_cutoff)?;
        out.push(RegionReport {
            region: Region::D1,
            sup_deviation: 1.0 - m.min_margin(),
            grad_deviation: None,
            holds: m.holds(),
            worst_x: 0.0,
        });
        debug_assert!(s > 0.0);
    }

    let grad = nodal_gradient(checkpoint);
    let x_in = th.k0 / 4.0 * (left * left.ln().abs()).sqrt();
    let mut dev: f64 = 0.0;
    let mut gdev: f64 = 0.0;
    let mut worst = x_in;
    if x_in < th.eps0 {
        let samples = 48;
        for i in 0..=samples {
            let x = x_in * (th.eps0 / x_in).powf(i as f64 / samples as f64);
            let sigma = sigma_of_x(x, th.k0)?;
            let tau = 1.0 - left / sigma;
            let hat = crate::reduced::intermediate_closed_form(params, th.k0, tau)?;
            let log_sigma = sigma.ln();
            let xi_max = th.alpha0 * log_sigma.abs().sqrt();
            for k in -8..=8 {
                let xi = xi_max * k as f64 / 8.0;
                let r = (x + xi * sigma.sqrt()).abs();
                let (Some((u, v)), Some((ux, vx))) = (checkpoint.interpolate(r), grad.interpolate(r)) else {
                    continue;
                };
                let d = (log_sigma / params.q + u - hat.u_hat).abs().max((log_sigma / params.p + v - hat.v_hat).abs());
                if d > dev {
                    dev = d;
                    worst = x;
                }
                gdev = gdev.max(sigma.sqrt() * ux.abs().max(vx.abs()) * log_sigma.abs().sqrt());
            }
        }
    }
    out.push(RegionReport {
        region: Region::D2,
        sup_deviation: dev,
        grad_deviation: Some(gdev),
        holds: dev <= th.delta0 && gdev <= th.c0,
        worst_x: worst,
    });

    let grad0 = nodal_gradient(t0_snapshot);
    let (mut d3, mut g3, mut worst3) = (0.0f64, 0.0f64, th.eps0 / 4.0);
    for j in 0..checkpoint.len() {
        let x = checkpoint.grid[j];
        if x < th.eps0 / 4.0 {
            continue;
        }
        let (Some((u0, v0)), Some((ux0, vx0))) = (t0_snapshot.interpolate(x), grad0.interpolate(x)) else {
            continue;
        };
        let d = (checkpoint.first[j] - u0).abs().max((checkpoint.second[j] - v0).abs());
        if d > d3 {
            d3 = d;
            worst3 = x;
        }
        g3 = g3.max((grad.first[j] - ux0).abs()).max((grad.second[j] - vx0).abs());
    }
    out.push(RegionReport {
        region: Region::D3,
        sup_deviation: d3,
        grad_deviation: Some(g3),
        holds: d3 <= th.eta0 && g3 <= th.eta0,
        worst_x: worst3,
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalProfileSample {
    pub x: f64,
    pub u_star: f64,
    pub v_star: f64,
    pub predicted_u: f64,
    pub predicted_v: f64,
    pub ratio_u: f64,
    pub ratio_v: f64,
    /// `|u(x, t_last) - u(x, t_prev)|`, the change over the last checkpoint interval.
    pub change_u: f64,
}

/// `u*(x)` read off the last resolved state at each `x`, against the
/// predicted final profile. `previous` (an earlier state on any grid)
/// supplies the convergence estimate.
pub fn extract_final_profile(
    last: &RadialField,
    previous: Option<&RadialField>,
    params: &Parameters,
    c: &BlowupConstants,
    xs: &[f64],
) -> Result<Vec<FinalProfileSample>> {
    if last.frame != Frame::Physical || last.len() < 4 {
        return Err(Error::InvalidParameters("final profile needs a physical state".into()));
    }
    let core = last.grid[3];
    xs.iter()
        .map(|&x| {
            let x = x.abs();
            if x < core {
                return Err(Error::OutOfDomain(format!("x = {x} inside the unresolved core (< {core})")));
            }
            let (u, v) = last.interpolate(x).ok_or_else(|| Error::OutOfDomain(format!("x = {x} beyond the grid")))?;
            let (pu, pv) = crate::params::eval_profile(crate::params::ProfileKind::FinalProfile, params, c, x, 0.0)?;
            let change_u = previous.and_then(|p| p.interpolate(x)).map_or(f64::NAN, |(u0, _)| (u - u0).abs());
            Ok(FinalProfileSample { x, u_star: u, v_star: v, predicted_u: pu, predicted_v: pv, ratio_u: u / pu, ratio_v: v / pv, change_u })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalProfileFit {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Power case: free slope of `ln u*` against `ln |x|` (expected `-2 alpha`).
    /// Exponential case: free slope of `u*` against `ln |x|` (expected `-2/q`).
    pub slope: f64,
    pub expected_slope: f64,
    /// Residual sum of squares with the slope fixed at `expected_slope` and
    /// only the amplitude fitted.
    pub residual_power: f64,
    /// Same, with the predicted `|ln |x||` factor included.
    pub residual_log: f64,
    /// Residuals of the free-slope fits without and with the factor.
    pub residual_power_free: f64,
    pub residual_log_free: f64,
}

impl FinalProfileFit {
    pub fn slope_error(&self) -> f64 {
        (self.slope - self.expected_slope).abs() / self.expected_slope.abs()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Slope and residual sum of squares of a least-squares line.
fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rss = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    (slope, rss)
}

/// Residual sum of squares of `ys` about its mean.
fn offset_fit(ys: &[f64]) -> f64 {
    let m = mean(ys);
    ys.iter().map(|y| (y - m).powi(2)).sum()
}

/// Fits the samples with `x_lo <= x <= x_hi`.
pub fn fit_final_profile(
    samples: &[FinalProfileSample],
    params: &Parameters,
    c: &BlowupConstants,
    x_lo: f64,
    x_hi: f64,
) -> Result<FinalProfileFit> {
    let pts: Vec<&FinalProfileSample> = samples.iter().filter(|s| s.x >= x_lo && s.x <= x_hi).collect();
    if pts.len() < 3 {
        return Err(Error::InvalidParameters(format!("need 3 samples in [{x_lo}, {x_hi}], have {}", pts.len())));
    }
    let lx: Vec<f64> = pts.iter().map(|s| s.x.ln()).collect();
    let loglog: Vec<f64> = pts.iter().map(|s| s.x.ln().abs().ln()).collect();
    let (ys, weight, expected_slope): (Vec<f64>, f64, f64) = match params.case {
        Nonlinearity::Power => (pts.iter().map(|s| s.u_star.ln()).collect(), c.alpha, -2.0 * c.alpha),
        Nonlinearity::Exponential => (pts.iter().map(|s| s.u_star).collect(), 1.0 / params.q, -2.0 / params.q),
    };
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::OutOfDomain("final profile samples must be positive".into()));
    }
    let (slope, residual_power_free) = line_fit(&lx, &ys);
    let corrected: Vec<f64> = ys.iter().zip(&loglog).map(|(y, l)| y - weight * l).collect();
    let (_, residual_log_free) = line_fit(&lx, &corrected);
    let fixed: Vec<f64> = ys.iter().zip(&lx).map(|(y, x)| y - expected_slope * x).collect();
    let fixed_log: Vec<f64> = fixed.iter().zip(&loglog).map(|(y, l)| y - weight * l).collect();
    Ok(FinalProfileFit {
        x_lo,
        x_hi,
        slope,
        expected_slope,
        residual_power: offset_fit(&fixed),
        residual_log: offset_fit(&fixed_log),
        residual_power_free,
        residual_log_free,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{compute_constants, eval_profile, ProfileKind};
    use crate::sim_frame::uniform_grid;
    use proptest::prelude::*;

    fn setup() -> (Parameters, BlowupConstants, Basis) {
        let params = Parameters::power(2.0, 2.0, 1.0).unwrap();
        let c = compute_constants(&params).unwrap();
        let basis = Basis::new(&params, &c, 4).unwrap();
        (params, c, basis)
    }

    fn data(d0: f64, a: f64, s0: f64) -> RadialField {
        let (params, c, basis) = setup();
        build_initial_data_power(&params, &c, &basis, a, s0, d0, 0.0, 2.0, uniform_grid(80.0, 1601)).unwrap()
    }

    #[test]
    fn unperturbed_profile_has_full_margins() {
        let (params, c, basis) = setup();
        let m = check_shrinking(&data(0.0, 10.0, 20.0), &params, &c, &basis, 10.0, 2.0).unwrap();
        assert!(m.min_margin() > 1.0 - 1e-6, "{m:?}");
    }

    #[test]
    fn unstable_mode_at_the_bound_has_zero_margin() {
        let (params, c, basis) = setup();
        let m = check_shrinking(&data(1.0, 10.0, 20.0), &params, &c, &basis, 10.0, 2.0).unwrap();
        let t0 = m.get("theta_0").unwrap();
        assert!(t0.margin.abs() < 1e-6, "{t0:?}");
        assert_eq!(m.binding(), Some("theta_0"));
    }

    #[test]
    fn theta0_is_linear_in_d0() {
        let (params, c, basis) = setup();
        let z = project_perturbation(&data(0.0, 10.0, 20.0), &params, &c, &basis, None).unwrap();
        let a = project_perturbation(&data(0.3, 10.0, 20.0), &params, &c, &basis, None).unwrap();
        let b = project_perturbation(&data(0.6, 10.0, 20.0), &params, &c, &basis, None).unwrap();
        assert!((b.theta[0] - 2.0 * a.theta[0] + z.theta[0]).abs() < 1e-14);
        assert!((a.theta[0] - 0.3 * 10.0 / 400.0).abs() < 1e-8);
    }

    #[test]
    fn odd_mode_amplitude_is_rejected() {
        let (params, c, basis) = setup();
        let r = build_initial_data_power(&params, &c, &basis, 10.0, 20.0, 0.0, 0.1, 2.0, uniform_grid(80.0, 101));
        assert!(matches!(r, Err(Error::InvalidParameters(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn margins_do_not_shrink_when_a_grows(d0 in -2.0f64..2.0, a in 2.0f64..20.0) {
            let (params, c, basis) = setup();
            let field = data(d0, 5.0, 20.0);
            let m1 = check_shrinking(&field, &params, &c, &basis, a, 2.0).unwrap();
            let m2 = check_shrinking(&field, &params, &c, &basis, 2.0 * a, 2.0).unwrap();
            for (x, y) in m1.margins.iter().zip(&m2.margins) {
                prop_assert!(y.margin >= x.margin - 1e-12, "{} {} {}", x.name, x.margin, y.margin);
            }
        }

        #[test]
        fn sigma_inverts_the_region_map(lx in -12.0f64..-2.5, k0 in 1.0f64..12.0) {
            let x = lx.exp();
            if let Ok(sigma) = sigma_of_x(x, k0) {
                let back = k0 / 4.0 * (sigma * sigma.ln().abs()).sqrt();
                prop_assert!((back - x).abs() <= 1e-10 * x);
                prop_assert!(sigma < (-1.0f64).exp());
            }
        }
    }

    #[test]
    fn sigma_rejects_points_outside_the_range() {
        assert!(sigma_of_x(10.0, 1.0).is_err());
        assert!(sigma_of_x(0.0, 1.0).is_err());
    }

    fn synthetic_final(params: &Parameters, c: &BlowupConstants) -> RadialField {
        let grid: Vec<f64> = (0..=400).map(|j| 1e-4 * (1e3f64).powf(j as f64 / 400.0)).collect();
        let mut grid = grid;
        grid.insert(0, 0.0);
        RadialField::from_fn(grid, Frame::Physical, 0.0, params.case, |x| {
            if x == 0.0 {
                (1e12, 1e12)
            } else {
                eval_profile(ProfileKind::FinalProfile, params, c, x, 0.0).unwrap()
            }
        })
        .unwrap()
    }

    #[test]
    fn exact_final_profile_fits_with_the_log_factor() {
        for params in [Parameters::power(2.0, 3.0, 1.0).unwrap(), Parameters::exponential(2.0, 2.0, 1.0).unwrap()] {
            let c = compute_constants(&params).unwrap();
            let field = synthetic_final(&params, &c);
            let xs: Vec<f64> = (0..=20).map(|j| 1e-3 * 10f64.powf(j as f64 / 20.0)).collect();
            let samples = extract_final_profile(&field, None, &params, &c, &xs).unwrap();
            for s in &samples {
                assert!((s.ratio_u - 1.0).abs() < 1e-4, "{s:?}");
            }
            let fit = fit_final_profile(&samples, &params, &c, 1e-3, 1e-2).unwrap();
            assert!(fit.residual_log < 1e-3 * fit.residual_power, "{fit:?}");
            assert!(fit.residual_log_free < 1e-3 * fit.residual_power_free, "{fit:?}");
            assert!(fit.slope_error() < 0.1, "{fit:?}");
        }
    }

    #[test]
    fn final_profile_rejects_the_core() {
        let params = Parameters::power(2.0, 2.0, 1.0).unwrap();
        let c = compute_constants(&params).unwrap();
        let field = synthetic_final(&params, &c);
        let r = extract_final_profile(&field, None, &params, &c, &[field.grid[1]]);
        assert!(matches!(r, Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn far_region_is_unchanged_at_the_initial_time() {
        let params = Parameters::exponential(2.0, 2.0, 1.0).unwrap();
        let c = compute_constants(&params).unwrap();
        let basis = Basis::new(&params, &c, 4).unwrap();
        let grid = crate::pde::graded_grid(2.0, 800, 1e-7).unwrap();
        let s0 = 20.0;
        let init = build_initial_data_exp(&params, &c, &basis, 10.0, s0, 0.0, 0.0, &ExpDataOptions::default(), grid).unwrap();
        let th = RegionThresholds::default();
        let rep = check_regions(&init, &params, &c, (-s0).exp(), &th, &init, None).unwrap();
        let d3 = rep.iter().find(|r| r.region == Region::D3).unwrap();
        assert_eq!(d3.sup_deviation, 0.0);
        assert!(d3.holds);
        let d2 = rep.iter().find(|r| r.region == Region::D2).unwrap();
        assert!(d2.grad_deviation.unwrap() <= th.c0, "{d2:?}");
    }
}

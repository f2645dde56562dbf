//! Similarity variables, the full similarity systems and their
//! linearization around the approximate profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::{check_grid, Gradient, RadialOperator};
use crate::field::{Frame, LinearizedField, RadialField};
use crate::params::{approx_profile, approx_profile_ds, BlowupConstants, Nonlinearity, Parameters};

/// Exponential-frame components below this are rejected.
pub const POSITIVITY_FLOOR: f64 = 1e-12;
const EXP_LIMIT: f64 = 700.0;

/// `|x|^{e-1} x`, with exact products for the common integer exponents.
#[inline]
pub fn signed_pow(x: f64, e: f64) -> f64 {
    if e == 2.0 {
        x * x.abs()
    } else if e == 3.0 {
        x * x * x
    } else if e == 1.0 {
        x
    } else {
        x.signum() * x.abs().powf(e)
    }
}

/// Clamped quintic step: 1 on `[0, 1]`, 0 on `[2, inf)`, `C^2` at both ends.
pub fn chi0(r: f64) -> f64 {
    let t = (r.abs() - 1.0).clamp(0.0, 1.0);
    1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    #[serde(rename = "K")]
    pub k: f64,
    pub s: f64,
}

impl CutoffSpec {
    pub fn new(k: f64, s: f64) -> Result<Self> {
        if !(k > 0.0) || !(s >= 1.0) {
            return Err(Error::InvalidParameters(format!("cutoff needs K > 0 and s >= 1 (got K = {k}, s = {s})")));
        }
        Ok(CutoffSpec { k, s })
    }

    pub fn chi(&self, y: f64) -> f64 {
        chi0(y.abs() / (self.k * self.s.sqrt()))
    }
}

fn blowup_time_left(field_time: f64, t_blowup: f64) -> Result<f64> {
    let left = t_blowup - field_time;
    if !(left > 0.0) {
        return Err(Error::OutOfDomain(format!("t = {field_time} is not before T = {t_blowup}")));
    }
    Ok(left)
}

/// Physical field at time `t < T` to the similarity frame. Without a target
/// grid the physical nodes are simply rescaled.
pub fn to_similarity(
    field: &RadialField,
    params: &Parameters,
    c: &BlowupConstants,
    t_blowup: f64,
    target: Option<&[f64]>,
) -> Result<RadialField> {
    if field.frame != Frame::Physical {
        return Err(Error::InvalidParameters("to_similarity expects a physical field".into()));
    }
    let left = blowup_time_left(field.time, t_blowup)?;
    let scale = left.sqrt();
    let grid: Vec<f64> = field.grid.iter().map(|x| x / scale).collect();
    let (first, second) = match params.case {
        Nonlinearity::Power => {
            let a = left.powf(c.alpha);
            let b = left.powf(c.beta);
            (field.first.iter().map(|u| a * u).collect(), field.second.iter().map(|v| b * v).collect())
        }
        Nonlinearity::Exponential => {
            let ln_left = left.ln();
            let conv = |vals: &[f64], k: f64| -> Result<Vec<f64>> {
                vals.iter()
                    .zip(&field.grid)
                    .map(|(v, &r)| {
                        let e = k * v + ln_left;
                        if e > EXP_LIMIT {
                            Err(Error::Overflow { r, exponent: e })
                        } else {
                            Ok(e.exp())
                        }
                    })
                    .collect()
            };
            (conv(&field.first, params.q)?, conv(&field.second, params.p)?)
        }
    };
    let out = RadialField::new(grid, first, second, Frame::Similarity, -left.ln(), field.case)?;
    match target {
        Some(g) => out.resample(g.to_vec()),
        None => Ok(out),
    }
}

/// Inverse of [`to_similarity`]; `s` is taken from the field.
pub fn from_similarity(
    field: &RadialField,
    params: &Parameters,
    c: &BlowupConstants,
    t_blowup: f64,
    target: Option<&[f64]>,
) -> Result<RadialField> {
    if field.frame != Frame::Similarity {
        return Err(Error::InvalidParameters("from_similarity expects a similarity field".into()));
    }
    let s = field.time;
    let left = (-s).exp();
    let scale = left.sqrt();
    let grid: Vec<f64> = field.grid.iter().map(|y| y * scale).collect();
    let (first, second): (Vec<f64>, Vec<f64>) = match params.case {
        Nonlinearity::Power => {
            let a = left.powf(-c.alpha);
            let b = left.powf(-c.beta);
            (field.first.iter().map(|u| a * u).collect(), field.second.iter().map(|v| b * v).collect())
        }
        Nonlinearity::Exponential => {
            check_positive(field)?;
            (field.first.iter().map(|v| (v.ln() + s) / params.q).collect(), field.second.iter().map(|v| (v.ln() + s) / params.p).collect())
        }
    };
    let out = RadialField::new(grid, first, second, Frame::Physical, t_blowup - left, field.case)?;
    match target {
        Some(g) => out.resample(g.to_vec()),
        None => Ok(out),
    }
}

fn check_positive(field: &RadialField) -> Result<()> {
    for (component, vals) in [&field.first, &field.second].into_iter().enumerate() {
        if let Some(j) = vals.iter().position(|&v| !(v >= POSITIVITY_FLOOR)) {
            return Err(Error::Positivity { component, r: field.grid[j], value: vals[j] });
        }
    }
    Ok(())
}

/// Discretized similarity system on a fixed grid. The outer row uses the
/// mirrored-ghost closure; solvers override it with their boundary rule.
#[derive(Debug, Clone)]
pub struct SimilaritySystem {
    pub params: Parameters,
    pub constants: BlowupConstants,
    pub grid: Vec<f64>,
    op_first: RadialOperator,
    op_second: RadialOperator,
    grad: Gradient,
}

impl SimilaritySystem {
    pub fn new(params: &Parameters, c: &BlowupConstants, grid: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        Ok(SimilaritySystem {
            op_first: RadialOperator::new(&grid, params.dim, 1.0, 0.5),
            op_second: RadialOperator::new(&grid, params.dim, params.mu, 0.5),
            grad: Gradient::new(&grid),
            params: *params,
            constants: *c,
            grid,
        })
    }

    pub fn operators(&self) -> (&RadialOperator, &RadialOperator) {
        (&self.op_first, &self.op_second)
    }

    /// `(L_1 f, L_mu g)` on the grid.
    pub fn apply_l(&self, f: &[f64], g: &[f64], out_f: &mut [f64], out_g: &mut [f64]) {
        self.op_first.apply(f, out_f);
        self.op_second.apply(g, out_g);
    }

    pub fn gradient(&self, u: &[f64], out: &mut [f64]) {
        self.grad.apply(u, out);
    }

    /// `-eta |u_y|^2 / u`, the extra transport term of the exponential frame.
    fn gradient_term(&self, u: &[f64], eta: f64, component: usize, out: &mut [f64]) -> Result<()> {
        let mut du = vec![0.0; u.len()];
        self.grad.apply(u, &mut du);
        for j in 0..u.len() {
            if !(u[j] >= POSITIVITY_FLOOR) {
                return Err(Error::Positivity { component, r: self.grid[j], value: u[j] });
            }
            out[j] = -eta * du[j] * du[j] / u[j];
        }
        Ok(())
    }

    pub fn rhs(&self, f: &[f64], g: &[f64], out_f: &mut [f64], out_g: &mut [f64]) -> Result<()> {
        self.apply_l(f, g, out_f, out_g);
        let Parameters { p, q, mu, .. } = self.params;
        match self.params.case {
            Nonlinearity::Power => {
                let (a, b) = (self.constants.alpha, self.constants.beta);
                for j in 0..f.len() {
                    out_f[j] += -a * f[j] + signed_pow(g[j], p);
                    out_g[j] += -b * g[j] + signed_pow(f[j], q);
                }
            }
            Nonlinearity::Exponential => {
                let n = f.len();
                let mut tf = vec![0.0; n];
                let mut tg = vec![0.0; n];
                self.gradient_term(f, 1.0, 0, &mut tf)?;
                self.gradient_term(g, mu, 1, &mut tg)?;
                for j in 0..n {
                    out_f[j] += tf[j] - f[j] + q * f[j] * g[j];
                    out_g[j] += tg[j] - g[j] + p * f[j] * g[j];
                }
            }
        }
        Ok(())
    }

    /// Approximate profile sampled on the grid at time `s`.
    pub fn profile(&self, s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.grid
            .iter()
            .map(|&y| approx_profile(&self.params, &self.constants, y, s))
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().unzip())
    }

    pub fn profile_ds(&self, s: f64) -> (Vec<f64>, Vec<f64>) {
        self.grid.iter().map(|&y| approx_profile_ds(&self.params, &self.constants, y, s)).unzip()
    }
}

pub fn similarity_rhs(field: &RadialField, params: &Parameters, c: &BlowupConstants) -> Result<(Vec<f64>, Vec<f64>)> {
    if field.frame != Frame::Similarity {
        return Err(Error::InvalidParameters("similarity_rhs expects a similarity field".into()));
    }
    let sys = SimilaritySystem::new(params, c, field.grid.clone())?;
    let n = field.len();
    let mut out_f = vec![0.0; n];
    let mut out_g = vec![0.0; n];
    sys.rhs(&field.first, &field.second, &mut out_f, &mut out_g)?;
    Ok((out_f, out_g))
}

/// `(Lambda, Upsilon) = (Phi, Psi) - (phi, psi)(., s)`.
pub fn linearize(field: &RadialField, params: &Parameters, c: &BlowupConstants) -> Result<LinearizedField> {
    if field.frame != Frame::Similarity {
        return Err(Error::InvalidParameters("linearize expects a similarity field".into()));
    }
    let mut out = field.clone();
    for j in 0..field.len() {
        let (a, b) = approx_profile(params, c, field.grid[j], field.time)?;
        out.first[j] -= a;
        out.second[j] -= b;
    }
    Ok(out)
}

/// The pieces of the linearized right-hand side, each as `(first, second)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedTerms {
    /// `(H + M_i)(Lambda, Upsilon)`.
    pub linear: (Vec<f64>, Vec<f64>),
    /// Potential times the perturbation.
    pub v_apply: (Vec<f64>, Vec<f64>),
    /// Nonlinear part (the `Lambda Upsilon` coupling in the exponential case).
    pub f: (Vec<f64>, Vec<f64>),
    /// Discrete rhs on the profile minus its exact `s`-derivative.
    pub r: (Vec<f64>, Vec<f64>),
    /// Gradient terms, exponential case only.
    pub g: (Vec<f64>, Vec<f64>),
}

impl LinearizedTerms {
    /// `linear + v_apply + f + r + g`, the evolution of the perturbation.
    pub fn total(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.linear.0.len();
        let sum = |k: usize| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let pick = |t: &(Vec<f64>, Vec<f64>)| if k == 0 { t.0[j] } else { t.1[j] };
                    pick(&self.linear) + pick(&self.v_apply) + pick(&self.f) + pick(&self.r) + pick(&self.g)
                })
                .collect()
        };
        (sum(0), sum(1))
    }
}

pub fn linearized_terms(lin: &LinearizedField, params: &Parameters, c: &BlowupConstants) -> Result<LinearizedTerms> {
    let sys = SimilaritySystem::new(params, c, lin.grid.clone())?;
    linearized_terms_with(&sys, lin)
}

pub fn linearized_terms_with(sys: &SimilaritySystem, lin: &LinearizedField) -> Result<LinearizedTerms> {
    let params = &sys.params;
    let c = &sys.constants;
    let n = lin.len();
    let s = lin.time;
    let (phi, psi) = sys.profile(s)?;
    let (dphi, dpsi) = sys.profile_ds(s);
    let (lam, ups) = (&lin.first, &lin.second);

    let mut rf = vec![0.0; n];
    let mut rg = vec![0.0; n];
    sys.rhs(&phi, &psi, &mut rf, &mut rg)?;
    for j in 0..n {
        rf[j] -= dphi[j];
        rg[j] -= dpsi[j];
    }

    let mut lf = vec![0.0; n];
    let mut lg = vec![0.0; n];
    sys.apply_l(lam, ups, &mut lf, &mut lg);
    let [[m11, m12], [m21, m22]] = crate::spectral::CouplingMatrix::new(params, c).entries;
    for j in 0..n {
        let (a, b) = (lam[j], ups[j]);
        lf[j] += m11 * a + m12 * b;
        lg[j] += m21 * a + m22 * b;
    }

    let Parameters { p, q, mu, .. } = *params;
    let mut vf = vec![0.0; n];
    let mut vg = vec![0.0; n];
    let mut ff = vec![0.0; n];
    let mut fg = vec![0.0; n];
    let mut gf = vec![0.0; n];
    let mut gg = vec![0.0; n];
    match params.case {
        Nonlinearity::Power => {
            let pow = |x: f64, e: f64| x.signum() * x.abs().powf(e);
            let dpow = |x: f64, e: f64| e * x.abs().powf(e - 1.0);
            let (gam_cap, gam) = (c.gamma_cap, c.gamma_small);
            for j in 0..n {
                vf[j] = (dpow(psi[j], p) - p * gam.powf(p - 1.0)) * ups[j];
                vg[j] = (dpow(phi[j], q) - q * gam_cap.powf(q - 1.0)) * lam[j];
                ff[j] = pow(psi[j] + ups[j], p) - pow(psi[j], p) - dpow(psi[j], p) * ups[j];
                fg[j] = pow(phi[j] + lam[j], q) - pow(phi[j], q) - dpow(phi[j], q) * lam[j];
            }
        }
        Nonlinearity::Exponential => {
            for j in 0..n {
                vf[j] = q * (phi[j] - 1.0 / p) * ups[j] + (q * psi[j] - 1.0) * lam[j];
                vg[j] = p * (psi[j] - 1.0 / q) * lam[j] + (p * phi[j] - 1.0) * ups[j];
                ff[j] = q * lam[j] * ups[j];
                fg[j] = p * lam[j] * ups[j];
            }
            let full_f: Vec<f64> = (0..n).map(|j| phi[j] + lam[j]).collect();
            let full_g: Vec<f64> = (0..n).map(|j| psi[j] + ups[j]).collect();
            let mut t_full = vec![0.0; n];
            let mut t_prof = vec![0.0; n];
            sys.gradient_term(&full_f, 1.0, 0, &mut t_full)?;
            sys.gradient_term(&phi, 1.0, 0, &mut t_prof)?;
            for j in 0..n {
                gf[j] = t_full[j] - t_prof[j];
            }
            sys.gradient_term(&full_g, mu, 1, &mut t_full)?;
            sys.gradient_term(&psi, mu, 1, &mut t_prof)?;
            for j in 0..n {
                gg[j] = t_full[j] - t_prof[j];
            }
        }
    }
    Ok(LinearizedTerms { linear: (lf, lg), v_apply: (vf, vg), f: (ff, fg), r: (rf, rg), g: (gf, gg) })
}

/// `(1 - chi) (Lambda, Upsilon)`.
pub fn truncate_outer(lin: &LinearizedField, cutoff: &CutoffSpec) -> LinearizedField {
    let mut out = lin.clone();
    for j in 0..lin.len() {
        let w = 1.0 - cutoff.chi(lin.grid[j]);
        out.first[j] *= w;
        out.second[j] *= w;
    }
    out
}

/// Uniform grid `[0, y_max]` with `points` intervals.
pub fn uniform_grid(y_max: f64, points: usize) -> Vec<f64> {
    (0..=points).map(|j| y_max * j as f64 / points as f64).collect()
}

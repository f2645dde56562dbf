//! Problem parameters, closed-form blowup constants and the explicit profiles.
//!
//! Both nonlinearities are handled through one set of constants. For the
//! exponential case `alpha = beta = 1` (the similarity weights are `(T-t)`)
//! and `gamma_cap, gamma_small` hold the constant solution `(1/p, 1/q)`, so
//! downstream code can treat "the constant state" uniformly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    /// `f(v) = v|v|^{p-1}`, `g(u) = u|u|^{q-1}`.
    Power,
    /// `f(v) = e^{pv}`, `g(u) = e^{qu}`.
    #[serde(alias = "exp")]
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub p: f64,
    pub q: f64,
    pub mu: f64,
    pub case: Nonlinearity,
    /// Space dimension; radial symmetry is assumed when `dim > 1`.
    pub dim: usize,
}

impl Parameters {
    pub fn new(case: Nonlinearity, p: f64, q: f64, mu: f64, dim: usize) -> Result<Self> {
        let params = Parameters { p, q, mu, case, dim };
        params.validate()?;
        Ok(params)
    }

    pub fn power(p: f64, q: f64, mu: f64) -> Result<Self> {
        Self::new(Nonlinearity::Power, p, q, mu, 1)
    }

    pub fn exponential(p: f64, q: f64, mu: f64) -> Result<Self> {
        Self::new(Nonlinearity::Exponential, p, q, mu, 1)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.p.is_finite() && self.q.is_finite() && self.mu.is_finite();
        if !finite {
            return Err(Error::InvalidParameters("non-finite p, q or mu".into()));
        }
        match self.case {
            Nonlinearity::Power if self.p <= 1.0 || self.q <= 1.0 => {
                return Err(Error::InvalidParameters(format!("power case needs p > 1 and q > 1 (got p = {}, q = {})", self.p, self.q)))
            }
            Nonlinearity::Exponential if self.p <= 0.0 || self.q <= 0.0 => {
                return Err(Error::InvalidParameters(format!(
                    "exponential case needs p > 0 and q > 0 (got p = {}, q = {})",
                    self.p, self.q
                )))
            }
            _ => {}
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidParameters(format!("mu must be > 0 (got {})", self.mu)));
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameters("dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn dim_f64(&self) -> f64 {
        self.dim as f64
    }
}

/// Which 1/s correction the approximate profile carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileCorrection {
    /// Constant term of `a_2 f_2` with `a_2 = -1/(c* s)`, read off the
    /// eigenpolynomial `f_2`. This is the one the inner expansion supports.
    #[default]
    Matched,
    /// The correction as commonly printed: `-2 Gamma p (1-mu)/(c* s)` and
    /// `-2 gamma q (mu-1)/(c* s)` for the power case (zero when `mu = 1`).
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupConstants {
    pub alpha: f64,
    pub beta: f64,
    /// `Gamma` (power) or `1/p` (exponential).
    pub gamma_cap: f64,
    /// `gamma` (power) or `1/q` (exponential).
    pub gamma_small: f64,
    pub b: f64,
    /// Reduced-ODE coefficient in `a_2' = c* a_2^2`, normalized so that
    /// `f_2` has leading vector `(Gamma (p+1), gamma (q+1))` (power) or
    /// `(q, p)` (exponential).
    pub c_star: f64,
    /// Blowup time.
    #[serde(rename = "T")]
    pub t_blowup: f64,
    pub correction: ProfileCorrection,
}

pub fn compute_constants(params: &Parameters) -> Result<BlowupConstants> {
    compute_constants_with(params, 1.0, ProfileCorrection::Matched)
}

pub fn compute_constants_with(params: &Parameters, t_blowup: f64, correction: ProfileCorrection) -> Result<BlowupConstants> {
    params.validate()?;
    if !(t_blowup > 0.0 && t_blowup.is_finite()) {
        return Err(Error::InvalidParameters(format!("T must be > 0 (got {t_blowup})")));
    }
    let Parameters { p, q, mu, .. } = *params;
    let c = match params.case {
        Nonlinearity::Power => {
            let pq1 = p * q - 1.0;
            let alpha = (p + 1.0) / pq1;
            let beta = (q + 1.0) / pq1;
            // gamma^p = alpha Gamma, Gamma^q = beta gamma
            let gamma_cap = (alpha * beta.powf(p)).powf(1.0 / pq1);
            let gamma_small = (beta * alpha.powf(q)).powf(1.0 / pq1);
            let b = pq1 * (2.0 * p * q + p + q) / (4.0 * p * q * (p + 1.0) * (q + 1.0) * (mu + 1.0));
            BlowupConstants { alpha, beta, gamma_cap, gamma_small, b, c_star: pq1 / b, t_blowup, correction }
        }
        Nonlinearity::Exponential => {
            let b = 1.0 / (2.0 * (mu + 1.0));
            BlowupConstants {
                alpha: 1.0,
                beta: 1.0,
                gamma_cap: 1.0 / p,
                gamma_small: 1.0 / q,
                b,
                c_star: 2.0 * p * q * (mu + 1.0),
                t_blowup,
                correction,
            }
        }
    };
    Ok(c)
}

impl BlowupConstants {
    /// The value of `c*` as it is usually printed next to the reduced system.
    /// Only the exponential one coincides with [`BlowupConstants::c_star`].
    pub fn c_star_printed(&self, params: &Parameters) -> f64 {
        let Parameters { p, q, mu, .. } = *params;
        match params.case {
            Nonlinearity::Power => (2.0 * p * q + p + q) / (4.0 * p * q * (p + 1.0) * (q + 1.0) * (mu + 1.0)),
            Nonlinearity::Exponential => 2.0 * p * q * (mu + 1.0),
        }
    }

    /// Leading (degree 2) coefficient vector of `f_2` in the normalization
    /// that defines `c*`.
    pub fn f2_leading(&self, params: &Parameters) -> [f64; 2] {
        match params.case {
            Nonlinearity::Power => [self.gamma_cap * (params.p + 1.0), self.gamma_small * (params.q + 1.0)],
            Nonlinearity::Exponential => [params.q, params.p],
        }
    }

    /// Constant term of `f_2` in the same normalization.
    pub fn f2_constant(&self, params: &Parameters) -> [f64; 2] {
        let n = params.dim_f64();
        let Parameters { p, q, mu, .. } = *params;
        match params.case {
            Nonlinearity::Power => [-2.0 * n * self.gamma_cap * (1.0 + p * mu), -2.0 * n * self.gamma_small * (q + mu)],
            Nonlinearity::Exponential => [-2.0 * n * mu * q, -2.0 * n * p],
        }
    }

    /// Numerators `C` of the `C/s` correction in the approximate profile.
    pub fn profile_correction(&self, params: &Parameters) -> [f64; 2] {
        let Parameters { p, q, mu, .. } = *params;
        match (self.correction, params.case) {
            (ProfileCorrection::Printed, Nonlinearity::Power) => {
                [-2.0 * self.gamma_cap * p * (1.0 - mu) / self.c_star, -2.0 * self.gamma_small * q * (mu - 1.0) / self.c_star]
            }
            (ProfileCorrection::Printed, Nonlinearity::Exponential) => [2.0 * mu * q / self.c_star, 2.0 * p / self.c_star],
            (ProfileCorrection::Matched, _) => {
                let c0 = self.f2_constant(params);
                [-c0[0] / self.c_star, -c0[1] / self.c_star]
            }
        }
    }

    pub fn constant_state(&self) -> [f64; 2] {
        [self.gamma_cap, self.gamma_small]
    }
}

pub fn ode_blowup_solution(params: &Parameters, c: &BlowupConstants, t: f64) -> Result<(f64, f64)> {
    if !(t < c.t_blowup) || t < 0.0 {
        return Err(Error::OutOfDomain(format!("need 0 <= t < T = {} (got {t})", c.t_blowup)));
    }
    let tau = c.t_blowup - t;
    Ok(match params.case {
        Nonlinearity::Power => (c.gamma_cap * tau.powf(-c.alpha), c.gamma_small * tau.powf(-c.beta)),
        Nonlinearity::Exponential => (-(params.p * tau).ln() / params.q, -(params.q * tau).ln() / params.p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// Inner expansion `(Gamma, gamma) + a_2(s) f_2(y)`; `time` is `s`.
    InnerApprox,
    /// `(Phi_0, Psi_0)(z)`, the outer profile.
    OuterProfile,
    /// Final blowup profile asymptote as `|x - a| -> 0`.
    FinalProfile,
    /// Spatially homogeneous blowup solution; `time` is `t`.
    OdeSolution,
}

/// Evaluates one of the explicit profiles at `point` (`|y|`, `|z|` or
/// `|x - a|` depending on `kind`). `time` is only read by `InnerApprox`
/// and `OdeSolution`.
pub fn eval_profile(kind: ProfileKind, params: &Parameters, c: &BlowupConstants, point: f64, time: f64) -> Result<(f64, f64)> {
    let r = point.abs();
    match kind {
        ProfileKind::OuterProfile => Ok(outer_profile(params, c, r)),
        ProfileKind::InnerApprox => {
            if time <= 0.0 {
                return Err(Error::OutOfDomain(format!("inner expansion needs s > 0 (got {time})")));
            }
            let lead = c.f2_leading(params);
            let c0 = c.f2_constant(params);
            let a2 = -1.0 / (c.c_star * time);
            Ok((c.gamma_cap + a2 * (lead[0] * r * r + c0[0]), c.gamma_small + a2 * (lead[1] * r * r + c0[1])))
        }
        ProfileKind::FinalProfile => {
            if r == 0.0 || r == 1.0 {
                return Err(Error::OutOfDomain(format!("final profile is singular at |x| = {r}")));
            }
            let log = r.ln().abs();
            Ok(match params.case {
                Nonlinearity::Power => {
                    let w = c.b * r * r / (2.0 * log);
                    (c.gamma_cap * w.powf(-c.alpha), c.gamma_small * w.powf(-c.beta))
                }
                Nonlinearity::Exponential => {
                    let w = 2.0 / c.b * log / (r * r);
                    ((w / params.p).ln() / params.q, (w / params.q).ln() / params.p)
                }
            })
        }
        ProfileKind::OdeSolution => ode_blowup_solution(params, c, time),
    }
}

pub fn outer_profile(params: &Parameters, c: &BlowupConstants, z: f64) -> (f64, f64) {
    let w = 1.0 + c.b * z * z;
    match params.case {
        Nonlinearity::Power => (c.gamma_cap * w.powf(-c.alpha), c.gamma_small * w.powf(-c.beta)),
        Nonlinearity::Exponential => (1.0 / (params.p * w), 1.0 / (params.q * w)),
    }
}

/// `d/dz` of the outer profile.
pub fn outer_profile_dz(params: &Parameters, c: &BlowupConstants, z: f64) -> (f64, f64) {
    let w = 1.0 + c.b * z * z;
    let dw = 2.0 * c.b * z;
    match params.case {
        Nonlinearity::Power => (-c.alpha * c.gamma_cap * w.powf(-c.alpha - 1.0) * dw, -c.beta * c.gamma_small * w.powf(-c.beta - 1.0) * dw),
        Nonlinearity::Exponential => (-dw / (params.p * w * w), -dw / (params.q * w * w)),
    }
}

/// Approximate profile `(phi, psi)(y, s)`: outer profile at `z = y/sqrt(s)`
/// plus the `C/s` correction selected by `c.correction`.
pub fn approx_profile(params: &Parameters, c: &BlowupConstants, y: f64, s: f64) -> Result<(f64, f64)> {
    if !(s >= 1.0) {
        return Err(Error::OutOfDomain(format!("approximate profile needs s >= 1 (got {s})")));
    }
    let (f, g) = outer_profile(params, c, y.abs() / s.sqrt());
    let corr = c.profile_correction(params);
    Ok((f + corr[0] / s, g + corr[1] / s))
}

/// `d/ds` of [`approx_profile`] at fixed `y`.
pub fn approx_profile_ds(params: &Parameters, c: &BlowupConstants, y: f64, s: f64) -> (f64, f64) {
    let z = y.abs() / s.sqrt();
    let (df, dg) = outer_profile_dz(params, c, z);
    let dz = -z / (2.0 * s);
    let corr = c.profile_correction(params);
    (df * dz - corr[0] / (s * s), dg * dz - corr[1] / (s * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p22() -> (Parameters, BlowupConstants) {
        let p = Parameters::power(2.0, 2.0, 1.0).unwrap();
        let c = compute_constants(&p).unwrap();
        (p, c)
    }

    /// Independent route for `gamma`: bisection on the scalar equation
    /// obtained by eliminating `Gamma`.
    fn gamma_by_bisection(p: f64, q: f64) -> f64 {
        let alpha = (p + 1.0) / (p * q - 1.0);
        let beta = (q + 1.0) / (p * q - 1.0);
        let h = |g: f64| (g.powf(p) / alpha).powf(q) / g - beta;
        let (mut lo, mut hi) = (1e-6, 1.0);
        while h(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn constants_for_p2_q2() {
        let (_, c) = p22();
        assert_relative_eq!(c.alpha, 1.0);
        assert_relative_eq!(c.beta, 1.0);
        assert_relative_eq!(c.gamma_cap, 1.0, epsilon = 1e-14);
        assert_relative_eq!(c.gamma_small, 1.0, epsilon = 1e-14);
        assert_relative_eq!(c.b, 0.125, epsilon = 1e-15);
        assert_relative_eq!(c.c_star, 24.0, epsilon = 1e-12);
    }

    #[test]
    fn constants_for_p3_q2() {
        let p = Parameters::power(3.0, 2.0, 1.0).unwrap();
        let c = compute_constants(&p).unwrap();
        assert_relative_eq!(c.alpha, 0.8, epsilon = 1e-15);
        assert_relative_eq!(c.beta, 0.6, epsilon = 1e-15);
        assert!((c.gamma_small.powi(3) - c.alpha * c.gamma_cap).abs() < 1e-12);
        assert!((c.gamma_cap.powi(2) - c.beta * c.gamma_small).abs() < 1e-12);
        assert_relative_eq!(c.gamma_small, gamma_by_bisection(3.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn exponential_b_at_mu_one() {
        for (p, q) in [(1.0, 1.0), (0.5, 3.0), (2.0, 7.0)] {
            let params = Parameters::exponential(p, q, 1.0).unwrap();
            let c = compute_constants(&params).unwrap();
            assert_eq!(c.b, 0.25);
            assert_eq!(c.c_star, c.c_star_printed(&params));
        }
    }

    #[test]
    fn printed_power_c_star_is_b_over_pq_minus_one() {
        let params = Parameters::power(3.0, 2.0, 0.7).unwrap();
        let c = compute_constants(&params).unwrap();
        assert_relative_eq!(c.c_star_printed(&params), c.b / 5.0, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Parameters::power(1.0, 2.0, 1.0).is_err());
        assert!(Parameters::power(2.0, 2.0, 0.0).is_err());
        assert!(Parameters::exponential(0.0, 1.0, 1.0).is_err());
        assert!(Parameters::new(Nonlinearity::Power, 2.0, 2.0, 1.0, 0).is_err());
        assert!(Parameters::exponential(0.5, 0.5, 1.0).is_ok());
    }

    #[test]
    fn ode_solution_examples() {
        let (p, c) = p22();
        assert_eq!(ode_blowup_solution(&p, &c, 0.0).unwrap(), (1.0, 1.0));
        let (u1, _) = ode_blowup_solution(&p, &c, 0.5).unwrap();
        let (u2, _) = ode_blowup_solution(&p, &c, 0.75).unwrap();
        assert_relative_eq!(u2 / u1, 2f64.powf(c.alpha), epsilon = 1e-14);
        assert!(ode_blowup_solution(&p, &c, 1.0).is_err());

        let pe = Parameters::exponential(1.0, 1.0, 1.0).unwrap();
        let ce = compute_constants_with(&pe, 2.0, ProfileCorrection::Matched).unwrap();
        let (u, v) = ode_blowup_solution(&pe, &ce, 1.0).unwrap();
        assert_eq!((u, v), (0.0, 0.0));
    }

    #[test]
    fn ode_solution_satisfies_ode() {
        for (pp, qq) in [(2.0, 2.0), (3.0, 1.5), (1.5, 4.0)] {
            let params = Parameters::power(pp, qq, 1.0).unwrap();
            let c = compute_constants(&params).unwrap();
            for t in [0.01, 0.3, 0.9, 0.99] {
                let h = 1e-6 * (1.0 - t);
                let (up, vp) = ode_blowup_solution(&params, &c, t + h).unwrap();
                let (um, vm) = ode_blowup_solution(&params, &c, t - h).unwrap();
                let (u, v) = ode_blowup_solution(&params, &c, t).unwrap();
                assert_relative_eq!((up - um) / (2.0 * h), v.powf(pp), max_relative = 1e-6);
                assert_relative_eq!((vp - vm) / (2.0 * h), u.powf(qq), max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn outer_profile_examples() {
        let (p, c) = p22();
        assert_eq!(eval_profile(ProfileKind::OuterProfile, &p, &c, 0.0, 0.0).unwrap(), (1.0, 1.0));
        let (f, g) = eval_profile(ProfileKind::OuterProfile, &p, &c, 8f64.sqrt(), 0.0).unwrap();
        assert_relative_eq!(f, 0.5, epsilon = 1e-14);
        assert_relative_eq!(g, 0.5, epsilon = 1e-14);

        let pe = Parameters::exponential(2.0, 3.0, 0.5).unwrap();
        let ce = compute_constants(&pe).unwrap();
        let (f, g) = eval_profile(ProfileKind::OuterProfile, &pe, &ce, 0.0, 0.0).unwrap();
        assert_eq!((f, g), (0.5, 1.0 / 3.0));
    }

    #[test]
    fn final_profile_rejects_origin() {
        let (p, c) = p22();
        assert!(eval_profile(ProfileKind::FinalProfile, &p, &c, 0.0, 0.0).is_err());
        let (u, _) = eval_profile(ProfileKind::FinalProfile, &p, &c, 1e-2, 0.0).unwrap();
        let expected = (0.125 * 1e-4 / (2.0 * 100f64.ln())).powf(-1.0);
        assert_relative_eq!(u, expected, max_relative = 1e-13);
    }

    #[test]
    fn exponential_final_profile_matches_intermediate_ode_endpoint() {
        // u*(x) = -(1/q) ln sigma + u_hat(1) with sigma |ln sigma| K0^2/16 = x^2;
        // as x -> 0 this agrees with the (2/b) asymptote up to |ln sigma| ~ 2|ln x|.
        let pe = Parameters::exponential(1.5, 2.0, 1.0).unwrap();
        let ce = compute_constants(&pe).unwrap();
        let x: f64 = 1e-30;
        let k0 = 10.0;
        let target = (4.0 * x / k0).powi(2);
        let (mut lo, mut hi) = (1e-300f64, (-1.0f64).exp());
        for _ in 0..300 {
            let mid = (lo.ln() + hi.ln()) * 0.5;
            let mid = mid.exp();
            if mid * mid.ln().abs() < target {
                lo = mid
            } else {
                hi = mid
            }
        }
        let sigma = lo;
        let u_hat_1 = -(pe.p * (ce.b * k0 * k0 / 16.0)).ln() / pe.q;
        let u_star = -sigma.ln() / pe.q + u_hat_1;
        let (u_asym, _) = eval_profile(ProfileKind::FinalProfile, &pe, &ce, x, 0.0).unwrap();
        let rel_log = (sigma.ln().abs() / (2.0 * x.ln().abs())).ln() / pe.q;
        assert!((u_star - u_asym - rel_log).abs() < 1e-10, "{u_star} {u_asym} {rel_log}");
    }

    #[test]
    fn approx_profile_examples() {
        let params = Parameters::power(2.0, 3.0, 1.0).unwrap();
        let printed = compute_constants_with(&params, 1.0, ProfileCorrection::Printed).unwrap();
        for y in [0.0, 1.0, 5.0] {
            let s = 30.0;
            let (f, g) = approx_profile(&params, &printed, y, s).unwrap();
            let (f0, g0) = outer_profile(&params, &printed, y / s.sqrt());
            assert_eq!((f, g), (f0, g0));
        }

        let pe = Parameters::exponential(2.0, 3.0, 0.5).unwrap();
        let ce = compute_constants(&pe).unwrap();
        let s = 12.0;
        let (f, _) = approx_profile(&pe, &ce, 0.0, s).unwrap();
        assert_relative_eq!(pe.p * f, 1.0 + 2.0 * pe.mu * pe.p * pe.q / (ce.c_star * s), epsilon = 1e-14);

        let (f, g) = approx_profile(&pe, &ce, 3.0, 1e12).unwrap();
        assert_relative_eq!(f, 0.5, epsilon = 1e-10);
        assert_relative_eq!(g, 1.0 / 3.0, epsilon = 1e-10);
        assert!(approx_profile(&pe, &ce, 0.0, 0.5).is_err());
    }

    #[test]
    fn matched_profile_agrees_with_inner_expansion_near_origin() {
        let params = Parameters::power(3.0, 2.0, 2.0).unwrap();
        let c = compute_constants(&params).unwrap();
        let s = 1e4;
        for y in [0.0, 0.5, 1.0] {
            let (fa, ga) = approx_profile(&params, &c, y, s).unwrap();
            let (fi, gi) = eval_profile(ProfileKind::InnerApprox, &params, &c, y, s).unwrap();
            assert!((fa - fi).abs() < 1e-6 && (ga - gi).abs() < 1e-6);
        }
    }

    #[test]
    fn approx_profile_ds_matches_finite_difference() {
        let params = Parameters::power(2.0, 3.0, 0.4).unwrap();
        let c = compute_constants(&params).unwrap();
        let (y, s, h) = (3.0, 20.0, 1e-5);
        let (fp, gp) = approx_profile(&params, &c, y, s + h).unwrap();
        let (fm, gm) = approx_profile(&params, &c, y, s - h).unwrap();
        let (df, dg) = approx_profile_ds(&params, &c, y, s);
        assert_relative_eq!(df, (fp - fm) / (2.0 * h), max_relative = 1e-6);
        assert_relative_eq!(dg, (gp - gm) / (2.0 * h), max_relative = 1e-6);
    }

    #[test]
    fn scalar_reduction() {
        for p in [1.5, 2.0, 3.0, 7.0] {
            let params = Parameters::power(p, p, 1.0).unwrap();
            let c = compute_constants(&params).unwrap();
            assert!((c.b - (p - 1.0) / (4.0 * p)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn constant_identities(p in 1.05f64..8.0, q in 1.05f64..8.0, mu in 0.05f64..20.0) {
            let params = Parameters::power(p, q, mu).unwrap();
            let c = compute_constants(&params).unwrap();
            prop_assert!((c.gamma_small.powf(p) - c.alpha * c.gamma_cap).abs() < 1e-12 * c.gamma_small.powf(p).max(1.0));
            prop_assert!((c.gamma_cap.powf(q) - c.beta * c.gamma_small).abs() < 1e-12 * c.gamma_cap.powf(q).max(1.0));
            prop_assert!(c.b > 0.0);
        }

        #[test]
        fn outer_profile_strictly_decreasing(p in 1.1f64..6.0, q in 1.1f64..6.0, mu in 0.1f64..5.0, z in 0.0f64..50.0) {
            let params = Parameters::power(p, q, mu).unwrap();
            let c = compute_constants(&params).unwrap();
            let (f1, g1) = outer_profile(&params, &c, z);
            let (f2, g2) = outer_profile(&params, &c, z + 0.01);
            prop_assert!(f1 > f2 && g1 > g2 && f2 > 0.0 && g2 > 0.0);
        }
    }
}

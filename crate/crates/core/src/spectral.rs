//! Weighted spaces, the polynomial eigenpairs of `H + M_i` and projections
//! onto them.
//!
//! `H = diag(L_1, L_mu)` with `L_eta f = eta * Lap f - (y/2) f'`. Polynomial
//! pairs are stored as monomial coefficients in the radial variable, lowest
//! degree first.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{BlowupConstants, Nonlinearity, Parameters};
use crate::quadrature::{weighted_rule, Rule};

pub const DEFAULT_NODES: usize = 96;
const RESONANCE_TOL: f64 = 1e-10;
const TAIL_TOL: f64 = 1e-13;

pub fn poly_eval(coeffs: &[f64], r: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c)
}

pub fn poly_deriv(coeffs: &[f64]) -> Vec<f64> {
    coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect()
}

pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_axpy(alpha: f64, x: &[f64], y: &mut Vec<f64>) {
    if y.len() < x.len() {
        y.resize(x.len(), 0.0);
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `eta * Lap f - (r/2) f'` for the radial Laplacian in `dim` dimensions.
pub fn apply_l(eta: f64, dim: usize, poly: &[f64]) -> Vec<f64> {
    let n = dim as f64;
    let mut out = vec![0.0; poly.len()];
    for (k, &c) in poly.iter().enumerate() {
        let kf = k as f64;
        if k >= 2 {
            out[k - 2] += eta * kf * (kf + n - 2.0) * c;
        }
        out[k] -= 0.5 * kf * c;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSpace {
    pub eta: f64,
    pub dim: usize,
    pub quadrature: Rule,
}

impl WeightedSpace {
    pub fn new(eta: f64, dim: usize, nodes: usize) -> Self {
        WeightedSpace { eta, dim, quadrature: weighted_rule(eta, dim, nodes) }
    }

    pub fn inner(&self, f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
        self.quadrature.integrate(|y| f(y) * g(y))
    }

    pub fn mass(&self) -> f64 {
        self.quadrature.weights.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Eigenvalue `1 - n/2`.
    Plus,
    /// Eigenvalue `m_- - n/2` with `m_-` the second eigenvalue of the coupling.
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    pub entries: [[f64; 2]; 2],
}

impl CouplingMatrix {
    pub fn new(params: &Parameters, c: &BlowupConstants) -> Self {
        let Parameters { p, q, .. } = *params;
        let entries = match params.case {
            Nonlinearity::Power => [[-c.alpha, p * c.gamma_small.powf(p - 1.0)], [q * c.gamma_cap.powf(q - 1.0), -c.beta]],
            Nonlinearity::Exponential => [[0.0, q / p], [p / q, 0.0]],
        };
        CouplingMatrix { entries }
    }

    /// The non-unit eigenvalue: `-(p+1)(q+1)/(pq-1)` or `-1`.
    pub fn minus_eigenvalue(params: &Parameters) -> f64 {
        let Parameters { p, q, .. } = *params;
        match params.case {
            Nonlinearity::Power => -(p + 1.0) * (q + 1.0) / (p * q - 1.0),
            Nonlinearity::Exponential => -1.0,
        }
    }

    fn matrix(&self) -> Matrix2<f64> {
        let e = self.entries;
        Matrix2::new(e[0][0], e[0][1], e[1][0], e[1][1])
    }

    /// Unit null vector of `M - m I`, first nonzero entry nonnegative.
    fn eigenvector(&self, m: f64) -> [f64; 2] {
        let [[a, b], [c, d]] = self.entries;
        let v1 = [b, m - a];
        let v2 = [m - d, c];
        let n1 = v1[0].hypot(v1[1]);
        let n2 = v2[0].hypot(v2[1]);
        let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
        let mut v = [v[0] / n, v[1] / n];
        let first = if v[0].abs() > 1e-14 { v[0] } else { v[1] };
        if first < 0.0 {
            v = [-v[0], -v[1]];
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyPair {
    pub coeffs_first: Vec<f64>,
    pub coeffs_second: Vec<f64>,
    pub degree: usize,
    pub eigenvalue: f64,
    pub family: Family,
}

impl PolyPair {
    pub fn eval(&self, r: f64) -> (f64, f64) {
        (poly_eval(&self.coeffs_first, r), poly_eval(&self.coeffs_second, r))
    }
}

/// Applies `H + M` to a polynomial pair, exactly in coefficients.
pub fn apply_h_plus_m(mu: f64, dim: usize, m: &CouplingMatrix, first: &[f64], second: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let [[a, b], [c, d]] = m.entries;
    let mut f = apply_l(1.0, dim, first);
    let mut g = apply_l(mu, dim, second);
    poly_axpy(a, first, &mut f);
    poly_axpy(b, second, &mut f);
    poly_axpy(c, first, &mut g);
    poly_axpy(d, second, &mut g);
    (f, g)
}

fn solve_block(a: Matrix2<f64>, rhs: Vector2<f64>, degree: usize, eigenvalue: f64) -> Result<Vector2<f64>> {
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd.solve(&rhs, 1e-12 * smax.max(1.0)).map_err(|e| Error::RootFind(e.to_string()))?;
    let residual = (a * x - rhs).norm() / rhs.norm().max(1.0);
    if residual > RESONANCE_TOL {
        return Err(Error::Resonance { degree, eigenvalue, residual });
    }
    Ok(x)
}

fn build_pair(mu: f64, dim: usize, m: &CouplingMatrix, n: usize, family: Family, m_branch: f64) -> Result<PolyPair> {
    let lambda = m_branch - n as f64 / 2.0;
    let lead = m.eigenvector(m_branch);
    let mut cf = vec![0.0; n + 1];
    let mut cg = vec![0.0; n + 1];
    cf[n] = lead[0];
    cg[n] = lead[1];
    let mm = m.matrix();
    let nf = dim as f64;
    let mut k = n;
    while k >= 2 {
        k -= 2;
        let kf = k as f64;
        let a = mm - Matrix2::identity() * (lambda + kf / 2.0);
        let scale = (kf + 2.0) * (kf + nf);
        let rhs = Vector2::new(-scale * cf[k + 2], -mu * scale * cg[k + 2]);
        let x = solve_block(a, rhs, k, lambda)?;
        cf[k] = x[0];
        cg[k] = x[1];
    }
    Ok(PolyPair { coeffs_first: cf, coeffs_second: cg, degree: n, eigenvalue: lambda, family })
}

/// Degrees present in the radial basis: all `n <= m` in one dimension,
/// even ones otherwise.
pub fn basis_degrees(dim: usize, m: usize) -> Vec<usize> {
    (0..=m).filter(|n| dim == 1 || n % 2 == 0).collect()
}

/// Both eigen-families of `H + M_i` for degrees up to `m`, ordered by degree
/// with `Plus` before `Minus`.
pub fn diagonalize(params: &Parameters, c: &BlowupConstants, m: usize) -> Result<Vec<PolyPair>> {
    params.validate()?;
    let coupling = CouplingMatrix::new(params, c);
    let m_minus = CouplingMatrix::minus_eigenvalue(params);
    let mut out = Vec::new();
    for n in basis_degrees(params.dim, m) {
        out.push(build_pair(params.mu, params.dim, &coupling, n, Family::Plus, 1.0)?);
        out.push(build_pair(params.mu, params.dim, &coupling, n, Family::Minus, m_minus)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoefficients {
    pub theta: Vec<f64>,
    pub theta_tilde: Vec<f64>,
    #[serde(rename = "M")]
    pub m: usize,
    pub residual_minus_norm_first: f64,
    pub residual_minus_norm_second: f64,
}

impl ModeCoefficients {
    fn zeros(m: usize) -> Self {
        ModeCoefficients {
            theta: vec![0.0; m + 1],
            theta_tilde: vec![0.0; m + 1],
            m,
            residual_minus_norm_first: 0.0,
            residual_minus_norm_second: 0.0,
        }
    }
}

/// A diagonalized basis together with the quadrature spaces used for
/// projecting onto it. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Basis {
    #[serde(rename = "M")]
    pub m: usize,
    pub dim: usize,
    pub mu: f64,
    pub coupling: CouplingMatrix,
    pub pairs: Vec<PolyPair>,
    #[serde(skip)]
    spaces: Option<[WeightedSpace; 2]>,
    #[serde(skip)]
    gram_inverse: DMatrix<f64>,
}

impl Basis {
    pub fn new(params: &Parameters, c: &BlowupConstants, m: usize) -> Result<Self> {
        Self::with_nodes(params, c, m, DEFAULT_NODES)
    }

    pub fn with_nodes(params: &Parameters, c: &BlowupConstants, m: usize, nodes: usize) -> Result<Self> {
        if nodes < m + 2 {
            return Err(Error::InvalidParameters(format!("{nodes} quadrature nodes cannot resolve degree {m}")));
        }
        let pairs = diagonalize(params, c, m)?;
        let spaces = [WeightedSpace::new(1.0, params.dim, nodes), WeightedSpace::new(params.mu, params.dim, nodes)];
        let k = pairs.len();
        let mut gram = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let v = pair_inner(&spaces, &pairs[i], &pairs[j]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let gram_inverse = gram.try_inverse().ok_or_else(|| Error::RootFind("singular Gram matrix".into()))?;
        Ok(Basis { m, dim: params.dim, mu: params.mu, coupling: CouplingMatrix::new(params, c), pairs, spaces: Some(spaces), gram_inverse })
    }

    fn spaces(&self) -> &[WeightedSpace; 2] {
        self.spaces.as_ref().expect("basis spaces are built on construction")
    }

    pub fn weighted_spaces(&self) -> (&WeightedSpace, &WeightedSpace) {
        let s = self.spaces();
        (&s[0], &s[1])
    }

    pub fn find(&self, family: Family, degree: usize) -> Option<&PolyPair> {
        self.pairs.iter().find(|p| p.family == family && p.degree == degree)
    }

    /// Product inner product `<f, f'>_{rho_1} + <g, g'>_{rho_mu}`.
    pub fn inner(&self, a: impl Fn(f64) -> (f64, f64), b: impl Fn(f64) -> (f64, f64)) -> f64 {
        let [s1, s2] = self.spaces();
        s1.inner(|y| a(y).0, |y| b(y).0) + s2.inner(|y| a(y).1, |y| b(y).1)
    }

    /// Projects a field given on the whole line (signed `y` in one
    /// dimension, `|y|` otherwise) that is only known for `|y| <= support`.
    pub fn project(&self, field: impl Fn(f64) -> (f64, f64), support: f64) -> Result<ModeCoefficients> {
        let spaces = self.spaces();
        let mut rhs = DVector::<f64>::zeros(self.pairs.len());
        for (comp, space) in spaces.iter().enumerate() {
            let rule = &space.quadrature;
            let mass = space.mass();
            let mut tail = 0.0;
            let mut needed: f64 = 0.0;
            for (&y, &w) in rule.nodes.iter().zip(&rule.weights) {
                if y.abs() > support {
                    let size = w * (1.0 + y.abs().powi(self.m as i32 + 1)).powi(2);
                    tail += size;
                    if size > TAIL_TOL * mass {
                        needed = needed.max(y.abs());
                    }
                    continue;
                }
                let value = if comp == 0 { field(y).0 } else { field(y).1 };
                for (i, pair) in self.pairs.iter().enumerate() {
                    let b = if comp == 0 { poly_eval(&pair.coeffs_first, y) } else { poly_eval(&pair.coeffs_second, y) };
                    rhs[i] += w * b * value;
                }
            }
            if tail > TAIL_TOL * mass {
                return Err(Error::QuadratureDomain { needed, available: support });
            }
        }
        let coeffs = &self.gram_inverse * rhs;
        let mut out = ModeCoefficients::zeros(self.m);
        for (pair, v) in self.pairs.iter().zip(coeffs.iter()) {
            match pair.family {
                Family::Plus => out.theta[pair.degree] = *v,
                Family::Minus => out.theta_tilde[pair.degree] = *v,
            }
        }
        Ok(out)
    }

    /// Value at `y` of the projected part `sum theta_n f_n + theta~_n f~_n`.
    pub fn reconstruct(&self, coeffs: &ModeCoefficients, y: f64) -> (f64, f64) {
        let mut f = 0.0;
        let mut g = 0.0;
        for pair in &self.pairs {
            let w = match pair.family {
                Family::Plus => coeffs.theta[pair.degree],
                Family::Minus => coeffs.theta_tilde[pair.degree],
            };
            if w != 0.0 {
                let (a, b) = pair.eval(y);
                f += w * a;
                g += w * b;
            }
        }
        (f, g)
    }

    /// Fills the weighted sup-quotient norms of the remainder over a sampled
    /// field.
    pub fn fill_residual_norms(&self, coeffs: &mut ModeCoefficients, grid: &[f64], first: &[f64], second: &[f64]) {
        let mut n1: f64 = 0.0;
        let mut n2: f64 = 0.0;
        for ((&y, &f), &g) in grid.iter().zip(first).zip(second) {
            let (pf, pg) = self.reconstruct(coeffs, y);
            let w = 1.0 + y.abs().powi(self.m as i32 + 1);
            n1 = n1.max((f - pf).abs() / w);
            n2 = n2.max((g - pg).abs() / w);
        }
        coeffs.residual_minus_norm_first = n1;
        coeffs.residual_minus_norm_second = n2;
    }

    /// Exact expansion of a polynomial pair of degree `<= M` into the basis,
    /// by peeling off leading blocks.
    pub fn expand_polynomial(&self, first: &[f64], second: &[f64]) -> Result<ModeCoefficients> {
        let top = first.len().max(second.len());
        let mut f = first.to_vec();
        let mut g = second.to_vec();
        f.resize(top, 0.0);
        g.resize(top, 0.0);
        let mut out = ModeCoefficients::zeros(self.m);
        for k in (0..top).rev() {
            let lead = Vector2::new(f[k], g[k]);
            if lead.norm() == 0.0 {
                continue;
            }
            let (Some(plus), Some(minus)) = (self.find(Family::Plus, k), self.find(Family::Minus, k)) else {
                return Err(Error::OutOfDomain(format!("degree {k} not in basis (M = {}, dim = {})", self.m, self.dim)));
            };
            let a = Matrix2::new(plus.coeffs_first[k], minus.coeffs_first[k], plus.coeffs_second[k], minus.coeffs_second[k]);
            let x = a.lu().solve(&lead).ok_or_else(|| Error::RootFind("degenerate leading block".into()))?;
            out.theta[k] = x[0];
            out.theta_tilde[k] = x[1];
            for (w, pair) in [(x[0], plus), (x[1], minus)] {
                for i in 0..=k {
                    f[i] -= w * pair.coeffs_first[i];
                    g[i] -= w * pair.coeffs_second[i];
                }
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn pair_inner(spaces: &[WeightedSpace; 2], a: &PolyPair, b: &PolyPair) -> f64 {
    spaces[0].inner(|y| poly_eval(&a.coeffs_first, y), |y| poly_eval(&b.coeffs_first, y))
        + spaces[1].inner(|y| poly_eval(&a.coeffs_second, y), |y| poly_eval(&b.coeffs_second, y))
}

/// Quadratic part of the nonlinearity around the constant state, applied
/// to a polynomial pair.
pub fn quadratic_term(params: &Parameters, c: &BlowupConstants, first: &[f64], second: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let Parameters { p, q, mu, .. } = *params;
    match params.case {
        Nonlinearity::Power => {
            let mut f = poly_mul(second, second);
            let mut g = poly_mul(first, first);
            let cf = 0.5 * p * (p - 1.0) * c.gamma_small.powf(p - 2.0);
            let cg = 0.5 * q * (q - 1.0) * c.gamma_cap.powf(q - 2.0);
            f.iter_mut().for_each(|x| *x *= cf);
            g.iter_mut().for_each(|x| *x *= cg);
            (f, g)
        }
        Nonlinearity::Exponential => {
            // q L U - p |L'|^2 and p L U - mu q |U'|^2
            let lu = poly_mul(first, second);
            let df = poly_deriv(first);
            let dg = poly_deriv(second);
            let mut f = Vec::new();
            poly_axpy(q, &lu, &mut f);
            poly_axpy(-p, &poly_mul(&df, &df), &mut f);
            let mut g = Vec::new();
            poly_axpy(p, &lu, &mut g);
            poly_axpy(-mu * q, &poly_mul(&dg, &dg), &mut g);
            (f, g)
        }
    }
}

/// `c*` recovered by projecting the quadratic term of `f_2` back onto
/// `f_2`, in the normalization of [`BlowupConstants::f2_leading`].
pub fn c_star_by_projection(params: &Parameters, c: &BlowupConstants) -> Result<f64> {
    let basis = Basis::new(params, c, 4)?;
    let f2 = basis.find(Family::Plus, 2).expect("degree 2 in basis");
    let lead = c.f2_leading(params);
    let kappa = lead[0] / f2.coeffs_first[2];
    let (qf, qg) = quadratic_term(params, c, &f2.coeffs_first, &f2.coeffs_second);
    let coeffs = basis.expand_polynomial(&qf, &qg)?;
    Ok(coeffs.theta[2] * kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::compute_constants;
    use approx::assert_relative_eq;

    fn power(p: f64, q: f64, mu: f64, dim: usize) -> (Parameters, BlowupConstants) {
        let params = Parameters::new(Nonlinearity::Power, p, q, mu, dim).unwrap();
        let c = compute_constants(&params).unwrap();
        (params, c)
    }

    fn exponential(p: f64, q: f64, mu: f64, dim: usize) -> (Parameters, BlowupConstants) {
        let params = Parameters::new(Nonlinearity::Exponential, p, q, mu, dim).unwrap();
        let c = compute_constants(&params).unwrap();
        (params, c)
    }

    #[test]
    fn apply_l_examples() {
        assert_eq!(apply_l(1.0, 1, &[0.0, 0.0, 1.0]), vec![2.0, 0.0, -1.0]);
        assert_eq!(apply_l(3.7, 2, &[1.0]), vec![0.0]);
        assert_eq!(apply_l(1.0, 1, &[0.0, 1.0]), vec![0.0, -0.5]);
        assert_eq!(apply_l(2.0, 3, &[0.0, 0.0, 1.0]), vec![12.0, 0.0, -1.0]);
    }

    #[test]
    fn coupling_eigenvalues() {
        for (pp, qq) in [(2.0, 2.0), (3.0, 1.5), (5.0, 2.0)] {
            let (params, c) = power(pp, qq, 1.0, 1);
            let m = CouplingMatrix::new(&params, &c).entries;
            let tr = m[0][0] + m[1][1];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let lm = CouplingMatrix::minus_eigenvalue(&params);
            assert_relative_eq!(tr, 1.0 + lm, epsilon = 1e-12);
            assert_relative_eq!(det, lm, epsilon = 1e-12);
        }
    }

    #[test]
    fn exponential_degree_zero() {
        let (params, c) = exponential(2.0, 3.0, 0.5, 1);
        let pairs = diagonalize(&params, &c, 0).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].eigenvalue, 1.0);
        assert_eq!(pairs[1].eigenvalue, -1.0);
        let n = 13f64.sqrt();
        assert_relative_eq!(pairs[0].coeffs_first[0], 3.0 / n, epsilon = 1e-15);
        assert_relative_eq!(pairs[0].coeffs_second[0], 2.0 / n, epsilon = 1e-15);
    }

    #[test]
    fn power_eigenvalues() {
        let (params, c) = power(3.0, 2.0, 2.0, 1);
        let pairs = diagonalize(&params, &c, 6).unwrap();
        for pair in &pairs {
            let n = pair.degree as f64;
            let want = match pair.family {
                Family::Plus => 1.0 - n / 2.0,
                Family::Minus => -(n / 2.0 + 4.0 * 3.0 / 5.0),
            };
            assert_relative_eq!(pair.eigenvalue, want, epsilon = 1e-14);
        }
        assert_eq!(basis_degrees(3, 6), vec![0, 2, 4, 6]);
    }

    fn assert_eigenpairs(params: &Parameters, c: &BlowupConstants, m: usize) {
        let coupling = CouplingMatrix::new(params, c);
        let basis = Basis::new(params, c, m).unwrap();
        for pair in &basis.pairs {
            let (hf, hg) = apply_h_plus_m(params.mu, params.dim, &coupling, &pair.coeffs_first, &pair.coeffs_second);
            let lam = pair.eigenvalue;
            let res = basis.inner(
                |y| {
                    (
                        poly_eval(&hf, y) - lam * poly_eval(&pair.coeffs_first, y),
                        poly_eval(&hg, y) - lam * poly_eval(&pair.coeffs_second, y),
                    )
                },
                |y| {
                    (
                        poly_eval(&hf, y) - lam * poly_eval(&pair.coeffs_first, y),
                        poly_eval(&hg, y) - lam * poly_eval(&pair.coeffs_second, y),
                    )
                },
            );
            assert!(res.sqrt() < 1e-9, "residual {} at {:?} {}", res.sqrt(), pair.family, pair.degree);
            let lead = (pair.coeffs_first[pair.degree], pair.coeffs_second[pair.degree]);
            assert_relative_eq!(lead.0.hypot(lead.1), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn eigen_residuals() {
        for dim in [1, 2, 3] {
            for mu in [0.5, 1.0, 2.0] {
                let (p, c) = power(2.0, 2.0, mu, dim);
                assert_eigenpairs(&p, &c, 6);
                let (p, c) = power(3.0, 1.5, mu, dim);
                assert_eigenpairs(&p, &c, 6);
                let (p, c) = exponential(1.0, 2.0, mu, dim);
                assert_eigenpairs(&p, &c, 6);
            }
        }
    }

    #[test]
    fn exponential_resonance_is_solvable() {
        // Plus family at degree 4 meets the Minus eigenvalue at degree 0.
        let (p, c) = exponential(1.0, 1.0, 1.0, 1);
        let pairs = diagonalize(&p, &c, 8).unwrap();
        assert_eq!(pairs.len(), 18);
    }

    #[test]
    fn biorthogonal_projection() {
        let (params, c) = power(2.0, 2.0, 1.0, 1);
        let basis = Basis::new(&params, &c, 6).unwrap();
        for target in &basis.pairs {
            let coeffs = basis.project(|y| target.eval(y), f64::INFINITY).unwrap();
            for pair in &basis.pairs {
                let v = match pair.family {
                    Family::Plus => coeffs.theta[pair.degree],
                    Family::Minus => coeffs.theta_tilde[pair.degree],
                };
                let want = if pair == target { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-8);
            }
        }
        let zero = basis.project(|_| (0.0, 0.0), f64::INFINITY).unwrap();
        assert!(zero.theta.iter().chain(&zero.theta_tilde).all(|&v| v == 0.0));

        let f0 = basis.find(Family::Plus, 0).unwrap().clone();
        let t1 = basis.find(Family::Minus, 1).unwrap().clone();
        let coeffs = basis
            .project(
                |y| {
                    let (a, b) = f0.eval(y);
                    let (c, d) = t1.eval(y);
                    (a + 0.5 * c, b + 0.5 * d)
                },
                f64::INFINITY,
            )
            .unwrap();
        assert!((coeffs.theta[0] - 1.0).abs() < 1e-8);
        assert!((coeffs.theta_tilde[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn truncated_support_is_rejected() {
        let (params, c) = power(2.0, 2.0, 1.0, 1);
        let basis = Basis::new(&params, &c, 4).unwrap();
        assert!(matches!(basis.project(|_| (1.0, 1.0), 3.0), Err(Error::QuadratureDomain { .. })));
        assert!(basis.project(|_| (1.0, 1.0), 60.0).is_ok());
    }

    #[test]
    fn c_star_matches_closed_form() {
        for (pp, qq, mu) in [(2.0, 2.0, 1.0), (3.0, 2.0, 1.0), (2.0, 2.0, 2.0), (3.0, 2.0, 0.5), (2.0, 3.0, 3.0)] {
            for dim in [1, 3] {
                let (params, c) = power(pp, qq, mu, dim);
                let got = c_star_by_projection(&params, &c).unwrap();
                assert_relative_eq!(got, c.c_star, max_relative = 1e-9);
            }
        }
        for (pp, qq, mu) in [(1.0, 1.0, 1.0), (2.0, 3.0, 0.5)] {
            let (params, c) = exponential(pp, qq, mu, 1);
            let got = c_star_by_projection(&params, &c).unwrap();
            assert_relative_eq!(got, c.c_star, max_relative = 1e-9);
        }
    }

    #[test]
    fn f2_matches_normalization() {
        let (params, c) = power(2.0, 2.0, 2.0, 1);
        let basis = Basis::new(&params, &c, 2).unwrap();
        let f2 = basis.find(Family::Plus, 2).unwrap();
        let kappa = c.f2_leading(&params)[0] / f2.coeffs_first[2];
        assert_relative_eq!(kappa * f2.coeffs_first[0], -10.0, epsilon = 1e-12);
        assert_relative_eq!(kappa * f2.coeffs_second[0], -8.0, epsilon = 1e-12);
        assert_relative_eq!(kappa * f2.coeffs_second[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn json_export_round_trips_pairs() {
        let (params, c) = exponential(1.0, 1.0, 1.0, 1);
        let basis = Basis::new(&params, &c, 3).unwrap();
        let json: serde_json::Value = serde_json::from_str(&basis.to_json().unwrap()).unwrap();
        assert_eq!(json["pairs"].as_array().unwrap().len(), 8);
        assert_eq!(json["pairs"][1]["family"], "minus");
    }
}

//! Gaussian quadrature against the weights `rho_eta(y) = (4 pi)^{-N/2} e^{-|y|^2/(4 eta)}`.
//!
//! Nodes come from the Golub-Welsch eigenproblem and are polished with a
//! few Newton steps on the orthonormal three-term recurrence; weights use
//! the Christoffel formula, which keeps small tail weights accurate.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn jacobi_nodes(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = off[i];
            m[(i + 1, i)] = off[i];
        }
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nodes
}

/// Orthonormal recurrence `x p_k = b_{k+1} p_{k+1} + a_k p_k + b_k p_{k-1}`.
/// Returns `(sum_{k<n} p_k(x)^2, p_n(x), p_n'(x))` with `p_0 = 1/sqrt(mass)`.
fn recurrence(x: f64, a: &[f64], b: &[f64], mass: f64) -> (f64, f64, f64) {
    let n = a.len();
    let mut p_prev = 0.0;
    let mut dp_prev = 0.0;
    let mut p = 1.0 / mass.sqrt();
    let mut dp = 0.0;
    let mut sum = 0.0;
    for k in 0..n {
        sum += p * p;
        let bk = if k == 0 { 0.0 } else { b[k - 1] };
        let p_next = ((x - a[k]) * p - bk * p_prev) / b[k];
        let dp_next = ((x - a[k]) * dp + p - bk * dp_prev) / b[k];
        p_prev = p;
        dp_prev = dp;
        p = p_next;
        dp = dp_next;
    }
    (sum, p, dp)
}

/// `a[k]` for k < n and `b[k]` for k <= n-1 (b has length n, last entry
/// only used by the recurrence past the Jacobi matrix).
fn gauss_rule(a: Vec<f64>, b: Vec<f64>, mass: f64) -> Rule {
    let n = a.len();
    let mut nodes = jacobi_nodes(&a, &b[..n - 1]);
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (_, pn, dpn) = recurrence(*x, &a, &b, mass);
            if dpn == 0.0 {
                break;
            }
            let step = pn / dpn;
            *x -= step;
            if step.abs() < 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (sum, _, _) = recurrence(*x, &a, &b, mass);
        weights.push(1.0 / sum);
    }
    Rule { nodes, weights }
}

/// Gauss-Hermite rule for `int_R f(x) e^{-x^2} dx`.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n > 0);
    let a = vec![0.0; n];
    let b = (1..=n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    gauss_rule(a, b, std::f64::consts::PI.sqrt())
}

/// Generalized Gauss-Laguerre rule for `int_0^inf f(t) t^a e^{-t} dt`, `a > -1`.
pub fn gauss_laguerre(n: usize, a: f64) -> Rule {
    assert!(n > 0 && a > -1.0);
    let diag = (0..n).map(|k| 2.0 * k as f64 + a + 1.0).collect();
    let off = (1..=n).map(|k| (k as f64 * (k as f64 + a)).sqrt()).collect();
    gauss_rule(diag, off, gamma_fn(a + 1.0))
}

/// Lanczos approximation, accurate to ~1e-15 for the half-integer and
/// integer arguments used here.
pub fn gamma_fn(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x))
    } else {
        let x = x - 1.0;
        let t = x + G + 0.5;
        let sum = C[1..].iter().enumerate().fold(C[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * sum
    }
}

/// Surface area of the unit sphere in `R^N`.
pub fn sphere_area(dim: usize) -> f64 {
    let n = dim as f64;
    2.0 * std::f64::consts::PI.powf(n / 2.0) / gamma_fn(n / 2.0)
}

/// Rule for `int_{R^N} f(|y|) rho_eta(y) dy` (radial `f`) when `dim > 1`, or
/// for `int_R f(y) rho_eta(y) dy` on the full line when `dim == 1`.
///
/// In one dimension nodes are signed, so odd functions are integrated too.
pub fn weighted_rule(eta: f64, dim: usize, n: usize) -> Rule {
    let scale = 2.0 * eta.sqrt();
    let norm = (4.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0);
    if dim == 1 {
        let base = gauss_hermite(n);
        Rule { nodes: base.nodes.iter().map(|x| scale * x).collect(), weights: base.weights.iter().map(|w| w * scale * norm).collect() }
    } else {
        // y = scale * sqrt(t): r^{N-1} e^{-r^2/(4 eta)} dr = scale^N/2 t^{N/2-1} e^{-t} dt
        let a = dim as f64 / 2.0 - 1.0;
        let base = gauss_laguerre(n, a);
        let factor = sphere_area(dim) * norm * scale.powi(dim as i32) / 2.0;
        Rule { nodes: base.nodes.iter().map(|t| scale * t.sqrt()).collect(), weights: base.weights.iter().map(|w| w * factor).collect() }
    }
}

/// Exact moment `int |y|^{2k} rho_eta dy` over `R^N`.
pub fn gaussian_even_moment(eta: f64, dim: usize, k: u32) -> f64 {
    // (4 eta)^k Gamma(k + N/2) / Gamma(N/2)
    let n2 = dim as f64 / 2.0;
    (4.0 * eta).powi(k as i32) * (eta.powf(n2)) * gamma_fn(k as f64 + n2) / gamma_fn(n2)
}

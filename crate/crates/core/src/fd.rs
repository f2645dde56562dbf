//! Three-point radial operators on nonuniform grids and a pivoting
//! tridiagonal solver.

use crate::error::{Error, Result};

/// `eta * Lap u - drift * r u_r` as a tridiagonal stencil. The origin row
/// uses symmetry (`Lap u(0) = N u''(0)`), the outer row a mirrored ghost
/// node, so the outer row is the Neumann closure. Dirichlet rows are set by
/// the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialOperator {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Coefficients of the centered first derivative `(m, 0, p)` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 3 {
        return Err(Error::InvalidParameters("grid needs at least 3 nodes".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::InvalidParameters("radial grid must start at r = 0".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameters("grid must be strictly increasing".into()));
    }
    Ok(())
}

impl Gradient {
    pub fn new(grid: &[f64]) -> Self {
        let n = grid.len();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for j in 1..n - 1 {
            let hm = grid[j] - grid[j - 1];
            let hp = grid[j + 1] - grid[j];
            let den = hp * hm * (hp + hm);
            lower[j] = -hp * hp / den;
            diag[j] = (hp * hp - hm * hm) / den;
            upper[j] = hm * hm / den;
        }
        Gradient { lower, diag, upper }
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        out[0] = 0.0;
        out[n - 1] = 0.0;
        for j in 1..n - 1 {
            out[j] = self.lower[j] * u[j - 1] + self.diag[j] * u[j] + self.upper[j] * u[j + 1];
        }
    }
}

impl RadialOperator {
    pub fn new(grid: &[f64], dim: usize, eta: f64, drift: f64) -> Self {
        let n = grid.len();
        let nd = dim as f64;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let h1 = grid[1];
        // symmetric ghost u_{-1} = u_1
        diag[0] = -2.0 * nd * eta / (h1 * h1);
        upper[0] = 2.0 * nd * eta / (h1 * h1);
        for j in 1..n - 1 {
            let r = grid[j];
            let hm = r - grid[j - 1];
            let hp = grid[j + 1] - r;
            let s = hp + hm;
            let d2 = [2.0 / (hm * s), -2.0 / (hm * hp), 2.0 / (hp * s)];
            let den = hp * hm * s;
            let d1 = [-hp * hp / den, (hp * hp - hm * hm) / den, hm * hm / den];
            let c1 = eta * (nd - 1.0) / r - drift * r;
            lower[j] = eta * d2[0] + c1 * d1[0];
            diag[j] = eta * d2[1] + c1 * d1[1];
            upper[j] = eta * d2[2] + c1 * d1[2];
        }
        let h = grid[n - 1] - grid[n - 2];
        lower[n - 1] = 2.0 * eta / (h * h);
        diag[n - 1] = -2.0 * eta / (h * h);
        RadialOperator { lower, diag, upper }
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        out[0] = self.diag[0] * u[0] + self.upper[0] * u[1];
        for j in 1..n - 1 {
            out[j] = self.lower[j] * u[j - 1] + self.diag[j] * u[j] + self.upper[j] * u[j + 1];
        }
        out[n - 1] = self.lower[n - 1] * u[n - 2] + self.diag[n - 1] * u[n - 1];
    }
}

/// Solves a tridiagonal system with partial pivoting (the `gtsv`
/// elimination). `dl[i]` couples row `i+1` to column `i`, `du[i]` row `i`
/// to column `i+1`; both have length `n - 1`. Inputs are consumed.
pub fn solve_tridiagonal(mut dl: Vec<f64>, mut d: Vec<f64>, mut du: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = d.len();
    if n == 0 {
        return Ok(b);
    }
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                return Err(Error::RootFind(format!("singular tridiagonal system at row {i}")));
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
            dl[i] = 0.0;
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                dl[i] = du[i + 1];
                du[i + 1] = -fact * dl[i];
            }
            du[i] = temp;
            b.swap(i, i + 1);
            b[i + 1] -= fact * b[i];
        }
    }
    if d[n - 1] == 0.0 {
        return Err(Error::RootFind("singular tridiagonal system at last row".into()));
    }
    // dl now holds the second superdiagonal produced by row swaps
    b[n - 1] /= d[n - 1];
    if n > 1 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - dl[i] * b[i + 2]) / d[i];
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
        let x = m.lu().solve(&nalgebra::DVector::from_column_slice(b)).unwrap();
        x.iter().copied().collect()
    }

    #[test]
    fn tridiagonal_matches_dense_with_pivoting() {
        let n = 7;
        let dl: Vec<f64> = (0..n - 1).map(|i| 3.0 + i as f64).collect();
        let d: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.1 } else { -1.0 }).collect();
        let du: Vec<f64> = (0..n - 1).map(|i| 1.0 - 0.5 * i as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = d[i];
            if i + 1 < n {
                a[i + 1][i] = dl[i];
                a[i][i + 1] = du[i];
            }
        }
        let want = dense_solve(&a, &b);
        let got = solve_tridiagonal(dl, d, du, b).unwrap();
        for (x, y) in got.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn laplacian_of_quadratics_is_exact() {
        // nonuniform grid, Lap r^2 = 2N, r u_r = 2 r^2
        let grid: Vec<f64> = (0..40).map(|j| (j as f64 / 39.0).powi(2) * 5.0).collect();
        for dim in [1, 2, 3] {
            let op = RadialOperator::new(&grid, dim, 1.5, 0.5);
            let u: Vec<f64> = grid.iter().map(|r| r * r).collect();
            let mut out = vec![0.0; grid.len()];
            op.apply(&u, &mut out);
            for j in 0..grid.len() - 1 {
                let want = 1.5 * 2.0 * dim as f64 - 0.5 * 2.0 * grid[j] * grid[j];
                assert!((out[j] - want).abs() < 1e-9, "dim {dim} j {j}: {} vs {want}", out[j]);
            }
        }
    }

    #[test]
    fn gradient_is_exact_for_quadratics() {
        let grid: Vec<f64> = (0..20).map(|j| (j as f64).powf(1.3)).collect();
        let g = Gradient::new(&grid);
        let u: Vec<f64> = grid.iter().map(|r| 3.0 * r * r - r).collect();
        let mut out = vec![0.0; grid.len()];
        g.apply(&u, &mut out);
        for j in 1..grid.len() - 1 {
            assert!((out[j] - (6.0 * grid[j] - 1.0)).abs() < 1e-9);
        }
    }
}

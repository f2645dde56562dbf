//! Radial field snapshots and monotone cubic (PCHIP) interpolation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::check_grid;
use crate::io::{columns_to_string, read_columns};
use crate::params::{Nonlinearity, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Physical,
    Similarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    pub grid: Vec<f64>,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub frame: Frame,
    /// `t` in the physical frame, `s` in the similarity frame.
    pub time: f64,
    pub case: Nonlinearity,
}

/// `(Lambda, Upsilon)` stored with the layout of a similarity field.
pub type LinearizedField = RadialField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub frame: Frame,
    pub time: f64,
    pub params: Parameters,
    pub points: usize,
}

impl RadialField {
    pub fn new(grid: Vec<f64>, first: Vec<f64>, second: Vec<f64>, frame: Frame, time: f64, case: Nonlinearity) -> Result<Self> {
        check_grid(&grid)?;
        if first.len() != grid.len() || second.len() != grid.len() {
            return Err(Error::InvalidParameters("component length differs from grid length".into()));
        }
        Ok(RadialField { grid, first, second, frame, time, case })
    }

    pub fn from_fn(grid: Vec<f64>, frame: Frame, time: f64, case: Nonlinearity, f: impl Fn(f64) -> (f64, f64)) -> Result<Self> {
        let (first, second) = grid.iter().map(|&r| f(r)).unzip();
        Self::new(grid, first, second, frame, time, case)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        *self.grid.last().expect("grid is non-empty")
    }

    pub fn sup_first(&self) -> f64 {
        self.first.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub fn sup_second(&self) -> f64 {
        self.second.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.first.iter().chain(&self.second).all(|v| v.is_finite())
    }

    /// PCHIP value at `|r|`, `None` past the last node.
    pub fn interpolate(&self, r: f64) -> Option<(f64, f64)> {
        let r = r.abs();
        let j = locate(&self.grid, r)?;
        Some((pchip_at(&self.grid, &self.first, j, r), pchip_at(&self.grid, &self.second, j, r)))
    }

    pub fn resample(&self, grid: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        let mut first = Vec::with_capacity(grid.len());
        let mut second = Vec::with_capacity(grid.len());
        for &r in &grid {
            let (a, b) =
                self.interpolate(r).ok_or(Error::OutOfDomain(format!("resample point {r} beyond field support {}", self.r_max())))?;
            first.push(a);
            second.push(b);
        }
        Ok(RadialField { grid, first, second, ..*self })
    }

    pub fn to_csv(&self) -> Result<String> {
        columns_to_string(
            &["r", "first", "second"],
            self.grid.iter().zip(&self.first).zip(&self.second).map(|((&r, &a), &b)| vec![r, a, b]),
        )
    }

    pub fn sidecar(&self, params: &Parameters) -> FieldSidecar {
        FieldSidecar { frame: self.frame, time: self.time, params: *params, points: self.len() }
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str, params: &Parameters) -> Result<()> {
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv()?)?;
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&self.sidecar(params))?)?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<(Self, Parameters)> {
        let csv = std::fs::read_to_string(dir.join(format!("{stem}.csv")))?;
        let meta: FieldSidecar = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let (_, rows) = read_columns(&csv)?;
        let grid = rows.iter().map(|r| r[0]).collect();
        let first = rows.iter().map(|r| r[1]).collect();
        let second = rows.iter().map(|r| r[2]).collect();
        Ok((Self::new(grid, first, second, meta.frame, meta.time, meta.params.case)?, meta.params))
    }
}

fn locate(grid: &[f64], r: f64) -> Option<usize> {
    let n = grid.len();
    if r > grid[n - 1] || r < grid[0] {
        return None;
    }
    let j = grid.partition_point(|&g| g <= r);
    Some(j.saturating_sub(1).min(n - 2))
}

fn pchip_slope(grid: &[f64], v: &[f64], i: usize) -> f64 {
    let n = grid.len();
    let delta = |k: usize| (v[k + 1] - v[k]) / (grid[k + 1] - grid[k]);
    if i == 0 {
        // even extension through the origin when the grid starts at 0
        return 0.0;
    }
    if i == n - 1 {
        let h0 = grid[n - 1] - grid[n - 2];
        let h1 = if n > 2 { grid[n - 2] - grid[n - 3] } else { h0 };
        let d0 = delta(n - 2);
        let d1 = if n > 2 { delta(n - 3) } else { d0 };
        let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        return if d.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            d
        };
    }
    let hm = grid[i] - grid[i - 1];
    let hp = grid[i + 1] - grid[i];
    let dm = delta(i - 1);
    let dp = delta(i);
    if dm * dp <= 0.0 {
        return 0.0;
    }
    let w1 = 2.0 * hp + hm;
    let w2 = hp + 2.0 * hm;
    (w1 + w2) / (w1 / dm + w2 / dp)
}

fn pchip_at(grid: &[f64], v: &[f64], j: usize, r: f64) -> f64 {
    let h = grid[j + 1] - grid[j];
    let t = (r - grid[j]) / h;
    let d0 = pchip_slope(grid, v, j);
    let d1 = pchip_slope(grid, v, j + 1);
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * v[j] + h10 * h * d0 + h01 * v[j + 1] + h11 * h * d1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> RadialField {
        let grid: Vec<f64> = (0..=200).map(|j| j as f64 * 0.05).collect();
        RadialField::from_fn(grid, Frame::Similarity, 3.0, Nonlinearity::Power, |r| ((-r * r).exp(), 1.0 / (1.0 + r * r))).unwrap()
    }

    #[test]
    fn interpolation_hits_nodes_and_stays_close() {
        let f = field();
        assert_eq!(f.interpolate(0.5).unwrap(), (f.first[10], f.second[10]));
        let (a, b) = f.interpolate(1.2345).unwrap();
        assert!((a - (-1.2345f64 * 1.2345).exp()).abs() < 1e-4);
        assert!((b - 1.0 / (1.0 + 1.2345f64 * 1.2345)).abs() < 1e-4);
        assert!(f.interpolate(10.5).is_none());
        assert_eq!(f.interpolate(-0.5), f.interpolate(0.5));
    }

    #[test]
    fn pchip_preserves_monotonicity() {
        let grid = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let f = RadialField::new(grid, vec![0.0, 0.0, 1.0, 1.0, 5.0], vec![0.0; 5], Frame::Physical, 0.0, Nonlinearity::Power).unwrap();
        let mut prev = -1.0;
        for k in 0..=400 {
            let v = f.interpolate(k as f64 * 0.01).unwrap().0;
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn files_round_trip() {
        let f = field();
        let dir = tempfile_dir();
        let params = Parameters::power(2.0, 2.0, 1.0).unwrap();
        f.write(&dir, "snap", &params).unwrap();
        let (g, p) = RadialField::read(&dir, "snap").unwrap();
        assert_eq!(g, f);
        assert_eq!(p, params);
        std::fs::remove_dir_all(dir).unwrap();
    }

    fn tempfile_dir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("blowup-field-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(RadialField::new(vec![0.0, 1.0, 1.0], vec![0.0; 3], vec![0.0; 3], Frame::Physical, 0.0, Nonlinearity::Power).is_err());
        assert!(RadialField::new(vec![0.1, 1.0, 2.0], vec![0.0; 3], vec![0.0; 3], Frame::Physical, 0.0, Nonlinearity::Power).is_err());
    }
}

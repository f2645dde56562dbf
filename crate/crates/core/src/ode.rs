//! Adaptive Dormand-Prince 5(4) integrator with PI step control.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen from the rhs scale when `None`.
    pub h0: Option<f64>,
    /// Largest allowed step.
    pub h_max: f64,
    /// Steps below `h_min_rel * max(1, |t|)` raise [`Error::Stiffness`].
    pub h_min_rel: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5 { rtol: 1e-10, atol: 1e-12, h0: None, h_max: f64::INFINITY, h_min_rel: 1e-14, max_steps: 10_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    /// True when the observer ended the run before `t_end`.
    pub stopped: bool,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl Dopri5 {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Dopri5 { rtol, atol, ..Default::default() }
    }

    /// Integrates `y' = rhs(t, y)` from `t0` to `t_end`. The observer sees
    /// the initial state and every accepted step and may stop the run.
    pub fn solve<F, O>(&self, mut rhs: F, t0: f64, y0: Vec<f64>, t_end: f64, mut observer: O) -> Result<Outcome>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
        O: FnMut(f64, &[f64]) -> Control,
    {
        if !(t_end > t0) {
            return Err(Error::OutOfDomain(format!("t_end = {t_end} must exceed t0 = {t0}")));
        }
        let n = y0.len();
        let mut t = t0;
        let mut y = y0;
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
        let mut tmp = vec![0.0; n];
        let mut y_new = vec![0.0; n];
        rhs(t, &y, &mut k[0])?;
        if observer(t, &y) == Control::Stop {
            return Ok(Outcome { t, y, accepted: 0, rejected: 0, stopped: true });
        }
        let mut h = match self.h0 {
            Some(h) => h,
            None => self.initial_step(&mut rhs, t, &y, &k[0], t_end - t0)?,
        };
        let mut err_prev: f64 = 1e-4;
        let mut accepted = 0;
        let mut rejected = 0;
        while t < t_end {
            if accepted + rejected >= self.max_steps {
                return Err(Error::Stiffness { t, dt: h });
            }
            h = h.min(self.h_max);
            let mut last = false;
            if t + 1.01 * h >= t_end {
                h = t_end - t;
                last = true;
            }
            if h < self.h_min_rel * t.abs().max(1.0) {
                return Err(Error::Stiffness { t, dt: h });
            }
            let stages: [(f64, &[f64]); 5] =
                [(C2, &[A21]), (C3, &[A31, A32]), (C4, &[A41, A42, A43]), (C5, &[A51, A52, A53, A54]), (1.0, &[A61, A62, A63, A64, A65])];
            for (s, (c, a)) in stages.iter().enumerate() {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, aj) in a.iter().enumerate() {
                        acc += aj * k[j][i];
                    }
                    tmp[i] = y[i] + h * acc;
                }
                rhs(t + c * h, &tmp, &mut k[s + 1])?;
            }
            for i in 0..n {
                y_new[i] = y[i] + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
            }
            rhs(t + h, &y_new, &mut k[6])?;
            let mut err = 0.0;
            for i in 0..n {
                let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                rejected += 1;
                h *= 0.2;
                continue;
            }
            if err <= 1.0 {
                t = if last { t_end } else { t + h };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                accepted += 1;
                let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
                err_prev = err.max(1e-4);
                h *= fac.clamp(0.2, 5.0);
                if observer(t, &y) == Control::Stop {
                    return Ok(Outcome { t, y, accepted, rejected, stopped: true });
                }
            } else {
                rejected += 1;
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
        }
        Ok(Outcome { t, y, accepted, rejected, stopped: false })
    }

    fn initial_step<F>(&self, rhs: &mut F, t: f64, y: &[f64], f0: &[f64], span: f64) -> Result<f64>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len().max(1) as f64;
        let scale: Vec<f64> = y.iter().map(|yi| self.atol + self.rtol * yi.abs()).collect();
        let norm = |v: &[f64]| (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n).sqrt();
        let d0 = norm(y);
        let d1 = norm(f0);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
        let mut f1 = vec![0.0; y.len()];
        rhs(t + h0, &y1, &mut f1)?;
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = norm(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        Ok(h1.max(h0).min(span).min(self.h_max))
    }
}

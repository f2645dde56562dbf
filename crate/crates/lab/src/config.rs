//! Experiment configuration. Files are JSON with every field optional;
//! missing fields take the defaults below and CLI flags override both.
//!
//! ```json
//! {
//!   "experiment": "shoot",
//!   "case": "power", "p": 2, "q": 2, "mu": 1, "dim": 1,
//!   "s0": 10, "s_end": 100, "A": 10, "M": 4, "grid_points": 2048,
//!   "output_dir": "out/shoot"
//! }
//! ```

use std::path::{Path, PathBuf};

use blowup_core::params::{compute_constants_with, BlowupConstants, Nonlinearity, Parameters, ProfileCorrection};
use blowup_core::pde::SolverConfig;
use blowup_core::verifier::RegionThresholds;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Constants,
    Spectrum,
    ReducedOde,
    SimulatePhysical,
    SimulateSimilarity,
    Shoot,
    VerifyShrinking,
    FinalProfile,
    Sweep,
    Stability,
}

/// Initial data of a physical simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicalData {
    /// Spatially constant data following the ODE solution that blows up at `T`.
    #[default]
    Constant,
    /// The approximate profile at `s0` mapped to the physical frame (`T = e^{-s0}`).
    Profile,
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    P,
    Q,
    Mu,
    #[serde(rename = "A")]
    A,
    S0,
    #[serde(rename = "K0")]
    K0,
    GridPoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Experiment run at each value; may not itself be a sweep.
    pub experiment: Experiment,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub case: Nonlinearity,
    pub p: f64,
    pub q: f64,
    pub mu: f64,
    pub dim: usize,
    /// Which `1/s` correction the approximate profile carries.
    pub correction: ProfileCorrection,
    /// Blowup time of constant physical data.
    #[serde(rename = "T")]
    pub t_blowup: f64,
    pub solver: SolverConfig,
    pub thresholds: RegionThresholds,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "A")]
    pub a: f64,
    /// `K` of the cutoff `chi(y, s) = chi0(|y| / (K sqrt s))`.
    pub k_cutoff: f64,
    /// Experiment-specific defaults apply when these are unset.
    pub s0: Option<f64>,
    pub s_end: Option<f64>,
    pub grid_points: Option<usize>,
    pub y_max: Option<f64>,
    /// `d0` of a single similarity run.
    pub d0: f64,
    /// Initial `(a0, a2)` of the reduced system at `s0`.
    pub reduced_init: (f64, f64),
    /// End of the intermediate system run.
    pub tau_end: f64,
    pub physical_data: PhysicalData,
    /// Relative perturbation sizes of the stability experiment.
    pub epsilons: Vec<f64>,
    pub sweep: Option<SweepSpec>,
    pub parallelism: usize,
    pub output_dir: PathBuf,
    /// Recorded in the manifest; the pipelines themselves draw no random numbers.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let k0 = RegionThresholds::default();
        ExperimentConfig {
            experiment: Experiment::Constants,
            case: Nonlinearity::Power,
            p: 2.0,
            q: 2.0,
            mu: 1.0,
            dim: 1,
            correction: ProfileCorrection::Matched,
            t_blowup: 1.0,
            solver: SolverConfig::default(),
            thresholds: k0,
            m: 4,
            a: 10.0,
            k_cutoff: 2.0,
            s0: None,
            s_end: None,
            grid_points: None,
            y_max: None,
            d0: 0.0,
            reduced_init: (0.0, -0.01),
            tau_end: 0.99,
            physical_data: PhysicalData::Constant,
            epsilons: vec![0.0, 1e-4, 1e-3, 1e-2],
            sweep: None,
            parallelism: 1,
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig { experiment, ..Default::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn params(&self) -> Result<Parameters> {
        Ok(Parameters::new(self.case, self.p, self.q, self.mu, self.dim)?)
    }

    pub fn constants(&self) -> Result<BlowupConstants> {
        Ok(compute_constants_with(&self.params()?, self.t_blowup, self.correction)?)
    }

    fn is_exp(&self) -> bool {
        self.case == Nonlinearity::Exponential
    }

    pub fn s0(&self) -> f64 {
        self.s0.unwrap_or(match self.experiment {
            Experiment::FinalProfile => 6.0,
            Experiment::Shoot | Experiment::VerifyShrinking if !self.is_exp() => 10.0,
            _ => 20.0,
        })
    }

    pub fn s_end(&self) -> f64 {
        self.s_end.unwrap_or(match self.experiment {
            Experiment::Shoot | Experiment::VerifyShrinking if !self.is_exp() => 100.0,
            Experiment::Stability => 60.0,
            Experiment::ReducedOde => 1000.0,
            _ => self.s0() + 10.0,
        })
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points.unwrap_or(match self.experiment {
            Experiment::SimulatePhysical if self.physical_data == PhysicalData::Constant => 65,
            Experiment::FinalProfile => 2500,
            Experiment::Shoot | Experiment::VerifyShrinking if self.is_exp() => 2000,
            _ => 2048,
        })
    }

    /// Outer radius of similarity grids: `8 K sqrt(s_end)` unless set.
    pub fn y_max(&self) -> f64 {
        self.y_max.unwrap_or(8.0 * self.k_cutoff * self.s_end().sqrt())
    }

    /// Checks the experiment-specific fields and that the output directory
    /// can be created.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if !(self.s_end() > self.s0()) || self.s0() < 1.0 {
            return Err(LabError::Config(format!("need 1 <= s0 < s_end (got {}, {})", self.s0(), self.s_end())));
        }
        if self.grid_points() < 8 || self.m == 0 || !(self.a > 0.0) || !(self.k_cutoff > 0.0) {
            return Err(LabError::Config("grid_points >= 8, M >= 1, A > 0 and K > 0 are required".into()));
        }
        match (self.experiment, &self.sweep) {
            (Experiment::Sweep, None) => return Err(LabError::Config("experiment sweep needs a `sweep` section".into())),
            (Experiment::Sweep, Some(s)) if s.experiment == Experiment::Sweep => {
                return Err(LabError::Config("sweeps cannot nest".into()));
            }
            _ => {}
        }
        if self.experiment == Experiment::Stability && self.is_exp() {
            return Err(LabError::Config("the stability experiment is defined for the power case".into()));
        }
        std::fs::create_dir_all(&self.output_dir)
            .map_err(|e| LabError::Config(format!("output_dir {}: {e}", self.output_dir.display())))?;
        Ok(())
    }

    /// Copy with one sweep parameter set to `value`.
    pub fn with_value(&self, parameter: SweepParameter, value: f64) -> Self {
        let mut c = self.clone();
        match parameter {
            SweepParameter::P => c.p = value,
            SweepParameter::Q => c.q = value,
            SweepParameter::Mu => c.mu = value,
            SweepParameter::A => c.a = value,
            SweepParameter::S0 => c.s0 = Some(value),
            SweepParameter::K0 => c.thresholds.k0 = value,
            SweepParameter::GridPoints => c.grid_points = Some(value as usize),
        }
        c
    }
}

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use blowup_core::params::Nonlinearity;
use blowup_lab::config::{Experiment, PhysicalData, SweepParameter, SweepSpec};
use blowup_lab::{run, ExperimentConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "blowuplab", version, about = "Numerical lab for Type-I blowup of a coupled parabolic system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Similarity constants and the identity residuals.
    Constants(Common),
    /// Eigenpairs of the linearized operator up to degree M.
    Spectrum(Common),
    /// Reduced ODE (and the intermediate system for --case exp).
    ReducedOde(Common),
    /// Physical-frame run (default) or similarity-frame run with --similarity.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        similarity: bool,
        /// Start from the approximate profile at s0 instead of constant data.
        #[arg(long)]
        profile: bool,
    },
    /// Shoot d0 so the run stays in the shrinking set.
    Shoot(Common),
    /// Shoot, then report every shrinking-set (or region) margin.
    Verify(Common),
    /// Physical run to the threshold and the final-profile fit.
    FinalProfile(Common),
    /// Sweep one parameter over a list of values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Experiment run at each value.
        #[arg(long, value_enum, default_value = "constants")]
        experiment: SweepExperiment,
        #[arg(long, value_enum)]
        parameter: Option<Param>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Perturb the trapped data and re-shoot.
    Stability {
        #[command(flatten)]
        common: Common,
        /// Comma-separated perturbation sizes.
        #[arg(long, value_delimiter = ',')]
        epsilons: Vec<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Case {
    Power,
    Exp,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepExperiment {
    Constants,
    Spectrum,
    ReducedOde,
    SimulatePhysical,
    SimulateSimilarity,
    Shoot,
    VerifyShrinking,
    FinalProfile,
    Stability,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    P,
    Q,
    Mu,
    #[value(name = "A")]
    A,
    S0,
    #[value(name = "K0")]
    K0,
    GridPoints,
}

#[derive(Args)]
struct Common {
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    case: Option<Case>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    s0: Option<f64>,
    #[arg(long)]
    s_end: Option<f64>,
    #[arg(long = "A")]
    a: Option<f64>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long = "K0")]
    k0: Option<f64>,
    #[arg(long)]
    d0: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self, experiment: Experiment) -> blowup_lab::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        c.experiment = experiment;
        if let Some(case) = self.case {
            c.case = match case {
                Case::Power => Nonlinearity::Power,
                Case::Exp => Nonlinearity::Exponential,
            };
        }
        macro_rules! set {
            ($($flag:ident => $field:expr),*) => {$( if let Some(v) = self.$flag { $field = v; } )*};
        }
        set!(p => c.p, q => c.q, mu => c.mu, dim => c.dim, a => c.a, m => c.m, k0 => c.thresholds.k0, d0 => c.d0);
        c.grid_points = self.grid_points.or(c.grid_points);
        c.s0 = self.s0.or(c.s0);
        c.s_end = self.s_end.or(c.s_end);
        if let Some(out) = &self.out {
            c.output_dir = out.clone();
        }
        Ok(c)
    }
}

fn sweep_experiment(e: SweepExperiment) -> Experiment {
    match e {
        SweepExperiment::Constants => Experiment::Constants,
        SweepExperiment::Spectrum => Experiment::Spectrum,
        SweepExperiment::ReducedOde => Experiment::ReducedOde,
        SweepExperiment::SimulatePhysical => Experiment::SimulatePhysical,
        SweepExperiment::SimulateSimilarity => Experiment::SimulateSimilarity,
        SweepExperiment::Shoot => Experiment::Shoot,
        SweepExperiment::VerifyShrinking => Experiment::VerifyShrinking,
        SweepExperiment::FinalProfile => Experiment::FinalProfile,
        SweepExperiment::Stability => Experiment::Stability,
    }
}

fn sweep_parameter(p: Param) -> SweepParameter {
    match p {
        Param::P => SweepParameter::P,
        Param::Q => SweepParameter::Q,
        Param::Mu => SweepParameter::Mu,
        Param::A => SweepParameter::A,
        Param::S0 => SweepParameter::S0,
        Param::K0 => SweepParameter::K0,
        Param::GridPoints => SweepParameter::GridPoints,
    }
}

fn build(command: Command) -> blowup_lab::Result<ExperimentConfig> {
    Ok(match command {
        Command::Constants(c) => c.config(Experiment::Constants)?,
        Command::Spectrum(c) => c.config(Experiment::Spectrum)?,
        Command::ReducedOde(c) => c.config(Experiment::ReducedOde)?,
        Command::Simulate { common, similarity, profile } => {
            let mut c = common.config(if similarity { Experiment::SimulateSimilarity } else { Experiment::SimulatePhysical })?;
            if profile {
                c.physical_data = PhysicalData::Profile;
            }
            c
        }
        Command::Shoot(c) => c.config(Experiment::Shoot)?,
        Command::Verify(c) => c.config(Experiment::VerifyShrinking)?,
        Command::FinalProfile(c) => c.config(Experiment::FinalProfile)?,
        Command::Sweep { common, experiment, parameter, values, parallelism } => {
            let mut c = common.config(Experiment::Sweep)?;
            if let Some(parameter) = parameter {
                c.sweep = Some(SweepSpec { experiment: sweep_experiment(experiment), parameter: sweep_parameter(parameter), values });
            } else if !values.is_empty() {
                return Err(blowup_lab::LabError::Config("--values needs --parameter".into()));
            }
            if let Some(n) = parallelism {
                c.parallelism = n;
            }
            c
        }
        Command::Stability { common, epsilons } => {
            let mut c = common.config(Experiment::Stability)?;
            if !epsilons.is_empty() {
                c.epsilons = epsilons;
            }
            c
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build(cli.command).and_then(|c| run(&c));
    match result {
        Ok(manifest) => {
            // a closed pipe is not a failure of the run
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&manifest.summary).unwrap_or_default());
            if let Some(e) = &manifest.error {
                eprintln!("error: {e}");
            }
            if manifest.ok() {
                ExitCode::SUCCESS
            } else {
                if manifest.passed == Some(false) {
                    eprintln!("verification failed; see {}", manifest.config.output_dir.join("manifest.json").display());
                }
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

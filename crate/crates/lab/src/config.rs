//! TOML experiment descriptions.
//!
//! A config file holds global defaults and one or more `[[experiment]]`
//! tables, each tagged by `kind`:
//!
//! ```toml
//! seed = 7
//!
//! [[experiment]]
//! name = "heat"
//! kind = "flow"
//! grid = { n = 128 }
//! initial = { shape = "cosine", amplitude = 0.5 }
//! t_end = 0.05
//! objective = { tau = 1.0, components = [] }
//! ```
//!
//! Relative file paths are resolved against the directory of the config.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mfl_core::eot::SinkhornOptions;
use mfl_core::functionals::{Functional, Objective};
use mfl_core::grid::{GridDensity, GridFunction};
use mfl_core::io::{read_density, read_function};
use mfl_core::TorusGrid;

use crate::error::LabError;

/// Parsed config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Default seed of experiments that do not set one.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Default output root (overridden by `--out`).
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(rename = "experiment")]
    pub experiments: Vec<ExperimentConfig>,
}

/// One experiment: a name (its output subdirectory), an optional seed and
/// the kind-specific parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub kind: Experiment,
}

/// Experiment kinds; the tag equals the CLI subcommand.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Flow(FlowExperiment),
    MflParticles(ParticlesExperiment),
    KernelCheck(KernelCheckExperiment),
    Sandwich(SandwichExperiment),
    Afi(AfiExperiment),
    Spectrum(SpectrumExperiment),
    Traj(TrajExperiment),
    Rates(RatesExperiment),
    Bounds(BoundsExperiment),
}

impl Experiment {
    /// Subcommand name of this kind.
    pub fn tag(&self) -> &'static str {
        match self {
            Experiment::Flow(_) => "flow",
            Experiment::MflParticles(_) => "mfl-particles",
            Experiment::KernelCheck(_) => "kernel-check",
            Experiment::Sandwich(_) => "sandwich",
            Experiment::Afi(_) => "afi",
            Experiment::Spectrum(_) => "spectrum",
            Experiment::Traj(_) => "traj",
            Experiment::Rates(_) => "rates",
            Experiment::Bounds(_) => "bounds",
        }
    }
}

/// Periodic grid `{ dim, n }`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "one")]
    pub dim: usize,
    pub n: usize,
}

fn one() -> usize {
    1
}

impl GridSpec {
    pub fn build(&self) -> Result<TorusGrid, LabError> {
        Ok(TorusGrid::new(self.dim, self.n)?)
    }
}

/// A grid function given by a closed form in the first coordinate or read
/// from a grid file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// `value` everywhere.
    Constant { value: f64 },
    /// `amplitude · cos(2π mode x)`.
    Cos {
        amplitude: f64,
        #[serde(default = "one")]
        mode: usize,
    },
    /// `-κ cos(2πx)`.
    NegCos { kappa: f64 },
    /// Grid file (`torus d= n=` header, one value per line).
    File { path: PathBuf },
}

impl ProfileSpec {
    pub fn build(&self, grid: TorusGrid, base: &Path) -> Result<GridFunction<f64>, LabError> {
        Ok(match self {
            ProfileSpec::Constant { value } => GridFunction::constant(grid, *value),
            ProfileSpec::Cos { amplitude, mode } => {
                let k = *mode as f64;
                GridFunction::from_fn(grid, |x: &[f64]| amplitude * (2.0 * PI * k * x[0]).cos())
            }
            ProfileSpec::NegCos { kappa } => GridFunction::from_fn(grid, |x: &[f64]| -kappa * (2.0 * PI * x[0]).cos()),
            ProfileSpec::File { path } => {
                let f: GridFunction<f64> = read_function(open(base, path)?)?;
                f.grid().ensure_same(&grid)?;
                f
            }
        })
    }

    fn files(&self) -> Vec<&Path> {
        match self {
            ProfileSpec::File { path } => vec![path.as_path()],
            _ => Vec::new(),
        }
    }
}

/// A density given by a closed form in the first coordinate or read from a
/// grid file; closed forms are normalized to unit mass.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform,
    /// `1 + amplitude · cos(2π mode x)`, `|amplitude| < 1`.
    Cosine {
        amplitude: f64,
        #[serde(default = "one")]
        mode: usize,
    },
    /// `exp(amplitude · cos(2π mode x))`.
    Gibbs {
        amplitude: f64,
        #[serde(default = "one")]
        mode: usize,
    },
    File { path: PathBuf },
}

impl DensitySpec {
    pub fn build(&self, grid: TorusGrid, base: &Path) -> Result<GridDensity<f64>, LabError> {
        Ok(match self {
            DensitySpec::Uniform => GridDensity::uniform(grid),
            DensitySpec::Cosine { amplitude, mode } => {
                if amplitude.abs() >= 1.0 {
                    return Err(LabError::Config(format!("cosine amplitude {amplitude} must be below 1 in magnitude")));
                }
                let k = *mode as f64;
                GridDensity::from_fn(grid, |x: &[f64]| 1.0 + amplitude * (2.0 * PI * k * x[0]).cos())?
            }
            DensitySpec::Gibbs { amplitude, mode } => {
                let k = *mode as f64;
                GridDensity::from_fn(grid, |x: &[f64]| (amplitude * (2.0 * PI * k * x[0]).cos()).exp())?
            }
            DensitySpec::File { path } => {
                let d: GridDensity<f64> = read_density(open(base, path)?)?;
                d.grid().ensure_same(&grid)?;
                d
            }
        })
    }

    fn files(&self) -> Vec<&Path> {
        match self {
            DensitySpec::File { path } => vec![path.as_path()],
            _ => Vec::new(),
        }
    }
}

/// One component of an objective.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ComponentSpec {
    Potential {
        potential: ProfileSpec,
        #[serde(default)]
        weight: Option<f64>,
    },
    Interaction {
        kernel: ProfileSpec,
        #[serde(default)]
        weight: Option<f64>,
    },
    Fit {
        observation: DensitySpec,
        sigma: f64,
        #[serde(default)]
        weight: Option<f64>,
    },
    QuadraticFit {
        target: DensitySpec,
        #[serde(default)]
        weight: Option<f64>,
    },
    Entropy {
        #[serde(default)]
        weight: Option<f64>,
    },
    SelfTransport {
        tau: f64,
        #[serde(default)]
        weight: Option<f64>,
    },
}

/// Objective `Σ components + τH`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub tau: f64,
    #[serde(default)]
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub sinkhorn: Option<SinkhornSpec>,
}

/// Sinkhorn tolerance and iteration cap.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkhornSpec {
    pub tol: f64,
    pub max_iter: usize,
}

impl SinkhornSpec {
    pub fn options(spec: Option<SinkhornSpec>) -> SinkhornOptions<f64> {
        spec.map_or_else(SinkhornOptions::default, |s| SinkhornOptions { tol: s.tol, max_iter: s.max_iter })
    }
}

impl ObjectiveSpec {
    pub fn build(&self, grid: TorusGrid, base: &Path) -> Result<Objective<f64>, LabError> {
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(LabError::Config(format!("objective tau {} must be positive", self.tau)));
        }
        let sinkhorn = SinkhornSpec::options(self.sinkhorn);
        let mut parts = Vec::new();
        for c in &self.components {
            let (f, w) = match c {
                ComponentSpec::Potential { potential, weight } => (Functional::potential(potential.build(grid, base)?), weight),
                ComponentSpec::Interaction { kernel, weight } => (Functional::interaction(kernel.build(grid, base)?)?, weight),
                ComponentSpec::Fit { observation, sigma, weight } => (Functional::fit(observation.build(grid, base)?, *sigma)?, weight),
                ComponentSpec::QuadraticFit { target, weight } => (Functional::quadratic_fit(target.build(grid, base)?), weight),
                ComponentSpec::Entropy { weight } => (Functional::entropy(), weight),
                ComponentSpec::SelfTransport { tau, weight } => (Functional::self_transport(*tau, grid, sinkhorn)?, weight),
            };
            parts.push(match w {
                Some(w) => f.with_weight(*w),
                None => f,
            });
        }
        Ok(Objective::new(parts, self.tau))
    }

    fn files(&self) -> Vec<&Path> {
        self.components
            .iter()
            .flat_map(|c| match c {
                ComponentSpec::Potential { potential, .. } => potential.files(),
                ComponentSpec::Interaction { kernel, .. } => kernel.files(),
                ComponentSpec::Fit { observation, .. } => observation.files(),
                ComponentSpec::QuadraticFit { target, .. } => target.files(),
                _ => Vec::new(),
            })
            .collect()
    }
}

fn default_safety() -> f64 {
    0.9
}

/// Grid flow of an objective.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowExperiment {
    pub grid: GridSpec,
    pub objective: ObjectiveSpec,
    pub initial: DensitySpec,
    pub t_end: f64,
    #[serde(default = "default_record")]
    pub record_every: f64,
    #[serde(default = "default_safety")]
    pub dt_safety: f64,
    /// Compute the fixed-point minimizer and record gaps.
    #[serde(default)]
    pub reference: bool,
    /// Assert the final gap is at most this value (requires `reference`).
    #[serde(default)]
    pub max_final_gap: Option<f64>,
}

fn default_record() -> f64 {
    0.01
}

/// Mean-field Langevin particles on the torus.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesExperiment {
    pub grid: GridSpec,
    pub objective: ObjectiveSpec,
    pub particles: usize,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_record")]
    pub record_every: f64,
    /// Times at which ensembles are written.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Also run the grid flow from uniform and compare final densities.
    #[serde(default)]
    pub compare_flow: bool,
    /// Assert the circle W1 distance to the grid flow is at most this.
    #[serde(default)]
    pub max_w1: Option<f64>,
}

/// Empirical transition densities of `dY = M̄ sin(2πY) dt + dB` against the
/// kernel bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCheckExperiment {
    pub mbar: Vec<f64>,
    pub starts: Vec<f64>,
    pub times: Vec<f64>,
    pub particles: usize,
    #[serde(default = "default_sde_dt")]
    pub dt: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_pass")]
    pub min_pass_fraction: f64,
}

fn default_sde_dt() -> f64 {
    1e-3
}

fn default_bins() -> usize {
    32
}

fn default_pass() -> f64 {
    0.99
}

/// Quadratic exponent of a confined SDE density at `T_ε`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandwichExperiment {
    pub epsilon: f64,
    pub m_star: f64,
    /// Drift bound `M` of the perturbation.
    pub m: f64,
    /// Amplitude of the bounded perturbation `a sin(2πx)`, at most `M`.
    pub amplitude: f64,
    pub particles: usize,
    #[serde(default = "default_sde_dt")]
    pub dt: f64,
    /// Standard deviation of the Gaussian start.
    #[serde(default = "default_start_std")]
    pub start_std: f64,
    #[serde(default = "default_radius")]
    pub fit_radius: f64,
    #[serde(default = "default_fit_bins")]
    pub fit_bins: usize,
    #[serde(default = "default_r2")]
    pub min_r2: f64,
}

fn default_start_std() -> f64 {
    0.5
}

fn default_radius() -> f64 {
    2.0
}

fn default_fit_bins() -> usize {
    80
}

fn default_r2() -> f64 {
    0.99
}

/// `D_τ + τH` against `τ² I / 8` over a list of `τ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AfiExperiment {
    pub grid: GridSpec,
    pub density: DensitySpec,
    pub taus: Vec<f64>,
    #[serde(default)]
    pub sinkhorn: Option<SinkhornSpec>,
    /// Assert the ratio is nondecreasing as `τ` decreases.
    #[serde(default)]
    pub require_monotone: bool,
}

/// Fourier coefficients and the critical-diffusivity bound of a kernel.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumExperiment {
    pub grid: GridSpec,
    pub kernel: ProfileSpec,
}

/// Trajectory-inference chain flow.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajExperiment {
    /// Problem file; mutually exclusive with `synthetic`.
    #[serde(default)]
    pub problem: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    /// Overrides the problem's variant (`standard` or `debiased`).
    #[serde(default)]
    pub variant: Option<String>,
    pub t_end: f64,
    #[serde(default = "default_record")]
    pub record_every: f64,
    #[serde(default = "default_safety")]
    pub dt_safety: f64,
    #[serde(default)]
    pub sinkhorn: Option<SinkhornSpec>,
    /// Compute the chain fixed point and record gaps.
    #[serde(default)]
    pub reference: bool,
}

/// Ground truth of a generated problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub grid: GridSpec,
    pub potential: ProfileSpec,
    pub tau_true: f64,
    pub intervals: usize,
    pub samples: usize,
    pub sigma: f64,
    pub tau: f64,
    #[serde(default = "default_sde_dt")]
    pub dt: f64,
}

/// Interaction flow with a certificate and a fitted decay.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesExperiment {
    pub grid: GridSpec,
    pub kernel: ProfileSpec,
    pub tau: f64,
    pub initial: DensitySpec,
    pub t_end: f64,
    #[serde(default = "default_rates_record")]
    pub record_every: f64,
    /// Smallest gap kept in the fit window.
    #[serde(default = "default_floor")]
    pub gap_floor: f64,
    /// Assert the measured decay meets the certificate.
    #[serde(default = "yes")]
    pub assert_certificate: bool,
    #[serde(default)]
    pub min_r2: Option<f64>,
}

fn default_rates_record() -> f64 {
    2e-3
}

fn default_floor() -> f64 {
    1e-11
}

fn yes() -> bool {
    true
}

/// One closed-form evaluator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "evaluator", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundsExperiment {
    TorusEnvelope { l: f64, tau: f64, d: usize },
    CompactRates { l: f64, tau: f64, tau_c: f64, d: usize },
    TorusKernel { mbar: f64, d: usize },
    KernelRd { mbar: f64, d: usize, t: f64, x: Vec<f64>, y: Vec<f64> },
    ConfinedKernel { m: f64, d: usize, t: f64, x: Vec<f64>, y: Vec<f64> },
    GaussianSandwich { epsilon: f64, m_star: f64, m: f64 },
    NoncompactBurnIn { alpha: f64, m0: f64, tau: f64, kappa: f64 },
    VarianceChange { sigma1: f64, sigma2: f64, p: f64, d: usize },
    PolyConstant { sigma1: f64, sigma2: f64, d: usize },
}

fn open(base: &Path, path: &Path) -> Result<BufReader<File>, LabError> {
    let p = resolve(base, path);
    File::open(&p)
        .map(BufReader::new)
        .map_err(|e| LabError::Config(format!("cannot open {}: {e}", p.display())))
}

/// `path` relative to `base` unless absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl ExperimentConfig {
    /// Files the experiment reads.
    pub fn files(&self) -> Vec<&Path> {
        match &self.kind {
            Experiment::Flow(e) => {
                let mut v = e.objective.files();
                v.extend(e.initial.files());
                v
            }
            Experiment::MflParticles(e) => e.objective.files(),
            Experiment::Afi(e) => e.density.files(),
            Experiment::Spectrum(e) => e.kernel.files(),
            Experiment::Traj(e) => {
                let mut v: Vec<&Path> = e.problem.iter().map(|p| p.as_path()).collect();
                if let Some(s) = &e.synthetic {
                    v.extend(s.potential.files());
                }
                v
            }
            Experiment::Rates(e) => {
                let mut v = e.kernel.files();
                v.extend(e.initial.files());
                v
            }
            _ => Vec::new(),
        }
    }
}

impl ConfigFile {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ConfigFile = toml::from_str(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(cfg)
    }

    /// Checks names, referenced files and experiment-level preconditions.
    pub fn validate(&self, base: &Path) -> Result<(), LabError> {
        if self.experiments.is_empty() {
            return Err(LabError::Config("no [[experiment]] tables".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for e in &self.experiments {
            let ok_name = !e.name.is_empty() && e.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok_name {
                return Err(LabError::Config(format!("experiment name `{}` must be nonempty [A-Za-z0-9_-]", e.name)));
            }
            if !names.insert(e.name.as_str()) {
                return Err(LabError::Config(format!("duplicate experiment name `{}`", e.name)));
            }
            for f in e.files() {
                let p = resolve(base, f);
                if !p.is_file() {
                    return Err(LabError::Config(format!("experiment `{}`: file {} does not exist", e.name, p.display())));
                }
            }
            if let Experiment::Traj(t) = &e.kind {
                if t.problem.is_some() == t.synthetic.is_some() {
                    return Err(LabError::Config(format!("experiment `{}`: set exactly one of `problem` and `synthetic`", e.name)));
                }
            }
            if let Experiment::Flow(f) = &e.kind {
                if f.max_final_gap.is_some() && !f.reference {
                    return Err(LabError::Config(format!("experiment `{}`: max_final_gap needs reference = true", e.name)));
                }
            }
        }
        Ok(())
    }
}

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Evolve,
    Holonomy,
    BerrySweep,
    StokesCheck,
    Superadiabatic,
    Dykhne,
    Oscillator,
    MagnusBench,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Holonomy => "holonomy",
            Command::BerrySweep => "berry-sweep",
            Command::StokesCheck => "stokes-check",
            Command::Superadiabatic => "superadiabatic",
            Command::Dykhne => "dykhne",
            Command::Oscillator => "oscillator",
            Command::MagnusBench => "magnus-bench",
        }
    }

    /// Name of the config table holding this command's parameters.
    pub fn section(self) -> &'static str {
        match self {
            Command::BerrySweep => "berry_sweep",
            Command::StokesCheck => "stokes_check",
            Command::MagnusBench => "magnus_bench",
            other => other.name(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvolveModel {
    #[default]
    LandauZener,
    TwoLevel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveParams {
    pub model: EvolveModel,
    /// Gap parameter of the Landau-Zener model.
    pub delta: f64,
    pub epsilon: f64,
    pub tau0: f64,
    pub tau1: f64,
    /// Output rows, including both ends.
    pub samples: usize,
    /// Bound on spectral radius × dτ / ε per Gauss-Magnus factor.
    pub max_step_norm: f64,
}

impl Default for EvolveParams {
    fn default() -> Self {
        Self { model: EvolveModel::LandauZener, delta: 1.0, epsilon: 0.2, tau0: -10.0, tau1: 10.0, samples: 101, max_step_norm: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HolonomyParams {
    /// Polar angle of the latitude loop of the spin-½ field.
    pub theta: f64,
    pub steps: usize,
    /// Cells per direction of the spherical cap for the surface value.
    pub surface_cells: usize,
}

impl Default for HolonomyParams {
    fn default() -> Self {
        Self { theta: PI / 3.0, steps: 256, surface_cells: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BerrySweepParams {
    pub thetas: Vec<f64>,
    pub steps: usize,
}

impl Default for BerrySweepParams {
    fn default() -> Self {
        Self { thetas: vec![PI / 6.0, PI / 4.0, PI / 3.0, PI / 2.0], steps: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StokesParams {
    pub xi: [f64; 2],
    pub eta: [f64; 2],
    pub grids: Vec<usize>,
    /// Boundary samples per edge for the line holonomy.
    pub loop_steps: usize,
    pub fd_step: f64,
}

impl Default for StokesParams {
    fn default() -> Self {
        Self { xi: [-0.5, 0.7], eta: [-0.4, 0.6], grids: vec![16, 32, 64], loop_steps: 256, fd_step: 1e-4 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    #[default]
    TExponential,
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuperadiabaticParams {
    pub epsilons: Vec<f64>,
    pub orders: Vec<usize>,
    pub form: Form,
}

impl Default for SuperadiabaticParams {
    fn default() -> Self {
        Self { epsilons: vec![0.1, 0.05, 0.025], orders: vec![0, 1, 2], form: Form::TExponential }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DykhneParams {
    pub delta: f64,
    pub epsilons: Vec<f64>,
    pub span: f64,
    /// Also evaluate the residue factor around the complex degeneracy.
    pub residue: bool,
}

impl Default for DykhneParams {
    fn default() -> Self {
        Self { delta: 1.0, epsilons: vec![0.2], span: 20.0, residue: false }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// `ω = ω0 + rate·X`.
    #[default]
    Linear,
    /// `ω = ω0·exp(rate·X)`.
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscillatorParams {
    pub dim: usize,
    pub mass: f64,
    pub energy: f64,
    pub profile: Profile,
    pub omega0: f64,
    pub rate: f64,
    /// Heavy potential `V_I = ½ k X²`.
    pub stiffness: f64,
    pub x0: f64,
    pub velocity: f64,
    pub duration: f64,
    pub samples: usize,
    pub magnus_order: usize,
    /// Modes reported, counted from the ground state.
    pub modes: usize,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        Self {
            dim: 40,
            mass: 1.0,
            energy: 3.0,
            profile: Profile::Linear,
            omega0: 1.0,
            rate: 0.2,
            stiffness: 0.0,
            x0: 0.0,
            velocity: 0.5,
            duration: 2.0,
            samples: 801,
            magnus_order: 2,
            modes: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchModel {
    /// A fixed anti-Hermitian generator.
    Constant,
    /// `−(i/ε) H(τ)` for the gapped two-level model on `[0, 1]`.
    #[default]
    TwoLevel,
    /// A seeded random 4×4 anti-Hermitian field on `[0, 1]`.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Strict,
    Dyson,
    Magnus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MagnusBenchParams {
    pub model: BenchModel,
    pub epsilon: f64,
    pub steps: Vec<usize>,
    pub methods: Vec<Method>,
    /// Adds a wall-clock column; runs are then no longer byte-reproducible.
    pub timing: bool,
}

impl Default for MagnusBenchParams {
    fn default() -> Self {
        Self {
            model: BenchModel::TwoLevel,
            epsilon: 0.1,
            steps: vec![8, 16, 32, 64, 128],
            methods: vec![Method::Strict, Method::Dyson, Method::Magnus],
            timing: false,
        }
    }
}

/// The full, resolved configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evolve: Option<EvolveParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holonomy: Option<HolonomyParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub berry_sweep: Option<BerrySweepParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stokes_check: Option<StokesParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub superadiabatic: Option<SuperadiabaticParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dykhne: Option<DykhneParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oscillator: Option<OscillatorParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub magnus_bench: Option<MagnusBenchParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted key path, or the file for read and syntax errors.
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at {}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(field: impl Into<String>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { field: field.into(), message: message.into() })
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        err(field, format!("must be positive and finite, got {v}"))
    }
}

fn finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        err(field, format!("must be finite, got {v}"))
    }
}

fn at_least(field: &str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        err(field, format!("must be at least {min}, got {v}"))
    }
}

fn non_empty<T>(field: &str, v: &[T]) -> Result<(), ConfigError> {
    if v.is_empty() {
        err(field, "must not be empty")
    } else {
        Ok(())
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let field = match e.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                }
                None => "config".into(),
            };
            ConfigError { field, message: e.message().trim().to_string() }
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError { field: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    fn sections(&self) -> [(Command, bool); 8] {
        [
            (Command::Evolve, self.evolve.is_some()),
            (Command::Holonomy, self.holonomy.is_some()),
            (Command::BerrySweep, self.berry_sweep.is_some()),
            (Command::StokesCheck, self.stokes_check.is_some()),
            (Command::Superadiabatic, self.superadiabatic.is_some()),
            (Command::Dykhne, self.dykhne.is_some()),
            (Command::Oscillator, self.oscillator.is_some()),
            (Command::MagnusBench, self.magnus_bench.is_some()),
        ]
    }

    /// Fixes the command and output path, fills the command's parameter
    /// table with defaults and validates every value.
    pub fn resolve(mut self, command: Command, out: Option<&Path>) -> Result<Self, ConfigError> {
        if let Some(c) = self.command {
            if c != command {
                return err("command", format!("config is for `{}`, but `{}` was requested", c.name(), command.name()));
            }
        }
        for (c, present) in self.sections() {
            if present && c != command {
                return err(c.section(), format!("section does not apply to `{}`", command.name()));
            }
        }
        self.command = Some(command);
        if let Some(p) = out {
            self.output.path = Some(p.display().to_string());
        }
        match self.output.path.as_deref() {
            None | Some("") => return err("output.path", "no output path (set output.path or pass --out)"),
            Some(_) => {}
        }
        match command {
            Command::Evolve => validate_evolve(self.evolve.get_or_insert_with(Default::default))?,
            Command::Holonomy => validate_holonomy(self.holonomy.get_or_insert_with(Default::default))?,
            Command::BerrySweep => validate_berry(self.berry_sweep.get_or_insert_with(Default::default))?,
            Command::StokesCheck => validate_stokes(self.stokes_check.get_or_insert_with(Default::default))?,
            Command::Superadiabatic => validate_superadiabatic(self.superadiabatic.get_or_insert_with(Default::default))?,
            Command::Dykhne => validate_dykhne(self.dykhne.get_or_insert_with(Default::default))?,
            Command::Oscillator => validate_oscillator(self.oscillator.get_or_insert_with(Default::default))?,
            Command::MagnusBench => validate_bench(self.magnus_bench.get_or_insert_with(Default::default))?,
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn validate_evolve(p: &EvolveParams) -> Result<(), ConfigError> {
    finite("evolve.delta", p.delta)?;
    positive("evolve.epsilon", p.epsilon)?;
    finite("evolve.tau0", p.tau0)?;
    finite("evolve.tau1", p.tau1)?;
    if p.tau1 <= p.tau0 {
        return err("evolve.tau1", "must exceed tau0");
    }
    at_least("evolve.samples", p.samples, 2)?;
    positive("evolve.max_step_norm", p.max_step_norm)?;
    if p.max_step_norm > 0.5 {
        return err("evolve.max_step_norm", "must not exceed 0.5");
    }
    if p.model == EvolveModel::LandauZener && p.delta == 0.0 {
        return err("evolve.delta", "must be nonzero (the levels cross at Δ = 0)");
    }
    Ok(())
}

fn polar_angle(field: &str, theta: f64) -> Result<(), ConfigError> {
    if theta > 0.0 && theta < PI {
        Ok(())
    } else {
        err(field, format!("must lie strictly between 0 and π, got {theta}"))
    }
}

fn validate_holonomy(p: &HolonomyParams) -> Result<(), ConfigError> {
    polar_angle("holonomy.theta", p.theta)?;
    at_least("holonomy.steps", p.steps, 16)?;
    at_least("holonomy.surface_cells", p.surface_cells, 2)
}

fn validate_berry(p: &BerrySweepParams) -> Result<(), ConfigError> {
    non_empty("berry_sweep.thetas", &p.thetas)?;
    for (k, &t) in p.thetas.iter().enumerate() {
        polar_angle(&format!("berry_sweep.thetas[{k}]"), t)?;
    }
    at_least("berry_sweep.steps", p.steps, 16)
}

fn validate_stokes(p: &StokesParams) -> Result<(), ConfigError> {
    for (name, [a, b]) in [("stokes_check.xi", p.xi), ("stokes_check.eta", p.eta)] {
        finite(name, a)?;
        finite(name, b)?;
        if b <= a {
            return err(name, "upper bound must exceed lower bound");
        }
    }
    non_empty("stokes_check.grids", &p.grids)?;
    for (k, &g) in p.grids.iter().enumerate() {
        at_least(&format!("stokes_check.grids[{k}]"), g, 2)?;
    }
    at_least("stokes_check.loop_steps", p.loop_steps, 1)?;
    positive("stokes_check.fd_step", p.fd_step)
}

fn validate_superadiabatic(p: &SuperadiabaticParams) -> Result<(), ConfigError> {
    non_empty("superadiabatic.epsilons", &p.epsilons)?;
    for (k, &e) in p.epsilons.iter().enumerate() {
        positive(&format!("superadiabatic.epsilons[{k}]"), e)?;
    }
    non_empty("superadiabatic.orders", &p.orders)?;
    if p.form == Form::Exponential {
        if let Some(&n) = p.orders.iter().find(|&&n| n > 3) {
            return err("superadiabatic.orders", format!("the exponential form supports orders up to 3, got {n}"));
        }
    }
    Ok(())
}

fn validate_dykhne(p: &DykhneParams) -> Result<(), ConfigError> {
    positive("dykhne.delta", p.delta)?;
    non_empty("dykhne.epsilons", &p.epsilons)?;
    for (k, &e) in p.epsilons.iter().enumerate() {
        positive(&format!("dykhne.epsilons[{k}]"), e)?;
    }
    if !(p.span >= 10.0 * p.delta) {
        return err("dykhne.span", format!("must be at least 10·delta = {}", 10.0 * p.delta));
    }
    Ok(())
}

fn validate_oscillator(p: &OscillatorParams) -> Result<(), ConfigError> {
    at_least("oscillator.dim", p.dim, prodint::oscillator_model::MIN_DIM)?;
    positive("oscillator.mass", p.mass)?;
    finite("oscillator.energy", p.energy)?;
    positive("oscillator.omega0", p.omega0)?;
    finite("oscillator.rate", p.rate)?;
    finite("oscillator.stiffness", p.stiffness)?;
    finite("oscillator.x0", p.x0)?;
    finite("oscillator.velocity", p.velocity)?;
    positive("oscillator.duration", p.duration)?;
    at_least("oscillator.samples", p.samples, 3)?;
    if !(1..=3).contains(&p.magnus_order) {
        return err("oscillator.magnus_order", format!("must be 1, 2 or 3, got {}", p.magnus_order));
    }
    at_least("oscillator.modes", p.modes, 1)?;
    if p.modes > p.dim {
        return err("oscillator.modes", format!("must not exceed dim = {}", p.dim));
    }
    if p.profile == Profile::Linear {
        let x1 = p.x0 + p.velocity * p.duration;
        if p.omega0 + p.rate * p.x0.min(x1) <= 0.0 || p.omega0 + p.rate * p.x0.max(x1) <= 0.0 {
            return err("oscillator.rate", "frequency must stay positive along the trajectory");
        }
    }
    Ok(())
}

fn validate_bench(p: &MagnusBenchParams) -> Result<(), ConfigError> {
    positive("magnus_bench.epsilon", p.epsilon)?;
    non_empty("magnus_bench.steps", &p.steps)?;
    for (k, &s) in p.steps.iter().enumerate() {
        at_least(&format!("magnus_bench.steps[{k}]"), s, 1)?;
    }
    non_empty("magnus_bench.methods", &p.methods)
}

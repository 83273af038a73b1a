//! Scenario files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vapor_kinetics::ode::StepControl;
use vapor_kinetics::refpde::{Interaction, PdeConfig};
use vapor_kinetics::relax::RelaxParams;

use crate::CliError;

/// One scenario: model parameters plus the settings of each command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub params: RelaxParams,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub ee: EeSection,
    #[serde(default)]
    pub pde: Option<PdeSection>,
    #[serde(default)]
    pub compare: Option<CompareSection>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub figures: bool,
}

fn yes() -> bool {
    true
}

/// Sampling of the closed-form and moment trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub horizon: f64,
    pub samples: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            samples: 1000,
        }
    }
}

/// Step control of the moment integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EeSection {
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_refinements: u32,
}

impl Default for EeSection {
    fn default() -> Self {
        let c = StepControl::default();
        Self {
            rel_tol: c.rel_tol,
            initial_step: c.initial_step,
            max_refinements: c.max_refinements,
        }
    }
}

impl EeSection {
    pub fn control(&self) -> StepControl {
        StepControl {
            rel_tol: self.rel_tol,
            initial_step: self.initial_step,
            max_refinements: self.max_refinements,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialField {
    /// The Gaussian packet of `params`.
    Gaussian,
    Zero,
}

/// Reference-solver settings. `d`, `kappa` and the profiles come from
/// `params`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    pub dt: f64,
    pub n_steps: usize,
    pub grid: usize,
    pub length: f64,
    pub snapshot_stride: usize,
    /// Nonlocal with `params.rho` when absent.
    #[serde(default)]
    pub interaction: Option<Interaction>,
    #[serde(default = "gaussian")]
    pub initial: InitialField,
    #[serde(default = "default_grid_cap")]
    pub max_grid: usize,
}

fn gaussian() -> InitialField {
    InitialField::Gaussian
}

fn default_grid_cap() -> usize {
    1024
}

impl PdeSection {
    pub fn solver_config(&self, params: &RelaxParams, n_steps: usize) -> PdeConfig {
        PdeConfig {
            dt: self.dt,
            n_steps,
            d: params.d,
            kappa: params.kappa,
            interaction: self.interaction.unwrap_or(Interaction::Nonlocal { rho: params.rho }),
            profiles: params.profiles,
            snapshot_stride: self.snapshot_stride,
        }
    }
}

/// Semiclassical-versus-reference comparison over several `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub d_values: Vec<f64>,
    #[serde(default = "one")]
    pub t: f64,
    #[serde(default = "one")]
    pub min_order: f64,
    /// Gate on the count error at the smallest `D`.
    #[serde(default = "five_percent")]
    pub max_count_error: f64,
}

fn one() -> f64 {
    1.0
}

fn five_percent() -> f64 {
    0.05
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Re-checks every parameter invariant the solvers rely on.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        // κ = 0 is the linear limit; everything else is checked as usual
        let mut probe = self.params;
        if probe.kappa == 0.0 {
            probe.kappa = 1.0;
        }
        probe.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let t = &self.time;
        if !(t.horizon.is_finite() && t.horizon > 0.0) || t.samples < 2 {
            return bad("time.horizon must be positive and time.samples at least 2".into());
        }
        let ee = &self.ee;
        if !(ee.rel_tol > 0.0 && ee.initial_step > 0.0) {
            return bad("ee.rel_tol and ee.initial_step must be positive".into());
        }
        if let Some(pde) = &self.pde {
            if pde.grid > pde.max_grid {
                return bad(format!("pde.grid = {} exceeds pde.max_grid = {}", pde.grid, pde.max_grid));
            }
            if !(pde.length.is_finite() && pde.length > 0.0) {
                return bad("pde.length must be positive".into());
            }
            pde.solver_config(&self.params, pde.n_steps.max(1))
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
            if pde.n_steps == 0 {
                return bad("pde.n_steps must be at least 1".into());
            }
        }
        if let Some(c) = &self.compare {
            if c.d_values.len() < 2 {
                return bad("compare.d_values needs at least two values".into());
            }
            if c.d_values.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                return bad("compare.d_values must be positive".into());
            }
            if !(c.t.is_finite() && c.t > 0.0) {
                return bad("compare.t must be positive".into());
            }
        }
        Ok(())
    }

    pub fn pde(&self) -> Result<&PdeSection, CliError> {
        self.pde
            .as_ref()
            .ok_or_else(|| CliError::Config("the scenario has no pde section".into()))
    }
}

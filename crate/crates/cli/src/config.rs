//! Strict experiment configuration: JSON with unknown keys rejected, defaults
//! filled, and the resource descriptor validated nonnegative on the grid.

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use dispersal_core::{build_grid, Field, Grid};

use crate::expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Eigen,
    Steady,
    Mismatch,
    Rescaled,
    Branching,
    Invasion,
    Comparison,
    Sharmonic,
    Impossibility,
    Acceptance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bounds {
    Interval([f64; 2]),
    Box([[f64; 2]; 2]),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds::Interval([-1.0, 1.0])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub bounds: Bounds,
    #[serde(default = "default_nodes")]
    pub n: usize,
}

fn default_dim() -> usize {
    1
}

fn default_nodes() -> usize {
    256
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dim: 1,
            bounds: Bounds::default(),
            n: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum SigmaSpec {
    Constant {
        value: f64,
    },
    Bump {
        tau: f64,
        x0: Vec<f64>,
        r: f64,
    },
    Expr {
        formula: String,
    },
}

impl Default for SigmaSpec {
    fn default() -> Self {
        SigmaSpec::Constant { value: 0.0 }
    }
}

impl SigmaSpec {
    pub fn describe(&self) -> String {
        match self {
            SigmaSpec::Constant { value } => format!("constant {value}"),
            SigmaSpec::Bump { tau, x0, r } => format!("bump tau={tau} x0={x0:?} r={r}"),
            SigmaSpec::Expr { formula } => formula.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Steady-state residual scale factor.
    #[serde(default = "default_residual_tol")]
    pub residual: f64,
    /// Bisection width relative to `lambda_1`.
    #[serde(default = "default_bisection_tol")]
    pub bisection: f64,
}

fn default_residual_tol() -> f64 {
    1e-8
}

fn default_bisection_tol() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: default_residual_tol(),
            bisection: default_bisection_tol(),
        }
    }
}

/// Full experiment description as read from JSON; unknown keys are errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_s")]
    pub s: f64,
    /// Defaults to `(s + 1) / 2`.
    #[serde(default)]
    pub s_prime: Option<f64>,
    #[serde(default)]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output")]
    pub output_dir: String,
    #[serde(default)]
    pub seed: u64,
    /// Rescaled construction: intensity as a multiple of the threshold.
    #[serde(default)]
    pub lambda_factor: Option<f64>,
    /// Ball center for bump/branching/invasion experiments.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Ball radius; defaults to a dyadic fraction of the width.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Explicit sweep intensities (descending toward the threshold).
    #[serde(default)]
    pub tau_list: Option<Vec<f64>>,
    /// Invader amplitude.
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Collar radius for the exterior-data fit.
    #[serde(default)]
    pub r_outer: Option<f64>,
    /// Contrast height for the impossibility control.
    #[serde(default)]
    pub contrast: Option<f64>,
    /// Acceptance smoke mode.
    #[serde(default)]
    pub fast: Option<bool>,
}

fn default_s() -> f64 {
    0.5
}

fn default_output() -> String {
    "out".to_string()
}

impl ExperimentConfig {
    pub fn s_prime(&self) -> f64 {
        self.s_prime.unwrap_or((self.s + 1.0) / 2.0)
    }

    pub fn build_grid(&self) -> anyhow::Result<Grid> {
        let bounds: Vec<(f64, f64)> = match (&self.grid.bounds, self.grid.dim) {
            (Bounds::Interval(b), 1) => vec![(b[0], b[1])],
            (Bounds::Box(b), 2) => vec![(b[0][0], b[0][1]), (b[1][0], b[1][1])],
            (Bounds::Interval(b), 2) => vec![(b[0], b[1]), (b[0], b[1])],
            (_, d) => bail!("unsupported grid dimension {d}"),
        };
        build_grid(&bounds, self.grid.n).map_err(|e| anyhow!("{e}"))
    }

    /// Evaluates the resource on the grid, rejecting negative values with
    /// the offending node coordinate.
    pub fn build_sigma(&self, grid: &Grid) -> anyhow::Result<Field> {
        let field = match &self.sigma {
            SigmaSpec::Constant { value } => Field::constant(grid, *value),
            SigmaSpec::Bump { tau, x0, r } => {
                let center = [
                    *x0.first().unwrap_or(&0.0),
                    *x0.get(1).unwrap_or(&0.0),
                ];
                dispersal_core::scenarios::bump_resource(grid, *tau, center, *r)
                    .map_err(|e| anyhow!("{e}"))?
            }
            SigmaSpec::Expr { formula } => {
                let parsed = expr::parse(formula)
                    .map_err(|e| anyhow!("sigma expression: {e}"))?;
                Field::from_fn(grid, |c| parsed.eval(c[0], c[1]))
            }
        };
        for (i, &v) in field.values().iter().enumerate() {
            if v < 0.0 {
                bail!(
                    "sigma is negative ({v}) at node {:?}",
                    grid.coord(i)
                );
            }
            if !v.is_finite() {
                bail!("sigma is not finite at node {:?}", grid.coord(i));
            }
        }
        Ok(field)
    }
}

/// Parses and validates a config: strict JSON, then grid and resource checks.
pub fn parse_config(text: &str) -> anyhow::Result<ExperimentConfig> {
    let config: ExperimentConfig =
        serde_json::from_str(text).context("config does not match the schema")?;
    if config.s <= 0.0 || config.s > 1.0 {
        bail!("s = {} must lie in (0, 1]", config.s);
    }
    if config.tolerances.residual <= 0.0 || config.tolerances.bisection <= 0.0 {
        bail!("tolerances must be positive");
    }
    let grid = config.build_grid()?;
    config.build_sigma(&grid)?;
    Ok(config)
}

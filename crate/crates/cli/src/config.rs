//! Experiment configuration documents and the checks run before any heavy
//! computation.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use oscint_core::helmholtz::ObservationBox;
use oscint_core::kernels::{CutoffSpec, KernelSpec};
use oscint_core::normlab::{ExponentParams, Regime, WitnessKind};
use oscint_core::operators::{
    phase_lipschitz, Geometry, Grid, Localization, OperatorSpec, ProductCutoff,
};
use oscint_core::phase::PhaseSpec;
use serde::{Deserialize, Serialize};

use crate::RunError;

pub const SCHEMA: &str = include_str!("../schema/experiment.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Norm,
    Sweep,
    Witness,
    Maximal,
    Helmholtz,
    Selfcheck,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Norm => "norm",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Witness => "witness",
            ExperimentKind::Maximal => "maximal",
            ExperimentKind::Helmholtz => "helmholtz",
            ExperimentKind::Selfcheck => "selfcheck",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub lambda_grid: Option<LambdaGrid>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub operator: Option<OperatorBlock>,
    #[serde(default)]
    pub prediction: Option<PredictionBlock>,
    #[serde(default)]
    pub witness: Option<WitnessBlock>,
    #[serde(default)]
    pub maximal: Option<MaximalBlock>,
    #[serde(default)]
    pub helmholtz: Option<HelmholtzBlock>,
    #[serde(default)]
    pub selfcheck: Option<SelfcheckBlock>,
}

/// Either an explicit increasing list or `start * ratio^i`, `i < count`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaGrid {
    List(Vec<f64>),
    Geometric {
        start: f64,
        ratio: f64,
        count: usize,
    },
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            LambdaGrid::List(v) => v.clone(),
            LambdaGrid::Geometric {
                start,
                ratio,
                count,
            } => (0..*count).map(|i| start * ratio.powi(i as i32)).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_power_tol")]
    pub power_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Allowed distance between fitted and target slope.
    #[serde(default = "default_slope_tol")]
    pub slope: f64,
}

fn default_power_tol() -> f64 {
    1e-4
}
fn default_max_iter() -> usize {
    200
}
fn default_slope_tol() -> f64 {
    0.05
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            power_tol: default_power_tol(),
            max_iter: default_max_iter(),
            slope: default_slope_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// How many points per axis each `lambda` gets. With `points_per_axis` the
/// count is fixed; otherwise it is the smallest count with
/// `lambda * h * lip <= fraction * pi / 2` and, for localized operators,
/// `cells_per_window` cells across the window radius `2 lambda^{-beta}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRule {
    #[serde(default)]
    pub points_per_axis: Option<usize>,
    #[serde(default = "one")]
    pub fraction: f64,
    #[serde(default)]
    pub cells_per_window: Option<f64>,
    #[serde(default = "default_min_points")]
    pub min_points: usize,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

fn one() -> f64 {
    1.0
}
fn default_min_points() -> usize {
    8
}
fn default_max_points() -> usize {
    2048
}

impl Default for GridRule {
    fn default() -> Self {
        Self {
            points_per_axis: None,
            fraction: 1.0,
            cells_per_window: None,
            min_points: default_min_points(),
            max_points: default_max_points(),
        }
    }
}

/// Operator without its frequency. The source grid uses midpoint nodes and
/// the target grid the half-cell offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorBlock {
    pub kernel: KernelSpec,
    pub phase: PhaseSpec,
    pub geometry: Geometry,
    #[serde(default = "ProductCutoff::unit")]
    pub cutoff0: ProductCutoff,
    #[serde(default)]
    pub localization: Localization,
    pub source: BoxSpec,
    pub target: BoxSpec,
    #[serde(default)]
    pub grid: GridRule,
    /// Heights at which a surface operator is evaluated; overrides the
    /// geometry's own `x_last`.
    #[serde(default)]
    pub x_last_values: Option<Vec<f64>>,
}

impl OperatorBlock {
    /// Variants of the geometry, one per `x_last` value, with labels.
    pub fn geometries(&self) -> Result<Vec<(String, Geometry)>, RunError> {
        match (&self.geometry, &self.x_last_values) {
            (Geometry::Surface { surface, .. }, Some(values)) => {
                if values.is_empty() {
                    return Err(RunError::config("operator.x_last_values must not be empty"));
                }
                Ok(values
                    .iter()
                    .map(|&x_last| {
                        (
                            format!("x_last={x_last}"),
                            Geometry::Surface {
                                surface: surface.clone(),
                                x_last,
                            },
                        )
                    })
                    .collect())
            }
            (_, Some(_)) => Err(RunError::config(
                "operator.x_last_values is only meaningful for a surface geometry",
            )),
            (g, None) => Ok(vec![(String::new(), g.clone())]),
        }
    }

    /// Operator spec at `lambda` with grids from the rule.
    pub fn spec_at(&self, geometry: &Geometry, lambda: f64) -> Result<OperatorSpec, RunError> {
        let probe = |n: usize| -> Result<OperatorSpec, RunError> {
            let source = Grid::new(self.source.lo.clone(), self.source.hi.clone(), n, false)
                .map_err(|e| RunError::config(format!("operator.source: {e}")))?;
            let target = Grid::new(self.target.lo.clone(), self.target.hi.clone(), n, true)
                .map_err(|e| RunError::config(format!("operator.target: {e}")))?;
            Ok(OperatorSpec {
                source,
                target,
                kernel: self.kernel.clone(),
                phase: self.phase,
                cutoff0: self.cutoff0.clone(),
                geometry: geometry.clone(),
                localization: self.localization,
                lambda,
            })
        };
        let rule = &self.grid;
        let n = match rule.points_per_axis {
            Some(n) => n,
            None => {
                if !(rule.fraction > 0.0 && rule.fraction <= 1.0) {
                    return Err(RunError::config(
                        "operator.grid.fraction must lie in (0, 1]",
                    ));
                }
                let base = probe(1)?;
                let width = base
                    .source
                    .max_cell_width()
                    .max(base.target.max_cell_width());
                let lip = phase_lipschitz(&base);
                let mut h = rule.fraction * FRAC_PI_2 / (lambda * lip).max(1e-300);
                if let (Some(c), Localization::Near { beta } | Localization::Far { beta }) =
                    (rule.cells_per_window, self.localization)
                {
                    if !(c > 0.0) {
                        return Err(RunError::config(
                            "operator.grid.cells_per_window must be positive",
                        ));
                    }
                    h = h.min(2.0 * lambda.powf(-beta) / c);
                }
                // Slack keeps the rule satisfied after rounding.
                let n = (width / h * (1.0 + 1e-9)).ceil() as usize;
                n.max(rule.min_points)
            }
        };
        if n > rule.max_points {
            return Err(RunError::config(format!(
                "operator.grid: lambda = {lambda} needs {n} points per axis, above max_points = {}",
                rule.max_points
            )));
        }
        probe(n)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionBlock {
    pub regime: Regime,
    pub n: usize,
    pub m: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    /// Slope the fit is judged against; defaults to the predicted exponent.
    #[serde(default)]
    pub target_slope: Option<f64>,
}

impl PredictionBlock {
    pub fn params(&self) -> ExponentParams {
        ExponentParams {
            n: self.n,
            m: self.m,
            gamma: self.gamma,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessBlock {
    pub kind: WitnessKind,
    pub kernel: KernelSpec,
    pub phase: PhaseSpec,
    pub x0_prime: Vec<f64>,
    #[serde(default = "default_c0")]
    pub c0: f64,
    /// Further `c0` values reported alongside the calibrated one.
    #[serde(default)]
    pub c0_sweep: Vec<f64>,
    /// Defaults to `1/2` for the linear witnesses and `1/gamma` otherwise.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_cells_per_radius")]
    pub cells_per_radius: usize,
    #[serde(default = "default_separation")]
    pub separation_factor: f64,
    /// Bound on max/min of the compensated ratio at the calibrated `c0`.
    #[serde(default = "default_witness_spread")]
    pub max_spread: f64,
}

fn default_c0() -> f64 {
    0.05
}
fn default_cells_per_radius() -> usize {
    8
}
fn default_separation() -> f64 {
    100.0
}
fn default_witness_spread() -> f64 {
    2.0
}

impl WitnessBlock {
    pub fn beta(&self) -> f64 {
        match (self.beta, self.phase) {
            (Some(b), _) => b,
            (None, PhaseSpec::FractionalDistance { gamma }) => 1.0 / gamma,
            (None, PhaseSpec::Linear) => 0.5,
        }
    }

    pub fn c0_values(&self) -> Vec<f64> {
        let mut v = vec![self.c0];
        for &c in &self.c0_sweep {
            if !v.contains(&c) {
                v.push(c);
            }
        }
        v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaximalBlock {
    #[serde(default = "default_gamma_osc")]
    pub gamma_osc: f64,
    /// `K` in `eps_i = 2^{-i/4}`, `i = 0..=K`.
    #[serde(default = "default_levels")]
    pub eps_levels: usize,
    /// Finer `K` whose lower bounds are reported next to the main ones.
    #[serde(default)]
    pub sensitivity_levels: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_max_spread")]
    pub max_spread: f64,
    #[serde(default = "default_max_trend")]
    pub max_trend: f64,
}

fn default_gamma_osc() -> f64 {
    2.0
}
fn default_levels() -> usize {
    24
}
fn default_trials() -> usize {
    8
}
fn default_max_spread() -> f64 {
    3.0
}
fn default_max_trend() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HelmholtzBlock {
    pub normal: [f64; 3],
    pub density: CutoffSpec,
    /// Box in plane coordinates carrying the quadrature grid.
    pub plane_box: BoxSpec,
    pub plane_points: usize,
    pub domain: ObservationBox,
    #[serde(default = "default_box_points")]
    pub box_points: usize,
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// `h_fd = fd_factor / lambda`.
    #[serde(default = "default_fd_factor")]
    pub fd_factor: f64,
    #[serde(default = "default_helm_slope")]
    pub max_slope: f64,
    #[serde(default = "default_helm_residual")]
    pub max_residual: f64,
    #[serde(default = "default_rotation_samples")]
    pub rotation_samples: usize,
    #[serde(default = "default_rotation_tol")]
    pub rotation_tol: f64,
    /// A box meeting or touching the plane, whose norms are only reported.
    #[serde(default)]
    pub near_domain: Option<ObservationBox>,
}

fn default_box_points() -> usize {
    6
}
fn default_probes() -> usize {
    50
}
fn default_fd_factor() -> f64 {
    0.02
}
fn default_helm_slope() -> f64 {
    -0.9
}
fn default_helm_residual() -> f64 {
    1e-2
}
fn default_rotation_samples() -> usize {
    20
}
fn default_rotation_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfcheckBlock {
    #[serde(default = "default_samples")]
    pub sylvester_samples: usize,
    #[serde(default = "default_samples")]
    pub dyadic_samples: usize,
    #[serde(default = "default_partition_points")]
    pub partition_points: usize,
    #[serde(default = "default_pairs")]
    pub adjoint_pairs: usize,
}

fn default_samples() -> usize {
    1000
}
fn default_partition_points() -> usize {
    81
}
fn default_pairs() -> usize {
    20
}

impl Default for SelfcheckBlock {
    fn default() -> Self {
        Self {
            sylvester_samples: default_samples(),
            dyadic_samples: default_samples(),
            partition_points: default_partition_points(),
            adjoint_pairs: default_pairs(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and schema-checks a JSON document.
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| RunError::config(format!("not valid JSON: {e}")))?;
        let schema: serde_json::Value =
            serde_json::from_str(SCHEMA).expect("embedded schema parses");
        let validator = jsonschema::validator_for(&schema).expect("embedded schema compiles");
        let errors: Vec<String> = validator
            .iter_errors(&value)
            .map(|e| format!("{}: {}", e.instance_path, e))
            .collect();
        if !errors.is_empty() {
            return Err(RunError::config(format!(
                "schema violation: {}",
                errors.join("; ")
            )));
        }
        serde_json::from_value(value).map_err(|e| RunError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn id(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| self.experiment.as_str().to_string())
    }

    pub fn lambdas(&self) -> Result<Vec<f64>, RunError> {
        let values = self
            .lambda_grid
            .as_ref()
            .ok_or_else(|| RunError::config("lambda_grid is required"))?
            .values();
        if values.is_empty() {
            return Err(RunError::config("lambda_grid is empty"));
        }
        for (i, &l) in values.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(RunError::config(format!(
                    "lambda_grid[{i}] = {l} must be finite and positive"
                )));
            }
            if i > 0 && l <= values[i - 1] {
                return Err(RunError::config(format!(
                    "lambda_grid must be strictly increasing at index {i}"
                )));
            }
        }
        Ok(values)
    }

    pub fn operator(&self) -> Result<&OperatorBlock, RunError> {
        self.operator.as_ref().ok_or_else(|| {
            RunError::config(format!(
                "{} needs an operator block",
                self.experiment.as_str()
            ))
        })
    }

    pub fn prediction(&self) -> Result<&PredictionBlock, RunError> {
        self.prediction.as_ref().ok_or_else(|| {
            RunError::config(format!(
                "{} needs a prediction block",
                self.experiment.as_str()
            ))
        })
    }
}

//! Experiment configuration: JSON with a fixed schema, unknown keys
//! rejected, defaults materialized before echoing into the manifest.

use serde::{Deserialize, Serialize};

use conic_scatter_core::{
    BoundaryMetric64, PerturbationProfile64, RadialPotential64,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Flow,
    WaveOps,
    ScatterMap,
    Rates,
    Components,
    Transport,
    Smatrix,
    Wavefront,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ExperimentKind::Flow => "flow",
            ExperimentKind::WaveOps => "wave-ops",
            ExperimentKind::ScatterMap => "scatter-map",
            ExperimentKind::Rates => "rates",
            ExperimentKind::Components => "components",
            ExperimentKind::Transport => "transport",
            ExperimentKind::Smatrix => "smatrix",
            ExperimentKind::Wavefront => "wavefront",
        };
        f.write_str(name)
    }
}

/// Boundary metric descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ManifoldConfig {
    Circle { radius: f64 },
    CosineCircle { radius: f64, epsilon: f64 },
    TabulatedCircle { values: Vec<f64> },
    FlatTorus { radii: [f64; 2] },
}

impl ManifoldConfig {
    pub fn build(&self) -> CliResult<BoundaryMetric64> {
        let metric = match self {
            ManifoldConfig::Circle { radius } => BoundaryMetric64::circle(*radius),
            ManifoldConfig::CosineCircle { radius, epsilon } => {
                BoundaryMetric64::cosine_circle(*radius, *epsilon)
            }
            ManifoldConfig::TabulatedCircle { values } => {
                BoundaryMetric64::tabulated_circle(values)
            }
            ManifoldConfig::FlatTorus { radii } => BoundaryMetric64::flat_torus(radii[0], radii[1]),
        };
        metric.map_err(CliError::Core)
    }

    /// Circle radius, for the separable-model experiments.
    pub fn circle_radius(&self) -> CliResult<f64> {
        match self {
            ManifoldConfig::Circle { radius } => Ok(*radius),
            _ => Err(CliError::Usage(
                "this experiment requires a plain circle manifold".into(),
            )),
        }
    }
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        ManifoldConfig::Circle { radius: 1.0 }
    }
}

/// Flow-perturbation profile descriptor.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileConfig {
    #[default]
    Trivial,
    Smooth {
        mu: f64,
        c1: f64,
        c2: f64,
        c3: f64,
        cv: f64,
        #[serde(default)]
        e2: f64,
        #[serde(default)]
        e3: f64,
    },
    InverseSquare { c1: f64 },
}

impl ProfileConfig {
    pub fn build(&self) -> CliResult<PerturbationProfile64> {
        match self {
            ProfileConfig::Trivial => Ok(PerturbationProfile64::Trivial),
            ProfileConfig::Smooth {
                mu,
                c1,
                c2,
                c3,
                cv,
                e2,
                e3,
            } => PerturbationProfile64::smooth_modulated(*mu, *c1, *c2, *c3, *cv, *e2, *e3)
                .map_err(CliError::Core),
            ProfileConfig::InverseSquare { c1 } => {
                Ok(PerturbationProfile64::InverseSquare { c1: *c1 })
            }
        }
    }
}

/// Radial potential descriptor for the separable model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    #[default]
    Zero,
    Lorentzian { strength: f64 },
    PolyDecay { strength: f64, mu: f64 },
}

impl PotentialConfig {
    pub fn build(&self) -> RadialPotential64 {
        match self {
            PotentialConfig::Zero => RadialPotential64::Zero,
            PotentialConfig::Lorentzian { strength } => RadialPotential64::Lorentzian {
                strength: *strength,
            },
            PotentialConfig::PolyDecay { strength, mu } => RadialPotential64::PolyDecay {
                strength: *strength,
                mu: *mu,
            },
        }
    }
}

fn default_tol() -> f64 {
    1e-10
}
fn default_t_final() -> f64 {
    2e4
}
fn default_h_grid() -> Vec<f64> {
    (3..=9).map(|k| 2.0_f64.powi(-k)).collect()
}
fn default_m_max() -> i64 {
    200
}
fn default_grid_size() -> usize {
    4096
}
fn default_lambda() -> f64 {
    0.5
}
fn default_t_span() -> f64 {
    50.0
}
fn default_transport_steps() -> usize {
    8
}
fn default_batch() -> usize {
    20
}
fn default_phase_tol() -> f64 {
    1e-6
}

/// Numeric knobs; every field has a default that is echoed back into the
/// manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericConfig {
    /// Integrator tolerance for the flow experiments.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Wave-operator extraction horizon.
    #[serde(rename = "T", default = "default_t_final")]
    pub t_final: f64,
    /// Semiclassical scales for the rate harnesses.
    #[serde(default = "default_h_grid")]
    pub h_grid: Vec<f64>,
    /// Largest angular mode of the scattering matrix.
    #[serde(default = "default_m_max")]
    pub m_max: i64,
    /// Circle grid size for spectral experiments.
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    /// Energy of the scattering matrix.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Trajectory window for flow comparisons.
    #[serde(default = "default_t_span")]
    pub t_span: f64,
    /// Base resolution of the transport residual.
    #[serde(default = "default_transport_steps")]
    pub transport_steps: usize,
    /// Number of seeded test points per batch.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Requested accuracy of radial phase shifts.
    #[serde(default = "default_phase_tol")]
    pub phase_tol: f64,
}

impl Default for NumericConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

fn default_output() -> String {
    "out".into()
}
fn default_seed() -> u64 {
    7
}

/// Full experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub manifold: ManifoldConfig,
    #[serde(default)]
    pub profile: ProfileConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub numeric: NumericConfig,
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let n = &self.numeric;
        if !(n.tol > 0.0) || !(n.t_final >= 1e3) {
            return Err(CliError::Usage(
                "numeric.tol must be positive and numeric.T at least 1e3".into(),
            ));
        }
        if n.h_grid.len() < 2 || n.h_grid.iter().any(|h| !(*h > 0.0 && *h <= 1.0)) {
            return Err(CliError::Usage(
                "numeric.h_grid needs at least two values in (0, 1]".into(),
            ));
        }
        if n.grid_size < 16 || !n.grid_size.is_power_of_two() {
            return Err(CliError::Usage(
                "numeric.grid_size must be a power of two, at least 16".into(),
            ));
        }
        if n.m_max < 10 {
            return Err(CliError::Usage("numeric.m_max must be at least 10".into()));
        }
        if !(n.lambda > 0.0) {
            return Err(CliError::Usage("numeric.lambda must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_materializes_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "flow"}"#).unwrap();
        assert_eq!(cfg.numeric.tol, 1e-10);
        assert_eq!(cfg.numeric.h_grid.len(), 7);
        assert_eq!(cfg.output, "out");
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.manifold, ManifoldConfig::Circle { radius: 1.0 });
    }

    #[test]
    fn unknown_keys_are_rejected_with_field_name() {
        let err = ExperimentConfig::from_json(r#"{"experiment": "flow", "bogus": 1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");

        let err = ExperimentConfig::from_json(
            r#"{"experiment": "flow", "numeric": {"tol": 1e-10, "oops": 2}}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("oops"), "{err}");
    }

    #[test]
    fn bad_numeric_values_are_usage_errors() {
        let err = ExperimentConfig::from_json(
            r#"{"experiment": "flow", "numeric": {"grid_size": 100}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "experiment": "smatrix",
                "manifold": {"type": "circle", "radius": 2.0},
                "potential": {"type": "lorentzian", "strength": -0.5},
                "numeric": {"m_max": 64},
                "seed": 11
            }"#,
        )
        .unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
    }
}

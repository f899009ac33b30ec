//! Scenario settings for single bending or tensile runs, read from TOML.

use std::path::Path;

use serde::Deserialize;

use super::{BendingScenario, HarnessError, MeshParams, TensileScenario};
use crate::fcm::{ElasticMaterial, DEFAULT_PENALTY_FACTOR};
use crate::solve::{Preconditioner, SolverConfig};
use crate::voxel::{Hu, VoxelGrid};

/// Span as a fraction of the beam length when none is given (120 mm span
/// on a 128 mm beam).
pub const DEFAULT_SPAN_FRACTION: f64 = 120.0 / 128.0;

/// Every field is optional; missing ones take the scenario defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Support distance (mm).
    pub span: Option<f64>,
    pub support_strip_width: Option<f64>,
    pub load_strip_width: Option<f64>,
    /// Total load F (N).
    pub applied_load: Option<f64>,
    /// MPa
    pub youngs_modulus: Option<f64>,
    pub poisson_ratio: Option<f64>,
    pub epsilon: Option<f64>,
    pub threshold: Option<Hu>,
    pub order: Option<usize>,
    pub voxels_per_cell: Option<usize>,
    pub penalty_factor: Option<f64>,
    pub rel_tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    /// `none` or `jacobi`.
    pub preconditioner: Option<String>,
    /// Axial strain of the tensile test.
    pub strain: Option<f64>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn material(&self) -> Result<ElasticMaterial, HarnessError> {
        Ok(ElasticMaterial::new(
            self.youngs_modulus.unwrap_or(190_000.0),
            self.poisson_ratio.unwrap_or(0.3),
            self.epsilon.unwrap_or(1e-8),
        )?)
    }

    pub fn threshold(&self) -> Hu {
        self.threshold.unwrap_or(500)
    }

    pub fn mesh(&self) -> MeshParams {
        let d = MeshParams::default();
        MeshParams {
            order: self.order.unwrap_or(d.order),
            voxels_per_cell: self.voxels_per_cell.map_or(d.voxels_per_cell, |m| [m; 3]),
        }
    }

    pub fn solver(&self, default_tolerance: f64) -> Result<SolverConfig, HarnessError> {
        let d = SolverConfig::default();
        let preconditioner = match self.preconditioner.as_deref() {
            None => d.preconditioner,
            Some("none") => Preconditioner::None,
            Some("jacobi") => Preconditioner::Jacobi,
            Some(other) => {
                return Err(HarnessError::Config(format!("preconditioner must be none or jacobi, got {other:?}")))
            }
        };
        let cfg = SolverConfig {
            rel_tolerance: self.rel_tolerance.unwrap_or(default_tolerance),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            preconditioner,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bending(&self, grid: VoxelGrid) -> Result<BendingScenario, HarnessError> {
        let span = self.span.unwrap_or(DEFAULT_SPAN_FRACTION * grid.extent()[1]);
        let mut sc = BendingScenario::new(grid, span, self.material()?, self.threshold());
        if let Some(w) = self.support_strip_width {
            sc.support_strip_width = w;
        }
        if let Some(w) = self.load_strip_width {
            sc.load_strip_width = w;
        }
        if let Some(f) = self.applied_load {
            sc.applied_load = f;
        }
        sc.mesh = self.mesh();
        sc.penalty_factor = self.penalty_factor.unwrap_or(DEFAULT_PENALTY_FACTOR);
        sc.solver = self.solver(SolverConfig::default().rel_tolerance)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn tensile(&self, grid: VoxelGrid) -> Result<TensileScenario, HarnessError> {
        let mut sc = TensileScenario::new(grid, self.material()?, self.threshold());
        sc.mesh = self.mesh();
        sc.penalty_factor = self.penalty_factor.unwrap_or(DEFAULT_PENALTY_FACTOR);
        sc.solver = self.solver(super::TENSILE_REL_TOLERANCE)?;
        if let Some(s) = self.strain {
            sc.strain = s;
        }
        Ok(sc)
    }
}

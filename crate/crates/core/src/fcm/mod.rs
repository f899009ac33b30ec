//! Finite cell discretization of voxel-resolved linear elasticity.
//!
//! A structured grid of hexahedral cells overlays the voxel grid; each cell
//! holds `m_x * m_y * m_z` voxels and carries the tensor-product hierarchic
//! basis of order `p`. Voxel stiffness blocks are integrated once for the
//! reference cell and scaled per voxel by the indicator value during
//! assembly. Dirichlet data is imposed with a penalty on boundary strips of
//! the extended domain.

pub mod assembly;
pub mod basis;
pub mod field;
pub mod mesh;
pub mod template;

pub use assembly::{
    assemble, boundary_faces, weighted_boundary_area, Aabb, AffineField, BcKind, BoundaryCondition, BoundaryFace,
    SparseSystem,
};
pub use basis::{gauss_legendre, shape_functions_1d};
pub use field::{
    displacement_in_cell, evaluate_displacement, evaluate_gradient, evaluate_von_mises, nodal_interpolant, von_mises,
};
pub use mesh::FcmMesh;
pub use template::{voxel_stiffness_template, DenseMatrix};

use thiserror::Error;

use crate::voxel::VoxelError;

/// Default Dirichlet penalty, as a multiple of Young's modulus per mm.
pub const DEFAULT_PENALTY_FACTOR: f64 = 1e6;

#[derive(Debug, Error)]
pub enum FcmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("point {point:?} outside the extended domain [{min:?}, {max:?}]")]
    OutOfDomain { point: [f64; 3], min: [f64; 3], max: [f64; 3] },
    #[error(transparent)]
    Voxel(#[from] VoxelError),
}

/// Isotropic linear elastic bulk material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticMaterial {
    /// Young's modulus (MPa).
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// Void stiffness scaling used when building the indicator field.
    pub epsilon: f64,
}

impl ElasticMaterial {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64, epsilon: f64) -> Result<Self, FcmError> {
        let m = Self { youngs_modulus, poisson_ratio, epsilon };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), FcmError> {
        if !(self.youngs_modulus.is_finite() && self.youngs_modulus > 0.0) {
            return Err(FcmError::InvalidArgument(format!(
                "Young's modulus must be positive, got {}",
                self.youngs_modulus
            )));
        }
        if !(self.poisson_ratio > -1.0 && self.poisson_ratio < 0.5) {
            return Err(FcmError::InvalidArgument(format!(
                "Poisson ratio must lie in (-1, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(FcmError::InvalidArgument(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Lamé parameters `(lambda, mu)`.
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        (e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
    }

    pub fn shear_modulus(&self) -> f64 {
        self.lame().1
    }

    /// `sigma = lambda tr(eps) I + 2 mu eps` for a symmetric strain.
    pub fn stress(&self, strain: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let (lambda, mu) = self.lame();
        let tr = strain[0][0] + strain[1][1] + strain[2][2];
        std::array::from_fn(|i| {
            std::array::from_fn(|j| 2.0 * mu * strain[i][j] + if i == j { lambda * tr } else { 0.0 })
        })
    }
}

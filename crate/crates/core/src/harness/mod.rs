//! Virtual three-point-bending and tensile tests on voxel beams, and the
//! study driver that turns a batch of specimens into rigidity reports.
//!
//! Beam axes: x = width, y = length, z = height. The load acts in `-z`.

pub mod config;
pub mod study;

pub use config::ScenarioConfig;

pub use study::{
    run_study, run_study_config, SourceFit, SpecimenConfig, SpecimenResult, StudyConfig, StudyReport, StudySettings,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::beams::BeamError;
use crate::fcm::{
    assemble, boundary_faces, evaluate_displacement, gauss_legendre, weighted_boundary_area, Aabb, BoundaryCondition,
    ElasticMaterial, FcmError, FcmMesh,
};
use crate::latticegen::LatticeError;
use crate::solve::{cg_solve, SolveError, SolveReport, SolverConfig};
use crate::voxel::{porosity, Hu, IndicatorField, VoxelError, VoxelGrid};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Fcm(#[from] FcmError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    /// Errors caused by the user's input rather than a failing computation.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_)
                | HarnessError::Fcm(FcmError::Configuration(_) | FcmError::InvalidArgument(_))
                | HarnessError::Lattice(LatticeError::InvalidSpec(_))
                | HarnessError::Solve(SolveError::InvalidArgument(_))
        )
    }
}

/// Finite cell discretization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshParams {
    pub order: usize,
    pub voxels_per_cell: [usize; 3],
}

impl Default for MeshParams {
    fn default() -> Self {
        Self { order: 3, voxels_per_cell: [2, 2, 2] }
    }
}

/// Default penalty as a multiple of Young's modulus per mm.
pub use crate::fcm::DEFAULT_PENALTY_FACTOR;

#[derive(Debug, Clone)]
pub struct BendingScenario {
    pub grid: VoxelGrid,
    /// Distance between the support strip centres (mm).
    pub span: f64,
    /// Width of the support strips (mm). Zero, the default, gives line
    /// supports that leave the beam free to rotate; a bonded strip of
    /// finite width restrains rotation and stiffens the beam.
    pub support_strip_width: f64,
    pub load_strip_width: f64,
    /// Total load F (N).
    pub applied_load: f64,
    pub mesh: MeshParams,
    pub material: ElasticMaterial,
    pub threshold: Hu,
    /// Penalty in multiples of Young's modulus per mm.
    pub penalty_factor: f64,
    pub solver: SolverConfig,
}

impl BendingScenario {
    /// Scenario with line supports, a load strip two voxels wide, a 100 N
    /// load and default mesh, penalty and solver settings.
    pub fn new(grid: VoxelGrid, span: f64, material: ElasticMaterial, threshold: Hu) -> Self {
        let strip = 2.0 * grid.spacing()[1];
        Self {
            grid,
            span,
            support_strip_width: 0.0,
            load_strip_width: strip,
            applied_load: 100.0,
            mesh: MeshParams::default(),
            material,
            threshold,
            penalty_factor: DEFAULT_PENALTY_FACTOR,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let length = self.grid.extent()[1];
        for (name, v) in [
            ("span", self.span),
            ("load_strip_width", self.load_strip_width),
            ("applied_load", self.applied_load),
            ("penalty_factor", self.penalty_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HarnessError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.support_strip_width >= 0.0 && self.support_strip_width.is_finite()) {
            return Err(HarnessError::Config(format!(
                "support_strip_width must be non-negative, got {}",
                self.support_strip_width
            )));
        }
        if self.span + self.support_strip_width > length + 1e-9 * length {
            return Err(HarnessError::Config(format!(
                "span {} plus support strip {} exceeds beam length {length}",
                self.span, self.support_strip_width
            )));
        }
        check_height_divisible(&self.grid, &self.mesh)?;
        self.material.validate()?;
        Ok(())
    }
}

fn check_height_divisible(grid: &VoxelGrid, mesh: &MeshParams) -> Result<(), HarnessError> {
    let (nz, mz) = (grid.dims()[2], mesh.voxels_per_cell[2]);
    if mz == 0 || nz % mz != 0 {
        return Err(HarnessError::Config(format!(
            "grid height of {nz} voxels is not a multiple of voxels_per_cell z = {mz}; the top face would be padding"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidityResult {
    /// F / w (N/mm).
    pub rigidity: f64,
    /// Indicator-weighted mean downward displacement of the load footprint (mm).
    pub midspan_deflection: f64,
    pub report: SolveReport,
    pub porosity: f64,
    pub n_dofs: usize,
}

/// Boundary strips of a bending scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BendingRegions {
    pub pinned_support: Aabb,
    pub roller_support: Aabb,
    pub load: Aabb,
}

impl BendingScenario {
    pub fn regions(&self) -> BendingRegions {
        let lo = self.grid.origin();
        let e = self.grid.extent();
        let y_mid = lo[1] + 0.5 * e[1];
        let big = 1e3 * e.iter().fold(1.0f64, |m, v| m.max(*v));
        let strip = |yc: f64, w: f64, z: f64| Aabb::new([lo[0] - big, yc - 0.5 * w, z], [lo[0] + big, yc + 0.5 * w, z]);
        let (zb, zt) = (lo[2], lo[2] + e[2]);
        BendingRegions {
            pinned_support: strip(y_mid - 0.5 * self.span, self.support_strip_width, zb),
            roller_support: strip(y_mid + 0.5 * self.span, self.support_strip_width, zb),
            load: strip(y_mid, self.load_strip_width, zt),
        }
    }
}

fn require_material(mesh: &FcmMesh, ind: &IndicatorField, region: &Aabb, what: &str) -> Result<(), HarnessError> {
    if !boundary_faces(mesh, ind, region).iter().any(|f| f.alpha == 1.0) {
        return Err(HarnessError::Config(format!(
            "{what} strip {region:?} touches no material; the beam would be underconstrained or unloaded"
        )));
    }
    Ok(())
}

/// Simulate three-point bending and return the rigidity `F / w`.
pub fn run_bending(scenario: &BendingScenario) -> Result<RigidityResult, HarnessError> {
    Ok(solve_bending(scenario)?.0)
}

/// As [`run_bending`], also returning the displacement coefficients.
pub fn solve_bending(scenario: &BendingScenario) -> Result<(RigidityResult, Vec<f64>), HarnessError> {
    scenario.validate()?;
    let grid = &scenario.grid;
    let mat = &scenario.material;
    let ind = IndicatorField::new(grid, scenario.threshold, mat.epsilon)?;
    let mesh = FcmMesh::new(grid, scenario.mesh.order, scenario.mesh.voxels_per_cell)?;
    let regions = scenario.regions();
    require_material(&mesh, &ind, &regions.pinned_support, "support")?;
    require_material(&mesh, &ind, &regions.roller_support, "support")?;
    require_material(&mesh, &ind, &regions.load, "load")?;
    if scenario.support_strip_width == 0.0 {
        let h = mesh.cell_size()[1];
        for y in [regions.pinned_support.min[1], regions.roller_support.min[1]] {
            let r = (y - mesh.origin()[1]) / h;
            if (r - r.round()).abs() > 1e-6 {
                log::warn!(
                    "support line y = {y} is not on a cell boundary; the penalty block is rank deficient there and CG converges slowly"
                );
            }
        }
    }

    let beta = scenario.penalty_factor * mat.youngs_modulus;
    let area = weighted_boundary_area(&mesh, &ind, &regions.load);
    let traction = scenario.applied_load / area;
    let bcs = [
        BoundaryCondition::dirichlet(regions.pinned_support, [true, true, true], [0.0; 3], beta),
        BoundaryCondition::dirichlet(regions.roller_support, [false, false, true], [0.0; 3], beta),
        BoundaryCondition::neumann(regions.load, [0.0, 0.0, -traction]),
    ];
    let system = assemble(&mesh, mat, &ind, &bcs, None)?;
    log::info!("bending: {} dofs, {} nonzeros", system.n_dofs(), system.matrix.nnz());
    let (u, report) = cg_solve(&system, &scenario.solver)?;
    // Supports prescribe zero, so the load vector is the traction alone and
    // f.u / F is the weighted mean downward displacement under the strip.
    let work: f64 = system.rhs.iter().zip(&u).map(|(f, u)| f * u).sum();
    let deflection = work / scenario.applied_load;
    if !(deflection > 0.0) {
        return Err(HarnessError::Config(format!("non-positive midspan deflection {deflection:e}")));
    }
    let result = RigidityResult {
        rigidity: scenario.applied_load / deflection,
        midspan_deflection: deflection,
        report,
        porosity: porosity(grid, scenario.threshold),
        n_dofs: system.n_dofs(),
    };
    Ok((result, u))
}

/// Default CG tolerance of the tensile test. Its right-hand side is
/// dominated by the penalty terms of the prescribed end, so the residual has
/// to be reduced further than in bending for the same reaction accuracy.
pub const TENSILE_REL_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct TensileScenario {
    pub grid: VoxelGrid,
    pub material: ElasticMaterial,
    pub threshold: Hu,
    pub mesh: MeshParams,
    /// Prescribed axial engineering strain.
    pub strain: f64,
    pub penalty_factor: f64,
    pub solver: SolverConfig,
}

impl TensileScenario {
    pub fn new(grid: VoxelGrid, material: ElasticMaterial, threshold: Hu) -> Self {
        Self {
            grid,
            material,
            threshold,
            mesh: MeshParams::default(),
            strain: 1e-3,
            penalty_factor: DEFAULT_PENALTY_FACTOR,
            solver: SolverConfig { rel_tolerance: TENSILE_REL_TOLERANCE, ..SolverConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensileResult {
    /// E* (MPa).
    pub effective_modulus: f64,
    /// Axial reaction on the fixed end (N).
    pub reaction: f64,
    pub report: SolveReport,
    pub n_dofs: usize,
}

/// Stretch the specimen along y and return the effective modulus
/// `(R / (b h)) / strain` from the reaction on the fixed end.
///
/// Ends carry only axial penalty constraints; `u_x = 0` on the `x = min` face
/// and `u_z = 0` on the `z = min` face remove the remaining rigid modes
/// without restraining lateral contraction.
pub fn run_virtual_tensile(scenario: &TensileScenario) -> Result<TensileResult, HarnessError> {
    let grid = &scenario.grid;
    let mat = &scenario.material;
    if !(scenario.strain > 0.0 && scenario.strain.is_finite()) {
        return Err(HarnessError::Config(format!("strain must be positive, got {}", scenario.strain)));
    }
    if !(scenario.penalty_factor > 0.0) {
        return Err(HarnessError::Config("penalty_factor must be positive".into()));
    }
    let ind = IndicatorField::new(grid, scenario.threshold, mat.epsilon)?;
    let mesh = FcmMesh::new(grid, scenario.mesh.order, scenario.mesh.voxels_per_cell)?;
    if mesh.voxel_counts() != grid.dims() {
        return Err(HarnessError::Config(format!(
            "grid dims {:?} must be multiples of voxels_per_cell {:?} for the tensile test",
            grid.dims(),
            scenario.mesh.voxels_per_cell
        )));
    }
    let (lo, hi) = (mesh.domain_min(), mesh.domain_max());
    let big = 1e3 * (0..3).map(|a| hi[a] - lo[a]).fold(1.0, f64::max);
    let face = |axis: usize, x: f64| {
        let mut a = Aabb::new([-big; 3], [big; 3]);
        a.min[axis] = x;
        a.max[axis] = x;
        a
    };
    let length = hi[1] - lo[1];
    let beta = scenario.penalty_factor * mat.youngs_modulus;
    let fixed = face(1, lo[1]);
    let bcs = [
        BoundaryCondition::dirichlet(fixed, [false, true, false], [0.0; 3], beta),
        BoundaryCondition::dirichlet(face(1, hi[1]), [false, true, false], [0.0, scenario.strain * length, 0.0], beta),
        BoundaryCondition::dirichlet(face(0, lo[0]), [true, false, false], [0.0; 3], beta),
        BoundaryCondition::dirichlet(face(2, lo[2]), [false, false, true], [0.0; 3], beta),
    ];
    let system = assemble(&mesh, mat, &ind, &bcs, None)?;
    let (u, report) = cg_solve(&system, &scenario.solver)?;

    // Reaction = penalty * int alpha (u_y - 0) dA over the fixed end.
    let (pts, wts) = gauss_legendre(scenario.mesh.order + 1);
    let sp = mesh.voxel_spacing();
    let mut reaction = 0.0;
    for f in boundary_faces(&mesh, &ind, &fixed) {
        let (a, b) = (0, 2);
        for (ta, wa) in pts.iter().zip(&wts) {
            for (tb, wb) in pts.iter().zip(&wts) {
                let mut x = [0.0; 3];
                x[1] = lo[1];
                x[a] = lo[a] + (f.voxel[a] as f64 + 0.5 * (1.0 + ta)) * sp[a];
                x[b] = lo[b] + (f.voxel[b] as f64 + 0.5 * (1.0 + tb)) * sp[b];
                let uy = evaluate_displacement(&mesh, &u, x)?[1];
                reaction += beta * f.alpha * 0.25 * wa * wb * f.measure * uy;
            }
        }
    }
    let reaction = reaction.abs();
    let e = grid.extent();
    Ok(TensileResult {
        effective_modulus: reaction / (e[0] * e[2]) / scenario.strain,
        reaction,
        report,
        n_dofs: system.n_dofs(),
    })
}

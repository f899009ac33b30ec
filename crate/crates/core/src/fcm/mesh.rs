//! Structured finite cell mesh and its degree-of-freedom map.
//!
//! Along each axis the 1D functions are numbered so that the vertex between
//! cells `c - 1` and `c` is `c * p` and the bubbles of cell `c` are
//! `c * p + 1 ..= c * p + p - 1`. Scalar functions are tensor products of
//! these; displacement dof `3 * scalar + component`. All cells share one
//! orientation, so neighbouring cells see identical global indices on shared
//! faces, edges and vertices without sign corrections.

use super::FcmError;
use crate::voxel::VoxelGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct FcmMesh {
    cell_counts: [usize; 3],
    voxels_per_cell: [usize; 3],
    order: usize,
    spacing: [f64; 3],
    origin: [f64; 3],
    grid_dims: [usize; 3],
}

impl FcmMesh {
    /// Cover `grid` with cells of `voxels_per_cell` voxels, padding the high
    /// side with void when the grid does not divide evenly.
    pub fn new(grid: &VoxelGrid, order: usize, voxels_per_cell: [usize; 3]) -> Result<Self, FcmError> {
        Self::from_geometry(grid.dims(), grid.spacing(), grid.origin(), order, voxels_per_cell)
    }

    pub fn from_geometry(
        grid_dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        order: usize,
        voxels_per_cell: [usize; 3],
    ) -> Result<Self, FcmError> {
        if !(1..=10).contains(&order) {
            return Err(FcmError::InvalidArgument(format!("order must lie in 1..=10, got {order}")));
        }
        if voxels_per_cell.iter().any(|&m| m == 0) {
            return Err(FcmError::InvalidArgument("voxels_per_cell must be >= 1".into()));
        }
        if grid_dims.iter().any(|&d| d == 0) || spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(FcmError::InvalidArgument("degenerate grid geometry".into()));
        }
        let cell_counts = std::array::from_fn(|a| grid_dims[a].div_ceil(voxels_per_cell[a]));
        Ok(Self { cell_counts, voxels_per_cell, order, spacing, origin, grid_dims })
    }

    pub fn cell_counts(&self) -> [usize; 3] {
        self.cell_counts
    }

    pub fn voxels_per_cell(&self) -> [usize; 3] {
        self.voxels_per_cell
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn voxel_spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        self.grid_dims
    }

    pub fn n_cells(&self) -> usize {
        self.cell_counts.iter().product()
    }

    pub fn cell_size(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.voxels_per_cell[a] as f64 * self.spacing[a])
    }

    /// Voxels along each axis of the (padded) extended domain.
    pub fn voxel_counts(&self) -> [usize; 3] {
        std::array::from_fn(|a| self.cell_counts[a] * self.voxels_per_cell[a])
    }

    pub fn domain_min(&self) -> [f64; 3] {
        self.origin
    }

    pub fn domain_max(&self) -> [f64; 3] {
        let h = self.cell_size();
        std::array::from_fn(|a| self.origin[a] + self.cell_counts[a] as f64 * h[a])
    }

    pub fn modes_per_axis(&self) -> usize {
        self.order + 1
    }

    /// Scalar basis functions per cell, `(p + 1)^3`.
    pub fn scalars_per_cell(&self) -> usize {
        self.modes_per_axis().pow(3)
    }

    pub fn dofs_per_cell(&self) -> usize {
        3 * self.scalars_per_cell()
    }

    /// Global 1D functions along `axis`.
    pub fn n_1d(&self, axis: usize) -> usize {
        self.cell_counts[axis] * self.order + 1
    }

    pub fn n_scalar(&self) -> usize {
        (0..3).map(|a| self.n_1d(a)).product()
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.n_scalar()
    }

    #[inline]
    pub fn global_1d(&self, cell: usize, mode: usize) -> usize {
        match mode {
            0 => cell * self.order,
            1 => (cell + 1) * self.order,
            m => cell * self.order + m - 1,
        }
    }

    /// Inclusive range of 1D functions sharing a cell with `g`.
    pub(crate) fn coupled_range_1d(&self, axis: usize, g: usize) -> (usize, usize) {
        let p = self.order;
        let n = self.cell_counts[axis];
        if g % p == 0 {
            let v = g / p;
            let lo = if v >= 1 { (v - 1) * p } else { 0 };
            let hi = if v < n { (v + 1) * p } else { v * p };
            (lo, hi)
        } else {
            let c = g / p;
            (c * p, (c + 1) * p)
        }
    }

    #[inline]
    pub fn scalar_index(&self, g: [usize; 3]) -> usize {
        g[0] + self.n_1d(0) * (g[1] + self.n_1d(1) * g[2])
    }

    pub fn scalar_coords(&self, s: usize) -> [usize; 3] {
        let (n0, n1) = (self.n_1d(0), self.n_1d(1));
        [s % n0, (s / n0) % n1, s / (n0 * n1)]
    }

    pub fn cell_flat(&self, cell: [usize; 3]) -> usize {
        cell[0] + self.cell_counts[0] * (cell[1] + self.cell_counts[1] * cell[2])
    }

    pub fn cell_coords(&self, flat: usize) -> [usize; 3] {
        let [cx, cy, _] = self.cell_counts;
        [flat % cx, (flat / cx) % cy, flat / (cx * cy)]
    }

    /// Local scalar index of the mode triple `(a, b, c)`.
    #[inline]
    pub fn local_scalar(&self, modes: [usize; 3]) -> usize {
        let q = self.modes_per_axis();
        modes[0] + q * (modes[1] + q * modes[2])
    }

    pub fn local_modes(&self, local: usize) -> [usize; 3] {
        let q = self.modes_per_axis();
        [local % q, (local / q) % q, local / (q * q)]
    }

    /// Global scalar indices of one cell, in local order.
    pub fn cell_scalars(&self, cell: [usize; 3]) -> Vec<usize> {
        (0..self.scalars_per_cell())
            .map(|l| {
                let m = self.local_modes(l);
                self.scalar_index(std::array::from_fn(|a| self.global_1d(cell[a], m[a])))
            })
            .collect()
    }

    /// Global dofs of one cell; local dof `3 * local_scalar + component`.
    pub fn cell_dofs(&self, cell: [usize; 3]) -> Vec<usize> {
        self.cell_scalars(cell).into_iter().flat_map(|s| (0..3).map(move |c| 3 * s + c)).collect()
    }

    /// Flat voxel index of local voxel `v` in `cell`, `None` inside padding.
    #[inline]
    pub fn voxel_of(&self, cell: [usize; 3], v: [usize; 3]) -> Option<usize> {
        let idx: [usize; 3] = std::array::from_fn(|a| cell[a] * self.voxels_per_cell[a] + v[a]);
        if (0..3).any(|a| idx[a] >= self.grid_dims[a]) {
            return None;
        }
        Some(idx[0] + self.grid_dims[0] * (idx[1] + self.grid_dims[1] * idx[2]))
    }

    pub fn contains(&self, point: [f64; 3]) -> bool {
        let (lo, hi) = (self.domain_min(), self.domain_max());
        (0..3).all(|a| {
            let tol = 1e-12 * (hi[a] - lo[a]);
            point[a] >= lo[a] - tol && point[a] <= hi[a] + tol
        })
    }

    /// Cell containing `point` and the local coordinates in `[-1, 1]^3`.
    pub fn locate(&self, point: [f64; 3]) -> Result<([usize; 3], [f64; 3]), FcmError> {
        if !self.contains(point) {
            return Err(FcmError::OutOfDomain { point, min: self.domain_min(), max: self.domain_max() });
        }
        let h = self.cell_size();
        let mut cell = [0; 3];
        let mut xi = [0.0; 3];
        for a in 0..3 {
            let t = (point[a] - self.origin[a]) / h[a];
            let c = (t.floor().max(0.0) as usize).min(self.cell_counts[a] - 1);
            cell[a] = c;
            xi[a] = (2.0 * (t - c as f64) - 1.0).clamp(-1.0, 1.0);
        }
        Ok((cell, xi))
    }

    /// World position of the 1D-vertex triple `v` (indices in `0..=cells`).
    pub fn vertex_position(&self, v: [usize; 3]) -> [f64; 3] {
        let h = self.cell_size();
        std::array::from_fn(|a| self.origin[a] + v[a] as f64 * h[a])
    }
}

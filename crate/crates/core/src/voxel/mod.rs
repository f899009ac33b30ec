//! Voxel grids of Hounsfield-like attenuation values.
//!
//! A [`VoxelGrid`] is the only geometry representation used by the rest of the
//! crate. Values are stored x-fastest (`i + nx * (j + ny * k)`), and material
//! is recovered by a global threshold through [`IndicatorField`].

mod io;

pub use io::{read_volume, read_volume_from, write_volume, write_volume_to};

use rayon::prelude::*;
use thiserror::Error;

/// Hounsfield-like attenuation value.
pub type Hu = u16;

/// Default void stiffness scaling of the indicator function.
pub const DEFAULT_EPSILON: f64 = 1e-8;

const CHUNK: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum VoxelError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("voxel index {index:?} outside grid of dims {dims:?}")]
    IndexOutOfRange { index: [usize; 3], dims: [usize; 3] },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed volume file, field `{field}`: {message}")]
    Format { field: &'static str, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Dense structured grid of HU values with physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    values: Vec<Hu>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], values: Vec<Hu>) -> Result<Self, VoxelError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(VoxelError::InvalidGrid(format!("dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(VoxelError::InvalidGrid(format!("spacing must be finite and positive, got {spacing:?}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(VoxelError::InvalidGrid(format!("origin must be finite, got {origin:?}")));
        }
        let expected = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| VoxelError::InvalidGrid(format!("dims {dims:?} overflow")))?;
        if values.len() != expected {
            return Err(VoxelError::InvalidGrid(format!(
                "expected {expected} values for dims {dims:?}, got {}",
                values.len()
            )));
        }
        Ok(Self { dims, spacing, origin, values })
    }

    /// Grid with every voxel set to `value`.
    pub fn filled(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], value: Hu) -> Result<Self, VoxelError> {
        let n = dims.iter().product();
        Self::new(dims, spacing, origin, vec![value; n])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn values(&self) -> &[Hu] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Physical size of the grid along each axis (mm).
    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.dims[a] as f64 * self.spacing[a])
    }

    #[inline]
    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn checked_index(&self, index: [usize; 3]) -> Result<usize, VoxelError> {
        if (0..3).any(|a| index[a] >= self.dims[a]) {
            return Err(VoxelError::IndexOutOfRange { index, dims: self.dims });
        }
        Ok(self.flat_index(index[0], index[1], index[2]))
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let i = flat % self.dims[0];
        let rest = flat / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn get(&self, index: [usize; 3]) -> Result<Hu, VoxelError> {
        Ok(self.values[self.checked_index(index)?])
    }

    pub fn set(&mut self, index: [usize; 3], value: Hu) -> Result<(), VoxelError> {
        let idx = self.checked_index(index)?;
        self.values[idx] = value;
        Ok(())
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Hu] {
        &mut self.values
    }

    /// World coordinates of a voxel center.
    pub fn voxel_center(&self, index: [usize; 3]) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + (index[a] as f64 + 0.5) * self.spacing[a])
    }

    /// Number of voxels at or above `threshold`.
    pub fn count_material(&self, threshold: Hu) -> usize {
        self.values.par_chunks(CHUNK).map(|c| c.iter().filter(|&&v| v >= threshold).count()).sum()
    }

    /// Copy of the grid mirrored along `axis`.
    pub fn mirrored(&self, axis: usize) -> Self {
        let [nx, ny, nz] = self.dims;
        let mut values = vec![0; self.values.len()];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let mut src = [i, j, k];
                    src[axis] = self.dims[axis] - 1 - src[axis];
                    values[self.flat_index(i, j, k)] = self.values[self.flat_index(src[0], src[1], src[2])];
                }
            }
        }
        Self { values, ..self.clone() }
    }
}

/// Two-valued indicator: 1 where `HU >= threshold`, `epsilon` elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct IndicatorField<'a> {
    grid: &'a VoxelGrid,
    threshold: Hu,
    epsilon: f64,
}

impl<'a> IndicatorField<'a> {
    pub fn new(grid: &'a VoxelGrid, threshold: Hu, epsilon: f64) -> Result<Self, VoxelError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(VoxelError::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        Ok(Self { grid, threshold, epsilon })
    }

    pub fn grid(&self) -> &'a VoxelGrid {
        self.grid
    }

    pub fn threshold(&self) -> Hu {
        self.threshold
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn indicator(&self, index: [usize; 3]) -> Result<f64, VoxelError> {
        let v = self.grid.get(index)?;
        Ok(self.alpha_of(v))
    }

    #[inline]
    pub fn alpha_of(&self, value: Hu) -> f64 {
        if value >= self.threshold {
            1.0
        } else {
            self.epsilon
        }
    }

    #[inline]
    pub fn is_material_flat(&self, flat: usize) -> bool {
        self.grid.values[flat] >= self.threshold
    }
}

/// Voxel-count porosity: fraction of voxels below `threshold`.
pub fn porosity(grid: &VoxelGrid, threshold: Hu) -> f64 {
    let material = grid.count_material(threshold);
    1.0 - material as f64 / grid.len() as f64
}

/// Block-average downsampling by an integer `factor`.
///
/// Trailing partial blocks are dropped. Output HU is the block mean rounded
/// half-up to an integer.
pub fn downsample(grid: &VoxelGrid, factor: usize) -> Result<VoxelGrid, VoxelError> {
    if factor < 2 {
        return Err(VoxelError::InvalidArgument(format!("downsample factor must be >= 2, got {factor}")));
    }
    let out_dims: [usize; 3] = std::array::from_fn(|a| grid.dims[a] / factor);
    if out_dims.iter().any(|&d| d == 0) {
        return Err(VoxelError::InvalidArgument(format!("factor {factor} exceeds grid dims {:?}", grid.dims)));
    }
    let block = (factor * factor * factor) as u64;
    let [ox, oy, _] = out_dims;
    let values: Vec<Hu> = (0..out_dims.iter().product::<usize>())
        .into_par_iter()
        .map(|flat| {
            let (i, j, k) = (flat % ox, (flat / ox) % oy, flat / (ox * oy));
            let mut sum = 0u64;
            for dk in 0..factor {
                for dj in 0..factor {
                    let row = grid.flat_index(i * factor, j * factor + dj, k * factor + dk);
                    sum += grid.values[row..row + factor].iter().map(|&v| v as u64).sum::<u64>();
                }
            }
            ((sum + block / 2) / block) as Hu
        })
        .collect();
    let spacing = std::array::from_fn(|a| grid.spacing[a] * factor as f64);
    VoxelGrid::new(out_dims, spacing, grid.origin, values)
}

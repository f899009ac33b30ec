//! Voxelized octet-truss lattice beams and parametric build defects.
//!
//! The unit cell is the face-centred-cubic nearest-neighbour network: an inner
//! octahedron joining the six face centres plus the four half-diagonals on
//! every cube face. Struts are capsules of radius `strut_diameter / 2`.
//! Beam axes: x = width, y = length, z = height.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::voxel::{Hu, VoxelError, VoxelGrid};

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("invalid lattice specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error("calibration failed: {0}")]
    Calibration(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctetCellSpec {
    /// Edge length of the cubic unit cell (mm).
    pub cell_size: f64,
    pub strut_diameter: f64,
    /// HU written inside struts.
    pub material_hu: Hu,
    /// HU written outside struts.
    pub void_hu: Hu,
}

impl OctetCellSpec {
    pub fn validate(&self) -> Result<(), LatticeError> {
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(LatticeError::InvalidSpec(format!("cell_size must be > 0, got {}", self.cell_size)));
        }
        if !(self.strut_diameter > 0.0 && self.strut_diameter < self.cell_size) {
            return Err(LatticeError::InvalidSpec(format!(
                "strut_diameter must lie in (0, cell_size), got {}",
                self.strut_diameter
            )));
        }
        if self.material_hu <= self.void_hu {
            return Err(LatticeError::InvalidSpec("material_hu must exceed void_hu".into()));
        }
        Ok(())
    }

    /// HU halfway between void and material; binarizes generated grids.
    pub fn threshold(&self) -> Hu {
        self.void_hu + (self.material_hu - self.void_hu).div_ceil(2)
    }
}

/// Straight strut between two points (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: [f64; 3],
    pub b: [f64; 3],
}

impl Segment {
    fn shifted(&self, by: [f64; 3]) -> Segment {
        Segment { a: std::array::from_fn(|i| self.a[i] + by[i]), b: std::array::from_fn(|i| self.b[i] + by[i]) }
    }

    /// Squared distance from `p` to the closest point of the segment.
    #[inline]
    pub fn distance_squared(&self, p: [f64; 3]) -> f64 {
        let d = sub(self.b, self.a);
        let w = sub(p, self.a);
        let len2 = dot(d, d);
        let t = if len2 > 0.0 { (dot(w, d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let c: [f64; 3] = std::array::from_fn(|i| w[i] - t * d[i]);
        dot(c, c)
    }
}

#[inline]
fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// The 36 struts of one octet cell in cell-local coordinates `[0, cell_size]^3`.
pub fn octet_cell_struts(spec: &OctetCellSpec) -> Vec<Segment> {
    let a = spec.cell_size;
    let h = 0.5 * a;
    let mut face_centers = Vec::with_capacity(6);
    for axis in 0..3 {
        for side in [0.0, a] {
            let mut c = [h; 3];
            c[axis] = side;
            face_centers.push((axis, c));
        }
    }
    let mut struts = Vec::with_capacity(36);
    // octahedron: every pair of face centres on different axes
    for (i, &(ai, ci)) in face_centers.iter().enumerate() {
        for &(aj, cj) in &face_centers[i + 1..] {
            if ai != aj {
                struts.push(Segment { a: ci, b: cj });
            }
        }
    }
    // half face diagonals: corner to the centre of each face containing it
    for &(axis, c) in &face_centers {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for su in [0.0, a] {
            for sv in [0.0, a] {
                let mut corner = c;
                corner[u] = su;
                corner[v] = sv;
                struts.push(Segment { a: corner, b: c });
            }
        }
    }
    struts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeBeamSpec {
    /// Cell counts (width, length, height).
    pub cells: [usize; 3],
    pub cell: OctetCellSpec,
    /// Voxel edge length (mm).
    pub resolution: f64,
}

impl LatticeBeamSpec {
    pub fn validate(&self) -> Result<(), LatticeError> {
        self.cell.validate()?;
        if self.cells.iter().any(|&n| n == 0) {
            return Err(LatticeError::InvalidSpec(format!("cell counts must be >= 1, got {:?}", self.cells)));
        }
        if !(self.resolution > 0.0 && self.resolution <= 0.5 * self.cell.strut_diameter * (1.0 + 1e-12)) {
            return Err(LatticeError::InvalidSpec(format!(
                "resolution {} must be positive and at most half the strut diameter {}",
                self.resolution, self.cell.strut_diameter
            )));
        }
        Ok(())
    }

    /// Outer bounding box (mm).
    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.cells[a] as f64 * self.cell.cell_size)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.extent().map(|e| ((e / self.resolution) - 1e-9).ceil().max(1.0) as usize)
    }

    /// Every strut junction of the tiled beam (cell corners and face centres).
    pub fn nodes(&self) -> Vec<[f64; 3]> {
        let a = self.cell.cell_size;
        let [nx, ny, nz] = self.cells;
        let mut nodes = Vec::new();
        for k in 0..=nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    nodes.push([i as f64 * a, j as f64 * a, k as f64 * a]);
                }
            }
        }
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for s in 0..=self.cells[axis] {
                for p in 0..self.cells[u] {
                    for q in 0..self.cells[v] {
                        let mut c = [0.0; 3];
                        c[axis] = s as f64 * a;
                        c[u] = (p as f64 + 0.5) * a;
                        c[v] = (q as f64 + 0.5) * a;
                        nodes.push(c);
                    }
                }
            }
        }
        nodes
    }
}

const BINS: usize = 8;

/// Candidate (neighbour offset, strut) pairs per spatial bin of the unit cell.
fn candidate_bins(spec: &OctetCellSpec) -> Vec<Vec<([i64; 3], Segment)>> {
    let a = spec.cell_size;
    let r = 0.5 * spec.strut_diameter;
    let struts = octet_cell_struts(spec);
    let bin = a / BINS as f64;
    let mut bins = vec![Vec::new(); BINS * BINS * BINS];
    for oz in -1i64..=1 {
        for oy in -1i64..=1 {
            for ox in -1i64..=1 {
                let off = [ox, oy, oz];
                let shift = off.map(|o| o as f64 * a);
                for s in &struts {
                    let seg = s.shifted(shift);
                    let lo: [f64; 3] = std::array::from_fn(|i| seg.a[i].min(seg.b[i]) - r);
                    let hi: [f64; 3] = std::array::from_fn(|i| seg.a[i].max(seg.b[i]) + r);
                    for bz in 0..BINS {
                        for by in 0..BINS {
                            for bx in 0..BINS {
                                let b = [bx, by, bz];
                                let overlaps = (0..3).all(|i| {
                                    let b0 = b[i] as f64 * bin;
                                    hi[i] >= b0 && lo[i] <= b0 + bin
                                });
                                if overlaps {
                                    bins[bx + BINS * (by + BINS * bz)].push((off, seg));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    bins
}

/// Voxel-centre sampling of the union of all strut capsules of the beam.
pub fn voxelize_beam(spec: &LatticeBeamSpec) -> Result<VoxelGrid, LatticeError> {
    spec.validate()?;
    let dims = spec.dims();
    let a = spec.cell.cell_size;
    let r2 = 0.25 * spec.cell.strut_diameter * spec.cell.strut_diameter;
    let res = spec.resolution;
    let bins = candidate_bins(&spec.cell);
    let cells = spec.cells.map(|c| c as i64);
    let [nx, ny, _] = dims;
    let mut values = vec![spec.cell.void_hu; dims.iter().product()];
    values.par_chunks_mut(nx * ny).enumerate().for_each(|(k, slab)| {
        for j in 0..ny {
            for i in 0..nx {
                let p = [(i as f64 + 0.5) * res, (j as f64 + 0.5) * res, (k as f64 + 0.5) * res];
                let cell: [i64; 3] = std::array::from_fn(|ax| ((p[ax] / a).floor() as i64).clamp(0, cells[ax] - 1));
                let q: [f64; 3] = std::array::from_fn(|ax| p[ax] - cell[ax] as f64 * a);
                let b: [usize; 3] =
                    std::array::from_fn(|ax| ((q[ax] / a * BINS as f64).floor().max(0.0) as usize).min(BINS - 1));
                let inside = bins[b[0] + BINS * (b[1] + BINS * b[2])].iter().any(|(off, seg)| {
                    (0..3).all(|ax| {
                        let c = cell[ax] + off[ax];
                        c >= 0 && c < cells[ax]
                    }) && seg.distance_squared(q) <= r2
                });
                if inside {
                    slab[i + nx * j] = spec.cell.material_hu;
                }
            }
        }
    });
    Ok(VoxelGrid::new(dims, [res; 3], [0.0; 3], values)?)
}

/// Bisection on a function that decreases in its argument.
///
/// Returns the argument at which `f` is within `tol` of `target`. Otherwise
/// returns the end of the final bracket whose value is closer to `target`,
/// which matters when `f` is a step function (porosity of a voxelization).
pub fn bisect_decreasing<F, E>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    target: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let (mut f_lo, mut f_hi) = (f(lo)?, f(hi)?);
    for _ in 0..max_iter {
        for (x, v) in [(lo, f_lo), (hi, f_hi)] {
            if (v - target).abs() <= tol {
                return Ok(x);
            }
        }
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v > target {
            (lo, f_lo) = (mid, v);
        } else {
            (hi, f_hi) = (mid, v);
        }
    }
    Ok(if (f_lo - target).abs() <= (f_hi - target).abs() { lo } else { hi })
}

/// Strut diameter that makes `beam` reach `target` porosity.
pub fn calibrate_strut_diameter(beam: &LatticeBeamSpec, target: f64, tol: f64) -> Result<f64, LatticeError> {
    let lo = 2.0 * beam.resolution;
    let hi = 0.99 * beam.cell.cell_size;
    let porosity_at = |d: f64| -> Result<f64, LatticeError> {
        let spec = LatticeBeamSpec { cell: OctetCellSpec { strut_diameter: d, ..beam.cell }, ..*beam };
        let grid = voxelize_beam(&spec)?;
        Ok(crate::voxel::porosity(&grid, beam.cell.threshold()))
    };
    if porosity_at(lo)? < target || porosity_at(hi)? > target {
        return Err(LatticeError::Calibration(format!(
            "target porosity {target} not bracketed for diameters [{lo}, {hi}]"
        )));
    }
    bisect_decreasing(porosity_at, lo, hi, target, tol, 60)
}

/// Coordinate axis; as a build direction it points along `+axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Emulated build defects. All-zero is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DefectSpec {
    /// Uniform radius growth of every strut (mm).
    pub strut_dilation: f64,
    /// Radius of excess-material spheres at strut junctions (mm).
    pub node_blob_radius: f64,
    /// Adhered particles per mm² of surface facing against the build direction.
    pub particle_density: f64,
    pub particle_radius: f64,
    pub rng_seed: u64,
}

impl DefectSpec {
    pub fn validate(&self) -> Result<(), LatticeError> {
        let fields = [
            ("strut_dilation", self.strut_dilation),
            ("node_blob_radius", self.node_blob_radius),
            ("particle_density", self.particle_density),
            ("particle_radius", self.particle_radius),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LatticeError::InvalidSpec(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.strut_dilation == 0.0
            && self.node_blob_radius == 0.0
            && (self.particle_density == 0.0 || self.particle_radius == 0.0)
    }
}

/// Exact squared Euclidean distance (mm²) from every voxel centre to the
/// nearest `true` voxel centre, for anisotropic spacing.
pub fn distance_transform_squared(mask: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let mut d: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { f64::INFINITY }).collect();
    let [nx, ny, nz] = dims;
    let strides = [1, nx, nx * ny];
    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        let mut hull = vec![0usize; n];
        let mut bounds = vec![0.0; n + 1];
        for q in 0..dims[v] {
            for p in 0..dims[u] {
                let mut base = [0usize; 3];
                base[u] = p;
                base[v] = q;
                let start = base[0] + nx * (base[1] + ny * base[2]);
                for (t, l) in line.iter_mut().enumerate() {
                    *l = d[start + t * stride];
                }
                lower_envelope(&line, spacing[axis], &mut out, &mut hull, &mut bounds);
                for (t, o) in out.iter().enumerate() {
                    d[start + t * stride] = *o;
                }
            }
        }
    }
    let _ = nz;
    d
}

/// 1D squared distance transform of sampled function `f` on a grid of pitch `h`.
fn lower_envelope(f: &[f64], h: f64, out: &mut [f64], hull: &mut [usize], bounds: &mut [f64]) {
    let n = f.len();
    let pos = |i: usize| i as f64 * h;
    let mut k: usize = 0;
    let mut first = None;
    for (q, &fq) in f.iter().enumerate() {
        if fq.is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(first) = first else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    hull[0] = first;
    bounds[0] = f64::NEG_INFINITY;
    bounds[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = hull[k];
            let s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if s <= bounds[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= bounds[k] {
                // k == 0: q dominates the whole envelope so far
                hull[0] = q;
                bounds[1] = f64::INFINITY;
                break;
            }
            k += 1;
            hull[k] = q;
            bounds[k] = s;
            bounds[k + 1] = f64::INFINITY;
            break;
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let x = pos(q);
        while bounds[k + 1] < x {
            k += 1;
        }
        let p = hull[k];
        let dx = x - pos(p);
        *o = dx * dx + f[p];
    }
}

fn stamp_sphere(grid: &mut VoxelGrid, center: [f64; 3], radius: f64, value: Hu) {
    let dims = grid.dims();
    let spacing = grid.spacing();
    let origin = grid.origin();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let l = ((center[a] - radius - origin[a]) / spacing[a] - 0.5).floor();
        let h = ((center[a] + radius - origin[a]) / spacing[a] - 0.5).ceil();
        if h < 0.0 || l > (dims[a] - 1) as f64 {
            return;
        }
        lo[a] = l.max(0.0) as usize;
        hi[a] = (h.min((dims[a] - 1) as f64)) as usize;
    }
    let r2 = radius * radius;
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let c = grid.voxel_center([i, j, k]);
                let d = sub(c, center);
                if dot(d, d) <= r2 {
                    let idx = grid.flat_index(i, j, k);
                    grid.values_mut()[idx] = value;
                }
            }
        }
    }
}

/// Apply strut dilation, node blobs and adhered particles, in that order.
///
/// Material is `HU >= lattice.cell.threshold()`; added voxels get
/// `material_hu`. Material is never removed.
pub fn inject_defects(
    grid: &VoxelGrid,
    lattice: &LatticeBeamSpec,
    defects: &DefectSpec,
    build_direction: Axis,
) -> Result<VoxelGrid, LatticeError> {
    defects.validate()?;
    let mut out = grid.clone();
    if defects.is_identity() {
        return Ok(out);
    }
    let threshold = lattice.cell.threshold();
    let material_hu = lattice.cell.material_hu;
    let dims = grid.dims();
    let spacing = grid.spacing();

    if defects.strut_dilation > 0.0 {
        let mask: Vec<bool> = grid.values().iter().map(|&v| v >= threshold).collect();
        let dist = distance_transform_squared(&mask, dims, spacing);
        let r2 = defects.strut_dilation * defects.strut_dilation;
        for (v, d) in out.values_mut().iter_mut().zip(dist) {
            if d <= r2 && *v < threshold {
                *v = material_hu;
            }
        }
    }

    if defects.node_blob_radius > 0.0 {
        let origin = grid.origin();
        for node in lattice.nodes() {
            let c = std::array::from_fn(|a| node[a] + origin[a]);
            stamp_sphere(&mut out, c, defects.node_blob_radius, material_hu);
        }
    }

    if defects.particle_density > 0.0 && defects.particle_radius > 0.0 {
        let axis = build_direction.index();
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let face_area = spacing[u] * spacing[v];
        let stride = [1, dims[0], dims[0] * dims[1]][axis];
        let faces: Vec<usize> = (0..out.len())
            .filter(|&f| {
                let idx = out.unflatten(f);
                idx[axis] > 0 && out.values()[f] >= threshold && out.values()[f - stride] < threshold
            })
            .collect();
        let mean = defects.particle_density * face_area * faces.len() as f64;
        if mean > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(defects.rng_seed);
            let count = Poisson::new(mean)
                .map_err(|e| LatticeError::InvalidSpec(format!("particle count: {e}")))?
                .sample(&mut rng) as usize;
            for _ in 0..count {
                let f = faces[rng.gen_range(0..faces.len())];
                let mut c = out.voxel_center(out.unflatten(f));
                c[axis] -= 0.5 * spacing[axis];
                c[u] += (rng.gen::<f64>() - 0.5) * spacing[u];
                c[v] += (rng.gen::<f64>() - 0.5) * spacing[v];
                stamp_sphere(&mut out, c, defects.particle_radius, material_hu);
            }
        }
    }
    Ok(out)
}

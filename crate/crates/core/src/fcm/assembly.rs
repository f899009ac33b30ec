//! Global system assembly: voxel-scaled cell stiffness, boundary penalty and
//! traction terms, and body loads.
//!
//! Boundary terms are integrated over the voxel faces of the extended-domain
//! boundary that a region selects. Each face is weighted by the indicator of
//! the voxel behind it, so loads and constraints act on material rather than
//! on the fictitious void.

use rayon::prelude::*;

use super::basis::{eval_modes, gauss_legendre};
use super::mesh::FcmMesh;
use super::template::{full_cell, voxel_block, AxisIntegrals, DenseMatrix};
use super::{ElasticMaterial, FcmError};
use crate::sparse::CsrMatrix;
use crate::voxel::IndicatorField;

const CELL_BATCH: usize = 128;

/// Axis-aligned box in world coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    fn contains_coord(&self, axis: usize, x: f64, tol: f64) -> bool {
        x >= self.min[axis] - tol && x <= self.max[axis] + tol
    }

    /// Half-open test used for face centres, so that a box `k` voxels wide
    /// selects exactly `k` rows of faces.
    fn contains_centre(&self, axis: usize, x: f64, tol: f64) -> bool {
        x >= self.min[axis] - tol && x < self.max[axis] - tol
    }
}

/// Affine displacement field `u(x) = constant + gradient * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineField {
    pub constant: [f64; 3],
    /// `gradient[i][j] = du_i / dx_j`
    pub gradient: [[f64; 3]; 3],
}

impl AffineField {
    pub fn constant(value: [f64; 3]) -> Self {
        Self { constant: value, gradient: [[0.0; 3]; 3] }
    }

    pub fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| self.constant[i] + (0..3).map(|j| self.gradient[i][j] * x[j]).sum::<f64>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BcKind {
    /// `penalty * int (u - value) . v dA` on the selected components.
    PenaltyDirichlet { penalty: f64, value: AffineField },
    /// Surface traction (MPa) on the selected components.
    Neumann { traction: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition {
    pub kind: BcKind,
    /// Box selecting faces of the extended domain.
    pub region: Aabb,
    /// Constrained or loaded displacement components.
    pub components: [bool; 3],
}

impl BoundaryCondition {
    pub fn dirichlet(region: Aabb, components: [bool; 3], value: [f64; 3], penalty: f64) -> Self {
        Self { kind: BcKind::PenaltyDirichlet { penalty, value: AffineField::constant(value) }, region, components }
    }

    pub fn neumann(region: Aabb, traction: [f64; 3]) -> Self {
        Self { kind: BcKind::Neumann { traction }, region, components: [true; 3] }
    }

    pub fn validate(&self) -> Result<(), FcmError> {
        if (0..3).any(|a| !(self.region.min[a] <= self.region.max[a])) {
            return Err(FcmError::Configuration(format!("degenerate region {:?}", self.region)));
        }
        if !self.components.iter().any(|&c| c) {
            return Err(FcmError::Configuration("boundary condition selects no component".into()));
        }
        if let BcKind::PenaltyDirichlet { penalty, .. } = self.kind {
            if !(penalty > 0.0 && penalty.is_finite()) {
                return Err(FcmError::Configuration(format!("penalty must be positive, got {penalty}")));
            }
        }
        Ok(())
    }
}

/// Assembled linear system `K u = f`.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn n_dofs(&self) -> usize {
        self.rhs.len()
    }
}

/// Piece of the extended-domain boundary selected by a region: a whole voxel
/// face, or a line across a voxel face when the region has zero thickness in
/// one tangential direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    /// Face normal axis.
    pub axis: usize,
    /// `false` for the min side, `true` for the max side.
    pub high: bool,
    /// Extended-domain voxel index of the voxel behind the face.
    pub voxel: [usize; 3],
    /// Indicator of that voxel.
    pub alpha: f64,
    /// `Some((tangential axis, coordinate))` for a line piece.
    pub line: Option<(usize, f64)>,
    /// Area (mm^2) of a face piece or length (mm) of a line piece.
    pub measure: f64,
}

/// Tangential extent of a region along one axis of a boundary face.
enum Span {
    Interval,
    Point(f64),
}

/// Boundary pieces selected by `region`.
///
/// Along each tangential axis of a boundary face the region either has a
/// positive width, in which case voxel faces whose centres lie in the
/// half-open range `[min, max)` are taken (so a box `k` voxels wide selects
/// exactly `k` rows), or zero width, which selects the line at that
/// coordinate. Lines are only taken when the region is also flat in the
/// normal direction. Regions of zero width in both tangential axes select
/// nothing.
pub fn boundary_faces(mesh: &FcmMesh, indicator: &IndicatorField, region: &Aabb) -> Vec<BoundaryFace> {
    let counts = mesh.voxel_counts();
    let sp = mesh.voxel_spacing();
    let (lo, hi) = (mesh.domain_min(), mesh.domain_max());
    let grid = indicator.grid();
    let gdims = grid.dims();
    let alpha_at = |voxel: [usize; 3]| {
        if (0..3).all(|a| voxel[a] < gdims[a]) {
            indicator.alpha_of(grid.values()[grid.flat_index(voxel[0], voxel[1], voxel[2])])
        } else {
            indicator.epsilon()
        }
    };
    let mut out = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let span = |t: usize| {
            if region.max[t] - region.min[t] <= 1e-9 * sp[t] {
                Span::Point(0.5 * (region.min[t] + region.max[t]))
            } else {
                Span::Interval
            }
        };
        let (su, sv) = (span(u), span(v));
        let flat_normal = matches!(span(axis), Span::Point(_));
        match (&su, &sv) {
            (Span::Point(_), Span::Point(_)) => continue,
            // A zero-width region off this face's plane is a face or line of
            // another orientation.
            (Span::Point(_), _) | (_, Span::Point(_)) if !flat_normal => continue,
            _ => {}
        }
        // Voxel rows along tangential axis t selected by the region.
        let rows = |t: usize, s: &Span| -> Vec<usize> {
            match *s {
                Span::Interval => (0..counts[t])
                    .filter(|&i| region.contains_centre(t, lo[t] + (i as f64 + 0.5) * sp[t], 1e-9 * sp[t]))
                    .collect(),
                Span::Point(c) => {
                    let tol = 1e-9 * sp[t];
                    if c < lo[t] - tol || c > hi[t] + tol {
                        Vec::new()
                    } else {
                        vec![(((c - lo[t]) / sp[t]).floor().max(0.0) as usize).min(counts[t] - 1)]
                    }
                }
            }
        };
        let (ru, rv) = (rows(u, &su), rows(v, &sv));
        for high in [false, true] {
            let x = if high { hi[axis] } else { lo[axis] };
            if !region.contains_coord(axis, x, 1e-9 * sp[axis]) {
                continue;
            }
            for &iv in &rv {
                for &iu in &ru {
                    let mut voxel = [0; 3];
                    voxel[axis] = if high { counts[axis] - 1 } else { 0 };
                    voxel[u] = iu;
                    voxel[v] = iv;
                    let (line, measure) = match (&su, &sv) {
                        (Span::Point(c), _) => (Some((u, *c)), sp[v]),
                        (_, Span::Point(c)) => (Some((v, *c)), sp[u]),
                        _ => (None, sp[u] * sp[v]),
                    };
                    out.push(BoundaryFace { axis, high, voxel, alpha: alpha_at(voxel), line, measure });
                }
            }
        }
    }
    out
}

/// Indicator-weighted measure (area, or length for line regions) of the
/// boundary selected by `region`.
pub fn weighted_boundary_area(mesh: &FcmMesh, indicator: &IndicatorField, region: &Aabb) -> f64 {
    boundary_faces(mesh, indicator, region).iter().map(|f| f.alpha * f.measure).sum()
}

/// Row layout of the structured sparsity pattern.
struct Pattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
}

fn build_pattern(mesh: &FcmMesh) -> Result<Pattern, FcmError> {
    let n1: [usize; 3] = std::array::from_fn(|a| mesh.n_1d(a));
    let n_dofs = mesh.n_dofs();
    if n_dofs > u32::MAX as usize {
        return Err(FcmError::InvalidArgument(format!("{n_dofs} dofs exceed the 32-bit column index range")));
    }
    let ranges: [Vec<(usize, usize)>; 3] =
        std::array::from_fn(|a| (0..n1[a]).map(|g| mesh.coupled_range_1d(a, g)).collect());
    let mut row_ptr = Vec::with_capacity(n_dofs + 1);
    row_ptr.push(0usize);
    let mut total = 0usize;
    for gz in 0..n1[2] {
        for gy in 0..n1[1] {
            for gx in 0..n1[0] {
                let w = 3
                    * (ranges[0][gx].1 - ranges[0][gx].0 + 1)
                    * (ranges[1][gy].1 - ranges[1][gy].0 + 1)
                    * (ranges[2][gz].1 - ranges[2][gz].0 + 1);
                for _ in 0..3 {
                    total += w;
                    row_ptr.push(total);
                }
            }
        }
    }
    let mut col_idx = Vec::with_capacity(total);
    for r in 0..n_dofs {
        let g = mesh.scalar_coords(r / 3);
        let (rx, ry, rz) = (ranges[0][g[0]], ranges[1][g[1]], ranges[2][g[2]]);
        for hz in rz.0..=rz.1 {
            for hy in ry.0..=ry.1 {
                for hx in rx.0..=rx.1 {
                    let s = hx + n1[0] * (hy + n1[1] * hz);
                    for comp in 0..3 {
                        col_idx.push((3 * s + comp) as u32);
                    }
                }
            }
        }
    }
    Ok(Pattern { row_ptr, col_idx })
}

/// Scatters local blocks into the structured pattern in O(1) per entry.
struct Scatter<'a> {
    mesh: &'a FcmMesh,
    row_ptr: &'a [usize],
    n1: [usize; 3],
}

impl Scatter<'_> {
    /// Position of `(row scalar g, column scalar h)` in the row of `3 * s(g) + i`.
    #[inline]
    fn offset(&self, g: [usize; 3], h: [usize; 3]) -> usize {
        let mut off = 0;
        for a in (0..3).rev() {
            let (lo, hi) = self.mesh.coupled_range_1d(a, g[a]);
            off = off * (hi - lo + 1) + (h[a] - lo);
        }
        off
    }

    fn row_start(&self, g: [usize; 3], comp: usize) -> usize {
        let s = g[0] + self.n1[0] * (g[1] + self.n1[1] * g[2]);
        self.row_ptr[3 * s + comp]
    }

    /// Add a dense block over the scalar lists `rows` x `cols` (both given as
    /// global 1D index triples) with 3x3 component sub-blocks.
    fn add(&self, values: &mut [f64], rows: &[[usize; 3]], cols: &[[usize; 3]], block: &DenseMatrix) {
        for (li, &g) in rows.iter().enumerate() {
            let starts = [self.row_start(g, 0), self.row_start(g, 1), self.row_start(g, 2)];
            for (lj, &h) in cols.iter().enumerate() {
                let off = self.offset(g, h);
                for i in 0..3 {
                    let base = starts[i] + 3 * off;
                    for k in 0..3 {
                        values[base + k] += block.get(3 * li + i, 3 * lj + k);
                    }
                }
            }
        }
    }
}

fn cell_scalar_coords(mesh: &FcmMesh, cell: [usize; 3]) -> Vec<[usize; 3]> {
    (0..mesh.scalars_per_cell())
        .map(|l| {
            let m = mesh.local_modes(l);
            std::array::from_fn(|a| mesh.global_1d(cell[a], m[a]))
        })
        .collect()
}

/// Indicator values of the voxels of one cell, local order, padding = epsilon.
fn cell_alphas(mesh: &FcmMesh, indicator: &IndicatorField, cell: [usize; 3]) -> Vec<f64> {
    let [mx, my, mz] = mesh.voxels_per_cell();
    let values = indicator.grid().values();
    let mut out = Vec::with_capacity(mx * my * mz);
    for vz in 0..mz {
        for vy in 0..my {
            for vx in 0..mx {
                out.push(match mesh.voxel_of(cell, [vx, vy, vz]) {
                    Some(flat) => indicator.alpha_of(values[flat]),
                    None => indicator.epsilon(),
                });
            }
        }
    }
    out
}

fn check_compatible(mesh: &FcmMesh, indicator: &IndicatorField) -> Result<(), FcmError> {
    let grid = indicator.grid();
    if grid.dims() != mesh.grid_dims() || grid.spacing() != mesh.voxel_spacing() || grid.origin() != mesh.origin() {
        return Err(FcmError::InvalidArgument("mesh does not cover the indicator's voxel grid".into()));
    }
    Ok(())
}

/// Assemble the global stiffness matrix and load vector.
pub fn assemble(
    mesh: &FcmMesh,
    material: &ElasticMaterial,
    indicator: &IndicatorField,
    bcs: &[BoundaryCondition],
    body_force: Option<[f64; 3]>,
) -> Result<SparseSystem, FcmError> {
    check_compatible(mesh, indicator)?;
    material.validate()?;
    for bc in bcs {
        bc.validate()?;
    }
    let faces: Vec<Vec<BoundaryFace>> = bcs.iter().map(|bc| boundary_faces(mesh, indicator, &bc.region)).collect();
    if let Some(i) = faces.iter().position(|f| f.is_empty()) {
        return Err(FcmError::Configuration(format!(
            "boundary condition region {:?} selects no face of the extended domain [{:?}, {:?}]",
            bcs[i].region,
            mesh.domain_min(),
            mesh.domain_max()
        )));
    }
    if indicator.grid().count_material(indicator.threshold()) == 0 {
        log::warn!("voxel grid contains no material; the system is epsilon-scaled only");
    }

    let order = mesh.order();
    let vpc = mesh.voxels_per_cell();
    let h = mesh.cell_size();
    let axes: [AxisIntegrals; 3] = std::array::from_fn(|a| AxisIntegrals::new(order, vpc[a], h[a]));
    let (lambda, mu) = material.lame();
    let mut templates = Vec::with_capacity(vpc.iter().product());
    for vz in 0..vpc[2] {
        for vy in 0..vpc[1] {
            for vx in 0..vpc[0] {
                templates.push(voxel_block(&axes, [vx, vy, vz], lambda, mu));
            }
        }
    }
    let k_full = full_cell(&templates);

    let pattern = build_pattern(mesh)?;
    let mut values = vec![0.0; pattern.col_idx.len()];
    let n1 = std::array::from_fn(|a| mesh.n_1d(a));
    let scatter = Scatter { mesh, row_ptr: &pattern.row_ptr, n1 };
    let eps = indicator.epsilon();

    let n_cells = mesh.n_cells();
    let mut start = 0;
    while start < n_cells {
        let end = (start + CELL_BATCH).min(n_cells);
        let blocks: Vec<Option<DenseMatrix>> = (start..end)
            .into_par_iter()
            .map(|c| {
                let alphas = cell_alphas(mesh, indicator, mesh.cell_coords(c));
                if alphas.iter().all(|&a| a == 1.0) {
                    return None;
                }
                let mut k = DenseMatrix::zeros(k_full.n());
                if alphas.iter().all(|&a| a == eps) {
                    k.add_scaled(eps, &k_full);
                } else {
                    for (a, t) in alphas.iter().zip(&templates) {
                        k.add_scaled(*a, t);
                    }
                }
                Some(k)
            })
            .collect();
        for (c, block) in (start..end).zip(&blocks) {
            let cell = mesh.cell_coords(c);
            let sc = cell_scalar_coords(mesh, cell);
            scatter.add(&mut values, &sc, &sc, block.as_ref().unwrap_or(&k_full));
        }
        start = end;
    }

    let mut rhs = vec![0.0; mesh.n_dofs()];
    if let Some(b) = body_force {
        add_body_force(mesh, indicator, &axes, b, &mut rhs);
    }
    for (bc, fs) in bcs.iter().zip(&faces) {
        for face in fs {
            add_face_terms(mesh, &scatter, &mut values, &mut rhs, bc, face);
        }
    }

    let matrix = CsrMatrix::from_parts(mesh.n_dofs(), pattern.row_ptr, pattern.col_idx, values);
    Ok(SparseSystem { matrix, rhs })
}

fn add_body_force(mesh: &FcmMesh, indicator: &IndicatorField, axes: &[AxisIntegrals; 3], b: [f64; 3], rhs: &mut [f64]) {
    let vpc = mesh.voxels_per_cell();
    let q = mesh.modes_per_axis();
    for c in 0..mesh.n_cells() {
        let cell = mesh.cell_coords(c);
        let alphas = cell_alphas(mesh, indicator, cell);
        let scalars = mesh.cell_scalars(cell);
        for (lv, &alpha) in alphas.iter().enumerate() {
            let v = [lv % vpc[0], (lv / vpc[0]) % vpc[1], lv / (vpc[0] * vpc[1])];
            for (l, &s) in scalars.iter().enumerate() {
                let m = [l % q, (l / q) % q, l / (q * q)];
                let w =
                    alpha * axes[0].integral[v[0]][m[0]] * axes[1].integral[v[1]][m[1]] * axes[2].integral[v[2]][m[2]];
                for comp in 0..3 {
                    rhs[3 * s + comp] += w * b[comp];
                }
            }
        }
    }
}

/// Quadrature points along one tangential axis of a boundary piece:
/// `(local coordinate in the cell, world coordinate, weight in mm)`.
fn tangential_rule(
    mesh: &FcmMesh,
    t: usize,
    voxel: usize,
    cell: usize,
    point: Option<f64>,
    pts: &[f64],
    wts: &[f64],
) -> Vec<(f64, f64, f64)> {
    let h = mesh.cell_size()[t];
    let sp = mesh.voxel_spacing()[t];
    let o = mesh.origin()[t];
    let xi_of = |x: f64| (2.0 * (x - o - cell as f64 * h) / h - 1.0).clamp(-1.0, 1.0);
    match point {
        Some(c) => vec![(xi_of(c), c, 1.0)],
        None => pts
            .iter()
            .zip(wts)
            .map(|(t, w)| {
                let x = o + (voxel as f64 + 0.5 * (1.0 + t)) * sp;
                (xi_of(x), x, 0.5 * w * sp)
            })
            .collect(),
    }
}

fn add_face_terms(
    mesh: &FcmMesh,
    scatter: &Scatter,
    values: &mut [f64],
    rhs: &mut [f64],
    bc: &BoundaryCondition,
    face: &BoundaryFace,
) {
    let q = mesh.modes_per_axis();
    let order = mesh.order();
    let vpc = mesh.voxels_per_cell();
    let a = face.axis;
    let (u, v) = ((a + 1) % 3, (a + 2) % 3);
    let cell: [usize; 3] = std::array::from_fn(|d| face.voxel[d] / vpc[d]);
    let normal_mode = if face.high { 1 } else { 0 };
    // Face functions: modes (mu, mv) with the normal mode fixed.
    let mut coords = Vec::with_capacity(q * q);
    let mut modes = Vec::with_capacity(q * q);
    for mv in 0..q {
        for mu in 0..q {
            let mut m = [0; 3];
            m[a] = normal_mode;
            m[u] = mu;
            m[v] = mv;
            modes.push((mu, mv));
            coords.push(std::array::from_fn(|d| mesh.global_1d(cell[d], m[d])));
        }
    }
    let scalar = |g: [usize; 3]| g[0] + scatter.n1[0] * (g[1] + scatter.n1[1] * g[2]);
    let (pts, wts) = gauss_legendre(order + 1);
    let point = |t: usize| face.line.and_then(|(ax, c)| (ax == t).then_some(c));
    let rule_u = tangential_rule(mesh, u, face.voxel[u], cell[u], point(u), &pts, &wts);
    let rule_v = tangential_rule(mesh, v, face.voxel[v], cell[v], point(v), &pts, &wts);
    let (mut nu, mut du) = (vec![0.0; q], vec![0.0; q]);
    let (mut nv, mut dv) = (vec![0.0; q], vec![0.0; q]);
    let mut x = [0.0; 3];
    x[a] = if face.high { mesh.domain_max()[a] } else { mesh.domain_min()[a] };
    let n = modes.len();
    let mut block = DenseMatrix::zeros(3 * n);
    let mut has_block = false;
    for &(xiv, xv, wv) in &rule_v {
        eval_modes(order, xiv, &mut nv, &mut dv);
        for &(xiu, xu, wu) in &rule_u {
            eval_modes(order, xiu, &mut nu, &mut du);
            x[u] = xu;
            x[v] = xv;
            let w = face.alpha * wu * wv;
            let shape: Vec<f64> = modes.iter().map(|&(mu, mv)| nu[mu] * nv[mv]).collect();
            match bc.kind {
                BcKind::Neumann { traction } => {
                    for (i, &g) in coords.iter().enumerate() {
                        for comp in 0..3 {
                            if bc.components[comp] {
                                rhs[3 * scalar(g) + comp] += w * shape[i] * traction[comp];
                            }
                        }
                    }
                }
                BcKind::PenaltyDirichlet { penalty, value } => {
                    has_block = true;
                    let pw = penalty * w;
                    let uhat = value.eval(x);
                    for i in 0..n {
                        let s = scalar(coords[i]);
                        for comp in 0..3 {
                            if bc.components[comp] {
                                rhs[3 * s + comp] += pw * shape[i] * uhat[comp];
                            }
                        }
                        for j in i..n {
                            let m = pw * shape[i] * shape[j];
                            for comp in 0..3 {
                                if bc.components[comp] {
                                    let (r, c) = (3 * i + comp, 3 * j + comp);
                                    let val = block.get(r, c) + m;
                                    block.set(r, c, val);
                                    block.set(c, r, val);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if has_block {
        scatter.add(values, &coords, &coords, &block);
    }
}

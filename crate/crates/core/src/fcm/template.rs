//! Voxel-wise pre-integrated stiffness blocks of the reference cell.
//!
//! Every voxel of a cell is integrated with its own `(p+1)^3` Gauss rule.
//! The rule is a tensor product, so each block is assembled from 1D
//! integrals of mode products over the voxel's interval along each axis.

use super::basis::{eval_modes, gauss_legendre};
use super::{ElasticMaterial, FcmError};

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, scale: f64, other: &DenseMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data.chunks(self.n).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }
}

/// 1D integrals of mode products over each voxel interval along one axis.
#[derive(Debug, Clone)]
pub(crate) struct AxisIntegrals {
    pub q: usize,
    /// `[v][a * q + b] = int N_a N_b dx`
    pub mass: Vec<Vec<f64>>,
    /// `[v][a * q + b] = int N_a' N_b' dx`
    pub grad: Vec<Vec<f64>>,
    /// `[v][a * q + b] = int N_a' N_b dx`
    pub mixed: Vec<Vec<f64>>,
    /// `[v][a] = int N_a dx`
    pub integral: Vec<Vec<f64>>,
}

impl AxisIntegrals {
    pub fn new(order: usize, voxels: usize, cell_size: f64) -> Self {
        let q = order + 1;
        let (pts, wts) = gauss_legendre(order + 1);
        let jac = 0.5 * cell_size;
        let dxi_dx = 2.0 / cell_size;
        let mut vals = vec![0.0; q];
        let mut ders = vec![0.0; q];
        let mut out = Self {
            q,
            mass: vec![vec![0.0; q * q]; voxels],
            grad: vec![vec![0.0; q * q]; voxels],
            mixed: vec![vec![0.0; q * q]; voxels],
            integral: vec![vec![0.0; q]; voxels],
        };
        for v in 0..voxels {
            let lo = -1.0 + 2.0 * v as f64 / voxels as f64;
            let hi = -1.0 + 2.0 * (v + 1) as f64 / voxels as f64;
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for (t, w) in pts.iter().zip(&wts) {
                eval_modes(order, mid + half * t, &mut vals, &mut ders);
                let wx = w * half * jac;
                for a in 0..q {
                    out.integral[v][a] += wx * vals[a];
                    for b in 0..q {
                        out.mass[v][a * q + b] += wx * vals[a] * vals[b];
                        out.grad[v][a * q + b] += wx * ders[a] * ders[b] * dxi_dx * dxi_dx;
                        out.mixed[v][a * q + b] += wx * ders[a] * vals[b] * dxi_dx;
                    }
                }
            }
            for a in 0..q {
                for b in 0..a {
                    out.mass[v][a * q + b] = out.mass[v][b * q + a];
                    out.grad[v][a * q + b] = out.grad[v][b * q + a];
                }
            }
        }
        out
    }
}

/// Stiffness block of one voxel from the three axis integral tables.
pub(crate) fn voxel_block(axes: &[AxisIntegrals; 3], voxel: [usize; 3], lambda: f64, mu: f64) -> DenseMatrix {
    let q = axes[0].q;
    let nsc = q * q * q;
    let modes = |l: usize| [l % q, (l / q) % q, l / (q * q)];
    let mut block = DenseMatrix::zeros(3 * nsc);
    let mut g = [[0.0f64; 3]; 3];
    for si in 0..nsc {
        let mi = modes(si);
        for sj in si..nsc {
            let mj = modes(sj);
            for (j, gj) in g.iter_mut().enumerate() {
                for (l, gjl) in gj.iter_mut().enumerate() {
                    let mut prod = 1.0;
                    for (d, ax) in axes.iter().enumerate() {
                        let v = voxel[d];
                        let f = match (d == j, d == l) {
                            (true, true) => ax.grad[v][mi[d] * q + mj[d]],
                            (true, false) => ax.mixed[v][mi[d] * q + mj[d]],
                            (false, true) => ax.mixed[v][mj[d] * q + mi[d]],
                            (false, false) => ax.mass[v][mi[d] * q + mj[d]],
                        };
                        prod *= f;
                    }
                    *gjl = prod;
                }
            }
            let trace = g[0][0] + g[1][1] + g[2][2];
            for i in 0..3 {
                for k in 0..3 {
                    let mut val = lambda * g[i][k] + mu * g[k][i];
                    if i == k {
                        val += mu * trace;
                    }
                    let (r, c) = (3 * si + i, 3 * sj + k);
                    if si == sj && c < r {
                        continue;
                    }
                    block.set(r, c, val);
                    block.set(c, r, val);
                }
            }
        }
    }
    block
}

/// Exact stiffness blocks `int_voxel B^T C B dV` for every voxel position in
/// the reference cell, ordered `vx + m_x * (vy + m_y * vz)`.
pub fn voxel_stiffness_template(
    order: usize,
    voxels_per_cell: [usize; 3],
    cell_size: [f64; 3],
    material: &ElasticMaterial,
) -> Result<Vec<DenseMatrix>, FcmError> {
    if !(1..=10).contains(&order) {
        return Err(FcmError::InvalidArgument(format!("order must lie in 1..=10, got {order}")));
    }
    if voxels_per_cell.iter().any(|&m| m == 0) || cell_size.iter().any(|&h| !(h > 0.0)) {
        return Err(FcmError::InvalidArgument("degenerate cell geometry".into()));
    }
    material.validate()?;
    let axes: [AxisIntegrals; 3] = std::array::from_fn(|a| AxisIntegrals::new(order, voxels_per_cell[a], cell_size[a]));
    let (lambda, mu) = material.lame();
    let [mx, my, mz] = voxels_per_cell;
    let mut out = Vec::with_capacity(mx * my * mz);
    for vz in 0..mz {
        for vy in 0..my {
            for vx in 0..mx {
                out.push(voxel_block(&axes, [vx, vy, vz], lambda, mu));
            }
        }
    }
    Ok(out)
}

/// Sum of all voxel templates, i.e. the fully material cell.
pub fn full_cell(templates: &[DenseMatrix]) -> DenseMatrix {
    let mut k = DenseMatrix::zeros(templates[0].n());
    for t in templates {
        k.add_scaled(1.0, t);
    }
    k
}

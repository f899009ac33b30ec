//! Point evaluation of displacement, strain and von Mises stress.

use super::basis::eval_modes;
use super::mesh::FcmMesh;
use super::{ElasticMaterial, FcmError};

struct Modes1d {
    val: [Vec<f64>; 3],
    der: [Vec<f64>; 3],
}

fn modes_at(mesh: &FcmMesh, xi: [f64; 3]) -> Modes1d {
    let q = mesh.modes_per_axis();
    let mut m = Modes1d { val: std::array::from_fn(|_| vec![0.0; q]), der: std::array::from_fn(|_| vec![0.0; q]) };
    for a in 0..3 {
        eval_modes(mesh.order(), xi[a], &mut m.val[a], &mut m.der[a]);
    }
    m
}

fn check_len(mesh: &FcmMesh, solution: &[f64]) -> Result<(), FcmError> {
    if solution.len() != mesh.n_dofs() {
        return Err(FcmError::InvalidArgument(format!(
            "solution has {} entries, mesh has {} dofs",
            solution.len(),
            mesh.n_dofs()
        )));
    }
    Ok(())
}

/// Displacement at local coordinates `xi` of `cell`.
pub fn displacement_in_cell(mesh: &FcmMesh, solution: &[f64], cell: [usize; 3], xi: [f64; 3]) -> [f64; 3] {
    let m = modes_at(mesh, xi);
    let mut u = [0.0; 3];
    for (l, s) in mesh.cell_scalars(cell).into_iter().enumerate() {
        let k = mesh.local_modes(l);
        let n = m.val[0][k[0]] * m.val[1][k[1]] * m.val[2][k[2]];
        for c in 0..3 {
            u[c] += n * solution[3 * s + c];
        }
    }
    u
}

/// Displacement (mm) at a world point inside the extended domain.
pub fn evaluate_displacement(mesh: &FcmMesh, solution: &[f64], point: [f64; 3]) -> Result<[f64; 3], FcmError> {
    check_len(mesh, solution)?;
    let (cell, xi) = mesh.locate(point)?;
    Ok(displacement_in_cell(mesh, solution, cell, xi))
}

/// Displacement gradient `g[i][j] = du_i / dx_j` at a world point.
pub fn evaluate_gradient(mesh: &FcmMesh, solution: &[f64], point: [f64; 3]) -> Result<[[f64; 3]; 3], FcmError> {
    check_len(mesh, solution)?;
    let (cell, xi) = mesh.locate(point)?;
    let h = mesh.cell_size();
    let m = modes_at(mesh, xi);
    let mut g = [[0.0; 3]; 3];
    for (l, s) in mesh.cell_scalars(cell).into_iter().enumerate() {
        let k = mesh.local_modes(l);
        let (v0, v1, v2) = (m.val[0][k[0]], m.val[1][k[1]], m.val[2][k[2]]);
        let dn = [
            m.der[0][k[0]] * v1 * v2 * 2.0 / h[0],
            v0 * m.der[1][k[1]] * v2 * 2.0 / h[1],
            v0 * v1 * m.der[2][k[2]] * 2.0 / h[2],
        ];
        for i in 0..3 {
            let ui = solution[3 * s + i];
            for j in 0..3 {
                g[i][j] += ui * dn[j];
            }
        }
    }
    Ok(g)
}

/// Equivalent stress `sqrt(3/2 s:s)` of the deviator of `stress`.
pub fn von_mises(stress: &[[f64; 3]; 3]) -> f64 {
    let p = (stress[0][0] + stress[1][1] + stress[2][2]) / 3.0;
    let mut ss = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let s = stress[i][j] - if i == j { p } else { 0.0 };
            ss += s * s;
        }
    }
    (1.5 * ss).max(0.0).sqrt()
}

/// Von Mises stress (MPa) of the bulk material at a world point.
pub fn evaluate_von_mises(
    mesh: &FcmMesh,
    solution: &[f64],
    material: &ElasticMaterial,
    point: [f64; 3],
) -> Result<f64, FcmError> {
    let g = evaluate_gradient(mesh, solution, point)?;
    let strain = std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * (g[i][j] + g[j][i])));
    Ok(von_mises(&material.stress(&strain)))
}

/// Coefficient vector that interpolates `f` at the cell vertices with all
/// higher modes zero. Exact for fields that are trilinear per cell.
pub fn nodal_interpolant(mesh: &FcmMesh, f: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
    let p = mesh.order();
    let cc = mesh.cell_counts();
    let mut out = vec![0.0; mesh.n_dofs()];
    for vz in 0..=cc[2] {
        for vy in 0..=cc[1] {
            for vx in 0..=cc[0] {
                let s = mesh.scalar_index([vx * p, vy * p, vz * p]);
                let u = f(mesh.vertex_position([vx, vy, vz]));
                out[3 * s..3 * s + 3].copy_from_slice(&u);
            }
        }
    }
    out
}

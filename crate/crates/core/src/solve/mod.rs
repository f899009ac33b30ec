//! Preconditioned conjugate gradients for the assembled elasticity system,
//! plus result-field export.

pub mod export;

pub use export::{export_fields, read_fields, read_solution, write_solution, FieldFile};

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::fcm::{FcmError, SparseSystem};
use crate::sparse::{dot, norm, CsrMatrix};

/// How often the recursive residual may claim convergence before the solver
/// gives up trusting it and stops at the true residual anyway.
const MAX_TRUE_RESIDUAL_CHECKS: usize = 8;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("CG did not converge in {iterations} iterations (relative residual {final_relative_residual:.3e})")]
    NotConverged { iterations: usize, final_relative_residual: f64, residual_history: Vec<f64> },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed {field}: {message}")]
    Format { path: PathBuf, field: &'static str, message: String },
    #[error(transparent)]
    Fcm(#[from] FcmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Target for `||K u - f|| / ||f||`.
    pub rel_tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { rel_tolerance: 1e-8, max_iterations: 20_000, preconditioner: Preconditioner::Jacobi }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance < 1.0) {
            return Err(SolveError::InvalidArgument(format!(
                "rel_tolerance must lie in (0, 1), got {}",
                self.rel_tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(SolveError::InvalidArgument("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// True relative residual of the returned solution.
    pub final_relative_residual: f64,
    /// Seconds.
    pub wall_time: f64,
    /// Recursive relative residual after each iteration, starting with 1.
    pub residual_history: Vec<f64>,
}

/// Solve `K u = f` by preconditioned CG from a zero initial guess.
pub fn cg_solve(system: &SparseSystem, config: &SolverConfig) -> Result<(Vec<f64>, SolveReport), SolveError> {
    cg_solve_monitored(&system.matrix, &system.rhs, config, |_, _| {})
}

/// As [`cg_solve`], calling `monitor(iteration, iterate)` after every update.
pub fn cg_solve_monitored(
    matrix: &CsrMatrix,
    rhs: &[f64],
    config: &SolverConfig,
    mut monitor: impl FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    config.validate()?;
    let n = matrix.n();
    if rhs.len() != n {
        return Err(SolveError::InvalidArgument(format!("rhs has {} entries, matrix is {n}x{n}", rhs.len())));
    }
    let start = Instant::now();
    let f_norm = norm(rhs);
    if f_norm == 0.0 {
        let report = SolveReport {
            iterations: 0,
            final_relative_residual: 0.0,
            wall_time: start.elapsed().as_secs_f64(),
            residual_history: vec![0.0],
        };
        return Ok((vec![0.0; n], report));
    }
    let inv_diag: Vec<f64> = match config.preconditioner {
        Preconditioner::None => vec![1.0; n],
        Preconditioner::Jacobi => {
            let d = matrix.diagonal();
            if let Some(i) = d.iter().position(|&v| !(v > 0.0)) {
                return Err(SolveError::InvalidArgument(format!(
                    "Jacobi preconditioner needs a positive diagonal, entry {i} is {}",
                    d[i]
                )));
            }
            d.iter().map(|v| 1.0 / v).collect()
        }
    };
    let precondition = |r: &[f64], z: &mut [f64]| {
        z.par_iter_mut().zip(r.par_iter()).zip(inv_diag.par_iter()).for_each(|((z, r), d)| *z = r * d);
    };

    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = vec![1.0];
    let mut checks = 0;
    let mut iterations = 0;
    let mut true_rel = 1.0;
    while iterations < config.max_iterations {
        matrix.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(SolveError::InvalidArgument(format!(
                "matrix is not positive definite along the search direction (p'Kp = {pq:e})"
            )));
        }
        let alpha = rz / pq;
        x.par_iter_mut().zip(p.par_iter()).for_each(|(x, p)| *x += alpha * p);
        r.par_iter_mut().zip(q.par_iter()).for_each(|(r, q)| *r -= alpha * q);
        iterations += 1;
        monitor(iterations, &x);
        let rel = norm(&r) / f_norm;
        history.push(rel);
        if rel <= config.rel_tolerance {
            // Confirm with the true residual; continue from it if drift crept in.
            matrix.matvec(&x, &mut q);
            r.par_iter_mut().zip(rhs.par_iter()).zip(q.par_iter()).for_each(|((r, f), kx)| *r = f - kx);
            true_rel = norm(&r) / f_norm;
            checks += 1;
            if true_rel <= config.rel_tolerance || checks >= MAX_TRUE_RESIDUAL_CHECKS {
                break;
            }
            precondition(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(p, z)| *p = z + beta * *p);
    }
    if history.last().copied().unwrap_or(1.0) > config.rel_tolerance || true_rel > config.rel_tolerance {
        matrix.matvec(&x, &mut q);
        let res: Vec<f64> = rhs.iter().zip(&q).map(|(f, kx)| f - kx).collect();
        true_rel = norm(&res) / f_norm;
    }
    if true_rel > config.rel_tolerance {
        return Err(SolveError::NotConverged {
            iterations,
            final_relative_residual: true_rel,
            residual_history: history,
        });
    }
    let report = SolveReport {
        iterations,
        final_relative_residual: true_rel,
        wall_time: start.elapsed().as_secs_f64(),
        residual_history: history,
    };
    log::debug!("CG converged in {iterations} iterations, residual {true_rel:.3e}, {:.2} s", report.wall_time);
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(m: CsrMatrix, rhs: Vec<f64>) -> SparseSystem {
        SparseSystem { matrix: m, rhs }
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let f = vec![1.0, -2.0, 3.5, 0.25];
        for pc in [Preconditioner::None, Preconditioner::Jacobi] {
            let cfg = SolverConfig { preconditioner: pc, ..Default::default() };
            let (u, rep) = cg_solve(&system(CsrMatrix::identity(4), f.clone()), &cfg).unwrap();
            assert_eq!(rep.iterations, 1);
            assert_eq!(u, f);
        }
    }

    #[test]
    fn two_by_two_hand_solution() {
        let m = CsrMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let (u, rep) = cg_solve(&system(m, vec![1.0, 2.0]), &SolverConfig::default()).unwrap();
        assert!((u[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((u[1] - 7.0 / 11.0).abs() < 1e-12);
        assert!(rep.iterations <= 2);
    }

    #[test]
    fn jacobi_inverts_ill_conditioned_diagonal() {
        let d = [1.0, 1e6, 3.0, 42.0, 7e5];
        let rows: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| if i == j { d[i] } else { 0.0 }).collect()).collect();
        let f = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let (u, rep) = cg_solve(&system(CsrMatrix::from_dense(&rows), f.clone()), &SolverConfig::default()).unwrap();
        assert!(rep.iterations <= 2);
        for i in 0..5 {
            assert!((u[i] - f[i] / d[i]).abs() <= 1e-12 * (f[i] / d[i]).abs());
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let (u, rep) = cg_solve(&system(CsrMatrix::identity(3), vec![0.0; 3]), &SolverConfig::default()).unwrap();
        assert_eq!(u, vec![0.0; 3]);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn non_convergence_carries_history() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let m = CsrMatrix::from_triplets(n, &t);
        let cfg = SolverConfig { max_iterations: 3, preconditioner: Preconditioner::None, ..Default::default() };
        match cg_solve(&system(m, vec![1.0; n]), &cfg) {
            Err(SolveError::NotConverged { iterations, residual_history, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(residual_history.len(), 4);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let s = system(CsrMatrix::identity(2), vec![1.0, 1.0]);
        for cfg in [
            SolverConfig { rel_tolerance: 0.0, ..Default::default() },
            SolverConfig { rel_tolerance: 1.0, ..Default::default() },
            SolverConfig { max_iterations: 0, ..Default::default() },
        ] {
            assert!(matches!(cg_solve(&s, &cfg), Err(SolveError::InvalidArgument(_))));
        }
    }
}

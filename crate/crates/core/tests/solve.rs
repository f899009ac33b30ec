use voxfcm::fcm::{
    assemble, nodal_interpolant, Aabb, AffineField, BcKind, BoundaryCondition, ElasticMaterial, FcmMesh, SparseSystem,
};
use voxfcm::solve::{
    cg_solve, cg_solve_monitored, export_fields, read_fields, read_solution, write_solution, Preconditioner,
    SolveError, SolverConfig,
};
use voxfcm::sparse::{dot, norm};
use voxfcm::voxel::{IndicatorField, VoxelGrid};

fn steel() -> ElasticMaterial {
    ElasticMaterial::new(190_000.0, 0.3, 1e-8).unwrap()
}

/// Cantilever-like block: clamped at y = 0, shear traction on y = max, with
/// a void pocket so that the system carries epsilon-scaled cells.
fn loaded_block(p: usize) -> (FcmMesh, SparseSystem) {
    let mut grid = VoxelGrid::filled([4, 8, 4], [0.5; 3], [0.0; 3], 1000).unwrap();
    for j in 3..5 {
        for i in 1..3 {
            grid.set([i, j, 1], 0).unwrap();
            grid.set([i, j, 2], 0).unwrap();
        }
    }
    let mat = steel();
    let ind = IndicatorField::new(&grid, 500, mat.epsilon).unwrap();
    let mesh = FcmMesh::new(&grid, p, [2, 2, 2]).unwrap();
    let big = 100.0;
    let bcs = [
        BoundaryCondition::dirichlet(
            Aabb::new([-big, 0.0, -big], [big, 0.0, big]),
            [true; 3],
            [0.0; 3],
            1e6 * 190_000.0,
        ),
        BoundaryCondition::neumann(Aabb::new([-big, 4.0, -big], [big, 4.0, big]), [0.0, 0.0, -5.0]),
    ];
    let sys = assemble(&mesh, &mat, &ind, &bcs, None).unwrap();
    (mesh, sys)
}

fn energy_norm(sys: &SparseSystem, e: &[f64]) -> f64 {
    dot(e, &sys.matrix.mul_vec(e)).max(0.0).sqrt()
}

#[test]
fn energy_norm_of_the_error_never_increases() {
    let (_, sys) = loaded_block(2);
    // The reference is four orders tighter than the monitored run.
    let tight = SolverConfig { rel_tolerance: 1e-12, max_iterations: 50_000, ..SolverConfig::default() };
    let (exact, _) = cg_solve(&sys, &tight).unwrap();
    let mut errors = vec![energy_norm(&sys, &exact)];
    let cfg = SolverConfig { rel_tolerance: 1e-8, ..SolverConfig::default() };
    cg_solve_monitored(&sys.matrix, &sys.rhs, &cfg, |_, x| {
        let e: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
        errors.push(energy_norm(&sys, &e));
    })
    .unwrap();
    assert!(errors.len() > 10);
    for (k, w) in errors.windows(2).enumerate() {
        assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12 * errors[0], "step {k}: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn converged_solution_satisfies_work_energy_identity() {
    let (_, sys) = loaded_block(2);
    let tol = 1e-8;
    let (u, report) = cg_solve(&sys, &SolverConfig { rel_tolerance: tol, ..SolverConfig::default() }).unwrap();
    assert!(report.final_relative_residual <= tol);
    let r = sys.matrix.mul_vec(&u);
    let (energy, work) = (dot(&u, &r), dot(&sys.rhs, &u));
    assert!((energy - work).abs() <= tol * work.abs(), "u'Ku = {energy}, f'u = {work}");
}

#[test]
fn returned_residual_is_the_true_residual() {
    let (_, sys) = loaded_block(3);
    for tol in [1e-6, 1e-9] {
        let (u, report) = cg_solve(&sys, &SolverConfig { rel_tolerance: tol, ..SolverConfig::default() }).unwrap();
        let ku = sys.matrix.mul_vec(&u);
        let r: Vec<f64> = sys.rhs.iter().zip(&ku).map(|(f, k)| f - k).collect();
        let true_rel = norm(&r) / norm(&sys.rhs);
        assert!(true_rel <= tol, "tol {tol}: {true_rel}");
        assert!((true_rel - report.final_relative_residual).abs() <= 1e-3 * tol);
        assert_eq!(report.residual_history.len(), report.iterations + 1);
    }
}

#[test]
fn compliance_is_insensitive_to_tolerance_below_1e6() {
    let (_, sys) = loaded_block(2);
    let compliance = |tol: f64| {
        let (u, _) = cg_solve(&sys, &SolverConfig { rel_tolerance: tol, ..SolverConfig::default() }).unwrap();
        dot(&sys.rhs, &u)
    };
    let reference = compliance(1e-12);
    for tol in [1e-6, 1e-8, 1e-10] {
        let c = compliance(tol);
        assert!((c - reference).abs() <= 1e-6 * reference, "tol {tol}: {c} vs {reference}");
    }
}

#[test]
fn unpreconditioned_and_jacobi_agree() {
    let (_, sys) = loaded_block(1);
    let base = SolverConfig { rel_tolerance: 1e-10, max_iterations: 100_000, ..SolverConfig::default() };
    let (a, ra) = cg_solve(&sys, &SolverConfig { preconditioner: Preconditioner::None, ..base }).unwrap();
    let (b, rb) = cg_solve(&sys, &base).unwrap();
    let scale = norm(&b);
    let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    assert!(norm(&diff) <= 1e-6 * scale);
    assert!(rb.iterations < ra.iterations, "Jacobi {} vs none {}", rb.iterations, ra.iterations);
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let (_, sys) = loaded_block(2);
    let cfg = SolverConfig::default();
    let (a, _) = cg_solve(&sys, &cfg).unwrap();
    let (b, _) = cg_solve(&sys, &cfg).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn non_convergence_reports_history() {
    let (_, sys) = loaded_block(2);
    let cfg = SolverConfig { rel_tolerance: 1e-12, max_iterations: 5, ..SolverConfig::default() };
    match cg_solve(&sys, &cfg) {
        Err(SolveError::NotConverged { iterations, final_relative_residual, residual_history }) => {
            assert_eq!(iterations, 5);
            assert_eq!(residual_history.len(), 6);
            assert!(final_relative_residual > 1e-12);
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
}

#[test]
fn patch_solution_matches_interpolant_at_every_dof() {
    let grid = VoxelGrid::filled([4, 4, 4], [0.5; 3], [0.0; 3], 1000).unwrap();
    let mat = steel();
    let ind = IndicatorField::new(&grid, 500, mat.epsilon).unwrap();
    let field = AffineField {
        constant: [0.01, 0.0, -0.004],
        gradient: [[0.001, 0.0, 0.0002], [0.0, -0.0003, 0.0], [0.0004, 0.0, 0.0007]],
    };
    for p in [1, 2] {
        let mesh = FcmMesh::new(&grid, p, [2, 2, 2]).unwrap();
        let bc = BoundaryCondition {
            kind: BcKind::PenaltyDirichlet { penalty: 1e8 * mat.youngs_modulus, value: field },
            region: Aabb::new(mesh.domain_min(), mesh.domain_max()),
            components: [true; 3],
        };
        let sys = assemble(&mesh, &mat, &ind, &[bc], None).unwrap();
        let tol = 1e-14;
        let (u, _) =
            cg_solve(&sys, &SolverConfig { rel_tolerance: tol, max_iterations: 50_000, ..SolverConfig::default() })
                .unwrap();
        // A linear field lives in the vertex modes; every bubble coefficient is zero.
        let want = nodal_interpolant(&mesh, |x| field.eval(x));
        let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (i, (a, b)) in u.iter().zip(&want).enumerate() {
            assert!((a - b).abs() <= 1e-8 * scale, "p={p} dof {i}: {a} vs {b}");
        }
    }
}

#[test]
fn exported_patch_field_is_the_imposed_ramp() {
    let grid = VoxelGrid::filled([4, 4, 4], [0.5; 3], [0.0; 3], 1000).unwrap();
    let mat = steel();
    let mesh = FcmMesh::new(&grid, 2, [2, 2, 2]).unwrap();
    let field =
        AffineField { constant: [0.0, 0.01, 0.0], gradient: [[0.0, 0.0, 0.0], [0.0, 0.002, 0.0], [0.001, 0.0, 0.0]] };
    let u = nodal_interpolant(&mesh, |x| field.eval(x));
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("u.soln");
    write_solution(&u, &cache).unwrap();
    let u = read_solution(&cache).unwrap();
    let path = dir.path().join("ramp.field");
    export_fields(&mesh, &u, &mat, 0.25, &path).unwrap();
    let f = read_fields(&path).unwrap();
    for k in 0..f.dims[2] {
        for j in 0..f.dims[1] {
            for i in 0..f.dims[0] {
                let x = f.point([i, j, k]);
                let got = f.displacement[f.flat([i, j, k])];
                let want = field.eval(x);
                for c in 0..3 {
                    assert!((got[c] - want[c]).abs() < 1e-14, "{x:?}: {got:?} vs {want:?}");
                }
            }
        }
    }
}

use voxfcm::beams::{rigidity_timoshenko, BeamSpec};
use voxfcm::fcm::ElasticMaterial;
use voxfcm::harness::{run_bending, run_virtual_tensile, BendingScenario, HarnessError, MeshParams, TensileScenario};
use voxfcm::voxel::VoxelGrid;

const E: f64 = 190_000.0;
const SPAN: f64 = 30.0;

fn steel() -> ElasticMaterial {
    ElasticMaterial::new(E, 0.3, 1e-8).unwrap()
}

/// Solid beam `nx x ny x nz` voxels whose length is the span plus one cell
/// of overhang at each end.
fn solid_beam(nx: usize, nz: usize, vox: f64, vpc: usize) -> VoxelGrid {
    let ny = (SPAN / vox).round() as usize + 2 * vpc;
    VoxelGrid::filled([nx, ny, nz], [vox; 3], [0.0; 3], 1000).unwrap()
}

fn scenario(grid: VoxelGrid, order: usize, vpc: usize) -> BendingScenario {
    let mut sc = BendingScenario::new(grid, SPAN, steel(), 500);
    sc.mesh = MeshParams { order, voxels_per_cell: [vpc; 3] };
    sc
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Solid beam with a deterministic scatter of interior voids, none touching
/// the top or bottom face.
fn perforated_beam() -> VoxelGrid {
    let mut grid = solid_beam(4, 8, 0.5, 4);
    let d = grid.dims();
    let mut state = 0x2545_f491_u64;
    for k in 1..d[2] - 1 {
        for j in 0..d[1] {
            for i in 0..d[0] {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if (state >> 33) % 7 == 0 {
                    grid.set([i, j, k], 0).unwrap();
                }
            }
        }
    }
    grid
}

#[test]
fn slender_solid_beam_matches_timoshenko() {
    // h / L = 1 / 30
    let grid = solid_beam(4, 4, 0.25, 4);
    let r = run_bending(&scenario(grid, 3, 4)).unwrap();
    let spec = BeamSpec::new(E, steel().shear_modulus(), SPAN, 1.0, 1.0).unwrap();
    let want = rigidity_timoshenko(&spec);
    assert!(rel(r.rigidity, want) < 0.05, "{} vs {want}", r.rigidity);
}

#[test]
fn rigidity_is_load_over_deflection() {
    let r = run_bending(&scenario(solid_beam(4, 4, 0.25, 4), 2, 4)).unwrap();
    assert_eq!(r.rigidity, 100.0 / r.midspan_deflection);
    assert_eq!(r.porosity, 0.0);
}

#[test]
fn doubling_the_load_leaves_rigidity_unchanged() {
    let mut sc = scenario(perforated_beam(), 2, 4);
    let a = run_bending(&sc).unwrap();
    sc.applied_load *= 2.0;
    let b = run_bending(&sc).unwrap();
    assert!(rel(b.rigidity, a.rigidity) < 1e-6, "{} vs {}", a.rigidity, b.rigidity);
    assert!(rel(b.midspan_deflection, 2.0 * a.midspan_deflection) < 1e-6);
}

#[test]
fn rigidity_is_mirror_invariant_about_midspan() {
    let grid = perforated_beam();
    let a = run_bending(&scenario(grid.clone(), 2, 4)).unwrap();
    let b = run_bending(&scenario(grid.mirrored(1), 2, 4)).unwrap();
    assert!(rel(b.rigidity, a.rigidity) < 1e-6, "{} vs {}", a.rigidity, b.rigidity);
}

#[test]
fn halving_the_load_strip_changes_rigidity_little() {
    // Desk voxel size: the strips are 1.0 and 0.5 mm wide.
    let vox = 0.25;
    let mut sc = scenario(solid_beam(8, 16, vox, 4), 2, 4);
    sc.load_strip_width = 4.0 * vox;
    let wide = run_bending(&sc).unwrap();
    sc.load_strip_width = 2.0 * vox;
    let narrow = run_bending(&sc).unwrap();
    assert!(rel(narrow.rigidity, wide.rigidity) < 5e-3, "{} vs {}", wide.rigidity, narrow.rigidity);
}

#[test]
fn penalty_factor_sweep_changes_rigidity_little() {
    let mut sc = scenario(perforated_beam(), 2, 4);
    let base = run_bending(&sc).unwrap().rigidity;
    let default = sc.penalty_factor;
    for f in [0.1, 10.0] {
        sc.penalty_factor = f * default;
        let d = run_bending(&sc).unwrap().rigidity;
        assert!(rel(d, base) < 5e-3, "x{f}: {d} vs {base}");
    }
}

#[test]
fn support_without_material_is_a_configuration_error() {
    let mut grid = solid_beam(4, 4, 0.25, 4);
    let d = grid.dims();
    // Remove the bottom layer so the supports touch only void.
    for j in 0..d[1] {
        for i in 0..d[0] {
            grid.set([i, j, 0], 0).unwrap();
        }
    }
    let err = run_bending(&scenario(grid, 2, 4)).unwrap_err();
    assert!(err.is_configuration(), "{err}");
}

#[test]
fn span_longer_than_beam_is_rejected() {
    let mut sc = scenario(solid_beam(4, 4, 0.25, 4), 2, 4);
    sc.span = 100.0;
    assert!(matches!(run_bending(&sc), Err(HarnessError::Config(_))));
}

#[test]
fn height_not_divisible_by_cells_is_rejected() {
    let grid = solid_beam(4, 6, 0.25, 4);
    assert!(matches!(run_bending(&scenario(grid, 2, 4)), Err(HarnessError::Config(_))));
}

fn tensile(grid: VoxelGrid) -> TensileScenario {
    let mut sc = TensileScenario::new(grid, steel(), 500);
    sc.mesh = MeshParams { order: 2, voxels_per_cell: [2; 3] };
    sc
}

#[test]
fn solid_bar_recovers_bulk_modulus() {
    let grid = VoxelGrid::filled([4, 16, 4], [0.5; 3], [0.0; 3], 1000).unwrap();
    let r = run_virtual_tensile(&tensile(grid)).unwrap();
    assert!(rel(r.effective_modulus, E) < 0.01, "{}", r.effective_modulus);
}

#[test]
fn void_bar_gives_epsilon_scaled_modulus() {
    let grid = VoxelGrid::filled([4, 16, 4], [0.5; 3], [0.0; 3], 0).unwrap();
    let r = run_virtual_tensile(&tensile(grid)).unwrap();
    let want = 1e-8 * E;
    assert!(rel(r.effective_modulus, want) < 0.01, "{} vs {want}", r.effective_modulus);
}

#[test]
fn tensile_rejects_non_positive_strain() {
    let grid = VoxelGrid::filled([4, 16, 4], [0.5; 3], [0.0; 3], 1000).unwrap();
    let mut sc = tensile(grid);
    sc.strain = 0.0;
    assert!(matches!(run_virtual_tensile(&sc), Err(HarnessError::Config(_))));
}

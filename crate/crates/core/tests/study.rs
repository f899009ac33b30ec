use std::path::Path;

use voxfcm::beams::SampleSource;
use voxfcm::harness::{run_study_config, StudyConfig};

/// Four 1 x 4 x h cell beams (h = 1..4) on 1 mm finite cells, supports on
/// cell boundaries.
fn cad_study() -> String {
    let mut text = String::from("[study]\nspan = 14.0\norder = 2\nvoxels_per_cell = 2\n");
    for h in 1..=4 {
        text += &format!(
            "\n[specimen.cad-{h}]\nsource = \"fcm-cad\"\ncells = [1, 4, {h}]\nstrut_diameter = 1.0\nresolution = 0.5\n"
        );
    }
    text
}

#[test]
fn four_cad_beams_give_four_porosity_rows_one_fit_and_curves() {
    let cfg = StudyConfig::from_toml(&cad_study()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_study_config(&cfg, Path::new("."), dir.path()).unwrap();
    assert!(report.is_success(), "{:?}", report.failures);
    assert_eq!(report.specimens.len(), 4);

    let porosity = std::fs::read_to_string(dir.path().join("porosity.csv")).unwrap();
    assert_eq!(porosity.lines().count(), 5, "{porosity}");

    assert_eq!(report.fits.len(), 1);
    assert_eq!(report.fits[0].source, SampleSource::FcmCad);
    assert!(report.fits[0].fits.iter().all(|f| f.is_ok()));
    let gfit = std::fs::read_to_string(dir.path().join("gfit.txt")).unwrap();
    assert_eq!(gfit.matches("[fcm-cad]").count(), 1, "{gfit}");
    assert_eq!(gfit.matches("g_mm=").count(), 2, "{gfit}");

    // 50 curve samples per model
    let curves = std::fs::read_to_string(dir.path().join("normalized_curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2 * 50, "{curves}");
}

#[test]
fn study_without_specimens_is_rejected() {
    assert!(StudyConfig::from_toml("[study]\nspan = 14.0\n").is_err());
}

#[test]
fn specimen_needs_cells_or_volume() {
    let text = "[study]\n[specimen.a]\nsource = \"fcm-cad\"\nresolution = 0.5\n";
    assert!(StudyConfig::from_toml(text).is_err());
}

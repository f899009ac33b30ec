//! Batch driver: generate or load each specimen, measure porosity and
//! bending rigidity, then fit the gradient length per sample source.
//!
//! Configuration is TOML with a `[study]` table and one `[specimen.<id>]`
//! table per beam:
//!
//! ```toml
//! [study]
//! span = 30.0
//! youngs_modulus = 190000.0
//!
//! [specimen.1]
//! source = "fcm-cad"
//! cells = [2, 8, 1]
//! strut_diameter = 0.6
//! resolution = 0.25
//! ```
//!
//! Reports written to the output directory: `porosity.csv`, `rigidity.csv`,
//! `normalized.csv`, `normalized_curves.csv` and `gfit.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{run_bending, run_virtual_tensile, BendingScenario, HarnessError, MeshParams, TensileScenario};
use crate::beams::{
    fit_g, fmt12, format_fit_report, normalized_rigidity, read_samples_csv, rigidity_eb, rigidity_gradient,
    write_samples_csv, BeamModel, BeamSpec, GFit, GradientBeamSpec, RigiditySample, SampleSource,
};
use crate::fcm::{ElasticMaterial, DEFAULT_PENALTY_FACTOR};
use crate::latticegen::{inject_defects, voxelize_beam, Axis, DefectSpec, LatticeBeamSpec, OctetCellSpec};
use crate::solve::{Preconditioner, SolverConfig};
use crate::voxel::{porosity, read_volume, Hu, VoxelGrid};

/// Shear-to-Young ratio of the as-designed lattice used when no
/// `shear_ratio` is configured.
pub const DEFAULT_SHEAR_RATIO: f64 = 2742.0 / 7356.0;

/// Number of heights at which the fitted model curves are sampled.
pub const CURVE_SAMPLES: usize = 50;

fn default_span() -> f64 {
    30.0
}
fn default_load() -> f64 {
    100.0
}
fn default_e() -> f64 {
    190_000.0
}
fn default_nu() -> f64 {
    0.3
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_order() -> usize {
    2
}
fn default_vpc() -> usize {
    4
}
fn default_penalty() -> f64 {
    DEFAULT_PENALTY_FACTOR
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_tensile_tolerance() -> f64 {
    super::TENSILE_REL_TOLERANCE
}
fn default_max_iterations() -> usize {
    20_000
}
fn default_shear_ratio() -> f64 {
    DEFAULT_SHEAR_RATIO
}
fn default_cell_size() -> f64 {
    4.0
}
fn default_threshold() -> Hu {
    500
}
fn default_material_hu() -> Hu {
    1000
}

/// Global study settings.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySettings {
    /// Report directory, relative to the config file. Overridden by the
    /// caller's output argument.
    pub output_dir: Option<PathBuf>,
    /// Support distance (mm).
    #[serde(default = "default_span")]
    pub span: f64,
    /// Total load F (N).
    #[serde(default = "default_load")]
    pub applied_load: f64,
    /// Bulk Young's modulus of the solid phase (MPa).
    #[serde(default = "default_e")]
    pub youngs_modulus: f64,
    #[serde(default = "default_nu")]
    pub poisson_ratio: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_vpc")]
    pub voxels_per_cell: usize,
    /// Penalty in multiples of Young's modulus per mm.
    #[serde(default = "default_penalty")]
    pub penalty_factor: f64,
    #[serde(default = "default_tolerance")]
    pub rel_tolerance: f64,
    /// The tensile right-hand side is dominated by penalty terms, so its
    /// residual must be reduced further for the same accuracy.
    #[serde(default = "default_tensile_tolerance")]
    pub tensile_rel_tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// `G* / E*` of the lattice.
    #[serde(default = "default_shear_ratio")]
    pub shear_ratio: f64,
    /// Effective Young's modulus per sample source (MPa). Sources without
    /// an entry get E* from a virtual tensile test on their tallest
    /// specimen.
    #[serde(default)]
    pub effective_modulus: BTreeMap<String, f64>,
    /// Extra samples (e.g. experimental) in the rigidity CSV format.
    pub samples_csv: Option<PathBuf>,
}

/// Build defects applied to a generated lattice.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectConfig {
    #[serde(default)]
    pub strut_dilation: f64,
    #[serde(default)]
    pub node_blob_radius: f64,
    #[serde(default)]
    pub particle_density: f64,
    #[serde(default)]
    pub particle_radius: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// `x`, `y` or `z`.
    #[serde(default = "default_build_direction")]
    pub build_direction: String,
}

fn default_build_direction() -> String {
    "z".into()
}

/// One beam. Either `cells` (generated octet lattice) or `volume` (CVOL
/// file) must be given.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecimenConfig {
    /// `fcm-cad` or `fcm-ct`.
    pub source: String,
    /// Cell counts (width, length, height).
    pub cells: Option<[usize; 3]>,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    pub strut_diameter: Option<f64>,
    /// Voxel edge length (mm).
    pub resolution: Option<f64>,
    pub defects: Option<DefectConfig>,
    pub volume: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub threshold: Hu,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub study: StudySettings,
    #[serde(default)]
    pub specimen: BTreeMap<String, SpecimenConfig>,
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let s = &self.study;
        if self.specimen.is_empty() {
            return Err(HarnessError::Config("study has no [specimen.*] sections".into()));
        }
        if !(s.shear_ratio > 0.0 && s.shear_ratio.is_finite()) {
            return Err(HarnessError::Config(format!("shear_ratio must be positive, got {}", s.shear_ratio)));
        }
        for (name, e) in &s.effective_modulus {
            parse_source(name)?;
            if !(*e > 0.0 && e.is_finite()) {
                return Err(HarnessError::Config(format!("effective_modulus.{name} must be positive, got {e}")));
            }
        }
        for (id, sp) in &self.specimen {
            let src = parse_source(&sp.source)?;
            if src == SampleSource::Experimental {
                return Err(HarnessError::Config(format!(
                    "specimen.{id}: experimental samples come from samples_csv, not simulation"
                )));
            }
            match (&sp.cells, &sp.volume) {
                (Some(_), None) => {
                    if sp.strut_diameter.is_none() || sp.resolution.is_none() {
                        return Err(HarnessError::Config(format!(
                            "specimen.{id}: a generated lattice needs strut_diameter and resolution"
                        )));
                    }
                }
                (None, Some(_)) => {
                    if sp.defects.is_some() {
                        return Err(HarnessError::Config(format!(
                            "specimen.{id}: defects apply only to generated lattices"
                        )));
                    }
                }
                _ => return Err(HarnessError::Config(format!("specimen.{id}: give exactly one of cells or volume"))),
            }
            if let Some(d) = &sp.defects {
                parse_axis(&d.build_direction)?;
            }
        }
        Ok(())
    }

    fn material(&self) -> Result<ElasticMaterial, HarnessError> {
        let s = &self.study;
        Ok(ElasticMaterial::new(s.youngs_modulus, s.poisson_ratio, s.epsilon)?)
    }

    fn solver(&self, tol: f64) -> SolverConfig {
        SolverConfig {
            rel_tolerance: tol,
            max_iterations: self.study.max_iterations,
            preconditioner: Preconditioner::Jacobi,
        }
    }

    fn mesh(&self) -> MeshParams {
        MeshParams { order: self.study.order, voxels_per_cell: [self.study.voxels_per_cell; 3] }
    }
}

fn parse_source(s: &str) -> Result<SampleSource, HarnessError> {
    s.parse().map_err(|e: crate::beams::BeamError| HarnessError::Config(e.to_string()))
}

fn parse_axis(s: &str) -> Result<Axis, HarnessError> {
    match s {
        "x" => Ok(Axis::X),
        "y" => Ok(Axis::Y),
        "z" => Ok(Axis::Z),
        _ => Err(HarnessError::Config(format!("build_direction must be x, y or z, got {s:?}"))),
    }
}

/// Measurements of one specimen.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecimenResult {
    pub id: String,
    pub source: SampleSource,
    /// Beam width b (mm).
    pub width: f64,
    /// Beam height h (mm).
    pub height: f64,
    pub porosity: f64,
    pub rigidity: f64,
    pub n_dofs: usize,
    pub iterations: usize,
}

/// Fits for one sample source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFit {
    pub source: SampleSource,
    pub effective_modulus: f64,
    pub effective_shear_modulus: f64,
    pub width: f64,
    /// One fit per model, or the reason the fit failed.
    pub fits: Vec<Result<GFit, String>>,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub output_dir: PathBuf,
    /// Support distance (mm).
    pub span: f64,
    pub specimens: Vec<SpecimenResult>,
    pub fits: Vec<SourceFit>,
    /// `(stage or specimen id, message)` for everything that failed.
    pub failures: Vec<(String, String)>,
}

impl StudyReport {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Grid of a specimen, in beam axes.
pub fn specimen_grid(base: &Path, spec: &SpecimenConfig) -> Result<VoxelGrid, HarnessError> {
    if let Some(vol) = &spec.volume {
        return Ok(read_volume(base.join(vol))?);
    }
    let lattice = lattice_spec(spec)?;
    let grid = voxelize_beam(&lattice)?;
    match &spec.defects {
        Some(d) => {
            let defects = DefectSpec {
                strut_dilation: d.strut_dilation,
                node_blob_radius: d.node_blob_radius,
                particle_density: d.particle_density,
                particle_radius: d.particle_radius,
                rng_seed: d.rng_seed,
            };
            Ok(inject_defects(&grid, &lattice, &defects, parse_axis(&d.build_direction)?)?)
        }
        None => Ok(grid),
    }
}

fn lattice_spec(spec: &SpecimenConfig) -> Result<LatticeBeamSpec, HarnessError> {
    let missing = || HarnessError::Config("generated lattice needs cells, strut_diameter and resolution".into());
    Ok(LatticeBeamSpec {
        cells: spec.cells.ok_or_else(missing)?,
        cell: OctetCellSpec {
            cell_size: spec.cell_size,
            strut_diameter: spec.strut_diameter.ok_or_else(missing)?,
            material_hu: default_material_hu(),
            void_hu: 0,
        },
        resolution: spec.resolution.ok_or_else(missing)?,
    })
}

fn threshold_of(spec: &SpecimenConfig) -> Result<Hu, HarnessError> {
    match spec.volume {
        Some(_) => Ok(spec.threshold),
        None => Ok(lattice_spec(spec)?.cell.threshold()),
    }
}

fn run_specimen(
    cfg: &StudyConfig,
    base: &Path,
    id: &str,
    spec: &SpecimenConfig,
) -> Result<SpecimenResult, HarnessError> {
    let grid = specimen_grid(base, spec)?;
    let threshold = threshold_of(spec)?;
    let mut sc = BendingScenario::new(grid.clone(), cfg.study.span, cfg.material()?, threshold);
    sc.applied_load = cfg.study.applied_load;
    sc.mesh = cfg.mesh();
    sc.penalty_factor = cfg.study.penalty_factor;
    sc.solver = cfg.solver(cfg.study.rel_tolerance);
    let r = run_bending(&sc)?;
    let e = grid.extent();
    log::info!("specimen {id}: rigidity {} N/mm, {} dofs, {} iterations", r.rigidity, r.n_dofs, r.report.iterations);
    Ok(SpecimenResult {
        id: id.to_string(),
        source: parse_source(&spec.source)?,
        width: e[0],
        height: e[2],
        porosity: porosity(&grid, threshold),
        rigidity: r.rigidity,
        n_dofs: r.n_dofs,
        iterations: r.report.iterations,
    })
}

/// E* of a source: configured, or from a virtual tensile test on the
/// tallest specimen of that source.
fn source_modulus(
    cfg: &StudyConfig,
    base: &Path,
    source: SampleSource,
    done: &[SpecimenResult],
) -> Result<f64, HarnessError> {
    if let Some(e) = cfg.study.effective_modulus.get(source.as_str()) {
        return Ok(*e);
    }
    let tallest = done
        .iter()
        .filter(|s| s.source == source)
        .max_by(|a, b| a.height.total_cmp(&b.height).then_with(|| b.id.cmp(&a.id)))
        .ok_or_else(|| HarnessError::Config(format!("no {source} specimen to measure E* on")))?;
    let spec = &cfg.specimen[&tallest.id];
    let grid = specimen_grid(base, spec)?;
    let mut sc = TensileScenario::new(grid, cfg.material()?, threshold_of(spec)?);
    sc.mesh = cfg.mesh();
    sc.penalty_factor = cfg.study.penalty_factor;
    sc.solver = cfg.solver(cfg.study.tensile_rel_tolerance);
    let r = run_virtual_tensile(&sc)?;
    log::info!("{source}: E* = {} MPa from specimen {}", r.effective_modulus, tallest.id);
    Ok(r.effective_modulus)
}

/// Run every specimen, then fit g per source, and write the reports.
///
/// Stage failures are recorded and the study carries on; configuration
/// and I/O errors on the report directory abort it.
pub fn run_study(config_path: &Path, output: Option<PathBuf>) -> Result<StudyReport, HarnessError> {
    let cfg = StudyConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let output_dir = output
        .or_else(|| cfg.study.output_dir.as_ref().map(|d| base.join(d)))
        .ok_or_else(|| HarnessError::Config("no output directory given in the config or on the command line".into()))?;
    run_study_config(&cfg, &base, &output_dir)
}

/// As [`run_study`], with the config already parsed. Relative paths in the
/// config are resolved against `base`.
pub fn run_study_config(cfg: &StudyConfig, base: &Path, output_dir: &Path) -> Result<StudyReport, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(output_dir).map_err(|source| HarnessError::Io { path: output_dir.into(), source })?;
    let mut failures = Vec::new();
    let mut specimens = Vec::new();
    for (id, spec) in &cfg.specimen {
        match run_specimen(cfg, base, id, spec) {
            Ok(r) => specimens.push(r),
            Err(e) => {
                log::error!("specimen {id}: {e}");
                failures.push((format!("specimen.{id}"), e.to_string()));
            }
        }
    }
    let extra = match &cfg.study.samples_csv {
        Some(p) => {
            let path = base.join(p);
            let file = fs::File::open(&path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
            read_samples_csv(std::io::BufReader::new(file))?
        }
        None => Vec::new(),
    };

    let mut fits = Vec::new();
    let mut sources: Vec<SampleSource> = specimens.iter().map(|s| s.source).collect();
    sources.extend(extra.iter().map(|s| s.source));
    sources.sort_by_key(|s| s.as_str());
    sources.dedup();
    for source in sources {
        match fit_source(cfg, base, source, &specimens, &extra) {
            Ok(f) => fits.push(f),
            Err(e) => {
                log::error!("{source}: {e}");
                failures.push((source.to_string(), e.to_string()));
            }
        }
    }
    for f in &fits {
        for r in &f.fits {
            if let Err(e) = r {
                failures.push((f.source.to_string(), e.clone()));
            }
        }
    }
    let report = StudyReport { output_dir: output_dir.to_path_buf(), span: cfg.study.span, specimens, fits, failures };
    write_reports(&report, &extra)?;
    Ok(report)
}

fn fit_source(
    cfg: &StudyConfig,
    base: &Path,
    source: SampleSource,
    specimens: &[SpecimenResult],
    extra: &[RigiditySample],
) -> Result<SourceFit, HarnessError> {
    let mine: Vec<&SpecimenResult> = specimens.iter().filter(|s| s.source == source).collect();
    let width = match mine.first() {
        Some(s) => s.width,
        None => cfg
            .specimen
            .values()
            .find(|sp| parse_source(&sp.source).ok() == Some(source))
            .and_then(|sp| lattice_spec(sp).ok())
            .map(|l| l.extent()[0])
            .ok_or_else(|| HarnessError::Config(format!("width of {source} beams unknown")))?,
    };
    if let Some(s) = mine.iter().find(|s| (s.width - width).abs() > 1e-9 * width) {
        return Err(HarnessError::Config(format!(
            "{source} specimens differ in width ({} vs {width} mm); rigidities are not comparable",
            s.width
        )));
    }
    let e = source_modulus(cfg, base, source, specimens)?;
    let g = cfg.study.shear_ratio * e;
    let reference = BeamSpec::new(e, g, cfg.study.span, width, 1.0)?;
    let samples = source_samples(source, specimens, extra)?;
    let fits = [BeamModel::EulerBernoulli, BeamModel::Timoshenko]
        .into_iter()
        .map(|m| fit_g(&samples, &reference, m).map_err(|e| e.to_string()))
        .collect();
    Ok(SourceFit { source, effective_modulus: e, effective_shear_modulus: g, width, fits })
}

fn source_samples(
    source: SampleSource,
    specimens: &[SpecimenResult],
    extra: &[RigiditySample],
) -> Result<Vec<RigiditySample>, HarnessError> {
    let mut out = Vec::new();
    for s in specimens.iter().filter(|s| s.source == source) {
        out.push(RigiditySample::new(s.height, s.rigidity, s.source)?);
    }
    out.extend(extra.iter().filter(|s| s.source == source).copied());
    Ok(out)
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), HarnessError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| HarnessError::Io { path, source })
}

fn write_reports(report: &StudyReport, extra: &[RigiditySample]) -> Result<(), HarnessError> {
    let dir = &report.output_dir;

    let mut por = String::from("specimen,source,height_mm,porosity\n");
    for s in &report.specimens {
        let _ = writeln!(por, "{},{},{},{}", s.id, s.source, fmt12(s.height), fmt12(s.porosity));
    }
    write_file(dir, "porosity.csv", &por)?;

    let mut samples = Vec::new();
    for s in &report.specimens {
        samples.push(RigiditySample::new(s.height, s.rigidity, s.source)?);
    }
    samples.extend_from_slice(extra);
    let mut buf = Vec::new();
    write_samples_csv(&samples, &mut buf)?;
    write_file(dir, "rigidity.csv", &String::from_utf8_lossy(&buf))?;

    let mut norm = String::from("source,height_mm,rigidity_N_per_mm,normalized\n");
    let mut curves = String::from("source,model,g_mm,height_mm,normalized\n");
    let mut gfit = String::new();
    for f in &report.fits {
        let _ = writeln!(gfit, "[{}]", f.source);
        let _ = writeln!(gfit, "effective_modulus_MPa={}", fmt12(f.effective_modulus));
        let _ = writeln!(gfit, "effective_shear_modulus_MPa={}", fmt12(f.effective_shear_modulus));
        for r in &f.fits {
            match r {
                Ok(fit) => gfit.push_str(&format_fit_report(fit)),
                Err(e) => {
                    let _ = writeln!(gfit, "error={e}");
                }
            }
        }
        gfit.push('\n');
    }
    write_file(dir, "gfit.txt", &gfit)?;

    for f in &report.fits {
        let reference = BeamSpec::new(f.effective_modulus, f.effective_shear_modulus, report.span, f.width, 1.0)?;
        let mine: Vec<&RigiditySample> = samples.iter().filter(|s| s.source == f.source).collect();
        for s in &mine {
            let _ = writeln!(
                norm,
                "{},{},{},{}",
                f.source,
                fmt12(s.height),
                fmt12(s.rigidity),
                fmt12(normalized_rigidity(s, &reference))
            );
        }
        let (lo, hi) = mine.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s.height), hi.max(s.height)));
        for fit in f.fits.iter().flatten() {
            for i in 0..CURVE_SAMPLES {
                let h = if hi > lo { lo + (hi - lo) * i as f64 / (CURVE_SAMPLES - 1) as f64 } else { lo };
                let beam = GradientBeamSpec::new(reference.with_height(h), fit.g)?;
                let d = rigidity_gradient(&beam, fit.model);
                let d_eb = rigidity_eb(&reference.with_height(h));
                let _ =
                    writeln!(curves, "{},{},{},{},{}", f.source, fit.model, fmt12(fit.g), fmt12(h), fmt12(d / d_eb));
            }
        }
    }
    write_file(dir, "normalized.csv", &norm)?;
    write_file(dir, "normalized_curves.csv", &curves)?;
    Ok(())
}

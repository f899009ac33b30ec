//! `voxfcm` command-line tool.
//!
//! Exit status: 0 on success, 1 when a computation stage fails, 2 on
//! configuration or usage errors.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use voxfcm::beams::{
    self, fit_g, fmt12, format_fit_report, read_samples_csv, BeamError, BeamModel, BeamSpec, GradientBeamSpec,
    SampleSource,
};
use voxfcm::fcm::FcmMesh;
use voxfcm::harness::{run_study, run_virtual_tensile, solve_bending, HarnessError, ScenarioConfig};
use voxfcm::latticegen::{
    calibrate_strut_diameter, inject_defects, voxelize_beam, Axis, DefectSpec, LatticeBeamSpec, LatticeError,
    OctetCellSpec,
};
use voxfcm::solve::{export_fields, read_solution, write_solution, SolveError};
use voxfcm::voxel::{porosity, read_volume, write_volume, Hu, VoxelError};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0} stage(s) failed")]
    StagesFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let config = match self {
            CliError::Config(_) => true,
            CliError::Harness(e) => e.is_configuration(),
            CliError::Lattice(LatticeError::InvalidSpec(_)) => true,
            CliError::Beam(BeamError::InvalidSpec(_) | BeamError::Csv { .. }) => true,
            CliError::Solve(SolveError::InvalidArgument(_) | SolveError::Format { .. }) => true,
            CliError::Voxel(_) | CliError::Io { .. } => true,
            _ => false,
        };
        if config {
            2
        } else {
            1
        }
    }
}

#[derive(Parser)]
#[command(name = "voxfcm", version, about = "Finite cell bending analysis of voxel lattice beams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuildDirection {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, ValueEnum)]
enum Formula {
    DeflectionEb,
    DeflectionTimoshenko,
    DeflectionGradientEb,
    DeflectionGradientTimoshenko,
    RigidityEb,
    RigidityTimoshenko,
    RigidityGradientEb,
    RigidityGradientTimoshenko,
}

#[derive(Subcommand)]
enum Command {
    /// Voxelize an octet-truss beam to a CVOL file.
    Generate {
        /// Cells along width, length and height.
        #[arg(long, num_args = 3, value_names = ["NX", "NY", "NZ"])]
        cells: Vec<usize>,
        /// Unit cell edge (mm).
        #[arg(long, default_value_t = 4.0)]
        cell_size: f64,
        /// Strut diameter (mm). Omit when calibrating.
        #[arg(long)]
        strut_diameter: Option<f64>,
        /// Calibrate the strut diameter to this porosity instead.
        #[arg(long, conflicts_with = "strut_diameter")]
        target_porosity: Option<f64>,
        /// Voxel edge (mm).
        #[arg(long)]
        resolution: f64,
        #[arg(long, default_value_t = 1000)]
        material_hu: Hu,
        #[arg(long, default_value_t = 0)]
        void_hu: Hu,
        /// Uniform strut radius growth (mm).
        #[arg(long, default_value_t = 0.0)]
        strut_dilation: f64,
        /// Radius of spheres added at strut junctions (mm).
        #[arg(long, default_value_t = 0.0)]
        node_blob_radius: f64,
        /// Adhered particles per mm^2 of down-facing surface.
        #[arg(long, default_value_t = 0.0)]
        particle_density: f64,
        #[arg(long, default_value_t = 0.0)]
        particle_radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "z")]
        build_direction: BuildDirection,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Porosity of a CVOL volume.
    Porosity {
        volume: PathBuf,
        #[arg(long, default_value_t = 500)]
        threshold: Hu,
    },
    /// Three-point bending of a CVOL beam.
    Bend {
        volume: PathBuf,
        /// Scenario settings (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the displacement coefficients for `export-fields`.
        #[arg(long)]
        save_solution: Option<PathBuf>,
    },
    /// Virtual tensile test along the beam length; prints E*.
    Tensile {
        volume: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate an analytic beam formula.
    Beams {
        #[arg(value_enum)]
        formula: Formula,
        /// E* (MPa).
        #[arg(long)]
        e: f64,
        /// G* (MPa).
        #[arg(long)]
        g_modulus: f64,
        /// Span L (mm).
        #[arg(long)]
        length: f64,
        #[arg(long)]
        width: f64,
        #[arg(long)]
        height: f64,
        /// Gradient length g (mm) for the gradient formulas.
        #[arg(long, default_value_t = 0.0)]
        g: f64,
        /// Force F (N) for deflections.
        #[arg(long, default_value_t = 100.0)]
        force: f64,
    },
    /// Fit the gradient length to rigidity samples in CSV form.
    FitG {
        csv: PathBuf,
        #[arg(long)]
        e: f64,
        #[arg(long)]
        g_modulus: f64,
        #[arg(long)]
        length: f64,
        #[arg(long)]
        width: f64,
        /// `eb` or `timoshenko`.
        #[arg(long, default_value = "eb")]
        model: String,
        /// Only use samples of this source.
        #[arg(long)]
        source: Option<String>,
    },
    /// Run a study described by a TOML config.
    Study {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sample displacement and von Mises stress of a saved solution.
    ExportFields {
        volume: PathBuf,
        solution: PathBuf,
        /// Scenario settings used for the solve (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sample spacing (mm); defaults to the voxel spacing.
        #[arg(long)]
        spacing: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn scenario_config(path: &Option<PathBuf>) -> Result<ScenarioConfig, CliError> {
    match path {
        Some(p) => Ok(ScenarioConfig::load(p)?),
        None => Ok(ScenarioConfig::default()),
    }
}

fn print_kv(out: &mut impl Write, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{key}={value}");
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Generate {
            cells,
            cell_size,
            strut_diameter,
            target_porosity,
            resolution,
            material_hu,
            void_hu,
            strut_dilation,
            node_blob_radius,
            particle_density,
            particle_radius,
            seed,
            build_direction,
            output,
        } => {
            let cells: [usize; 3] =
                cells.try_into().map_err(|_| CliError::Config("--cells takes three counts".into()))?;
            let mut spec = LatticeBeamSpec {
                cells,
                cell: OctetCellSpec { cell_size, strut_diameter: strut_diameter.unwrap_or(0.0), material_hu, void_hu },
                resolution,
            };
            if let Some(target) = target_porosity {
                spec.cell.strut_diameter = calibrate_strut_diameter(&spec, target, 1e-4)?;
            } else if strut_diameter.is_none() {
                return Err(CliError::Config("give --strut-diameter or --target-porosity".into()));
            }
            let mut grid = voxelize_beam(&spec)?;
            let defects =
                DefectSpec { strut_dilation, node_blob_radius, particle_density, particle_radius, rng_seed: seed };
            if !defects.is_identity() {
                let axis = match build_direction {
                    BuildDirection::X => Axis::X,
                    BuildDirection::Y => Axis::Y,
                    BuildDirection::Z => Axis::Z,
                };
                grid = inject_defects(&grid, &spec, &defects, axis)?;
            }
            write_volume(&grid, &output)?;
            let d = grid.dims();
            print_kv(&mut out, "dims", format!("{} {} {}", d[0], d[1], d[2]));
            print_kv(&mut out, "strut_diameter_mm", fmt12(spec.cell.strut_diameter));
            print_kv(&mut out, "porosity", fmt12(porosity(&grid, spec.cell.threshold())));
        }
        Command::Porosity { volume, threshold } => {
            let grid = read_volume(&volume)?;
            print_kv(&mut out, "porosity", fmt12(porosity(&grid, threshold)));
        }
        Command::Bend { volume, config, save_solution } => {
            let cfg = scenario_config(&config)?;
            let scenario = cfg.bending(read_volume(&volume)?)?;
            let (r, u) = solve_bending(&scenario)?;
            if let Some(path) = save_solution {
                write_solution(&u, &path)?;
            }
            print_kv(&mut out, "rigidity_N_per_mm", fmt12(r.rigidity));
            print_kv(&mut out, "midspan_deflection_mm", fmt12(r.midspan_deflection));
            print_kv(&mut out, "porosity", fmt12(r.porosity));
            print_kv(&mut out, "dofs", r.n_dofs);
            print_kv(&mut out, "iterations", r.report.iterations);
            print_kv(&mut out, "final_relative_residual", fmt12(r.report.final_relative_residual));
            print_kv(&mut out, "solve_seconds", fmt12(r.report.wall_time));
        }
        Command::Tensile { volume, config } => {
            let cfg = scenario_config(&config)?;
            let r = run_virtual_tensile(&cfg.tensile(read_volume(&volume)?)?)?;
            print_kv(&mut out, "effective_modulus_MPa", fmt12(r.effective_modulus));
            print_kv(&mut out, "reaction_N", fmt12(r.reaction));
            print_kv(&mut out, "dofs", r.n_dofs);
            print_kv(&mut out, "iterations", r.report.iterations);
        }
        Command::Beams { formula, e, g_modulus, length, width, height, g, force } => {
            let spec = BeamSpec::new(e, g_modulus, length, width, height)?;
            let grad = GradientBeamSpec::new(spec, g)?;
            let (name, value) = match formula {
                Formula::DeflectionEb => ("deflection_mm", beams::deflection_eb(&spec, force)),
                Formula::DeflectionTimoshenko => ("deflection_mm", beams::deflection_timoshenko(&spec, force)),
                Formula::DeflectionGradientEb => ("deflection_mm", beams::deflection_gradient_eb(&grad, force)),
                Formula::DeflectionGradientTimoshenko => {
                    ("deflection_mm", beams::deflection_gradient_timoshenko(&grad, force))
                }
                Formula::RigidityEb => ("rigidity_N_per_mm", beams::rigidity_eb(&spec)),
                Formula::RigidityTimoshenko => ("rigidity_N_per_mm", beams::rigidity_timoshenko(&spec)),
                Formula::RigidityGradientEb => {
                    ("rigidity_N_per_mm", beams::rigidity_gradient(&grad, BeamModel::EulerBernoulli))
                }
                Formula::RigidityGradientTimoshenko => {
                    ("rigidity_N_per_mm", beams::rigidity_gradient(&grad, BeamModel::Timoshenko))
                }
            };
            print_kv(&mut out, name, fmt12(value));
        }
        Command::FitG { csv, e, g_modulus, length, width, model, source } => {
            let model: BeamModel = model.parse()?;
            let file = File::open(&csv).map_err(|source| CliError::Io { path: csv.clone(), source })?;
            let mut samples = read_samples_csv(BufReader::new(file))?;
            if let Some(s) = source {
                let s: SampleSource = s.parse()?;
                samples.retain(|x| x.source == s);
            }
            let reference = BeamSpec::new(e, g_modulus, length, width, 1.0)?;
            let fit = fit_g(&samples, &reference, model)?;
            let _ = out.write_all(format_fit_report(&fit).as_bytes());
        }
        Command::Study { config, output } => {
            let report = run_study(&config, output)?;
            print_kv(&mut out, "output_dir", report.output_dir.display());
            print_kv(&mut out, "specimens", report.specimens.len());
            for (stage, msg) in &report.failures {
                log::error!("{stage}: {msg}");
            }
            if !report.is_success() {
                return Err(CliError::StagesFailed(report.failures.len()));
            }
        }
        Command::ExportFields { volume, solution, config, spacing, output } => {
            let cfg = scenario_config(&config)?;
            let grid = read_volume(&volume)?;
            let mesh = cfg.mesh();
            let fcm = FcmMesh::new(&grid, mesh.order, mesh.voxels_per_cell).map_err(HarnessError::from)?;
            let u = read_solution(&solution)?;
            let spacing = spacing.unwrap_or(grid.spacing()[0]);
            let f = export_fields(&fcm, &u, &cfg.material()?, spacing, &output)?;
            print_kv(&mut out, "samples", format!("{} {} {}", f.dims[0], f.dims[1], f.dims[2]));
            print_kv(&mut out, "max_von_mises_MPa", fmt12(f.von_mises.iter().cloned().fold(0.0, f64::max)));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

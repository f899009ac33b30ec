//! Sampled result fields and the raw solution cache.
//!
//! Field file layout: an ASCII header
//!
//! ```text
//! FIELD 1
//! dims <nx> <ny> <nz>
//! spacing <sx> <sy> <sz>
//! origin <ox> <oy> <oz>
//! arrays displacement:3 von_mises:1
//!
//! ```
//!
//! followed by little-endian `f64` payload: the whole displacement array
//! (three components per sample, samples x-fastest), then the whole von Mises
//! array. Samples sit at `origin + i * spacing`.
//!
//! Solution cache layout: `SOLN 1\nn_dofs <n>\n\n` followed by `n`
//! little-endian `f64` coefficients.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::SolveError;
use crate::fcm::{evaluate_displacement, evaluate_von_mises, ElasticMaterial, FcmMesh};

/// Decoded field file.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    /// Per sample `[ux, uy, uz]`, x-fastest.
    pub displacement: Vec<[f64; 3]>,
    pub von_mises: Vec<f64>,
}

impl FieldFile {
    pub fn point(&self, i: [usize; 3]) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + i[a] as f64 * self.spacing[a])
    }

    pub fn flat(&self, i: [usize; 3]) -> usize {
        i[0] + self.dims[0] * (i[1] + self.dims[1] * i[2])
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SolveError + '_ {
    move |source| SolveError::Io { path: path.to_path_buf(), source }
}

/// Sample displacement and von Mises stress over the voxel grid's extent on a
/// regular lattice of cell-centred points `sample_spacing` apart.
pub fn export_fields(
    mesh: &FcmMesh,
    solution: &[f64],
    material: &ElasticMaterial,
    sample_spacing: f64,
    path: &Path,
) -> Result<FieldFile, SolveError> {
    if !(sample_spacing > 0.0 && sample_spacing.is_finite()) {
        return Err(SolveError::InvalidArgument(format!("sample spacing must be positive, got {sample_spacing}")));
    }
    if solution.len() != mesh.n_dofs() {
        return Err(SolveError::InvalidArgument(format!(
            "solution has {} entries, mesh has {} dofs",
            solution.len(),
            mesh.n_dofs()
        )));
    }
    let extent: [f64; 3] = std::array::from_fn(|a| mesh.grid_dims()[a] as f64 * mesh.voxel_spacing()[a]);
    let dims: [usize; 3] = std::array::from_fn(|a| ((extent[a] / sample_spacing + 1e-9).floor() as usize).max(1));
    let origin: [f64; 3] = std::array::from_fn(|a| {
        let used = dims[a] as f64 * sample_spacing;
        mesh.origin()[a] + 0.5 * (extent[a] - used).max(0.0) + 0.5 * sample_spacing.min(extent[a])
    });
    let spacing = [sample_spacing; 3];
    let n = dims.iter().product::<usize>();
    let samples: Result<Vec<([f64; 3], f64)>, SolveError> = (0..n)
        .into_par_iter()
        .map(|k| {
            let i = [k % dims[0], (k / dims[0]) % dims[1], k / (dims[0] * dims[1])];
            let x = std::array::from_fn(|a| origin[a] + i[a] as f64 * spacing[a]);
            let u = evaluate_displacement(mesh, solution, x)?;
            let vm = evaluate_von_mises(mesh, solution, material, x)?;
            Ok((u, vm))
        })
        .collect();
    let samples = samples?;
    let field = FieldFile {
        dims,
        spacing,
        origin,
        displacement: samples.iter().map(|s| s.0).collect(),
        von_mises: samples.iter().map(|s| s.1).collect(),
    };
    write_fields(&field, path)?;
    Ok(field)
}

fn write_fields(field: &FieldFile, path: &Path) -> Result<(), SolveError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let [d0, d1, d2] = field.dims;
    let [s0, s1, s2] = field.spacing;
    let [o0, o1, o2] = field.origin;
    let header = format!(
        "FIELD 1\ndims {d0} {d1} {d2}\nspacing {s0} {s1} {s2}\norigin {o0} {o1} {o2}\narrays displacement:3 von_mises:1\n\n"
    );
    let mut buf = header.into_bytes();
    buf.reserve(32 * field.von_mises.len());
    for u in &field.displacement {
        for c in u {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for v in &field.von_mises {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn format_err(path: &Path, field: &'static str, message: impl Into<String>) -> SolveError {
    SolveError::Format { path: path.to_path_buf(), field, message: message.into() }
}

fn read_line(r: &mut impl BufRead, path: &Path, field: &'static str) -> Result<String, SolveError> {
    let mut line = String::new();
    let n = r.read_line(&mut line).map_err(io_err(path))?;
    if n == 0 {
        return Err(format_err(path, field, "unexpected end of file"));
    }
    Ok(line.trim_end_matches('\n').to_string())
}

fn parse_triple<T: std::str::FromStr>(
    line: &str,
    key: &str,
    path: &Path,
    field: &'static str,
) -> Result<[T; 3], SolveError> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(format_err(path, field, format!("expected '{key} ...', got '{line}'")));
    }
    let vals: Vec<T> = parts
        .map(|p| p.parse::<T>().map_err(|_| format_err(path, field, format!("cannot parse '{p}'"))))
        .collect::<Result<_, _>>()?;
    vals.try_into().map_err(|_| format_err(path, field, "expected three values"))
}

fn read_f64s(r: &mut impl Read, n: usize, path: &Path) -> Result<Vec<f64>, SolveError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io_err(path))?;
    if bytes.len() != 8 * n {
        return Err(format_err(path, "payload", format!("expected {} bytes, found {}", 8 * n, bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn read_fields(path: &Path) -> Result<FieldFile, SolveError> {
    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    if read_line(&mut r, path, "magic")? != "FIELD 1" {
        return Err(format_err(path, "magic", "expected 'FIELD 1'"));
    }
    let dims: [usize; 3] = parse_triple(&read_line(&mut r, path, "dims")?, "dims", path, "dims")?;
    let spacing: [f64; 3] = parse_triple(&read_line(&mut r, path, "spacing")?, "spacing", path, "spacing")?;
    let origin: [f64; 3] = parse_triple(&read_line(&mut r, path, "origin")?, "origin", path, "origin")?;
    if read_line(&mut r, path, "arrays")? != "arrays displacement:3 von_mises:1" {
        return Err(format_err(path, "arrays", "expected 'arrays displacement:3 von_mises:1'"));
    }
    if !read_line(&mut r, path, "separator")?.is_empty() {
        return Err(format_err(path, "separator", "expected blank line"));
    }
    let n: usize = dims.iter().product();
    let data = read_f64s(&mut r, 4 * n, path)?;
    let displacement = data[..3 * n].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(FieldFile { dims, spacing, origin, displacement, von_mises: data[3 * n..].to_vec() })
}

pub fn write_solution(solution: &[f64], path: &Path) -> Result<(), SolveError> {
    let mut buf = format!("SOLN 1\nn_dofs {}\n\n", solution.len()).into_bytes();
    for v in solution {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(io_err(path))
}

pub fn read_solution(path: &Path) -> Result<Vec<f64>, SolveError> {
    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    if read_line(&mut r, path, "magic")? != "SOLN 1" {
        return Err(format_err(path, "magic", "expected 'SOLN 1'"));
    }
    let line = read_line(&mut r, path, "n_dofs")?;
    let n = line
        .strip_prefix("n_dofs ")
        .and_then(|s| s.trim().parse::<usize>().ok())
        .ok_or_else(|| format_err(path, "n_dofs", format!("cannot parse '{line}'")))?;
    if !read_line(&mut r, path, "separator")?.is_empty() {
        return Err(format_err(path, "separator", "expected blank line"));
    }
    read_f64s(&mut r, n, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fcm::nodal_interpolant;

    fn setup() -> (FcmMesh, ElasticMaterial) {
        let mesh = FcmMesh::from_geometry([4, 4, 2], [0.5; 3], [0.0; 3], 2, [2, 2, 2]).unwrap();
        (mesh, ElasticMaterial::new(1000.0, 0.3, 1e-8).unwrap())
    }

    #[test]
    fn zero_solution_gives_zero_field() {
        let (mesh, mat) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.field");
        export_fields(&mesh, &vec![0.0; mesh.n_dofs()], &mat, 0.25, &path).unwrap();
        let f = read_fields(&path).unwrap();
        assert_eq!(f.dims, [8, 8, 4]);
        assert!(f.displacement.iter().all(|u| *u == [0.0; 3]));
        assert!(f.von_mises.iter().all(|&v| v == 0.0));
        let bytes = std::fs::read(&path).unwrap();
        let header = "FIELD 1\ndims 8 8 4\nspacing 0.25 0.25 0.25\norigin 0.125 0.125 0.125\narrays displacement:3 von_mises:1\n\n";
        assert_eq!(&bytes[..header.len()], header.as_bytes());
        assert_eq!(bytes.len(), header.len() + 8 * 4 * 256);
    }

    #[test]
    fn rigid_translation_is_constant_and_stress_free() {
        let (mesh, mat) = setup();
        let u = nodal_interpolant(&mesh, |_| [0.1, -0.2, 0.3]);
        let dir = tempfile::tempdir().unwrap();
        let f = export_fields(&mesh, &u, &mat, 0.5, &dir.path().join("t.field")).unwrap();
        for (d, vm) in f.displacement.iter().zip(&f.von_mises) {
            for (a, b) in d.iter().zip([0.1, -0.2, 0.3]) {
                assert!((a - b).abs() < 1e-14);
            }
            assert!(vm.abs() < 1e-10);
        }
    }

    #[test]
    fn linear_ramp_round_trips() {
        let (mesh, mat) = setup();
        let ramp = |x: [f64; 3]| [0.001 * x[0], 0.0, -0.002 * x[2]];
        let u = nodal_interpolant(&mesh, ramp);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ramp.field");
        let written = export_fields(&mesh, &u, &mat, 0.3, &path).unwrap();
        let f = read_fields(&path).unwrap();
        assert_eq!(written, f);
        for k in 0..f.displacement.len() {
            let i = [k % f.dims[0], (k / f.dims[0]) % f.dims[1], k / (f.dims[0] * f.dims[1])];
            let want = ramp(f.point(i));
            for c in 0..3 {
                assert!((f.displacement[k][c] - want[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn solution_cache_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.soln");
        let u = vec![1.0, -0.0, f64::MIN_POSITIVE, 1.0 / 3.0, -7.25e300];
        write_solution(&u, &path).unwrap();
        let back = read_solution(&path).unwrap();
        assert_eq!(
            u.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn malformed_files_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.field");
        std::fs::write(&path, "FIELD 1\ndims 1 1\n").unwrap();
        match read_fields(&path) {
            Err(SolveError::Format { field, .. }) => assert_eq!(field, "dims"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read_fields(&dir.path().join("missing")), Err(SolveError::Io { .. })));
    }
}

//! CVOL volume files.
//!
//! ```text
//! CVOL 1
//! dims <nx> <ny> <nz>
//! spacing <sx> <sy> <sz>
//! origin <ox> <oy> <oz>
//! data uint16-le
//!
//! <nx*ny*nz little-endian u16, x-fastest>
//! ```
//!
//! Header lines end in LF. Decimals use the shortest representation that
//! round-trips, so write followed by read is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Hu, VoxelError, VoxelGrid};

const MAGIC: &str = "CVOL 1";
const DATA_LINE: &str = "data uint16-le";

fn format_err(field: &'static str, message: impl Into<String>) -> VoxelError {
    VoxelError::Format { field, message: message.into() }
}

fn read_header_line<R: BufRead>(reader: &mut R, field: &'static str) -> Result<String, VoxelError> {
    let mut buf = Vec::new();
    let n = reader.read_until(b'\n', &mut buf).map_err(|e| format_err(field, e.to_string()))?;
    if n == 0 || buf.last() != Some(&b'\n') {
        return Err(format_err(field, "unexpected end of header"));
    }
    buf.pop();
    String::from_utf8(buf).map_err(|_| format_err(field, "header line is not valid UTF-8"))
}

fn parse_triple<T: std::str::FromStr>(line: &str, field: &'static str) -> Result<[T; 3], VoxelError> {
    let mut parts = line.split(' ');
    if parts.next() != Some(field) {
        return Err(format_err(field, format!("expected `{field}` line, got `{line}`")));
    }
    let items: Vec<&str> = parts.collect();
    if items.len() != 3 {
        return Err(format_err(field, format!("expected 3 values, got {}", items.len())));
    }
    let mut out = Vec::with_capacity(3);
    for item in items {
        out.push(item.parse::<T>().map_err(|_| format_err(field, format!("cannot parse `{item}`")))?);
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

/// Decode a CVOL stream.
pub fn read_volume_from<R: Read>(reader: R) -> Result<VoxelGrid, VoxelError> {
    let mut reader = BufReader::new(reader);
    let magic = read_header_line(&mut reader, "magic")?;
    if magic != MAGIC {
        return Err(format_err("magic", format!("expected `{MAGIC}`, got `{magic}`")));
    }
    let dims: [usize; 3] = parse_triple(&read_header_line(&mut reader, "dims")?, "dims")?;
    let spacing: [f64; 3] = parse_triple(&read_header_line(&mut reader, "spacing")?, "spacing")?;
    let origin: [f64; 3] = parse_triple(&read_header_line(&mut reader, "origin")?, "origin")?;
    let data = read_header_line(&mut reader, "data")?;
    if data != DATA_LINE {
        return Err(format_err("data", format!("expected `{DATA_LINE}`, got `{data}`")));
    }
    if !read_header_line(&mut reader, "separator")?.is_empty() {
        return Err(format_err("separator", "expected blank line after header"));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(format_err("dims", format!("all dims must be >= 1, got {dims:?}")));
    }
    if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(format_err("spacing", format!("must be finite and positive, got {spacing:?}")));
    }
    if origin.iter().any(|o| !o.is_finite()) {
        return Err(format_err("origin", format!("must be finite, got {origin:?}")));
    }
    let count = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| format_err("dims", "voxel count overflows"))?;
    let mut bytes = vec![0u8; count * 2];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| format_err("payload", format!("truncated: expected {} bytes for dims {dims:?}", count * 2)))?;
    let mut extra = [0u8; 1];
    match reader.read(&mut extra) {
        Ok(0) => {}
        Ok(_) => return Err(format_err("payload", format!("trailing bytes after {} voxels for dims {dims:?}", count))),
        Err(e) => return Err(format_err("payload", e.to_string())),
    }
    let values: Vec<Hu> = bytes.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
    VoxelGrid::new(dims, spacing, origin, values)
}

/// Encode `grid` as a CVOL stream.
pub fn write_volume_to<W: Write>(grid: &VoxelGrid, writer: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    let [nx, ny, nz] = grid.dims();
    let [sx, sy, sz] = grid.spacing();
    let [ox, oy, oz] = grid.origin();
    write!(w, "{MAGIC}\ndims {nx} {ny} {nz}\nspacing {sx} {sy} {sz}\norigin {ox} {oy} {oz}\n{DATA_LINE}\n\n")?;
    let mut buf = Vec::with_capacity(1 << 16);
    for chunk in grid.values().chunks(1 << 15) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<VoxelGrid, VoxelError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| VoxelError::Io { path: path.into(), source })?;
    read_volume_from(file)
}

pub fn write_volume(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<(), VoxelError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| VoxelError::Io { path: path.into(), source })?;
    write_volume_to(grid, file).map_err(|source| VoxelError::Io { path: path.into(), source })
}

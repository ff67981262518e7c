//! Artifact persistence: the TWZM binary phase-mask format, CSV tables with
//! a scenario-hash header line, and output-directory resolution.
//!
//! Every text artifact starts with `# scenario=<hex>` so a result file can
//! always be traced back to the exact configuration (and seed) that
//! produced it. The binary mask format is pinned byte-for-byte — magic
//! `TWZM`, little-endian `u32` width, `u32` height, `f64` pixel pitch in
//! metres, then width×height `f32` phases in radians, row-major — so masks
//! interchange with external tooling; it carries no hash line, the
//! accompanying tables do.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::optics::{MaskGeometry, PhaseMask};

/// Magic bytes opening every phase-mask file.
pub const MASK_MAGIC: [u8; 4] = *b"TWZM";

/// Environment variable that overrides the command-line output directory.
pub const OUT_ENV_VAR: &str = "TWEEZERLAB_OUT";

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::BadMaskFile {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Writes a phase mask in the TWZM format (phases narrowed to `f32`).
pub fn write_mask(path: &Path, mask: &PhaseMask) -> Result<()> {
    let geometry = mask.geometry();
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(&MASK_MAGIC)?;
    out.write_all(&(geometry.width_px as u32).to_le_bytes())?;
    out.write_all(&(geometry.height_px as u32).to_le_bytes())?;
    out.write_all(&geometry.pitch_m.to_le_bytes())?;
    for &phi in mask.phases().iter() {
        out.write_all(&(phi as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a TWZM phase mask, canonicalizing phases into [0, 2π).
///
/// The `f32` narrowing can nudge a phase just below 2π onto it; such values
/// wrap to 0 on load, so a loaded mask is always canonical.
pub fn read_mask(path: &Path) -> Result<PhaseMask> {
    let mut file = fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() < 20 {
        return Err(bad(path, format!("{} bytes is too short for a header", bytes.len())));
    }
    if bytes[0..4] != MASK_MAGIC {
        return Err(bad(path, "missing TWZM magic"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let pitch_m = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if width == 0 || height == 0 {
        return Err(bad(path, format!("degenerate {width}x{height} mask")));
    }
    if !(pitch_m.is_finite() && pitch_m > 0.0) {
        return Err(bad(path, format!("pixel pitch {pitch_m} is not positive")));
    }
    let expected = 20 + 4 * width * height;
    if bytes.len() != expected {
        return Err(bad(
            path,
            format!(
                "payload is {} bytes, expected {expected} for {width}x{height}",
                bytes.len()
            ),
        ));
    }
    let geometry = MaskGeometry::new(width, height, pitch_m);
    let mut grid = ndarray::Array2::zeros((height, width));
    for (i, value) in grid.iter_mut().enumerate() {
        let off = 20 + 4 * i;
        let phi = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
        if !phi.is_finite() {
            return Err(bad(path, format!("non-finite phase at sample {i}")));
        }
        *value = phi;
    }
    PhaseMask::from_grid(geometry, grid)
}

/// Formats one floating-point cell the way every exported table does
/// (9-digit scientific notation, locale-independent).
pub fn fmt_float(x: f64) -> String {
    format!("{x:.9e}")
}

/// Writes a text table: `# scenario=<hex>` line, a column-header line, then
/// one line per row.
pub fn write_table<R, I>(path: &Path, scenario_hash: &str, header: &str, rows: I) -> Result<()>
where
    R: AsRef<str>,
    I: IntoIterator<Item = R>,
{
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "# scenario={scenario_hash}")?;
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{}", row.as_ref())?;
    }
    out.flush()?;
    Ok(())
}

/// Resolves the output directory: the [`OUT_ENV_VAR`] environment variable
/// wins over the command-line choice, which wins over `./out`; the
/// directory is created if missing.
pub fn resolve_out_dir(cli_out: Option<&Path>) -> Result<PathBuf> {
    let dir = match std::env::var_os(OUT_ENV_VAR) {
        Some(env) if !env.is_empty() => PathBuf::from(env),
        _ => cli_out.map_or_else(|| PathBuf::from("out"), Path::to_path_buf),
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

//! Binary PGM (P5) reader/writer for density images. Densities d in [0, 1]
//! are stored as bytes round((1-d)*255), so solid material is black.

use super::DatasetError;
use std::path::Path;

/// Quantizes one density to its pixel byte (round half away from zero).
#[inline]
pub(crate) fn density_to_byte(d: f64) -> u8 {
    ((1.0 - d) * 255.0).round() as u8
}

#[inline]
pub(crate) fn byte_to_density(p: u8) -> f64 {
    1.0 - p as f64 / 255.0
}

/// Writes a width x height density image (row-major, origin top-left).
pub fn write_pgm(
    path: &Path,
    width: usize,
    height: usize,
    densities: &[f64],
) -> Result<(), DatasetError> {
    debug_assert_eq!(densities.len(), width * height);
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(densities.iter().map(|&d| density_to_byte(d)));
    std::fs::write(path, bytes).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a binary PGM, returning (width, height, densities) with the inverse
/// of the writer's quantization. Only maxval 255 is accepted.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>), DatasetError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |reason: &str| DatasetError::PgmMalformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };

    // Header: "P5", width, height, maxval as whitespace-separated tokens,
    // with '#' comments running to end of line, then one whitespace byte.
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> Option<String> {
        while *pos < bytes.len() {
            let b = bytes[*pos];
            if b == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                *pos += 1;
            } else {
                break;
            }
        }
        let start = *pos;
        while *pos < bytes.len()
            && !bytes[*pos].is_ascii_whitespace()
            && bytes[*pos] != b'#'
        {
            *pos += 1;
        }
        (*pos > start).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    let magic = token(&mut pos).ok_or_else(|| malformed("empty file"))?;
    if magic != "P5" {
        return Err(malformed(&format!("magic {magic:?}, expected P5")));
    }
    let width: usize = token(&mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed("bad width"))?;
    let height: usize = token(&mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed("bad height"))?;
    let maxval: u32 = token(&mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed("bad maxval"))?;
    if maxval != 255 {
        return Err(DatasetError::PgmMaxval {
            path: path.to_path_buf(),
            maxval,
        });
    }
    if width == 0 || height == 0 {
        return Err(malformed("zero dimension"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(malformed("missing raster separator"));
    }
    pos += 1;
    let n = width * height;
    if bytes.len() - pos < n {
        return Err(malformed(&format!(
            "raster holds {} bytes, need {n}",
            bytes.len() - pos
        )));
    }
    let densities = bytes[pos..pos + n].iter().map(|&p| byte_to_density(p)).collect();
    Ok((width, height, densities))
}

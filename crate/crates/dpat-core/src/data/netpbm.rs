//! Binary NetPBM readers and writers (P6 color, P5 grayscale, maxval 255).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

fn write_binary(path: &Path, magic: &str, w: usize, h: usize, raster: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(format!("{magic}\n{w} {h}\n255\n").as_bytes())
        .and_then(|_| out.write_all(raster))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// P6, 3 bytes per pixel, row-major interleaved RGB.
pub fn write_ppm(path: impl AsRef<Path>, w: usize, h: usize, rgb: &[u8]) -> Result<()> {
    debug_assert_eq!(rgb.len(), 3 * w * h);
    write_binary(path.as_ref(), "P6", w, h, rgb)
}

/// P5, 1 byte per pixel.
pub fn write_pgm(path: impl AsRef<Path>, w: usize, h: usize, gray: &[u8]) -> Result<()> {
    debug_assert_eq!(gray.len(), w * h);
    write_binary(path.as_ref(), "P5", w, h, gray)
}

/// Header tokens may be separated by arbitrary whitespace and `#` comments;
/// a single whitespace byte separates the maxval from the raster.
fn read_header(bytes: &[u8], path: &Path, magic: &[u8]) -> Result<(usize, usize, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::Validation(format!(
            "{}: expected {} file",
            path.display(),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Validation(format!(
                "{}: malformed NetPBM header",
                path.display()
            )));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Validation(format!("{}: header overflow", path.display())))?;
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Validation(format!(
            "{}: missing raster separator",
            path.display()
        )));
    }
    pos += 1;
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(Error::Validation(format!(
            "{}: unsupported maxval {maxval}",
            path.display()
        )));
    }
    Ok((w, h, pos))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let (w, h, offset) = read_header(&bytes, path, b"P6")?;
    let need = 3 * w * h;
    if bytes.len() - offset != need {
        return Err(Error::Validation(format!(
            "{}: raster has {} bytes, expected {need}",
            path.display(),
            bytes.len() - offset
        )));
    }
    Ok((w, h, bytes[offset..].to_vec()))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let (w, h, offset) = read_header(&bytes, path, b"P5")?;
    let need = w * h;
    if bytes.len() - offset != need {
        return Err(Error::Validation(format!(
            "{}: raster has {} bytes, expected {need}",
            path.display(),
            bytes.len() - offset
        )));
    }
    Ok((w, h, bytes[offset..].to_vec()))
}

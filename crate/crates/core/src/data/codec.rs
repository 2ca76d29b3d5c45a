//! Binary PPM (P6) and PGM (P5) images with 8-bit samples.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::BinaryMask;
use crate::tensor::Tensor;

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 3×H×W image in [0, 1].
pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    let (h, w) = match *image.shape() {
        [3, h, w] => (h, w),
        _ => return Err(Error::shape("write_ppm", format!("expected 3×H×W, got {:?}", image.shape()))),
    };
    let plane = h * w;
    let d = image.data();
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.reserve(3 * plane);
    for i in 0..plane {
        for c in 0..3 {
            bytes.push(quantize(d[c * plane + i]));
        }
    }
    write_all(path, &bytes)
}

/// Writes a mask as 0/255.
pub fn write_pgm(path: &Path, mask: &BinaryMask) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    bytes.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    write_all(path, &bytes)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Splits off the header fields, skipping `#` comments; returns the four
/// header tokens and the offset of the pixel payload.
fn header(bytes: &[u8], magic: &[u8; 2], path: &Path) -> Result<([usize; 3], usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format(
            path,
            format!("missing {} magic", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "malformed header"))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::format(path, "malformed header"));
    }
    if fields[2] != 255 {
        return Err(Error::format(path, format!("unsupported maxval {}", fields[2])));
    }
    if fields[0] == 0 || fields[1] == 0 {
        return Err(Error::format(path, "image dimensions must be positive"));
    }
    Ok((fields, pos + 1))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads a P6 image into a 3×H×W tensor scaled to [0, 1].
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes = read(path)?;
    let ([w, h, _], start) = header(&bytes, b"P6", path)?;
    let plane = h * w;
    let payload = &bytes[start..];
    if payload.len() != 3 * plane {
        return Err(Error::format(
            path,
            format!("expected {} payload bytes, found {}", 3 * plane, payload.len()),
        ));
    }
    let mut data = vec![0.0; 3 * plane];
    for (i, px) in payload.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px[c] as f64 / 255.0;
        }
    }
    Tensor::new(&[3, h, w], data)
}

/// Reads a P5 image as a mask: values above 127 are foreground.
pub fn read_pgm(path: &Path) -> Result<BinaryMask> {
    let bytes = read(path)?;
    let ([w, h, _], start) = header(&bytes, b"P5", path)?;
    let payload = &bytes[start..];
    if payload.len() != h * w {
        return Err(Error::format(
            path,
            format!("expected {} payload bytes, found {}", h * w, payload.len()),
        ));
    }
    BinaryMask::new(h, w, payload.iter().map(|&v| v > 127).collect())
}

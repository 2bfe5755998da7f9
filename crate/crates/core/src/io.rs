//! Tensor I/O: 8-bit PNG/PGM/PPM images and the MGT1 raw tensor format.
//!
//! Image samples map to `[0, 1]` as `byte / 255`; writing clamps to `[0, 1]`
//! and rounds to the nearest byte, so read-write round trips are exact for
//! 8-bit sources. MGT1 stores raw `f64` samples and round-trips bit for bit.
//! All writes go through a temp file and an atomic rename.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Magic prefix of the raw tensor format.
pub const MGT1_MAGIC: &[u8; 4] = b"MGT1";

/// Writes `bytes` to `path` via a temp file in the same directory plus rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// File format selected by extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FileKind {
    Png,
    Pgm,
    Ppm,
    Mgt,
}

fn kind_of(path: &Path) -> Result<FileKind> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(FileKind::Png),
        "pgm" => Ok(FileKind::Pgm),
        "ppm" => Ok(FileKind::Ppm),
        "mgt" => Ok(FileKind::Mgt),
        other => Err(Error::Unsupported {
            detail: format!("file extension {other:?} (expected png, pgm, ppm, or mgt)"),
        }),
    }
}

/// Reads a tensor from a PNG, PGM, PPM, or MGT1 file chosen by extension.
pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let kind = kind_of(path)?;
    let bytes = std::fs::read(path)?;
    match kind {
        FileKind::Png => decode_png(&bytes),
        FileKind::Pgm => decode_pnm(&bytes, 1),
        FileKind::Ppm => decode_pnm(&bytes, 3),
        FileKind::Mgt => decode_mgt(&bytes),
    }
}

/// Writes a tensor to a PNG, PGM, PPM, or MGT1 file chosen by extension.
///
/// Image formats require 1 or 3 channels; MGT1 accepts any channel count.
pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let bytes = match kind_of(path)? {
        FileKind::Png => encode_png(t)?,
        FileKind::Pgm => encode_pnm(t, 1)?,
        FileKind::Ppm => encode_pnm(t, 3)?,
        FileKind::Mgt => encode_mgt(t),
    };
    write_atomic(path, &bytes)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn decode_png(bytes: &[u8]) -> Result<Tensor> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    match img {
        image::DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            Tensor::from_vec(
                h as usize,
                w as usize,
                1,
                gray.into_raw().into_iter().map(|b| b as f64 / 255.0).collect(),
            )
        }
        image::DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = rgb.dimensions();
            Tensor::from_vec(
                h as usize,
                w as usize,
                3,
                rgb.into_raw().into_iter().map(|b| b as f64 / 255.0).collect(),
            )
        }
        other => Err(Error::Unsupported {
            detail: format!("PNG color type {:?} (expected 8-bit gray or RGB)", other.color()),
        }),
    }
}

fn encode_png(t: &Tensor) -> Result<Vec<u8>> {
    let (h, w, c) = t.dims();
    let raw: Vec<u8> = t.data().iter().map(|&v| quantize(v)).collect();
    let mut out = Vec::new();
    let mut cursor = std::io::Cursor::new(&mut out);
    match c {
        1 => {
            let img = image::GrayImage::from_raw(w as u32, h as u32, raw).expect("raw length checked");
            img.write_to(&mut cursor, image::ImageFormat::Png)?;
        }
        3 => {
            let img = image::RgbImage::from_raw(w as u32, h as u32, raw).expect("raw length checked");
            img.write_to(&mut cursor, image::ImageFormat::Png)?;
        }
        other => {
            return Err(Error::Unsupported {
                detail: format!("cannot encode {other}-channel tensor as an image (use .mgt)"),
            })
        }
    }
    Ok(out)
}

struct PnmParser<'a> {
    bytes: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> PnmParser<'a> {
    fn token(&mut self, field: &'static str) -> Result<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Malformed {
                format: self.format,
                field,
                detail: "unexpected end of header".to_string(),
            });
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, field: &'static str) -> Result<usize> {
        let tok = self.token(field)?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::Malformed {
                format: self.format,
                field,
                detail: format!("not a decimal number: {:?}", String::from_utf8_lossy(tok)),
            })
    }
}

fn decode_pnm(bytes: &[u8], channels: usize) -> Result<Tensor> {
    let (format, magic): (&'static str, &[u8]) = if channels == 1 {
        ("pgm", b"P5")
    } else {
        ("ppm", b"P6")
    };
    let mut p = PnmParser { bytes, pos: 0, format };
    let tok = p.token("magic")?;
    if tok != magic {
        return Err(Error::Malformed {
            format,
            field: "magic",
            detail: format!(
                "expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(tok)
            ),
        });
    }
    let width = p.number("width")?;
    let height = p.number("height")?;
    let maxval = p.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Malformed {
            format,
            field: "maxval",
            detail: format!("expected 255, found {maxval}"),
        });
    }
    // Exactly one whitespace byte separates the header from the payload.
    if p.pos >= bytes.len() || !bytes[p.pos].is_ascii_whitespace() {
        return Err(Error::Malformed {
            format,
            field: "header",
            detail: "missing separator before payload".to_string(),
        });
    }
    let payload = &bytes[p.pos + 1..];
    let expected = height * width * channels;
    if payload.len() != expected {
        return Err(Error::Malformed {
            format,
            field: "payload",
            detail: format!("expected {expected} bytes, found {}", payload.len()),
        });
    }
    Tensor::from_vec(
        height,
        width,
        channels,
        payload.iter().map(|&b| b as f64 / 255.0).collect(),
    )
}

fn encode_pnm(t: &Tensor, channels: usize) -> Result<Vec<u8>> {
    let (h, w, c) = t.dims();
    if c != channels {
        return Err(Error::Unsupported {
            detail: format!(
                "cannot encode {c}-channel tensor as {}",
                if channels == 1 { "PGM" } else { "PPM" }
            ),
        });
    }
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend(t.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

fn decode_mgt(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 16 || &bytes[0..4] != MGT1_MAGIC {
        return Err(Error::Malformed {
            format: "mgt",
            field: "magic",
            detail: "missing MGT1 header".to_string(),
        });
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let expected = 16 + h * w * c * 8;
    if bytes.len() != expected {
        return Err(Error::Malformed {
            format: "mgt",
            field: "payload",
            detail: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let data: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
        .collect();
    Tensor::from_vec(h, w, c, data)
}

fn encode_mgt(t: &Tensor) -> Vec<u8> {
    let (h, w, c) = t.dims();
    let mut out = Vec::with_capacity(16 + t.len() * 8);
    out.extend_from_slice(MGT1_MAGIC);
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

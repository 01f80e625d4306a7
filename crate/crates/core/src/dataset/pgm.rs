//! Minimal PGM (P2 ASCII / P5 binary) reader and P5 writer.

use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};

use crate::{Error, Result};

/// Grayscale image, one `f64` per pixel, `H×W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePatch {
    pub pixels: Array2<f64>,
    pub source_id: String,
}

impl ImagePatch {
    pub fn new(pixels: Array2<f64>, source_id: impl Into<String>) -> Result<Self> {
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image pixels"));
        }
        Ok(Self {
            pixels,
            source_id: source_id.into(),
        })
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    /// Top-left `size×size` patch.
    pub fn square_patch(&self, size: usize) -> Result<Self> {
        if size == 0 || size > self.height() || size > self.width() {
            return Err(Error::InvalidConfig(format!(
                "cannot cut a {size}×{size} patch from a {}×{} image '{}'",
                self.height(),
                self.width(),
                self.source_id
            )));
        }
        Ok(Self {
            pixels: self.pixels.slice(s![..size, ..size]).to_owned(),
            source_id: self.source_id.clone(),
        })
    }
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<ImagePatch> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_pgm(&bytes, id).map_err(|e| match e {
        Error::Parse {
            kind,
            line,
            message,
            ..
        } => Error::Parse {
            kind,
            path: Some(path.to_path_buf()),
            line,
            message,
        },
        other => other,
    })
}

struct Header {
    binary: bool,
    width: usize,
    height: usize,
    maxval: u32,
    /// Byte offset of the first raster byte (P5) or first sample token (P2).
    data_start: usize,
}

fn malformed(message: impl Into<String>) -> Error {
    Error::Parse {
        kind: "PGM",
        path: None,
        line: None,
        message: message.into(),
    }
}

/// Reads the next whitespace-delimited token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<(usize, usize)> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Some((start, *pos))
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u32> {
    let (a, b) = next_token(bytes, pos).ok_or_else(|| malformed(format!("missing {what}")))?;
    std::str::from_utf8(&bytes[a..b])
        .ok()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed(format!("bad {what}")))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let (a, b) = next_token(bytes, &mut pos).ok_or_else(|| malformed("empty file"))?;
    let binary = match &bytes[a..b] {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "magic number {:?} (only P2 and P5 grayscale are supported)",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = header_number(bytes, &mut pos, "width")? as usize;
    let height = header_number(bytes, &mut pos, "height")? as usize;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(malformed("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed(format!("maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates maxval from a binary raster
    if binary && pos >= bytes.len() {
        return Err(malformed("truncated payload"));
    }
    Ok(Header {
        binary,
        width,
        height,
        maxval,
        data_start: if binary { pos + 1 } else { pos },
    })
}

pub fn parse_pgm(bytes: &[u8], source_id: impl Into<String>) -> Result<ImagePatch> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height;
    let mut values = Vec::with_capacity(n);
    if h.binary {
        let raster = &bytes[h.data_start..];
        let bytes_per = if h.maxval < 256 { 1 } else { 2 };
        if raster.len() < n * bytes_per {
            return Err(malformed(format!(
                "truncated payload: need {} bytes, found {}",
                n * bytes_per,
                raster.len()
            )));
        }
        if bytes_per == 1 {
            values.extend(raster[..n].iter().map(|&b| b as f64));
        } else {
            values.extend(
                raster[..2 * n]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64),
            );
        }
    } else {
        let mut pos = h.data_start;
        for i in 0..n {
            let v = header_number(bytes, &mut pos, "pixel value")
                .map_err(|_| malformed(format!("truncated or bad pixel data at sample {i}")))?;
            values.push(v as f64);
        }
    }
    if values.iter().any(|&v| v > h.maxval as f64) {
        return Err(malformed("pixel value exceeds maxval"));
    }
    let pixels = Array2::from_shape_vec((h.height, h.width), values).expect("length checked");
    ImagePatch::new(pixels, source_id)
}

/// Min-max rescales to `0..=255` and rounds.
pub fn rescale_to_u8(pixels: ArrayView2<f64>) -> Array2<u8> {
    let lo = pixels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    pixels.mapv(|v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    })
}

/// Writes an 8-bit binary (P5) PGM.
pub fn write_pgm(pixels: ArrayView2<u8>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = pixels.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(pixels.iter());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ascii_example() {
        let img = parse_pgm(b"P2 2 2 255 0 128 255 64", "a").unwrap();
        assert_eq!(img.pixels, array![[0.0, 128.0], [255.0, 64.0]]);
    }

    #[test]
    fn ascii_with_comments() {
        let img = parse_pgm(
            b"P2\n# made by hand\n3 1\n# max\n10\n1 2 # trailing\n3\n",
            "c",
        )
        .unwrap();
        assert_eq!(img.pixels, array![[1.0, 2.0, 3.0]]);
    }

    #[test]
    fn binary_252_square() {
        let mut bytes = b"P5\n252 252\n255\n".to_vec();
        bytes.extend((0..252 * 252).map(|i| (i % 251) as u8));
        let img = parse_pgm(&bytes, "b").unwrap();
        assert_eq!(img.pixels.dim(), (252, 252));
        assert_eq!(img.pixels[[1, 0]], (252 % 251) as f64);
    }

    #[test]
    fn binary_sixteen_bit_big_endian() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend([0x01, 0x00, 0xff, 0xff]);
        let img = parse_pgm(&bytes, "w").unwrap();
        assert_eq!(img.pixels, array![[256.0, 65535.0]]);
    }

    #[test]
    fn unsupported_magic() {
        assert!(matches!(
            parse_pgm(b"P6 1 1 255\n\x00\x00\x00", "x"),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            parse_pgm(b"P5 4 4 255\n\x00\x01", "t"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_pgm(b"P2 2 2 255 1 2 3", "t"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_pgm(b"P2 2 x 255", "t"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_pgm(b"P2 1 1 70000 1", "t"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(parse_pgm(b"", "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let px = array![[0u8, 10, 20], [30, 40, 255]];
        write_pgm(px.view(), &path).unwrap();
        let img = load_pgm(&path).unwrap();
        assert_eq!(img.source_id, "img");
        assert_eq!(img.pixels, px.mapv(f64::from));
    }

    #[test]
    fn rescale_spans_full_range() {
        let r = rescale_to_u8(array![[-1.0, 0.0], [1.0, 3.0]].view());
        assert_eq!(r, array![[0u8, 64], [128, 255]]);
        assert_eq!(rescale_to_u8(array![[2.0, 2.0]].view()), array![[0u8, 0]]);
    }

    #[test]
    fn square_patch_cuts_top_left() {
        let img = ImagePatch::new(
            Array2::from_shape_fn((4, 5), |(i, j)| (i * 5 + j) as f64),
            "p",
        )
        .unwrap();
        let p = img.square_patch(2).unwrap();
        assert_eq!(p.pixels, array![[0.0, 1.0], [5.0, 6.0]]);
        assert!(img.square_patch(5).is_err());
    }
}

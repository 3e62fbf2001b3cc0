//! PNG (8/16-bit RGB) and binary PPM (P6) codecs.
//!
//! Integer samples `v` at bit depth `d` load as `v / (2^d - 1)`. Export
//! clamps to `[0, 1]` and quantizes with `round(v * (2^d - 1))`, rounding
//! half away from zero.

use std::fs;
use std::io::{BufReader, Cursor};
use std::path::Path;

use super::{clamp_unit, Raster, CHANNELS};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }

    pub fn bits(self) -> u8 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }
}

impl TryFrom<u8> for BitDepth {
    type Error = Error;

    fn try_from(bits: u8) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::BitDepth(other)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Png,
    Ppm,
}

fn format_for(path: &Path) -> Result<Format> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(Format::Png),
        Some("ppm") => Ok(Format::Ppm),
        _ => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "expected a .png or .ppm extension".into(),
        }),
    }
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Png => decode_png(path, &bytes),
        Format::Ppm => decode_ppm(path, &bytes),
    }
}

/// Writes `img` with the codec chosen by the file extension.
pub fn save_raster(img: &Raster, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format_for(path)? {
        Format::Png => encode_png(path, img, depth)?,
        Format::Ppm => encode_ppm(img, depth),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn quantize(v: f64, depth: BitDepth) -> u32 {
    // f64::round rounds half away from zero; the clamp keeps the argument >= 0.
    (clamp_unit(v) * depth.max_value() as f64).round() as u32
}

fn samples_to_bytes(img: &Raster, depth: BitDepth) -> Vec<u8> {
    match depth {
        BitDepth::Eight => img.data().iter().map(|&v| quantize(v, depth) as u8).collect(),
        BitDepth::Sixteen => img
            .data()
            .iter()
            .flat_map(|&v| (quantize(v, depth) as u16).to_be_bytes())
            .collect(),
    }
}

fn bytes_to_samples(bytes: &[u8], depth: BitDepth) -> Vec<f64> {
    let scale = depth.max_value() as f64;
    match depth {
        BitDepth::Eight => bytes.iter().map(|&b| b as f64 / scale).collect(),
        BitDepth::Sixteen => bytes
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]) as f64 / scale)
            .collect(),
    }
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<Raster> {
    let decode_err = |e: png::DecodingError| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut decoder = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| match e {
        png::DecodingError::Format(f) => Error::CorruptHeader {
            path: path.to_path_buf(),
            reason: f.to_string(),
        },
        other => decode_err(other),
    })?;
    let info = reader.info();
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Grayscale | png::ColorType::Indexed => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgba => 4,
    };
    if channels != CHANNELS {
        return Err(Error::ChannelCount {
            path: path.to_path_buf(),
            found: channels,
        });
    }
    let depth = match info.bit_depth {
        png::BitDepth::Eight => BitDepth::Eight,
        png::BitDepth::Sixteen => BitDepth::Sixteen,
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("RGB PNG with bit depth {other:?}"),
            })
        }
    };
    let size = reader.output_buffer_size().ok_or_else(|| Error::Decode {
        path: path.to_path_buf(),
        reason: "image too large".into(),
    })?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(decode_err)?;
    buf.truncate(frame.buffer_size());
    Raster::new(width, height, bytes_to_samples(&buf, depth))
}

fn encode_png(path: &Path, img: &Raster, depth: BitDepth) -> Result<Vec<u8>> {
    let encode_err = |e: png::EncodingError| Error::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(match depth {
            BitDepth::Eight => png::BitDepth::Eight,
            BitDepth::Sixteen => png::BitDepth::Sixteen,
        });
        let mut writer = encoder.write_header().map_err(encode_err)?;
        writer
            .write_image_data(&samples_to_bytes(img, depth))
            .map_err(encode_err)?;
        writer.finish().map_err(encode_err)?;
    }
    Ok(out)
}

fn encode_ppm(img: &Raster, depth: BitDepth) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n{}\n", img.width(), img.height(), depth.max_value()).into_bytes();
    out.extend(samples_to_bytes(img, depth));
    out
}

/// Reads PPM header tokens, skipping whitespace and `#` comments.
struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn token(&mut self) -> Option<&[u8]> {
        loop {
            match self.bytes.get(self.pos)? {
                b'#' => {
                    while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        Some(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Option<usize> {
        std::str::from_utf8(self.token()?).ok()?.parse().ok()
    }
}

fn decode_ppm(path: &Path, bytes: &[u8]) -> Result<Raster> {
    let corrupt = |reason: &str| Error::CorruptHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    match cursor.token() {
        Some(b"P6") => {}
        Some(b"P3") | Some(b"P5") | Some(b"P2") => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: "only binary RGB PPM (P6) is supported".into(),
            })
        }
        _ => return Err(corrupt("missing P6 magic number")),
    }
    let width = cursor.number().ok_or_else(|| corrupt("bad width"))?;
    let height = cursor.number().ok_or_else(|| corrupt("bad height"))?;
    let maxval = cursor.number().ok_or_else(|| corrupt("bad maxval"))?;
    let depth = match maxval {
        255 => BitDepth::Eight,
        65535 => BitDepth::Sixteen,
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("maxval {other}; expected 255 or 65535"),
            })
        }
    };
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(cursor.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(corrupt("missing separator after maxval"));
    }
    let body = &bytes[cursor.pos + 1..];
    let bytes_per_sample = if depth == BitDepth::Eight { 1 } else { 2 };
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(CHANNELS * bytes_per_sample))
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    if width == 0 || height == 0 {
        return Err(corrupt("zero dimension"));
    }
    if body.len() < needed {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: format!("truncated raster: need {needed} bytes, found {}", body.len()),
        });
    }
    Raster::new(width, height, bytes_to_samples(&body[..needed], depth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantizer_rounds_half_away_from_zero_and_clamps() {
        assert_eq!(quantize(0.5, BitDepth::Eight), 128);
        assert_eq!(quantize(-0.2, BitDepth::Eight), 0);
        assert_eq!(quantize(1.7, BitDepth::Eight), 255);
        assert_eq!(quantize(1.0, BitDepth::Sixteen), 65535);
        assert_eq!(quantize(0.5, BitDepth::Sixteen), 32768);
    }

    #[test]
    fn bit_depth_parse() {
        assert_eq!(BitDepth::try_from(16).unwrap(), BitDepth::Sixteen);
        assert!(matches!(BitDepth::try_from(12), Err(Error::BitDepth(12))));
    }

    #[test]
    fn ppm_header_with_comments() {
        let mut bytes = b"P6\n# made by hand\n1 1 # trailing\n255\n".to_vec();
        bytes.extend([255, 0, 128]);
        let img = decode_ppm(Path::new("x.ppm"), &bytes).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0, 128.0 / 255.0]);
    }

    #[test]
    fn ppm_rejects_bad_headers() {
        let p = Path::new("x.ppm");
        assert!(matches!(
            decode_ppm(p, b"P7\n1 1\n255\n"),
            Err(Error::CorruptHeader { .. })
        ));
        assert!(matches!(
            decode_ppm(p, b"P6\n1 x\n255\n"),
            Err(Error::CorruptHeader { .. })
        ));
        assert!(matches!(
            decode_ppm(p, b"P6\n1 1\n100\n"),
            Err(Error::UnsupportedFormat { .. })
        ));
        assert!(matches!(
            decode_ppm(p, b"P6\n1 1\n255\n\x01"),
            Err(Error::Decode { .. })
        ));
        assert!(matches!(
            decode_ppm(p, b"P5\n1 1\n255\n\x01"),
            Err(Error::UnsupportedFormat { .. })
        ));
    }

    #[test]
    fn ppm_sixteen_bit_is_big_endian() {
        let img = Raster::new(1, 1, vec![1.0, 0.0, 0.5]).unwrap();
        let bytes = encode_ppm(&img, BitDepth::Sixteen);
        assert!(bytes.ends_with(&[0xff, 0xff, 0, 0, 0x80, 0x00]));
    }

    #[test]
    fn unknown_extension_rejected() {
        let img = Raster::filled(1, 1, 0.0);
        assert!(matches!(
            save_raster(&img, "out.bmp", BitDepth::Eight),
            Err(Error::UnsupportedFormat { .. })
        ));
    }
}

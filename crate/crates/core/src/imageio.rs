//! Binary PPM (P6) and PGM (P5) reading and writing, 8 or 16 bits per sample.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::loss::Plane;
use crate::scene::ImageBuffer;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            Self::Eight => 255,
            Self::Sixteen => 65535,
        }
    }
}

fn quantize<T: Scalar>(v: T, maxval: u32) -> u32 {
    let x = v.to_f64_lossy();
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    (x * maxval as f64).round() as u32
}

fn encode(magic: &str, width: usize, height: usize, samples: impl Iterator<Item = u32>, depth: BitDepth) -> Vec<u8> {
    let mut out = format!("{magic}\n{width} {height}\n{}\n", depth.maxval()).into_bytes();
    for s in samples {
        match depth {
            BitDepth::Eight => out.push(s as u8),
            BitDepth::Sixteen => out.extend_from_slice(&(s as u16).to_be_bytes()),
        }
    }
    out
}

/// Encodes an RGB image, clamping to `[0, 1]`.
pub fn encode_ppm<T: Scalar>(img: &ImageBuffer<T>, depth: BitDepth) -> Vec<u8> {
    let m = depth.maxval();
    encode("P6", img.width, img.height, img.data.iter().map(|&v| quantize(v, m)), depth)
}

pub fn encode_pgm<T: Scalar>(plane: &Plane<T>, depth: BitDepth) -> Vec<u8> {
    let m = depth.maxval();
    encode("P5", plane.width, plane.height, plane.data.iter().map(|&v| quantize(v, m)), depth)
}

pub fn write_ppm<T: Scalar>(path: &Path, img: &ImageBuffer<T>, depth: BitDepth) -> Result<()> {
    fs::write(path, encode_ppm(img, depth)).map_err(|e| Error::io(path, e))
}

pub fn write_pgm<T: Scalar>(path: &Path, plane: &Plane<T>, depth: BitDepth) -> Result<()> {
    fs::write(path, encode_pgm(plane, depth)).map_err(|e| Error::io(path, e))
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> std::result::Result<Header, String> {
    if bytes.len() < 2 {
        return Err("file too short".into());
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format!("expected a number in header at byte {start}"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| "header number out of range".to_string())?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing whitespace after maxval".into()),
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(format!("invalid header values {w}x{h} maxval {maxval}"));
    }
    Ok(Header {
        magic,
        width: w as usize,
        height: h as usize,
        maxval: maxval as u32,
        data_start: pos,
    })
}

fn decode_samples(bytes: &[u8], h: &Header, channels: usize) -> std::result::Result<Vec<u32>, String> {
    let count = h.width * h.height * channels;
    let wide = h.maxval > 255;
    let need = count * if wide { 2 } else { 1 };
    let data = &bytes[h.data_start..];
    if data.len() != need {
        return Err(format!("expected {need} bytes of pixel data, found {}", data.len()));
    }
    let samples: Vec<u32> = if wide {
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as u32).collect()
    } else {
        data.iter().map(|&b| b as u32).collect()
    };
    if let Some(i) = samples.iter().position(|&s| s > h.maxval) {
        return Err(format!("sample {i} exceeds maxval {}", h.maxval));
    }
    Ok(samples)
}

/// Decodes a P6 image into `[0, 1]`.
pub fn decode_ppm<T: Scalar>(bytes: &[u8]) -> std::result::Result<ImageBuffer<T>, String> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P6" {
        return Err("not a binary PPM (P6)".into());
    }
    let samples = decode_samples(bytes, &h, 3)?;
    let scale = 1.0 / h.maxval as f64;
    let data = samples.into_iter().map(|s| T::lit(s as f64 * scale)).collect();
    ImageBuffer::from_vec(h.width, h.height, data).map_err(|e| e.to_string())
}

pub fn read_ppm<T: Scalar>(path: &Path) -> Result<ImageBuffer<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|m| Error::format(path, m))
}

pub fn read_pgm<T: Scalar>(path: &Path) -> Result<Plane<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let h = parse_header(&bytes).map_err(|m| Error::format(path, m))?;
    if &h.magic != b"P5" {
        return Err(Error::format(path, "not a binary PGM (P5)"));
    }
    let samples = decode_samples(&bytes, &h, 1).map_err(|m| Error::format(path, m))?;
    let scale = 1.0 / h.maxval as f64;
    Ok(Plane {
        width: h.width,
        height: h.height,
        data: samples.into_iter().map(|s| T::lit(s as f64 * scale)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image() -> ImageBuffer<f64> {
        let mut img = ImageBuffer::new(5, 3);
        for y in 0..3 {
            for x in 0..5 {
                img.set(x, y, 0, x as f64 / 4.0);
                img.set(x, y, 1, y as f64 / 2.0);
                img.set(x, y, 2, 0.3);
            }
        }
        img
    }

    #[test]
    fn sixteen_bit_round_trip_within_half_step() {
        let img = gradient_image();
        let back: ImageBuffer<f64> = decode_ppm(&encode_ppm(&img, BitDepth::Sixteen)).unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-15);
        }
        let again = encode_ppm(&back, BitDepth::Sixteen);
        assert_eq!(again, encode_ppm(&img, BitDepth::Sixteen));
    }

    #[test]
    fn eight_bit_header_and_comments() {
        let img = gradient_image();
        let bytes = encode_ppm(&img, BitDepth::Eight);
        assert!(bytes.starts_with(b"P6\n5 3\n255\n"));
        let mut commented = b"P6 # a comment\n5 3\n255\n".to_vec();
        commented.extend_from_slice(&bytes[11..]);
        let a: ImageBuffer<f64> = decode_ppm(&bytes).unwrap();
        let b: ImageBuffer<f64> = decode_ppm(&commented).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_inputs_rejected() {
        assert!(decode_ppm::<f64>(b"P3\n1 1\n255\n").is_err());
        assert!(decode_ppm::<f64>(b"P6\n2 2\n255\n\x00\x00").is_err());
        assert!(decode_ppm::<f64>(b"P6\n1 1\n").is_err());
        assert!(decode_ppm::<f64>(b"P6\n1 1\n100\n\xff\x00\x00").is_err());
    }
}

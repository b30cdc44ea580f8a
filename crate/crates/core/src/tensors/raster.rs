//! 8-bit raster images and binary PNM (P6 / P5) I/O.

use std::io::{Read, Write};

use super::TensorError;

/// Interleaved 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, TensorError> {
        let expected = width * height * Self::CHANNELS;
        if pixels.len() != expected {
            return Err(TensorError::PixelCount {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height * Self::CHANNELS],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Single-channel 8-bit image, used for masks and heatmaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, TensorError> {
        if pixels.len() != width * height {
            return Err(TensorError::PixelCount {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

struct PnmHeader {
    magic: [u8; 2],
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<PnmHeader, TensorError> {
    if bytes.len() < 2 {
        return Err(TensorError::Truncated);
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' || b == b'\r' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(TensorError::Truncated),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(TensorError::MalformedHeader);
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(TensorError::MalformedHeader)?;
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => return Err(TensorError::MalformedHeader),
        None => return Err(TensorError::Truncated),
    }
    if fields[2] != 255 {
        return Err(TensorError::UnsupportedMaxval(fields[2]));
    }
    Ok(PnmHeader {
        magic,
        width: fields[0],
        height: fields[1],
        data_start: pos,
    })
}

fn read_raster(
    bytes: &[u8],
    want: &[u8; 2],
    channels: usize,
) -> Result<(usize, usize, Vec<u8>), TensorError> {
    if bytes.len() >= 2 && &bytes[..2] != want {
        return Err(TensorError::UnsupportedFormat(
            String::from_utf8_lossy(&bytes[..2]).into_owned(),
        ));
    }
    let header = parse_header(bytes)?;
    debug_assert_eq!(&header.magic, want);
    let n = header
        .width
        .checked_mul(header.height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or(TensorError::MalformedHeader)?;
    let data = bytes
        .get(header.data_start..header.data_start + n)
        .ok_or(TensorError::Truncated)?;
    Ok((header.width, header.height, data.to_vec()))
}

/// Reads a binary PPM (`P6`, maxval 255).
pub fn read_ppm<R: Read>(mut source: R) -> Result<RasterImage, TensorError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let (w, h, px) = read_raster(&bytes, b"P6", 3)?;
    RasterImage::new(w, h, px)
}

/// Writes a binary PPM with a normalized `P6 <w> <h> 255\n` header.
pub fn write_ppm<W: Write>(image: &RasterImage, mut sink: W) -> Result<usize, TensorError> {
    let header = format!("P6 {} {} 255\n", image.width, image.height);
    sink.write_all(header.as_bytes())?;
    sink.write_all(&image.pixels)?;
    Ok(header.len() + image.pixels.len())
}

/// Reads a binary PGM (`P5`, maxval 255).
pub fn read_pgm<R: Read>(mut source: R) -> Result<GrayImage, TensorError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let (w, h, px) = read_raster(&bytes, b"P5", 1)?;
    GrayImage::new(w, h, px)
}

pub fn write_pgm<W: Write>(image: &GrayImage, mut sink: W) -> Result<usize, TensorError> {
    let header = format!("P5 {} {} 255\n", image.width, image.height);
    sink.write_all(header.as_bytes())?;
    sink.write_all(&image.pixels)?;
    Ok(header.len() + image.pixels.len())
}

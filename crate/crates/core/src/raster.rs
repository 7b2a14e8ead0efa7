//! Plain row-major rasters and binary PNM (PGM `P5` / PPM `P6`) I/O.
//!
//! Pixel `(u, v)` is column `u`, row `v`, with the origin in the upper-left
//! corner. Only 8-bit maxval (`255`) files are accepted.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Single-channel 8-bit raster. Thermal frames use this type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// Thermal frames are mono-channel intensity matrices.
pub type ThermalImage = GrayImage;

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self { width, height, data: vec![value; width as usize * height as usize] }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::Format(format!(
                "expected {} samples, got {}",
                width as usize * height as usize,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> u8 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: u8) {
        self.data[v as usize * self.width as usize + u as usize] = value;
    }

    /// Reads a binary PGM (`P5`).
    pub fn read_pgm<R: BufRead>(reader: R) -> Result<Self> {
        let (magic, width, height, data) = read_pnm(reader)?;
        if magic != *b"P5" {
            return Err(Error::Format("expected a P5 (binary PGM) file".into()));
        }
        Self::from_raw(width, height, data)
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }
}

/// Interleaved 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0; 3 * width as usize * height as usize] }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width as usize * height as usize {
            return Err(Error::Format(format!(
                "expected {} samples, got {}",
                3 * width as usize * height as usize,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> [u8; 3] {
        let i = 3 * (v as usize * self.width as usize + u as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, px: [u8; 3]) {
        let i = 3 * (v as usize * self.width as usize + u as usize);
        self.data[i..i + 3].copy_from_slice(&px);
    }

    /// Reads a binary PPM (`P6`).
    pub fn read_ppm<R: BufRead>(reader: R) -> Result<Self> {
        let (magic, width, height, data) = read_pnm(reader)?;
        if magic != *b"P6" {
            return Err(Error::Format("expected a P6 (binary PPM) file".into()));
        }
        Self::from_raw(width, height, data)
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }
}

/// Raster of `0`/`1` values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0; width as usize * height as usize] }
    }

    /// Builds a mask from arbitrary bytes; any nonzero byte becomes `1`.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v) as u8);
            }
        }
        Self { width, height, data }
    }

    pub(crate) fn from_bits(width: u32, height: u32, data: Vec<u8>) -> Self {
        debug_assert!(data.iter().all(|&b| b <= 1));
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> bool {
        self.data[v as usize * self.width as usize + u as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, on: bool) {
        self.data[v as usize * self.width as usize + u as usize] = on as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b != 0).count()
    }

    /// Mask of the nonzero pixels of a gray image.
    pub fn nonzero(img: &GrayImage) -> Self {
        Self::from_bits(img.width, img.height, img.data.iter().map(|&p| (p != 0) as u8).collect())
    }

    /// Renders the mask as a 0/255 gray image.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| b * 255).collect(),
        }
    }
}

fn read_pnm<R: BufRead>(mut reader: R) -> Result<([u8; 2], u32, u32, Vec<u8>)> {
    let mut magic = [0u8; 2];
    reader.read_exact(&mut magic).map_err(io_err)?;
    let width = read_header_int(&mut reader)?;
    let height = read_header_int(&mut reader)?;
    let maxval = read_header_int(&mut reader)?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}")));
    }
    let channels = match &magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::Format("not a binary PGM/PPM file".into())),
    };
    let mut data = vec![0u8; channels * width as usize * height as usize];
    reader.read_exact(&mut data).map_err(io_err)?;
    Ok((magic, width, height, data))
}

/// Reads one decimal header field, skipping whitespace and `#` comments.
/// Consumes exactly one whitespace byte after the number.
fn read_header_int<R: BufRead>(reader: &mut R) -> Result<u32> {
    let mut byte = [0u8; 1];
    loop {
        reader.read_exact(&mut byte).map_err(io_err)?;
        match byte[0] {
            b'#' => {
                let mut line = Vec::new();
                reader.read_until(b'\n', &mut line).map_err(io_err)?;
            }
            b if b.is_ascii_whitespace() => {}
            _ => break,
        }
    }
    let mut value: u32 = 0;
    loop {
        if !byte[0].is_ascii_digit() {
            return Err(Error::Format(format!("unexpected header byte {:#04x}", byte[0])));
        }
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add(u32::from(byte[0] - b'0')))
            .ok_or_else(|| Error::Format("header value overflow".into()))?;
        reader.read_exact(&mut byte).map_err(io_err)?;
        if byte[0].is_ascii_whitespace() {
            return Ok(value);
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

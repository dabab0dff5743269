use super::FlowError;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, FlowError> {
        if pixels.len() != width as usize * height as usize {
            return Err(FlowError::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    /// Builds an image from `f(col, row)`.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(c, r));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
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

    pub fn get(&self, col: u32, row: u32) -> u8 {
        self.pixels[row as usize * self.width as usize + col as usize]
    }

    pub fn to_float(&self) -> FloatImage {
        FloatImage {
            width: self.width as usize,
            height: self.height as usize,
            data: self.pixels.iter().map(|&p| p as f32).collect(),
        }
    }

    /// Binary PGM (`P5`, maxval 255).
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<(), FlowError> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pixels)?;
        Ok(())
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<(), FlowError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_pgm(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a binary PGM with `maxval <= 255`.
    pub fn read_pgm<R: Read>(r: R) -> Result<Self, FlowError> {
        let mut r = BufReader::new(r);
        let magic = next_token(&mut r)?;
        if magic != "P5" {
            return Err(FlowError::InvalidImage(format!(
                "unsupported PGM magic {magic:?}"
            )));
        }
        let width: u32 = parse_token(&mut r)?;
        let height: u32 = parse_token(&mut r)?;
        let maxval: u32 = parse_token(&mut r)?;
        if maxval == 0 || maxval > 255 {
            return Err(FlowError::InvalidImage(format!(
                "unsupported PGM maxval {maxval}"
            )));
        }
        let mut pixels = vec![0u8; width as usize * height as usize];
        r.read_exact(&mut pixels)?;
        if maxval != 255 {
            for p in &mut pixels {
                *p = ((*p as u32 * 255 + maxval / 2) / maxval).min(255) as u8;
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self, FlowError> {
        Self::read_pgm(std::fs::File::open(path)?)
    }
}

fn parse_token<R: BufRead, T: std::str::FromStr>(r: &mut R) -> Result<T, FlowError> {
    let t = next_token(r)?;
    t.parse()
        .map_err(|_| FlowError::InvalidImage(format!("bad PGM header field {t:?}")))
}

// Header tokens are whitespace separated; '#' starts a comment. Exactly one
// whitespace byte follows the last token, which this consumes.
fn next_token<R: BufRead>(r: &mut R) -> Result<String, FlowError> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        let b = byte[0];
        if b == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
            continue;
        }
        if b.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(b as char);
        if tok.len() > 32 {
            return Err(FlowError::InvalidImage("PGM header token too long".into()));
        }
    }
}

/// Single-precision working image used by the pyramid and the tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    fn clamped(&self, col: isize, row: isize) -> f32 {
        let c = col.clamp(0, self.width as isize - 1) as usize;
        let r = row.clamp(0, self.height as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    /// Bilinear sample with replicated borders.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (ax, ay) = (x - x0, y - y0);
        let (c, r) = (x0 as isize, y0 as isize);
        let p00 = self.clamped(c, r) as f64;
        let p10 = self.clamped(c + 1, r) as f64;
        let p01 = self.clamped(c, r + 1) as f64;
        let p11 = self.clamped(c + 1, r + 1) as f64;
        (1.0 - ay) * ((1.0 - ax) * p00 + ax * p10) + ay * ((1.0 - ax) * p01 + ax * p11)
    }

    /// Samples the `n x n` grid `(x0 + i, y0 + j)` into `out` (row-major).
    /// All points share the same fractional offset, so the bilinear weights
    /// are computed once.
    pub fn sample_patch(&self, x0: f64, y0: f64, n: usize, out: &mut [f64]) {
        debug_assert!(out.len() >= n * n);
        let (fx, fy) = (x0.floor(), y0.floor());
        let (ax, ay) = (x0 - fx, y0 - fy);
        let w00 = (1.0 - ax) * (1.0 - ay);
        let w10 = ax * (1.0 - ay);
        let w01 = (1.0 - ax) * ay;
        let w11 = ax * ay;
        let (c0, r0) = (fx as isize, fy as isize);
        let inside = c0 >= 0
            && r0 >= 0
            && c0 + (n as isize) < self.width as isize
            && r0 + (n as isize) < self.height as isize;
        if inside {
            let (c0, r0) = (c0 as usize, r0 as usize);
            let w = self.width;
            for j in 0..n {
                let top = &self.data[(r0 + j) * w + c0..(r0 + j) * w + c0 + n + 1];
                let bot = &self.data[(r0 + j + 1) * w + c0..(r0 + j + 1) * w + c0 + n + 1];
                let dst = &mut out[j * n..(j + 1) * n];
                for i in 0..n {
                    dst[i] = w00 * top[i] as f64
                        + w10 * top[i + 1] as f64
                        + w01 * bot[i] as f64
                        + w11 * bot[i + 1] as f64;
                }
            }
        } else {
            for j in 0..n {
                let r = r0 + j as isize;
                for i in 0..n {
                    let c = c0 + i as isize;
                    out[j * n + i] = w00 * self.clamped(c, r) as f64
                        + w10 * self.clamped(c + 1, r) as f64
                        + w01 * self.clamped(c, r + 1) as f64
                        + w11 * self.clamped(c + 1, r + 1) as f64;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::from_fn(13, 7, |c, r| (c * 19 + r * 3) as u8);
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n13 7\n255\n"));
        assert_eq!(GrayImage::read_pgm(buf.as_slice()).unwrap(), img);
    }

    #[test]
    fn pgm_header_comments_and_maxval() {
        let mut data = b"P5 # comment\n# another\n2 1\n15\n".to_vec();
        data.extend_from_slice(&[0, 15]);
        let img = GrayImage::read_pgm(data.as_slice()).unwrap();
        assert_eq!(img.pixels(), &[0, 255]);
        assert!(GrayImage::read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(GrayImage::read_pgm(&b"P5\n4 4\n255\n\x00"[..]).is_err());
    }

    #[test]
    fn patch_sampling_matches_pointwise() {
        let img = GrayImage::from_fn(20, 16, |c, r| ((c * c + 7 * r) % 251) as u8).to_float();
        let mut out = vec![0.0; 36];
        for &(x0, y0) in &[(3.25, 4.5), (-2.7, 1.1), (15.3, 12.9), (7.0, 2.0)] {
            img.sample_patch(x0, y0, 6, &mut out);
            for j in 0..6 {
                for i in 0..6 {
                    let e = img.sample(x0 + i as f64, y0 + j as f64);
                    assert!((out[j * 6 + i] - e).abs() < 1e-9);
                }
            }
        }
    }
}

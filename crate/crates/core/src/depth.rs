//! Depth maps in integer millimeters and their 16-bit PGM encoding.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major depth in millimeters; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<u16>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<u16>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "depth map {}x{} needs {} values, got {}",
                width,
                height,
                width as usize * height as usize,
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> u16 {
        self.values[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, mm: u16) {
        let w = self.width as usize;
        self.values[v as usize * w + u as usize] = mm;
    }

    /// Depth in meters, `None` for invalid pixels.
    #[inline]
    pub fn meters(&self, u: u32, v: u32) -> Option<f64> {
        match self.get(u, v) {
            0 => None,
            mm => Some(mm as f64 / 1000.0),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    /// Binary PGM (P5), maxval 65535, big-endian samples.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let header = format!("P5\n{} {}\n65535\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + 2 * self.values.len());
        out.extend_from_slice(header.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut cursor = 0usize;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            // Skip whitespace and comments.
            while cursor < bytes.len() {
                let c = bytes[cursor];
                if c == b'#' {
                    while cursor < bytes.len() && bytes[cursor] != b'\n' {
                        cursor += 1;
                    }
                } else if c.is_ascii_whitespace() {
                    cursor += 1;
                } else {
                    break;
                }
            }
            let start = cursor;
            while cursor < bytes.len() && !bytes[cursor].is_ascii_whitespace() {
                cursor += 1;
            }
            if start == cursor {
                return Err("truncated PGM header".into());
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..cursor]).into_owned());
        }
        // Exactly one whitespace byte separates the header from the raster.
        cursor += 1;
        if tokens[0] != "P5" {
            return Err(format!("expected P5 magic, found {:?}", tokens[0]));
        }
        let parse = |s: &str, what: &str| {
            s.parse::<u32>()
                .map_err(|_| format!("bad {what} {s:?} in PGM header"))
        };
        let width = parse(&tokens[1], "width")?;
        let height = parse(&tokens[2], "height")?;
        let maxval = parse(&tokens[3], "maxval")?;
        if maxval != 65535 {
            return Err(format!("expected maxval 65535, found {maxval}"));
        }
        let n = width as usize * height as usize;
        let raster = bytes.get(cursor..).unwrap_or(&[]);
        if raster.len() != 2 * n {
            return Err(format!(
                "raster holds {} bytes, expected {}",
                raster.len(),
                2 * n
            ));
        }
        let values = raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm_bytes(&bytes).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg,
        })
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(DepthMap::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn pgm_is_big_endian() {
        let d = DepthMap::new(2, 1, vec![0x0102, 65535]).unwrap();
        let bytes = d.to_pgm_bytes();
        assert!(bytes.starts_with(b"P5\n2 1\n65535\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[1, 2, 255, 255]);
    }

    #[test]
    fn pgm_header_with_comment() {
        let mut bytes = b"P5 # depth\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&1500u16.to_be_bytes());
        let d = DepthMap::from_pgm_bytes(&bytes).unwrap();
        assert_eq!(d.get(0, 0), 1500);
    }

    #[test]
    fn pgm_rejects_8bit_and_truncation() {
        assert!(DepthMap::from_pgm_bytes(b"P5\n1 1\n255\n\x01").is_err());
        assert!(DepthMap::from_pgm_bytes(b"P5\n2 2\n65535\n\x00\x01").is_err());
        assert!(DepthMap::from_pgm_bytes(b"P2\n1 1\n65535\n\x00\x01").is_err());
    }

    proptest! {
        #[test]
        fn pgm_round_trip(w in 1u32..8, h in 1u32..8, seed in any::<u64>()) {
            let values: Vec<u16> = (0..w * h)
                .map(|i| (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 48) as u16)
                .collect();
            let d = DepthMap::new(w, h, values).unwrap();
            prop_assert_eq!(DepthMap::from_pgm_bytes(&d.to_pgm_bytes()).unwrap(), d);
        }
    }
}

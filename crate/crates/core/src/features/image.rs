use std::path::Path;

use crate::error::{Error, Result};

/// Grayscale image with row-major pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::rejected("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::rejected(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::rejected("pixel values must lie in [0, 1]"));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// 2x box-filter downsampling; odd trailing rows/columns are dropped.
    pub fn downsample(&self) -> Option<GrayImage> {
        let (w, h) = (self.width / 2, self.height / 2);
        if w == 0 || h == 0 {
            return None;
        }
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let sum = self.get(2 * x, 2 * y)
                    + self.get(2 * x + 1, 2 * y)
                    + self.get(2 * x, 2 * y + 1)
                    + self.get(2 * x + 1, 2 * y + 1);
                pixels.push(sum / 4.0);
            }
        }
        Some(GrayImage {
            width: w,
            height: h,
            pixels,
        })
    }

    /// Parses a binary PGM (`P5`) with maximum value 255.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format {
                    offset: pos,
                    msg: "truncated PGM header".into(),
                });
            }
            fields.push((start, std::str::from_utf8(&bytes[start..pos]).unwrap_or("")));
        }
        if fields[0].1 != "P5" {
            return Err(Error::Format {
                offset: 0,
                msg: "not a binary PGM (expected magic P5)".into(),
            });
        }
        let mut nums = [0usize; 3];
        for (slot, &(offset, text)) in nums.iter_mut().zip(&fields[1..]) {
            *slot = text.parse().map_err(|_| Error::Format {
                offset,
                msg: format!("bad PGM header field {text:?}"),
            })?;
        }
        let [width, height, maxval] = nums;
        if maxval != 255 {
            return Err(Error::Format {
                offset: fields[3].0,
                msg: format!("unsupported PGM max value {maxval}, expected 255"),
            });
        }
        if width == 0 || height == 0 {
            return Err(Error::Format {
                offset: fields[1].0,
                msg: "PGM dimensions must be positive".into(),
            });
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let needed = width * height;
        if bytes.len() < pos + needed {
            return Err(Error::Format {
                offset: bytes.len(),
                msg: format!("PGM raster truncated: need {needed} bytes"),
            });
        }
        let pixels = bytes[pos..pos + needed].iter().map(|&b| b as f64 / 255.0).collect();
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Encodes as binary PGM, rounding pixels to 8 bits.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|&p| (p * 255.0).round() as u8));
        out
    }

    pub fn load_pgm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_with_comment() {
        let img = GrayImage::from_fn(5, 3, |x, y| ((x + 5 * y) * 17) as f64 / 255.0).unwrap();
        let bytes = img.to_pgm();
        assert_eq!(GrayImage::from_pgm(&bytes).unwrap(), img);

        let mut commented = b"P5\n# made by hand\n5 3\n255\n".to_vec();
        commented.extend_from_slice(&bytes[bytes.len() - 15..]);
        assert_eq!(GrayImage::from_pgm(&commented).unwrap(), img);
    }

    #[test]
    fn pgm_errors() {
        assert!(GrayImage::from_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(GrayImage::from_pgm(b"P5\n2 2\n65535\n").is_err());
        assert!(matches!(
            GrayImage::from_pgm(b"P5\n2 2\n255\n\x00\x00"),
            Err(Error::Format { .. })
        ));
        assert!(GrayImage::from_pgm(b"P5\n2").is_err());
    }

    #[test]
    fn downsample_averages_blocks() {
        let img = GrayImage::from_fn(5, 4, |x, _| if x % 2 == 0 { 0.0 } else { 1.0 }).unwrap();
        let half = img.downsample().unwrap();
        assert_eq!((half.width(), half.height()), (2, 2));
        assert!(half.pixels().iter().all(|&p| p == 0.5));
        let one = GrayImage::new(1, 1, vec![0.3]).unwrap();
        assert!(one.downsample().is_none());
    }

    #[test]
    fn rejects_bad_pixels() {
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
        assert!(GrayImage::new(0, 1, vec![]).is_err());
    }
}

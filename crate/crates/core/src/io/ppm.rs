//! Netpbm P3/P6 texture decoding.

use crate::mesh::Texture;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PpmError {
    #[error("not a P3 or P6 image")]
    BadMagic,
    #[error("malformed header field {0}")]
    BadHeader(&'static str),
    #[error("image dimensions {0}x{1} are invalid")]
    BadDimensions(usize, usize),
    #[error("pixel data truncated")]
    Truncated,
    #[error("sample value {0} exceeds maxval {1}")]
    SampleRange(u32, u32),
}

/// Reads header tokens while skipping whitespace and `#` comments.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn token(&mut self) -> Option<&'a [u8]> {
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
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, field: &'static str) -> Result<u32, PpmError> {
        self.token()
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|s| s.parse().ok())
            .ok_or(PpmError::BadHeader(field))
    }
}

/// Decodes an ASCII (P3) or binary (P6) PPM into 8-bit RGB, rescaling when
/// `maxval != 255`.
pub fn parse_ppm(bytes: &[u8]) -> Result<Texture, PpmError> {
    let mut header = Header { bytes, pos: 0 };
    let binary = match header.token() {
        Some(b"P6") => true,
        Some(b"P3") => false,
        _ => return Err(PpmError::BadMagic),
    };
    let width = header.number("width")? as usize;
    let height = header.number("height")? as usize;
    let maxval = header.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(PpmError::BadHeader("maxval"));
    }
    let count = width
        .checked_mul(height)
        .filter(|&c| c > 0 && c <= (1 << 28))
        .ok_or(PpmError::BadDimensions(width, height))?;
    let rescale = |v: u32| -> Result<u8, PpmError> {
        if v > maxval {
            return Err(PpmError::SampleRange(v, maxval));
        }
        Ok(((v as u64 * 255 + maxval as u64 / 2) / maxval as u64) as u8)
    };

    let mut pixels = Vec::with_capacity(count.min(bytes.len()));
    if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        let start = header.pos + 1;
        let wide = maxval > 255;
        let sample_bytes = if wide { 2 } else { 1 };
        let needed = count * 3 * sample_bytes;
        let data = bytes
            .get(start..)
            .filter(|d| d.len() >= needed)
            .ok_or(PpmError::Truncated)?;
        let mut samples = data[..needed].chunks_exact(sample_bytes).map(|c| {
            if wide {
                u16::from_be_bytes([c[0], c[1]]) as u32
            } else {
                c[0] as u32
            }
        });
        for _ in 0..count {
            let mut px = [0u8; 3];
            for ch in &mut px {
                *ch = rescale(samples.next().ok_or(PpmError::Truncated)?)?;
            }
            pixels.push(px);
        }
    } else {
        for _ in 0..count {
            let mut px = [0u8; 3];
            for ch in &mut px {
                let v = header.number("sample").map_err(|_| PpmError::Truncated)?;
                *ch = rescale(v)?;
            }
            pixels.push(px);
        }
    }
    Ok(Texture {
        width,
        height,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_with_comment() {
        let t = parse_ppm(b"P3\n# a comment\n2 1\n255\n255 0 0  0 0 255\n").unwrap();
        assert_eq!((t.width, t.height), (2, 1));
        assert_eq!(t.pixels, vec![[255, 0, 0], [0, 0, 255]]);
    }

    #[test]
    fn binary_rescales_maxval() {
        let mut bytes = b"P6 1 1 15\n".to_vec();
        bytes.extend_from_slice(&[15, 0, 5]);
        let t = parse_ppm(&bytes).unwrap();
        assert_eq!(t.pixels, vec![[255, 0, 85]]);
    }

    #[test]
    fn truncated_binary() {
        let mut bytes = b"P6 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[0; 11]);
        assert_eq!(parse_ppm(&bytes), Err(PpmError::Truncated));
    }

    #[test]
    fn rejects_other_formats() {
        assert_eq!(parse_ppm(b"P5 1 1 255\n\0"), Err(PpmError::BadMagic));
        assert!(matches!(
            parse_ppm(b"P3 0 4 255\n"),
            Err(PpmError::BadDimensions(0, 4))
        ));
    }
}

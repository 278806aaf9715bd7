//! Binary Netpbm: PPM (P6) for images and PGM (P5) for masks, maxval 255.

use std::path::Path;

use super::image::{Mask, RgbImage};
use crate::error::{Error, Result};

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

pub fn encode_pgm(width: usize, height: usize, values: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(values);
    out
}

pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let values: Vec<u8> = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    encode_pgm(mask.width(), mask.height(), &values)
}

struct Header {
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2], origin: &Path) -> Result<Header> {
    let fail = |m: String| Error::format(origin, m);
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(fail(format!(
            "bad magic, expected {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(fail("malformed header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fail("malformed header number".into()))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(fail("missing whitespace after maxval".into()));
    }
    if fields[2] != 255 {
        return Err(fail(format!("unsupported maxval {}", fields[2])));
    }
    Ok(Header {
        width: fields[0],
        height: fields[1],
        data_start: pos + 1,
    })
}

fn payload<'b>(bytes: &'b [u8], h: &Header, channels: usize, origin: &Path) -> Result<&'b [u8]> {
    let need = h.width * h.height * channels;
    let data = &bytes[h.data_start..];
    if data.len() != need {
        return Err(Error::format(
            origin,
            format!("expected {need} payload bytes, found {}", data.len()),
        ));
    }
    Ok(data)
}

pub fn decode_ppm(bytes: &[u8], origin: &Path) -> Result<RgbImage> {
    let h = parse_header(bytes, b"P6", origin)?;
    let data = payload(bytes, &h, 3, origin)?;
    RgbImage::new(h.width, h.height, data.to_vec())
}

pub fn decode_mask(bytes: &[u8], origin: &Path) -> Result<Mask> {
    let h = parse_header(bytes, b"P5", origin)?;
    let data = payload(bytes, &h, 1, origin)?;
    let bits = data
        .iter()
        .map(|&v| match v {
            0 => Ok(false),
            255 => Ok(true),
            other => Err(Error::format(
                origin,
                format!("mask value {other} is not 0 or 255"),
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    Mask::from_bits(h.width, h.height, bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_is_exact() {
        let img = RgbImage::filled(32, 32, [1, 2, 3]);
        let bytes = encode_ppm(&img);
        assert!(bytes.starts_with(b"P6\n32 32\n255\n"));
        assert_eq!(bytes.len(), 13 + 32 * 32 * 3);
        assert_eq!(decode_ppm(&bytes, Path::new("t")).unwrap(), img);
    }

    #[test]
    fn mask_round_trip() {
        let mut m = Mask::empty(4, 3);
        m.set(1, 2, true);
        let bytes = encode_mask(&m);
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(decode_mask(&bytes, Path::new("t")).unwrap(), m);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let m = decode_mask(&bytes, Path::new("t")).unwrap();
        assert_eq!(m.bits(), &[false, true]);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let bytes = encode_ppm(&RgbImage::filled(2, 2, [0, 0, 0]));
        let err = decode_mask(&bytes, Path::new("m.pgm")).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn short_payload_is_rejected() {
        let bytes = encode_ppm(&RgbImage::filled(2, 2, [0, 0, 0]));
        assert!(decode_ppm(&bytes[..bytes.len() - 1], Path::new("t")).is_err());
    }

    #[test]
    fn non_binary_mask_value_is_rejected() {
        let bytes = encode_pgm(1, 1, &[7]);
        assert!(decode_mask(&bytes, Path::new("t")).is_err());
    }
}

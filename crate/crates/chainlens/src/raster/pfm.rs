//! Portable float map (PFM) reader/writer, grayscale ("Pf") only.
//!
//! Layout: `Pf\n<width> <height>\n<scale>\n` followed by width*height
//! little-endian f32 values when scale is negative (big-endian when
//! positive). Scanlines are stored bottom-to-top per the PFM convention.
//! Invalid pixels round-trip as NaN.

use std::fs;
use std::path::Path;

use super::{FloatRaster, RasterError};
use crate::core::RasterSize;

pub fn write_pfm_bytes(raster: &FloatRaster) -> Vec<u8> {
    let size = raster.size();
    let mut out = Vec::with_capacity(32 + size.pixels() * 4);
    out.extend_from_slice(b"Pf\n");
    out.extend_from_slice(format!("{} {}\n", size.width, size.height).as_bytes());
    out.extend_from_slice(b"-1.0\n");
    for y in (0..size.height).rev() {
        for x in 0..size.width {
            let idx = y as usize * size.width as usize + x as usize;
            let v = if raster.is_valid(idx) {
                raster.values()[idx]
            } else {
                f32::NAN
            };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_pfm(raster: &FloatRaster, path: &Path) -> Result<(), RasterError> {
    fs::write(path, write_pfm_bytes(raster)).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_pfm(path: &Path) -> Result<FloatRaster, RasterError> {
    let bytes = fs::read(path).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_pfm_bytes(&bytes)
}

pub fn read_pfm_bytes(bytes: &[u8]) -> Result<FloatRaster, RasterError> {
    let mut cursor = 0usize;
    let magic = read_token(bytes, &mut cursor)
        .ok_or_else(|| RasterError::MalformedPfm("missing magic".into()))?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(RasterError::UnsupportedPfm("PF".into())),
        other => return Err(RasterError::MalformedPfm(format!("bad magic {other:?}"))),
    }
    let width: u32 = parse_token(bytes, &mut cursor, "width")?;
    let height: u32 = parse_token(bytes, &mut cursor, "height")?;
    if width == 0 || height == 0 {
        return Err(RasterError::MalformedPfm("zero dimension".into()));
    }
    let scale: f32 = parse_token(bytes, &mut cursor, "scale")?;
    if scale == 0.0 {
        return Err(RasterError::MalformedPfm("scale must be nonzero".into()));
    }
    let little_endian = scale < 0.0;

    let size = RasterSize::new(width, height);
    let expected = size.pixels() * 4;
    let payload = &bytes[cursor..];
    if payload.len() < expected {
        return Err(RasterError::MalformedPfm(format!(
            "truncated payload: need {expected} bytes, have {}",
            payload.len()
        )));
    }
    let mut values = vec![0f32; size.pixels()];
    for y_file in 0..height {
        let y = height - 1 - y_file; // bottom row first on disk
        for x in 0..width {
            let off = (y_file as usize * width as usize + x as usize) * 4;
            let raw: [u8; 4] = payload[off..off + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            values[y as usize * width as usize + x as usize] = v;
        }
    }
    Ok(FloatRaster::from_values(size, values))
}

/// Next whitespace-delimited ASCII token after `cursor`; advances past the
/// single whitespace byte that terminates it.
fn read_token(bytes: &[u8], cursor: &mut usize) -> Option<String> {
    while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    if start == *cursor {
        return None;
    }
    let token = String::from_utf8_lossy(&bytes[start..*cursor]).into_owned();
    if *cursor < bytes.len() {
        *cursor += 1; // consume the delimiter
    }
    Some(token)
}

fn parse_token<T: std::str::FromStr>(
    bytes: &[u8],
    cursor: &mut usize,
    what: &str,
) -> Result<T, RasterError> {
    let token = read_token(bytes, cursor)
        .ok_or_else(|| RasterError::MalformedPfm(format!("missing {what}")))?;
    token
        .parse()
        .map_err(|_| RasterError::MalformedPfm(format!("bad {what}: {token:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pixel_byte_layout() {
        let r = FloatRaster::from_values(RasterSize::new(1, 1), vec![0.5]);
        let bytes = write_pfm_bytes(&r);
        assert_eq!(&bytes[..3], b"Pf\n");
        assert_eq!(&bytes[3..7], b"1 1\n");
        assert_eq!(&bytes[7..12], b"-1.0\n");
        assert_eq!(&bytes[12..], &0.5f32.to_le_bytes());
        let back = read_pfm_bytes(&bytes).unwrap();
        assert_eq!(back.values(), &[0.5]);
    }

    #[test]
    fn color_variant_rejected() {
        let err = read_pfm_bytes(b"PF\n1 1\n-1.0\n\0\0\0\0\0\0\0\0\0\0\0\0").unwrap_err();
        assert!(matches!(err, RasterError::UnsupportedPfm(_)));
    }

    #[test]
    fn truncated_payload_rejected() {
        let r = FloatRaster::from_values(RasterSize::new(2, 2), vec![1.0, 2.0, 3.0, 4.0]);
        let mut bytes = write_pfm_bytes(&r);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            read_pfm_bytes(&bytes),
            Err(RasterError::MalformedPfm(_))
        ));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(read_pfm_bytes(b"Px\n1 1\n-1.0\n").is_err());
        assert!(read_pfm_bytes(b"Pf\n1\n").is_err());
        assert!(read_pfm_bytes(b"Pf\n1 1\n0.0\n\0\0\0\0").is_err());
    }

    #[test]
    fn big_endian_read() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.25f32.to_be_bytes());
        let r = read_pfm_bytes(&bytes).unwrap();
        assert_eq!(r.values(), &[2.25]);
    }

    #[test]
    fn row_order_is_bottom_up() {
        // 1x2 raster: top value 1.0, bottom value 2.0. Bottom row serializes
        // first.
        let r = FloatRaster::from_values(RasterSize::new(1, 2), vec![1.0, 2.0]);
        let bytes = write_pfm_bytes(&r);
        let payload = &bytes[bytes.len() - 8..];
        assert_eq!(&payload[..4], &2.0f32.to_le_bytes());
        assert_eq!(&payload[4..], &1.0f32.to_le_bytes());
        assert_eq!(read_pfm_bytes(&bytes).unwrap().values(), r.values());
    }

    #[test]
    fn invalid_pixels_round_trip_as_nan() {
        let r = FloatRaster::from_values(RasterSize::new(2, 1), vec![1.0, f32::NAN]);
        assert!(!r.all_valid());
        let back = read_pfm_bytes(&write_pfm_bytes(&r)).unwrap();
        assert!(back.is_valid(0));
        assert!(!back.is_valid(1));
        assert_eq!(back.values()[0], 1.0);
    }

    proptest! {
        #[test]
        fn round_trip_identity(
            w in 1u32..12,
            h in 1u32..12,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let size = RasterSize::new(w, h);
            let values: Vec<f32> = (0..size.pixels())
                .map(|_| rng.gen_range(-1e6f32..1e6))
                .collect();
            let r = FloatRaster::from_values(size, values);
            let back = read_pfm_bytes(&write_pfm_bytes(&r)).unwrap();
            prop_assert_eq!(back.values(), r.values());
            prop_assert_eq!(back.size(), r.size());
        }
    }
}

//! FMAP binary layout.
//!
//! ```text
//! "FMAP" | version u32 | W u32 | H u32 | K u32 | W·H·K f32 | flags u8
//! ```
//!
//! All multi-byte fields little-endian. Payload order is `(k, y, x)`
//! slowest-to-fastest. Flag bit 0 marks a rectified (post-ReLU) map.

use std::io::{Read, Write};

use super::FeatureMap;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";
pub const FMAP_VERSION: u32 = 1;

const HEADER_LEN: usize = 20;
const FLAG_RECTIFIED: u8 = 0b1;

pub fn write_fmap<T: Real, W: Write>(map: &FeatureMap<T>, mut sink: W) -> Result<()> {
    let n = map.data().len();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * n + 1);
    buf.extend_from_slice(FMAP_MAGIC);
    buf.extend_from_slice(&FMAP_VERSION.to_le_bytes());
    for dim in [map.width(), map.height(), map.channels()] {
        let dim = u32::try_from(dim)
            .map_err(|_| Error::InvalidArgument(format!("dimension {dim} exceeds u32")))?;
        buf.extend_from_slice(&dim.to_le_bytes());
    }
    for (index, v) in map.data().iter().enumerate() {
        // f64 values beyond f32 range would become infinite on disk.
        let v = v.to_f32().filter(|v| v.is_finite()).ok_or(Error::NonFinite { index })?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.push(if map.is_rectified() { FLAG_RECTIFIED } else { 0 });
    sink.write_all(&buf)?;
    Ok(())
}

pub fn read_fmap<T: Real, R: Read>(mut source: R) -> Result<FeatureMap<T>> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        if bytes.len() < 4 || &bytes[..4] != FMAP_MAGIC {
            return Err(Error::Format("missing FMAP magic".into()));
        }
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != FMAP_MAGIC {
        return Err(Error::Format("missing FMAP magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FMAP_VERSION {
        return Err(Error::Format(format!("unsupported FMAP version {version}")));
    }
    let (w, h, k) = (word(8) as usize, word(12) as usize, word(16) as usize);
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(k))
        .ok_or_else(|| Error::Format("FMAP dimensions overflow".into()))?;
    let expected = HEADER_LEN + 4 * n + 1;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::dims(
            format!("{expected} bytes for {w}x{h}x{k}"),
            format!("{} bytes", bytes.len()),
        ));
    }
    let data = bytes[HEADER_LEN..HEADER_LEN + 4 * n]
        .chunks_exact(4)
        .map(|c| {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            T::from(v).unwrap_or_else(T::nan)
        })
        .collect();
    let flags = bytes[expected - 1];
    FeatureMap::new(w, h, k, data, flags & FLAG_RECTIFIED != 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_map_is_25_bytes() {
        let m = FeatureMap::<f32>::new(1, 1, 1, vec![3.5], true).unwrap();
        let mut buf = Vec::new();
        write_fmap(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), 25);
        assert_eq!(&buf[..4], b"FMAP");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..20], &[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&buf[20..24], &3.5f32.to_le_bytes());
        assert_eq!(buf[24], 1);
    }

    #[test]
    fn large_map_round_trips() {
        let m = FeatureMap::<f32>::from_fn(23, 13, 2048, true, |x, y, k| {
            ((x * 31 + y * 17 + k * 7) % 101) as f32 * 0.37
        })
        .unwrap();
        let mut buf = Vec::new();
        write_fmap(&m, &mut buf).unwrap();
        let back: FeatureMap<f32> = read_fmap(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(back.is_rectified());
    }

    #[test]
    fn payload_order_is_channel_row_column() {
        let m = FeatureMap::<f32>::from_fn(2, 2, 2, false, |x, y, k| (4 * k + 2 * y + x) as f32)
            .unwrap();
        let mut buf = Vec::new();
        write_fmap(&m, &mut buf).unwrap();
        let vals: Vec<f32> = buf[20..20 + 32]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(vals, (0..8).map(|v| v as f32).collect::<Vec<_>>());
        assert_eq!(buf[52], 0);
    }

    #[test]
    fn non_finite_after_narrowing_is_rejected() {
        let m = FeatureMap::<f64>::new(2, 1, 1, vec![1.0, 1e300], false).unwrap();
        let mut buf = Vec::new();
        assert!(matches!(
            write_fmap(&m, &mut buf),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(buf.is_empty());
    }

    #[test]
    fn missing_trailing_value_is_truncation() {
        let m = FeatureMap::<f32>::new(2, 1, 1, vec![1.0, 2.0], false).unwrap();
        let mut buf = Vec::new();
        write_fmap(&m, &mut buf).unwrap();
        // drop the last value and the flag byte
        buf.truncate(buf.len() - 5);
        assert!(matches!(
            read_fmap::<f32, _>(buf.as_slice()),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut buf = b"FMAQ".to_vec();
        buf.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert!(matches!(
            read_fmap::<f32, _>(buf.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn trailing_garbage_is_length_mismatch() {
        let m = FeatureMap::<f32>::new(1, 1, 1, vec![1.0], false).unwrap();
        let mut buf = Vec::new();
        write_fmap(&m, &mut buf).unwrap();
        buf.push(0);
        assert!(matches!(
            read_fmap::<f32, _>(buf.as_slice()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}

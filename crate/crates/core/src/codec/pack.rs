//! Fixed-width bit packing.
//!
//! Values are written LSB-first: bit `k` of the stream is bit `k % 8` of byte
//! `k / 8`, and each value occupies `w` consecutive stream bits starting with
//! its least significant bit. The final byte is zero-padded.

use crate::error::{GpzError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedStream {
    pub bit_width: u8,
    pub len: usize,
    pub bytes: Vec<u8>,
}

/// Bytes occupied by `len` values of `w` bits.
#[inline]
pub fn packed_len(len: usize, w: u8) -> usize {
    (len as u128 * w as u128).div_ceil(8) as usize
}

/// Smallest width holding every value; 0 when all are zero.
pub fn width_for(values: &[u64]) -> u8 {
    let max = values.iter().copied().max().unwrap_or(0);
    (64 - max.leading_zeros()) as u8
}

pub struct BitWriter<'a> {
    out: &'a mut Vec<u8>,
    acc: u128,
    nbits: u32,
}

impl<'a> BitWriter<'a> {
    pub fn new(out: &'a mut Vec<u8>) -> Self {
        BitWriter { out, acc: 0, nbits: 0 }
    }

    #[inline]
    pub fn write(&mut self, value: u64, w: u8) {
        if w == 0 {
            return;
        }
        self.acc |= (value as u128) << self.nbits;
        self.nbits += w as u32;
        while self.nbits >= 8 {
            self.out.push(self.acc as u8);
            self.acc >>= 8;
            self.nbits -= 8;
        }
    }

    /// Flushes the partial byte, zero padded.
    pub fn finish(self) {
        if self.nbits > 0 {
            self.out.push(self.acc as u8);
        }
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    acc: u128,
    nbits: u32,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0, acc: 0, nbits: 0 }
    }

    #[inline]
    pub fn read(&mut self, w: u8) -> Result<u64> {
        if w == 0 {
            return Ok(0);
        }
        while self.nbits < w as u32 {
            let b = *self
                .bytes
                .get(self.pos)
                .ok_or_else(|| GpzError::corrupt_at("bit stream truncated", self.pos as u64))?;
            self.acc |= (b as u128) << self.nbits;
            self.pos += 1;
            self.nbits += 8;
        }
        let v = if w == 64 { self.acc as u64 } else { (self.acc as u64) & ((1u64 << w) - 1) };
        self.acc >>= w;
        self.nbits -= w as u32;
        Ok(v)
    }
}

pub fn pack_fixed(values: &[u64], w: u8) -> Result<PackedStream> {
    if w > 64 {
        return Err(GpzError::domain(format!("bit width {w} exceeds 64")));
    }
    if w < 64 {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| v >> w != 0) {
            return Err(GpzError::domain(format!("value {v} at {i} does not fit {w} bits")));
        }
    }
    let mut bytes = Vec::with_capacity(packed_len(values.len(), w));
    let mut writer = BitWriter::new(&mut bytes);
    for &v in values {
        writer.write(v, w);
    }
    writer.finish();
    Ok(PackedStream { bit_width: w, len: values.len(), bytes })
}

pub fn unpack_fixed(stream: &PackedStream) -> Result<Vec<u64>> {
    if stream.bytes.len() != packed_len(stream.len, stream.bit_width) {
        return Err(GpzError::corrupt(format!(
            "packed stream has {} bytes, expected {}",
            stream.bytes.len(),
            packed_len(stream.len, stream.bit_width)
        )));
    }
    unpack_slice(&stream.bytes, stream.len, stream.bit_width)
}

/// Decodes `len` values of width `w` from the front of `bytes`.
pub fn unpack_slice(bytes: &[u8], len: usize, w: u8) -> Result<Vec<u64>> {
    if w > 64 {
        return Err(GpzError::corrupt(format!("bit width {w} exceeds 64")));
    }
    if bytes.len() < packed_len(len, w) {
        return Err(GpzError::corrupt("packed stream truncated"));
    }
    let mut reader = BitReader::new(bytes);
    (0..len).map(|_| reader.read(w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(pack_fixed(&[1, 2, 1], 2).unwrap().bytes, vec![0b0001_1001]);
        assert_eq!(pack_fixed(&[5], 3).unwrap().bytes, vec![0b0000_0101]);
        let z = pack_fixed(&[0, 0, 0], 0).unwrap();
        assert!(z.bytes.is_empty());
        assert_eq!(unpack_fixed(&z).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn width_examples() {
        assert_eq!(width_for(&[0, 0]), 0);
        assert_eq!(width_for(&[]), 0);
        assert_eq!(width_for(&[1]), 1);
        assert_eq!(width_for(&[5, 2]), 3);
        assert_eq!(width_for(&[u64::MAX]), 64);
    }

    #[test]
    fn value_layout_crosses_bytes() {
        // 0x1ff in 9 bits then 1 in 9 bits: bits 0..9 set, bit 9 set.
        let s = pack_fixed(&[0x1ff, 1], 9).unwrap();
        assert_eq!(s.bytes, vec![0xff, 0x03, 0x00]);
    }

    #[test]
    fn errors() {
        assert!(pack_fixed(&[4], 2).is_err());
        assert!(pack_fixed(&[1], 65).is_err());
        let s = PackedStream { bit_width: 8, len: 3, bytes: vec![1, 2] };
        assert!(unpack_fixed(&s).unwrap_err().is_corrupt());
        assert!(unpack_slice(&[0xff], 2, 5).unwrap_err().is_corrupt());
    }

    proptest! {
        #[test]
        fn unpack_inverts_pack(w in 0u8..=64, raw in prop::collection::vec(any::<u64>(), 0..100)) {
            let values: Vec<u64> =
                raw.iter().map(|&v| if w == 64 { v } else { v & ((1u64 << w) - 1) }).collect();
            let s = pack_fixed(&values, w).unwrap();
            prop_assert_eq!(s.bytes.len(), packed_len(values.len(), w));
            prop_assert_eq!(unpack_fixed(&s).unwrap(), values);
        }
    }
}

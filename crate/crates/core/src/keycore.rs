//! Bit-exact key registers.
//!
//! A [`KeyRegister`] is an ordered bit string of arbitrary length. Bits are
//! stored most-significant-bit first inside each byte and the unused tail of
//! the last byte is always zero, so two registers with the same bits compare
//! equal byte-for-byte.

use std::fmt;

use rand::RngCore;
use thiserror::Error;

/// Key storage granule of the QKD key stores.
pub const KEY_BLOCK_BITS: usize = 256;

/// Block size of the symmetric cipher.
pub const CIPHER_BLOCK_BITS: usize = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyError {
    #[error("register length mismatch: {left} bits vs {right} bits")]
    LengthMismatch { left: usize, right: usize },
    #[error("index {index} out of range for register of {len} bits")]
    OutOfRange { index: usize, len: usize },
    #[error("block size must be positive")]
    ZeroBlockSize,
    #[error("malformed canonical encoding: {0}")]
    Malformed(&'static str),
    #[error("invalid bit character {0:?}")]
    InvalidBitChar(char),
}

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct KeyRegister {
    bytes: Vec<u8>,
    len_bits: usize,
}

impl KeyRegister {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn zeros(len_bits: usize) -> Self {
        Self {
            bytes: vec![0; len_bits.div_ceil(8)],
            len_bits,
        }
    }

    /// Builds a register from the first `len_bits` bits of `bytes`.
    pub fn from_bytes(bytes: &[u8], len_bits: usize) -> Result<Self, KeyError> {
        let need = len_bits.div_ceil(8);
        if bytes.len() < need {
            return Err(KeyError::OutOfRange {
                index: len_bits,
                len: bytes.len() * 8,
            });
        }
        let mut reg = Self {
            bytes: bytes[..need].to_vec(),
            len_bits,
        };
        reg.clear_tail();
        Ok(reg)
    }

    /// Whole-byte register (`len_bits = 8 * bytes.len()`).
    pub fn from_byte_vec(bytes: Vec<u8>) -> Self {
        let len_bits = bytes.len() * 8;
        Self { bytes, len_bits }
    }

    /// Parses a string of `0`/`1` characters, read left to right.
    pub fn from_bit_str(s: &str) -> Result<Self, KeyError> {
        let mut reg = Self::zeros(s.chars().count());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => reg.set_bit(i, true),
                other => return Err(KeyError::InvalidBitChar(other)),
            }
        }
        Ok(reg)
    }

    pub fn len(&self) -> usize {
        self.len_bits
    }

    pub fn is_empty(&self) -> bool {
        self.len_bits == 0
    }

    /// Backing bytes; trailing pad bits of the last byte are zero.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len_bits, "bit index {i} out of range");
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    fn set_bit(&mut self, i: usize, value: bool) {
        let mask = 0x80 >> (i % 8);
        if value {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    fn clear_tail(&mut self) {
        let rem = self.len_bits % 8;
        if rem != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xffu8 << (8 - rem);
            }
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn is_all_zero(&self) -> bool {
        self.bytes.iter().all(|&b| b == 0)
    }

    pub fn to_bit_string(&self) -> String {
        (0..self.len_bits)
            .map(|i| if self.bit(i) { '1' } else { '0' })
            .collect()
    }

    /// Bitwise modulo-2 addition of two registers of equal length.
    pub fn xor(&self, other: &KeyRegister) -> Result<KeyRegister, KeyError> {
        if self.len_bits != other.len_bits {
            return Err(KeyError::LengthMismatch {
                left: self.len_bits,
                right: other.len_bits,
            });
        }
        let bytes = self.bytes.iter().zip(&other.bytes).map(|(a, b)| a ^ b).collect();
        Ok(Self {
            bytes,
            len_bits: self.len_bits,
        })
    }

    /// The first `i` bits of the register.
    pub fn truncate(&self, i: usize) -> Result<KeyRegister, KeyError> {
        if i > self.len_bits {
            return Err(KeyError::OutOfRange {
                index: i,
                len: self.len_bits,
            });
        }
        Self::from_bytes(&self.bytes, i)
    }

    /// Bits `[start, end)` as a new register.
    pub fn slice(&self, start: usize, end: usize) -> Result<KeyRegister, KeyError> {
        if start > end || end > self.len_bits {
            return Err(KeyError::OutOfRange {
                index: end,
                len: self.len_bits,
            });
        }
        if start.is_multiple_of(8) {
            return Self::from_bytes(&self.bytes[start / 8..], end - start);
        }
        let mut out = Self::zeros(end - start);
        for i in start..end {
            if self.bit(i) {
                out.set_bit(i - start, true);
            }
        }
        Ok(out)
    }

    pub fn concat(&self, other: &KeyRegister) -> KeyRegister {
        let mut out = self.clone();
        out.extend(other);
        out
    }

    pub fn extend(&mut self, other: &KeyRegister) {
        if self.len_bits.is_multiple_of(8) {
            self.bytes.extend_from_slice(&other.bytes);
            self.len_bits += other.len_bits;
            return;
        }
        let start = self.len_bits;
        self.len_bits += other.len_bits;
        self.bytes.resize(self.len_bits.div_ceil(8), 0);
        for i in 0..other.len_bits {
            if other.bit(i) {
                self.set_bit(start + i, true);
            }
        }
    }

    /// Appends zero bits up to the next multiple of `block_bits`.
    pub fn pad(&self, block_bits: usize) -> Result<KeyRegister, KeyError> {
        let layout = layout(self.len_bits, block_bits)?;
        let mut out = self.clone();
        out.len_bits += layout.pad_bits;
        out.bytes.resize(out.len_bits.div_ceil(8), 0);
        Ok(out)
    }

    /// Inverse of [`pad`](Self::pad) given the out-of-band original length.
    pub fn unpad(&self, original_len: usize, block_bits: usize) -> Result<KeyRegister, KeyError> {
        if block_bits == 0 {
            return Err(KeyError::ZeroBlockSize);
        }
        if original_len > self.len_bits || self.len_bits - original_len >= block_bits {
            return Err(KeyError::OutOfRange {
                index: original_len,
                len: self.len_bits,
            });
        }
        self.truncate(original_len)
    }

    /// Canonical serialization: u64 big-endian bit count, then the MSB-first bytes.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.bytes.len());
        out.extend_from_slice(&(self.len_bits as u64).to_be_bytes());
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn from_canonical_bytes(data: &[u8]) -> Result<KeyRegister, KeyError> {
        if data.len() < 8 {
            return Err(KeyError::Malformed("missing length prefix"));
        }
        let (head, body) = data.split_at(8);
        let len_bits = u64::from_be_bytes(head.try_into().expect("8-byte prefix"));
        let len_bits = usize::try_from(len_bits).map_err(|_| KeyError::Malformed("length overflow"))?;
        if body.len() != len_bits.div_ceil(8) {
            return Err(KeyError::Malformed("body length does not match bit count"));
        }
        let reg = Self {
            bytes: body.to_vec(),
            len_bits,
        };
        let mut check = reg.clone();
        check.clear_tail();
        if check != reg {
            return Err(KeyError::Malformed("non-zero trailing bits"));
        }
        Ok(reg)
    }
}

impl fmt::Debug for KeyRegister {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len_bits <= 64 {
            write!(f, "KeyRegister({:?})", self.to_bit_string())
        } else {
            write!(f, "KeyRegister({} bits, ", self.len_bits)?;
            for b in self.bytes.iter().take(8) {
                write!(f, "{b:02x}")?;
            }
            write!(f, "..)")
        }
    }
}

/// Draws a uniformly random register of exactly `len_bits` bits.
pub fn random_register<R: RngCore + ?Sized>(len_bits: usize, rng: &mut R) -> KeyRegister {
    let mut bytes = vec![0u8; len_bits.div_ceil(8)];
    rng.fill_bytes(&mut bytes);
    let mut reg = KeyRegister { bytes, len_bits };
    reg.clear_tail();
    reg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub block_bits: usize,
    pub blocks: usize,
    pub pad_bits: usize,
}

impl BlockLayout {
    pub fn padded_bits(&self) -> usize {
        self.blocks * self.block_bits
    }
}

pub fn layout(len_bits: usize, block_bits: usize) -> Result<BlockLayout, KeyError> {
    if block_bits == 0 {
        return Err(KeyError::ZeroBlockSize);
    }
    let blocks = len_bits.div_ceil(block_bits);
    Ok(BlockLayout {
        block_bits,
        blocks,
        pad_bits: blocks * block_bits - len_bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn reg(s: &str) -> KeyRegister {
        KeyRegister::from_bit_str(s).unwrap()
    }

    #[test]
    fn xor_truth_table() {
        // exhaustive over every pair of 4-bit registers
        for a in 0u8..16 {
            for b in 0u8..16 {
                let ra = reg(&format!("{a:04b}"));
                let rb = reg(&format!("{b:04b}"));
                assert_eq!(ra.xor(&rb).unwrap().to_bit_string(), format!("{:04b}", a ^ b));
            }
        }
        assert_eq!(reg("1011").xor(&reg("0110")).unwrap(), reg("1101"));
    }

    #[test]
    fn xor_identities() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let k = random_register(77, &mut rng);
        assert!(k.xor(&k).unwrap().is_all_zero());
        assert_eq!(k.xor(&KeyRegister::zeros(77)).unwrap(), k);
        assert_eq!(
            KeyRegister::empty().xor(&KeyRegister::empty()).unwrap(),
            KeyRegister::empty()
        );
    }

    #[test]
    fn xor_length_mismatch() {
        assert_eq!(
            reg("101").xor(&reg("10")),
            Err(KeyError::LengthMismatch { left: 3, right: 2 })
        );
    }

    #[test]
    fn truncate_examples() {
        let k = reg("110101");
        assert_eq!(k.truncate(3).unwrap(), reg("110"));
        assert_eq!(k.truncate(6).unwrap(), k);
        assert!(k.truncate(0).unwrap().is_empty());
        assert!(matches!(k.truncate(7), Err(KeyError::OutOfRange { .. })));
    }

    #[test]
    fn random_register_properties() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert!(random_register(0, &mut rng).is_empty());
        let a = random_register(256, &mut ChaCha20Rng::seed_from_u64(99));
        let b = random_register(256, &mut ChaCha20Rng::seed_from_u64(99));
        assert_eq!(a, b);
        let big = random_register(1_000_000, &mut rng);
        assert_eq!(big.len(), 1_000_000);
        let freq = big.count_ones() as f64 / 1e6;
        assert!((0.49..=0.51).contains(&freq), "frequency {freq}");
        let odd = random_register(13, &mut rng);
        assert_eq!(odd.as_bytes()[1] & 0b0000_0111, 0);
    }

    #[test]
    fn layout_examples() {
        let l = layout(256 * 3, 256).unwrap();
        assert_eq!((l.blocks, l.pad_bits), (3, 0));
        let l = layout(0, 128).unwrap();
        assert_eq!((l.blocks, l.pad_bits), (0, 0));
        let l = layout(300, 128).unwrap();
        assert_eq!((l.blocks, l.pad_bits), (3, 84));
        assert_eq!(layout(5, 0), Err(KeyError::ZeroBlockSize));
    }

    #[test]
    fn pad_examples() {
        assert_eq!(reg("110").pad(4).unwrap(), reg("1100"));
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let k = random_register(256, &mut rng);
        assert_eq!(k.pad(128).unwrap(), k);
        let k = random_register(300, &mut rng);
        assert_eq!(k.pad(128).unwrap().unpad(300, 128).unwrap(), k);
        assert!(k.pad(128).unwrap().unpad(200, 128).is_err());
        assert!(k.unpad(301, 128).is_err());
    }

    #[test]
    fn slice_and_concat() {
        let k = reg("1100101011");
        assert_eq!(k.slice(3, 7).unwrap(), reg("0101"));
        assert_eq!(k.slice(0, 10).unwrap(), k);
        assert!(k.slice(4, 11).is_err());
        let joined = reg("101").concat(&reg("0011"));
        assert_eq!(joined, reg("1010011"));
    }

    #[test]
    fn canonical_encoding() {
        let k = reg("1011001");
        let enc = k.to_canonical_bytes();
        assert_eq!(enc, [0, 0, 0, 0, 0, 0, 0, 7, 0b1011_0010]);
        assert_eq!(KeyRegister::from_canonical_bytes(&enc).unwrap(), k);
        assert!(KeyRegister::from_canonical_bytes(&[0, 0, 0, 0, 0, 0, 0, 7, 0xff]).is_err());
        assert!(KeyRegister::from_canonical_bytes(&[0, 0, 0]).is_err());
        assert_eq!(
            KeyRegister::from_canonical_bytes(&KeyRegister::empty().to_canonical_bytes()).unwrap(),
            KeyRegister::empty()
        );
    }
}

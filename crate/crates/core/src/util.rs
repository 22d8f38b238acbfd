//! Small internal utilities: a flat bit vector and a CRC-32 checksum.

/// Fixed-length bit vector backed by `u64` words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct BitVec {
    words: Vec<u64>,
    len: u32,
}

impl BitVec {
    pub fn new(len: u32) -> Self {
        let nwords = (len as usize).div_ceil(64);
        BitVec { words: vec![0; nwords], len }
    }

    #[inline]
    pub fn len(&self) -> u32 {
        self.len
    }

    #[inline]
    pub fn get(&self, i: u32) -> bool {
        debug_assert!(i < self.len);
        (self.words[(i >> 6) as usize] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: u32) {
        debug_assert!(i < self.len);
        self.words[(i >> 6) as usize] |= 1u64 << (i & 63);
    }

    #[inline]
    pub fn clear_bit(&mut self, i: u32) {
        debug_assert!(i < self.len);
        self.words[(i >> 6) as usize] &= !(1u64 << (i & 63));
    }

    #[inline]
    pub fn set_to(&mut self, i: u32, v: bool) {
        if v {
            self.set(i)
        } else {
            self.clear_bit(i)
        }
    }

    pub fn clear_all(&mut self) {
        self.words.fill(0);
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Indices of set bits in increasing order.
    pub fn ones(&self) -> impl Iterator<Item = u32> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros();
                    w &= w - 1;
                    Some((wi as u32) * 64 + b)
                }
            })
        })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn words_mut(&mut self) -> &mut [u64] {
        &mut self.words
    }

    /// Overwrite with the bitwise complement of `other` (same length), with
    /// bits past the end kept at zero.
    pub fn assign_not(&mut self, other: &BitVec) {
        debug_assert_eq!(self.len, other.len);
        for (d, &s) in self.words.iter_mut().zip(other.words.iter()) {
            *d = !s;
        }
        let tail = self.len as usize & 63;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }
}

/// CRC-32 (IEEE 802.3 polynomial, reflected), the checksum used by the
/// on-disk format. Table-driven, one byte at a time.
pub(crate) fn crc32(bytes: &[u8]) -> u32 {
    const fn table() -> [u32; 256] {
        let mut t = [0u32; 256];
        let mut i = 0;
        while i < 256 {
            let mut c = i as u32;
            let mut k = 0;
            while k < 8 {
                c = if c & 1 == 1 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
                k += 1;
            }
            t[i] = c;
            i += 1;
        }
        t
    }
    const TABLE: [u32; 256] = table();
    let mut c = 0xFFFF_FFFFu32;
    for &b in bytes {
        c = TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitvec_set_get_roundtrip() {
        let mut bv = BitVec::new(200);
        for i in (0..200).step_by(3) {
            bv.set(i);
        }
        for i in 0..200 {
            assert_eq!(bv.get(i), i % 3 == 0);
        }
        assert_eq!(bv.count_ones(), 67);
        let ones: Vec<u32> = bv.ones().collect();
        assert_eq!(ones, (0..200).step_by(3).collect::<Vec<u32>>());
        bv.clear_bit(0);
        assert!(!bv.get(0));
        bv.clear_all();
        assert_eq!(bv.count_ones(), 0);
    }

    #[test]
    fn bitvec_complement_masks_the_tail() {
        for len in [1u32, 63, 64, 65, 130] {
            let mut src = BitVec::new(len);
            for i in (0..len).step_by(2) {
                src.set(i);
            }
            let mut dst = BitVec::new(len);
            dst.assign_not(&src);
            for i in 0..len {
                assert_eq!(dst.get(i), i % 2 == 1, "len {len}, bit {i}");
            }
            assert_eq!(dst.count_ones(), len / 2);
        }
    }

    #[test]
    fn crc32_known_vectors() {
        // Standard check value for the reflected IEEE polynomial.
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
        assert_eq!(crc32(b"The quick brown fox jumps over the lazy dog"), 0x414F_A339);
    }
}

//! Bloom filter over (interface, destination) pairs.
//!
//! Bit positions come from double hashing: two 64-bit values `h1`, `h2`
//! are drawn from a seeded mixer applied to the pair key, and the i-th
//! position is `(h1 + i * h2) mod m`.

use crate::error::{Error, Result};

pub const DEFAULT_BITS_PER_ELEMENT: usize = 10;
pub const DEFAULT_HASHES: u32 = 5;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct BloomParams {
    pub expected_n: usize,
    pub bits_per_element: usize,
    pub k: u32,
    pub hash_seed: u64,
}

impl BloomParams {
    pub fn new(expected_n: usize) -> Self {
        BloomParams {
            expected_n,
            bits_per_element: DEFAULT_BITS_PER_ELEMENT,
            k: DEFAULT_HASHES,
            hash_seed: 0,
        }
    }

    pub fn m_bits(&self) -> usize {
        self.expected_n * self.bits_per_element
    }

    /// `(1 - e^(-k n / m))^k` for `n` inserted elements.
    pub fn theoretical_fpr(&self, n: usize) -> f64 {
        theoretical_fpr(self.m_bits(), self.k, n)
    }
}

pub fn theoretical_fpr(m_bits: usize, k: u32, n: usize) -> f64 {
    if m_bits == 0 {
        return 1.0;
    }
    let k = f64::from(k);
    (1.0 - (-k * n as f64 / m_bits as f64).exp()).powf(k)
}

// splitmix64 finalizer
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn base_hashes(key: u64, seed: u64) -> (u64, u64) {
    let h1 = mix64(key ^ mix64(seed));
    let h2 = mix64(key ^ mix64(seed ^ 0x9E37_79B9_7F4A_7C15).rotate_left(32)) | 1;
    (h1, h2)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomPairSet {
    words: Vec<u64>,
    m_bits: usize,
    k: u32,
    n_inserted: usize,
    hash_seed: u64,
}

impl BloomPairSet {
    pub fn new(params: BloomParams) -> Result<Self> {
        if params.k == 0 {
            return Err(Error::InvalidConfig("bloom filter needs k >= 1".into()));
        }
        let m_bits = params.m_bits();
        if m_bits == 0 {
            return Err(Error::InvalidConfig(
                "bloom filter needs expected_n >= 1 and bits_per_element >= 1".into(),
            ));
        }
        Ok(Self::with_bits(m_bits, params.k, params.hash_seed))
    }

    pub(crate) fn with_bits(m_bits: usize, k: u32, hash_seed: u64) -> Self {
        BloomPairSet {
            words: vec![0; m_bits.div_ceil(64)],
            m_bits,
            k,
            n_inserted: 0,
            hash_seed,
        }
    }

    fn positions(&self, key: u64) -> impl Iterator<Item = usize> {
        let (h1, h2) = base_hashes(key, self.hash_seed);
        let m = self.m_bits as u128;
        (0..u128::from(self.k)).map(move |i| ((u128::from(h1) + i * u128::from(h2)) % m) as usize)
    }

    pub fn insert_key(&mut self, key: u64) {
        for pos in self.positions(key).collect::<Vec<_>>() {
            self.words[pos / 64] |= 1 << (pos % 64);
        }
        self.n_inserted += 1;
    }

    pub fn contains_key(&self, key: u64) -> bool {
        self.positions(key)
            .all(|pos| self.words[pos / 64] & (1 << (pos % 64)) != 0)
    }

    pub fn m_bits(&self) -> usize {
        self.m_bits
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    /// Number of insert calls, duplicates included.
    pub fn n_inserted(&self) -> usize {
        self.n_inserted
    }

    pub fn ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn theoretical_fpr(&self) -> f64 {
        theoretical_fpr(self.m_bits, self.k, self.n_inserted)
    }

    /// Bit vector as bytes, bit `i` at byte `i / 8`, position `i % 8`.
    pub(crate) fn to_bytes(&self) -> Vec<u8> {
        let mut bytes: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        bytes.truncate(self.m_bits.div_ceil(8));
        bytes
    }

    pub(crate) fn from_parts(
        m_bits: usize,
        k: u32,
        n_inserted: usize,
        hash_seed: u64,
        bytes: &[u8],
    ) -> Result<Self> {
        if m_bits == 0 || k == 0 {
            return Err(Error::Codec("bloom header has zero m_bits or k".into()));
        }
        if bytes.len() != m_bits.div_ceil(8) {
            return Err(Error::Codec(format!(
                "bloom bit vector is {} bytes, header implies {}",
                bytes.len(),
                m_bits.div_ceil(8)
            )));
        }
        let mut set = Self::with_bits(m_bits, k, hash_seed);
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            set.words[i] = u64::from_le_bytes(word);
        }
        if !m_bits.is_multiple_of(64) {
            let last = set.words.last().copied().unwrap_or(0);
            if last >> (m_bits % 64) != 0 {
                return Err(Error::Codec("bits set beyond m_bits".into()));
            }
        }
        set.n_inserted = n_inserted;
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_fpr() {
        let p = BloomParams::new(1000);
        let fpr = p.theoretical_fpr(1000);
        assert!((fpr - 0.009430).abs() < 1e-5, "{fpr}");
        // overloaded: n == m
        let over = theoretical_fpr(1000, 5, 1000);
        assert!((over - 0.96675).abs() < 1e-4, "{over}");
    }

    #[test]
    fn h2_is_odd_and_seed_matters() {
        for key in 0..1000u64 {
            assert_eq!(base_hashes(key, 7).1 & 1, 1);
        }
        assert_ne!(base_hashes(42, 1), base_hashes(42, 2));
    }

    #[test]
    fn positions_follow_double_hashing() {
        let set = BloomPairSet::with_bits(1000, 5, 3);
        let key = 0x0102_0304_0506_0708;
        let (h1, h2) = base_hashes(key, 3);
        let expect: Vec<usize> = (0..5u128)
            .map(|i| ((h1 as u128 + i * h2 as u128) % 1000) as usize)
            .collect();
        assert_eq!(set.positions(key).collect::<Vec<_>>(), expect);
    }

    #[test]
    fn rejects_degenerate_params() {
        assert!(BloomPairSet::new(BloomParams::new(0)).is_err());
        let mut p = BloomParams::new(10);
        p.k = 0;
        assert!(BloomPairSet::new(p).is_err());
    }
}

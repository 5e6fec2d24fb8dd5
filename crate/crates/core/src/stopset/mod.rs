//! Stop sets: the per-monitor set of known interfaces, and the shared set
//! of (interface, destination) pairs passed from monitor to monitor.
//!
//! Binary encoding of a global stop set (all integers little endian):
//!
//! ```text
//! "DTSS" | version u8 = 1 | kind u8
//! kind 0 (exact): count u64 | count * pair u64, ascending
//! kind 1 (bloom): m_bits u64 | k u32 | n_inserted u64 | hash_seed u64 | ceil(m_bits/8) bytes
//! ```
//!
//! A pair is encoded as `interface << 32 | destination`.

mod bloom;

use std::collections::HashSet;

pub use bloom::{
    theoretical_fpr, BloomPairSet, BloomParams, DEFAULT_BITS_PER_ELEMENT, DEFAULT_HASHES,
};

use crate::error::{Error, Result};
use crate::trace::InterfaceAddr;

const MAGIC: &[u8; 4] = b"DTSS";
const VERSION: u8 = 1;
const KIND_EXACT: u8 = 0;
const KIND_BLOOM: u8 = 1;
const PREFIX_LEN: usize = 6;
pub const BLOOM_HEADER_LEN: usize = PREFIX_LEN + 8 + 4 + 8 + 8;

pub fn pair_key(interface: InterfaceAddr, destination: InterfaceAddr) -> u64 {
    (u64::from(interface.to_u32()) << 32) | u64::from(destination.to_u32())
}

pub fn pair_from_key(key: u64) -> (InterfaceAddr, InterfaceAddr) {
    (
        InterfaceAddr::new((key >> 32) as u32),
        InterfaceAddr::new(key as u32),
    )
}

/// Interfaces already discovered by one monitor.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LocalStopSet {
    members: HashSet<InterfaceAddr>,
}

impl LocalStopSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, addr: InterfaceAddr) -> bool {
        self.members.insert(addr)
    }

    pub fn contains(&self, addr: InterfaceAddr) -> bool {
        self.members.contains(&addr)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = InterfaceAddr> + '_ {
        self.members.iter().copied()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExactPairSet {
    pairs: HashSet<u64>,
}

impl ExactPairSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sorted_keys(&self) -> Vec<u64> {
        let mut keys: Vec<u64> = self.pairs.iter().copied().collect();
        keys.sort_unstable();
        keys
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum StopSetKind {
    #[default]
    Exact,
    Bloom(BloomParams),
}

/// The shared forwards stop set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GlobalStopSet {
    Exact(ExactPairSet),
    Bloom(BloomPairSet),
}

impl GlobalStopSet {
    pub fn new(kind: StopSetKind) -> Result<Self> {
        Ok(match kind {
            StopSetKind::Exact => GlobalStopSet::Exact(ExactPairSet::new()),
            StopSetKind::Bloom(params) => GlobalStopSet::Bloom(BloomPairSet::new(params)?),
        })
    }

    pub fn exact() -> Self {
        GlobalStopSet::Exact(ExactPairSet::new())
    }

    /// Adds the pair. Pairs already reported present are not re-inserted,
    /// so a Bloom filter's `n_inserted` counts distinct-looking pairs.
    pub fn insert_pair(&mut self, interface: InterfaceAddr, destination: InterfaceAddr) {
        let key = pair_key(interface, destination);
        match self {
            GlobalStopSet::Exact(set) => {
                set.pairs.insert(key);
            }
            GlobalStopSet::Bloom(set) => {
                if !set.contains_key(key) {
                    set.insert_key(key);
                }
            }
        }
    }

    pub fn contains_pair(&self, interface: InterfaceAddr, destination: InterfaceAddr) -> bool {
        let key = pair_key(interface, destination);
        match self {
            GlobalStopSet::Exact(set) => set.pairs.contains(&key),
            GlobalStopSet::Bloom(set) => set.contains_key(key),
        }
    }

    /// Number of pairs inserted.
    pub fn len(&self) -> usize {
        match self {
            GlobalStopSet::Exact(set) => set.len(),
            GlobalStopSet::Bloom(set) => set.n_inserted(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        match self {
            GlobalStopSet::Exact(set) => {
                out.push(KIND_EXACT);
                out.extend_from_slice(&(set.len() as u64).to_le_bytes());
                for key in set.sorted_keys() {
                    out.extend_from_slice(&key.to_le_bytes());
                }
            }
            GlobalStopSet::Bloom(set) => {
                out.push(KIND_BLOOM);
                out.extend_from_slice(&(set.m_bits() as u64).to_le_bytes());
                out.extend_from_slice(&set.k().to_le_bytes());
                out.extend_from_slice(&(set.n_inserted() as u64).to_le_bytes());
                out.extend_from_slice(&set.hash_seed().to_le_bytes());
                out.extend_from_slice(&set.to_bytes());
            }
        }
        out
    }

    pub fn serialized_len(&self) -> usize {
        match self {
            GlobalStopSet::Exact(set) => PREFIX_LEN + 8 + 8 * set.len(),
            GlobalStopSet::Bloom(set) => BLOOM_HEADER_LEN + set.m_bits().div_ceil(8),
        }
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(4)? != MAGIC {
            return Err(Error::Codec("bad magic".into()));
        }
        let version = rd.take(1)?[0];
        if version != VERSION {
            return Err(Error::Codec(format!("unsupported version {version}")));
        }
        let set = match rd.take(1)?[0] {
            KIND_EXACT => {
                let count = rd.u64()?;
                let expected = count
                    .checked_mul(8)
                    .filter(|&n| n == rd.remaining() as u64)
                    .ok_or_else(|| Error::Codec("pair list length mismatch".into()))?;
                let mut pairs = HashSet::with_capacity((expected / 8) as usize);
                let mut prev = None;
                for _ in 0..count {
                    let key = rd.u64()?;
                    if prev.is_some_and(|p| p >= key) {
                        return Err(Error::Codec("pair list not strictly ascending".into()));
                    }
                    prev = Some(key);
                    pairs.insert(key);
                }
                GlobalStopSet::Exact(ExactPairSet { pairs })
            }
            KIND_BLOOM => {
                let m_bits = usize::try_from(rd.u64()?)
                    .map_err(|_| Error::Codec("m_bits overflows".into()))?;
                let k = u32::from_le_bytes(rd.take(4)?.try_into().unwrap());
                let n_inserted = usize::try_from(rd.u64()?)
                    .map_err(|_| Error::Codec("n_inserted overflows".into()))?;
                let seed = rd.u64()?;
                let rest = rd.take(rd.remaining())?;
                GlobalStopSet::Bloom(BloomPairSet::from_parts(m_bits, k, n_inserted, seed, rest)?)
            }
            other => return Err(Error::Codec(format!("unknown stop set kind {other}"))),
        };
        if rd.remaining() != 0 {
            return Err(Error::Codec("trailing bytes".into()));
        }
        Ok(set)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Codec("truncated input".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Size of `n_pairs` raw 64-bit pairs relative to an `m_bits` filter.
pub fn raw_compression_ratio(n_pairs: usize, m_bits: usize) -> f64 {
    (64 * n_pairs) as f64 / m_bits as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> InterfaceAddr {
        s.parse().unwrap()
    }

    fn bloom(n: usize) -> GlobalStopSet {
        GlobalStopSet::new(StopSetKind::Bloom(BloomParams::new(n))).unwrap()
    }

    #[test]
    fn pair_key_concatenates() {
        let key = pair_key(a("1.2.3.4"), a("5.6.7.8"));
        assert_eq!(key, 0x0102_0304_0506_0708);
        assert_eq!(pair_from_key(key), (a("1.2.3.4"), a("5.6.7.8")));
    }

    #[test]
    fn insert_then_query() {
        for mut set in [GlobalStopSet::exact(), bloom(100)] {
            assert!(!set.contains_pair(a("1.1.1.1"), a("9.9.9.9")));
            set.insert_pair(a("1.1.1.1"), a("9.9.9.9"));
            assert!(set.contains_pair(a("1.1.1.1"), a("9.9.9.9")));
            assert_eq!(set.len(), 1);
        }
        let mut exact = GlobalStopSet::exact();
        exact.insert_pair(a("1.1.1.1"), a("9.9.9.9"));
        assert!(!exact.contains_pair(a("1.1.1.1"), a("9.9.9.8")));
    }

    #[test]
    fn local_stop_set() {
        let mut b = LocalStopSet::new();
        assert!(b.insert(a("1.1.1.1")));
        assert!(!b.insert(a("1.1.1.1")));
        assert!(b.contains(a("1.1.1.1")));
        assert!(!b.contains(a("2.2.2.2")));
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn empty_bloom_encoding() {
        let set = bloom(100);
        let bytes = set.serialize();
        assert_eq!(bytes.len(), BLOOM_HEADER_LEN + 1000 / 8);
        assert!(bytes[BLOOM_HEADER_LEN..].iter().all(|&b| b == 0));
        assert_eq!(&bytes[..4], b"DTSS");
    }

    #[test]
    fn round_trips() {
        let mut exact = GlobalStopSet::exact();
        let mut filter = bloom(50);
        for i in 0..40u32 {
            let (x, d) = (InterfaceAddr::new(i * 7919), InterfaceAddr::new(i ^ 0xdead));
            exact.insert_pair(x, d);
            filter.insert_pair(x, d);
        }
        for set in [exact, filter] {
            let bytes = set.serialize();
            assert_eq!(bytes.len(), set.serialized_len());
            assert_eq!(GlobalStopSet::deserialize(&bytes).unwrap(), set);
        }
    }

    #[test]
    fn decode_errors() {
        let good = bloom(10).serialize();
        assert!(GlobalStopSet::deserialize(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(GlobalStopSet::deserialize(&extra).is_err());
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(GlobalStopSet::deserialize(&magic).is_err());
        let mut kind = good;
        kind[5] = 9;
        assert!(GlobalStopSet::deserialize(&kind).is_err());

        let mut exact = GlobalStopSet::exact();
        exact.insert_pair(a("1.1.1.1"), a("2.2.2.2"));
        let mut bytes = exact.serialize();
        bytes[6] = 2; // count says two pairs, one present
        assert!(GlobalStopSet::deserialize(&bytes).is_err());
        assert!(GlobalStopSet::deserialize(&[]).is_err());
    }

    #[test]
    fn compression_ratio_at_ten_bits() {
        assert!((raw_compression_ratio(1000, 10_000) - 6.4).abs() < 1e-12);
    }
}

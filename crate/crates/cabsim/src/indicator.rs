//! Approximate-membership indicators advertised by the cache.
//!
//! The cache maintains a [`CountingFilter`] (4-bit counters, so evictions
//! can decrement) that mirrors its content. Before an advertisement the
//! counting filter is compressed to a plain [`BitFilter`]: bit `i` is set
//! iff counter `i` is positive. Clients hold the last delivered bit
//! filter and query it for indications.
//!
//! An [`Advertisement`] is either a full snapshot of the bit filter
//! (`m` payload bits) or a delta listing the flipped bit positions
//! (`ceil(log2 m)` payload bits each). The delta is chosen whenever it is
//! strictly cheaper than a full snapshot.

use crate::hash::{ceil_log2, ProbeSeq};
use thiserror::Error;

/// Counter ceiling. A counter that reaches 15 becomes sticky: it is never
/// incremented or decremented again, so it can only over-approximate.
const COUNTER_MAX: u8 = 15;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("filter size mismatch: {left} vs {right} bits")]
    SizeMismatch { left: u64, right: u64 },
    #[error("malformed advertisement encoding")]
    Encoding,
}

/// Hash count minimising the false-positive rate for `m` bits holding
/// `n` elements: `max(1, round((m/n) ln 2))`.
pub fn optimal_hash_count(m_bits: u64, n_elements: u64) -> u32 {
    let k = (m_bits as f64 / n_elements as f64 * std::f64::consts::LN_2).round() as u32;
    k.max(1)
}

/// Counting Bloom filter with 4-bit saturating counters, two per byte.
#[derive(Debug, Clone)]
pub struct CountingFilter {
    m: u64,
    k: u32,
    seed: u64,
    counters: Vec<u8>,
}

impl CountingFilter {
    /// Filter of `m_bits` counters sized for `n_elements`, with the hash
    /// count chosen by [`optimal_hash_count`].
    pub fn new(m_bits: u64, n_elements: u64, seed: u64) -> Result<Self, FilterError> {
        if m_bits == 0 {
            return Err(FilterError::InvalidArgument("filter size must be positive"));
        }
        if n_elements == 0 {
            return Err(FilterError::InvalidArgument("element count must be positive"));
        }
        Ok(CountingFilter {
            m: m_bits,
            k: optimal_hash_count(m_bits, n_elements),
            seed,
            counters: vec![0u8; (m_bits as usize).div_ceil(2)],
        })
    }

    pub fn size_bits(&self) -> u64 {
        self.m
    }

    pub fn hash_count(&self) -> u32 {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn counter(&self, pos: usize) -> u8 {
        let byte = self.counters[pos / 2];
        if pos.is_multiple_of(2) {
            byte & 0x0f
        } else {
            byte >> 4
        }
    }

    #[inline]
    fn set_counter(&mut self, pos: usize, value: u8) {
        let byte = &mut self.counters[pos / 2];
        if pos.is_multiple_of(2) {
            *byte = (*byte & 0xf0) | value;
        } else {
            *byte = (*byte & 0x0f) | (value << 4);
        }
    }

    #[inline]
    fn probes(&self, key: u64) -> ProbeSeq {
        ProbeSeq::new(key, self.seed, self.m, self.k)
    }

    /// Increment the key's counters. Returns each position whose counter
    /// went 0 -> 1 (i.e. whose compressed bit flipped on).
    #[inline]
    pub fn insert_with<F: FnMut(usize)>(&mut self, key: u64, mut on_bit_set: F) {
        for pos in self.probes(key) {
            let c = self.counter(pos);
            if c == COUNTER_MAX {
                continue; // sticky
            }
            self.set_counter(pos, c + 1);
            if c == 0 {
                on_bit_set(pos);
            }
        }
    }

    /// Decrement the key's counters. Returns each position whose counter
    /// went 1 -> 0. The key must currently be counted; removing a key that
    /// was never inserted corrupts the counts.
    #[inline]
    pub fn remove_with<F: FnMut(usize)>(&mut self, key: u64, mut on_bit_clear: F) {
        for pos in self.probes(key) {
            let c = self.counter(pos);
            if c == COUNTER_MAX {
                continue; // sticky
            }
            debug_assert!(c > 0, "remove of a key that is not counted");
            if c == 0 {
                continue;
            }
            let c = c - 1;
            self.set_counter(pos, c);
            if c == 0 {
                on_bit_clear(pos);
            }
        }
    }

    pub fn insert(&mut self, key: u64) {
        self.insert_with(key, |_| {});
    }

    pub fn remove(&mut self, key: u64) {
        self.remove_with(key, |_| {});
    }

    /// All counters along the key's probe sequence positive?
    pub fn contains(&self, key: u64) -> bool {
        self.probes(key).all(|pos| self.counter(pos) > 0)
    }

    /// Compress to a plain bit filter: bit `i` = (counter `i` > 0).
    pub fn compress(&self) -> BitFilter {
        let mut bits = BitFilter::new(self.m, self.k, self.seed);
        for pos in 0..self.m as usize {
            if self.counter(pos) > 0 {
                bits.set(pos);
            }
        }
        bits
    }
}

/// Plain Bloom filter: the advertised form of a [`CountingFilter`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFilter {
    m: u64,
    k: u32,
    seed: u64,
    words: Vec<u64>,
}

impl BitFilter {
    pub fn new(m_bits: u64, k: u32, seed: u64) -> Self {
        BitFilter {
            m: m_bits,
            k,
            seed,
            words: vec![0u64; (m_bits as usize).div_ceil(64)],
        }
    }

    pub fn size_bits(&self) -> u64 {
        self.m
    }

    pub fn hash_count(&self) -> u32 {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn bit(&self, pos: usize) -> bool {
        self.words[pos / 64] >> (pos % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, pos: usize) {
        self.words[pos / 64] |= 1 << (pos % 64);
    }

    #[inline]
    pub fn clear(&mut self, pos: usize) {
        self.words[pos / 64] &= !(1 << (pos % 64));
    }

    #[inline]
    pub fn toggle(&mut self, pos: usize) {
        self.words[pos / 64] ^= 1 << (pos % 64);
    }

    /// Positive iff every probe position is set.
    #[inline]
    pub fn query(&self, key: u64) -> bool {
        ProbeSeq::new(key, self.seed, self.m, self.k).all(|pos| self.bit(pos))
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }
}

/// Sorted positions at which `prev` and `cur` differ.
pub fn diff(prev: &BitFilter, cur: &BitFilter) -> Result<Vec<u32>, FilterError> {
    if prev.m != cur.m {
        return Err(FilterError::SizeMismatch {
            left: prev.m,
            right: cur.m,
        });
    }
    let mut flips = Vec::new();
    for (w, (a, b)) in prev.words.iter().zip(cur.words.iter()).enumerate() {
        let mut x = a ^ b;
        while x != 0 {
            let bit = x.trailing_zeros();
            let pos = w as u32 * 64 + bit;
            if u64::from(pos) < prev.m {
                flips.push(pos);
            }
            x &= x - 1;
        }
    }
    Ok(flips)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvertisementKind {
    Full,
    Delta,
}

/// One advertisement, with its exact payload cost in bits. The cost is the
/// payload only (type tag and delta count header are accounting-exempt).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Advertisement {
    Full(BitFilter),
    Delta { m: u64, positions: Vec<u32> },
}

impl Advertisement {
    pub fn kind(&self) -> AdvertisementKind {
        match self {
            Advertisement::Full(_) => AdvertisementKind::Full,
            Advertisement::Delta { .. } => AdvertisementKind::Delta,
        }
    }

    pub fn bit_cost(&self) -> u64 {
        match self {
            Advertisement::Full(f) => f.m,
            Advertisement::Delta { m, positions } => {
                positions.len() as u64 * u64::from(ceil_log2(*m))
            }
        }
    }
}

/// Is a delta of `flip_count` positions cheaper than a full `m`-bit
/// snapshot? Strict inequality: at a cost tie the full update wins.
#[inline]
pub fn delta_is_cheaper(flip_count: u64, m: u64) -> bool {
    flip_count * u64::from(ceil_log2(m)) < m
}

/// Pick the cheaper advertisement for moving a client from `prev` to `cur`.
/// Requires matching shapes; a reshaped filter must be advertised in full.
pub fn choose_update(prev: &BitFilter, cur: &BitFilter) -> Result<Advertisement, FilterError> {
    if prev.m != cur.m || prev.k != cur.k || prev.seed != cur.seed {
        return Err(FilterError::SizeMismatch {
            left: prev.m,
            right: cur.m,
        });
    }
    let flips = diff(prev, cur)?;
    if delta_is_cheaper(flips.len() as u64, cur.m) {
        Ok(Advertisement::Delta {
            m: cur.m,
            positions: flips,
        })
    } else {
        Ok(Advertisement::Full(cur.clone()))
    }
}

/// Apply an advertisement to the client-held filter. A full update replaces
/// the filter wholesale (size, hash count, and seed included); a delta
/// toggles the listed positions.
pub fn apply(client: &mut BitFilter, adv: Advertisement) -> Result<(), FilterError> {
    apply_ref(client, &adv)
}

/// [`apply`] without consuming the advertisement; on delivery the same
/// advertisement updates both the client's filter and the cache's mirror
/// of it.
pub fn apply_ref(client: &mut BitFilter, adv: &Advertisement) -> Result<(), FilterError> {
    match adv {
        Advertisement::Full(f) => {
            client.clone_from(f);
            Ok(())
        }
        Advertisement::Delta { m, positions } => {
            if *m != client.m {
                return Err(FilterError::SizeMismatch {
                    left: client.m,
                    right: *m,
                });
            }
            for &pos in positions {
                client.toggle(pos as usize);
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Wire encoding (LSB-first bit stream): 1 type bit (0 = full, 1 = delta),
// then either m filter bits or a 32-bit flip count followed by the
// positions, ceil(log2 m) bits each.
// ---------------------------------------------------------------------------

struct BitWriter {
    bytes: Vec<u8>,
    len: usize,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter {
            bytes: Vec::new(),
            len: 0,
        }
    }

    fn push_bits(&mut self, value: u64, width: u32) {
        for i in 0..width {
            let bit = (value >> i) & 1;
            if self.len.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if bit == 1 {
                *self.bytes.last_mut().unwrap() |= 1 << (self.len % 8);
            }
            self.len += 1;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn read_bits(&mut self, width: u32) -> Result<u64, FilterError> {
        let mut value = 0u64;
        for i in 0..width {
            let byte = self.bytes.get(self.pos / 8).ok_or(FilterError::Encoding)?;
            value |= u64::from(byte >> (self.pos % 8) & 1) << i;
            self.pos += 1;
        }
        Ok(value)
    }
}

impl Advertisement {
    /// Bit-exact wire form. Total length is `1 + bit_cost` bits for a full
    /// update and `1 + 32 + bit_cost` bits for a delta, zero-padded to a
    /// whole byte.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = BitWriter::new();
        match self {
            Advertisement::Full(f) => {
                w.push_bits(0, 1);
                for pos in 0..f.m as usize {
                    w.push_bits(u64::from(f.bit(pos)), 1);
                }
            }
            Advertisement::Delta { m, positions } => {
                w.push_bits(1, 1);
                w.push_bits(positions.len() as u64, 32);
                let width = ceil_log2(*m);
                for &pos in positions {
                    w.push_bits(u64::from(pos), width);
                }
            }
        }
        w.bytes
    }

    /// Decode a wire-form advertisement. The filter shape `(m, k, seed)`
    /// comes from context; the stream carries only the payload.
    pub fn decode(bytes: &[u8], m: u64, k: u32, seed: u64) -> Result<Self, FilterError> {
        let mut r = BitReader { bytes, pos: 0 };
        if r.read_bits(1)? == 0 {
            let mut filter = BitFilter::new(m, k, seed);
            for pos in 0..m as usize {
                if r.read_bits(1)? == 1 {
                    filter.set(pos);
                }
            }
            Ok(Advertisement::Full(filter))
        } else {
            let count = r.read_bits(32)?;
            let width = ceil_log2(m);
            let mut positions = Vec::with_capacity(count as usize);
            let mut prev: Option<u32> = None;
            for _ in 0..count {
                let pos = r.read_bits(width)? as u32;
                if u64::from(pos) >= m || prev.is_some_and(|p| p >= pos) {
                    return Err(FilterError::Encoding);
                }
                positions.push(pos);
                prev = Some(pos);
            }
            Ok(Advertisement::Delta { m, positions })
        }
    }
}

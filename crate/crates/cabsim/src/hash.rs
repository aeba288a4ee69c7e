//! Seeded hashing primitives shared across the crate.
//!
//! All randomized structures (filters, workload key spaces, tie-breaks)
//! derive their positions from the 64-bit mixer below, so a run is fully
//! reproducible from its scenario seed.

use std::hash::{BuildHasherDefault, Hasher};

/// SplitMix64 finalizer. Full-avalanche mix of a 64-bit value.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seeded hash of a 64-bit key. Two mix rounds so that related seeds
/// (s, s+1, ...) still produce independent-looking streams.
#[inline]
pub fn hash_key(key: u64, seed: u64) -> u64 {
    mix64(key ^ mix64(seed))
}

/// Seeded FNV-1a over bytes, for trace tokens.
pub fn hash_bytes(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ mix64(seed);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// Number of bits needed to address positions `0..m`, i.e. `ceil(log2 m)`.
#[inline]
pub fn ceil_log2(m: u64) -> u32 {
    if m <= 1 {
        0
    } else {
        64 - (m - 1).leading_zeros()
    }
}

/// Double-hashing probe sequence: `(h1 + i * h2) mod m` for `i` in `0..k`.
///
/// `h1`/`h2` are the two halves of one seeded 64-bit hash; `h2` is forced
/// odd when `m` is even so the probes cycle through all positions.
#[derive(Clone, Copy)]
pub struct ProbeSeq {
    h1: u64,
    h2: u64,
    m: u64,
    i: u32,
    k: u32,
}

impl ProbeSeq {
    #[inline]
    pub fn new(key: u64, seed: u64, m: u64, k: u32) -> Self {
        let h = hash_key(key, seed);
        let h1 = h >> 32;
        let mut h2 = h & 0xffff_ffff;
        if m.is_multiple_of(2) {
            h2 |= 1;
        }
        ProbeSeq { h1, h2, m, i: 0, k }
    }
}

impl Iterator for ProbeSeq {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.i == self.k {
            return None;
        }
        let pos = (self.h1 + u64::from(self.i) * self.h2) % self.m;
        self.i += 1;
        Some(pos as usize)
    }
}

/// Hasher for `HashMap<u64, _>` keys that are already well-distributed or
/// cheap to mix. Avoids SipHash overhead in the request loop.
#[derive(Default)]
pub struct U64Hasher {
    state: u64,
}

impl Hasher for U64Hasher {
    #[inline]
    fn finish(&self) -> u64 {
        self.state
    }

    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.state = mix64(self.state ^ u64::from(b));
        }
    }

    #[inline]
    fn write_u64(&mut self, n: u64) {
        self.state = mix64(n);
    }
}

pub type BuildU64Hasher = BuildHasherDefault<U64Hasher>;

/// `HashMap` keyed by opaque 64-bit item identifiers.
pub type KeyMap<V> = std::collections::HashMap<u64, V, BuildU64Hasher>;

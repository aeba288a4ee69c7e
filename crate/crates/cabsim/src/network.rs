//! Segment-scoped network policing and the client-side filter.
//!
//! The network grants `B * T` token bits per segment. An advertisement is
//! forwarded atomically iff it wholly fits in the remaining tokens;
//! otherwise it is dropped and consumes nothing. Unused tokens do not
//! carry over. The client's filter changes only through delivered
//! advertisements, so the cache (which sees every policing decision) can
//! mirror it deterministically.

use crate::indicator::{apply_ref, Advertisement, AdvertisementKind, BitFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Delivered(AdvertisementKind),
    Dropped,
}

pub struct Netlink {
    /// Token grant per segment: B * T bits.
    segment_budget_bits: u64,
    delivered_bits: u64,
    dropped_updates: u64,
    client: BitFilter,
}

impl Netlink {
    pub fn new(segment_budget_bits: u64, client: BitFilter) -> Self {
        Netlink {
            segment_budget_bits,
            delivered_bits: 0,
            dropped_updates: 0,
            client,
        }
    }

    /// The filter as the client currently holds it.
    #[inline]
    pub fn client(&self) -> &BitFilter {
        &self.client
    }

    /// Query the client's filter for an indication.
    #[inline]
    pub fn indication(&self, key: u64) -> bool {
        self.client.query(key)
    }

    pub fn delivered_bits(&self) -> u64 {
        self.delivered_bits
    }

    pub fn dropped_updates(&self) -> u64 {
        self.dropped_updates
    }

    pub fn segment_budget_bits(&self) -> u64 {
        self.segment_budget_bits
    }

    /// Police one advertisement. Delivery applies it to the client filter
    /// and spends its cost; a drop changes nothing but the drop counter.
    pub fn try_send(&mut self, adv: &Advertisement) -> SendOutcome {
        let cost = adv.bit_cost();
        if self.delivered_bits + cost <= self.segment_budget_bits {
            self.delivered_bits += cost;
            apply_ref(&mut self.client, adv)
                .expect("advertiser guarantees shape-compatible deltas");
            SendOutcome::Delivered(adv.kind())
        } else {
            self.dropped_updates += 1;
            SendOutcome::Dropped
        }
    }

    /// Start a new segment: a fresh grant of `B * T` tokens, unused ones
    /// discarded.
    pub fn segment_reset(&mut self) {
        self.delivered_bits = 0;
    }
}

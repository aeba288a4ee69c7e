//! Bounded key cache with pluggable eviction policy.
//!
//! The cache stores opaque 64-bit keys (traces are key streams; payloads
//! are irrelevant to the cost model). Every admission and eviction is
//! reported through [`PutOutcome`] so the advertisement pipeline can keep
//! its counting filter an exact mirror of the resident set.
//!
//! Time is virtual: the caller passes the global request counter as `now`.
//! Metadata refreshes are idempotent per time slot, so a request that
//! probes the cache and then reports the access (get followed by put)
//! perturbs the policy state exactly as much as the put alone. Cache
//! evolution is therefore a pure function of the key sequence, independent
//! of any indicator decisions.

use crate::hash::{mix64, KeyMap};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

/// Residents inspected per hyperbolic eviction (or all of them, below 64).
const HYPERBOLIC_SAMPLE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Lru,
    Hyperbolic,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Lru => "lru",
            PolicyKind::Hyperbolic => "hyperbolic",
        }
    }
}

/// What a `put` did to the resident set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PutOutcome {
    pub admitted: bool,
    pub evicted: Option<u64>,
}

/// One request's combined membership answer and set change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessOutcome {
    /// Was the key resident when the request arrived?
    pub present: bool,
    pub evicted: Option<u64>,
}

impl AccessOutcome {
    /// Absent keys are always admitted by the trailing put.
    pub fn admitted(&self) -> bool {
        !self.present
    }
}

const NIL: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct LruNode {
    key: u64,
    prev: u32,
    next: u32,
}

#[derive(Clone, Copy)]
struct HypEntry {
    key: u64,
    access_count: u64,
    inserted: u64,
    last_touch: u64,
}

enum PolicyState {
    Lru {
        nodes: Vec<LruNode>,
        head: u32,
        tail: u32,
        free: Vec<u32>,
    },
    Hyperbolic {
        entries: Vec<HypEntry>,
        rng: SmallRng,
    },
}

pub struct Cache {
    capacity: usize,
    policy: PolicyKind,
    // Maps key -> slot index (LRU) or entry index (Hyperbolic).
    index: KeyMap<u32>,
    state: PolicyState,
}

impl Cache {
    pub fn new(capacity: u64, policy: PolicyKind, seed: u64) -> Self {
        assert!(capacity >= 1, "cache capacity must be positive");
        let capacity = capacity as usize;
        let state = match policy {
            PolicyKind::Lru => PolicyState::Lru {
                nodes: Vec::with_capacity(capacity),
                head: NIL,
                tail: NIL,
                free: Vec::new(),
            },
            PolicyKind::Hyperbolic => PolicyState::Hyperbolic {
                entries: Vec::with_capacity(capacity),
                rng: SmallRng::seed_from_u64(mix64(seed ^ 0x6879_7065_7262_6f6c)),
            },
        };
        let mut index = KeyMap::default();
        index.reserve(capacity + 1);
        Cache {
            capacity,
            policy,
            index,
            state,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    /// Membership probe; never touches policy metadata.
    #[inline]
    pub fn contains(&self, key: u64) -> bool {
        self.index.contains_key(&key)
    }

    /// Resident keys in unspecified order.
    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.index.keys().copied()
    }

    /// Probe the cache. On a hit the policy metadata is refreshed; a miss
    /// changes nothing (admission happens only through `put`).
    #[inline]
    pub fn get(&mut self, key: u64, now: u64) -> bool {
        match self.index.get(&key) {
            Some(&slot) => {
                self.touch(slot, now);
                true
            }
            None => false,
        }
    }

    /// Report the access that follows request handling. A resident key is
    /// refreshed (no events); an absent key is admitted, evicting the
    /// policy's victim first when the cache is full.
    pub fn put(&mut self, key: u64, now: u64) -> PutOutcome {
        let outcome = self.access(key, now);
        PutOutcome {
            admitted: outcome.admitted(),
            evicted: outcome.evicted,
        }
    }

    /// One request's full cache transition in a single probe: the
    /// membership answer plus the put that follows it. Equivalent to
    /// `contains` + optional `get` + `put` because metadata refreshes are
    /// idempotent within a time slot.
    #[inline]
    pub fn access(&mut self, key: u64, now: u64) -> AccessOutcome {
        if let Some(&slot) = self.index.get(&key) {
            self.touch(slot, now);
            return AccessOutcome {
                present: true,
                evicted: None,
            };
        }
        let evicted = if self.index.len() == self.capacity {
            Some(self.evict(now))
        } else {
            None
        };
        self.admit(key, now);
        debug_assert!(self.index.len() <= self.capacity);
        AccessOutcome {
            present: false,
            evicted,
        }
    }

    #[inline]
    fn touch(&mut self, slot: u32, now: u64) {
        match &mut self.state {
            PolicyState::Lru {
                nodes, head, tail, ..
            } => {
                lru_unlink(nodes, head, tail, slot);
                lru_push_front(nodes, head, tail, slot);
            }
            PolicyState::Hyperbolic { entries, .. } => {
                let e = &mut entries[slot as usize];
                if e.last_touch != now {
                    e.access_count += 1;
                    e.last_touch = now;
                }
            }
        }
    }

    fn admit(&mut self, key: u64, now: u64) {
        match &mut self.state {
            PolicyState::Lru {
                nodes,
                head,
                tail,
                free,
            } => {
                let slot = match free.pop() {
                    Some(slot) => {
                        nodes[slot as usize].key = key;
                        slot
                    }
                    None => {
                        nodes.push(LruNode {
                            key,
                            prev: NIL,
                            next: NIL,
                        });
                        (nodes.len() - 1) as u32
                    }
                };
                lru_push_front(nodes, head, tail, slot);
                self.index.insert(key, slot);
            }
            PolicyState::Hyperbolic { entries, .. } => {
                entries.push(HypEntry {
                    key,
                    access_count: 1,
                    inserted: now,
                    last_touch: now,
                });
                self.index.insert(key, (entries.len() - 1) as u32);
            }
        }
    }

    fn evict(&mut self, now: u64) -> u64 {
        match &mut self.state {
            PolicyState::Lru {
                nodes,
                head,
                tail,
                free,
            } => {
                let slot = *tail;
                debug_assert_ne!(slot, NIL, "evict on empty cache");
                lru_unlink(nodes, head, tail, slot);
                free.push(slot);
                let key = nodes[slot as usize].key;
                self.index.remove(&key);
                key
            }
            PolicyState::Hyperbolic { entries, rng } => {
                let idx = hyperbolic_victim_index(entries, rng, now);
                let key = entries[idx].key;
                self.index.remove(&key);
                entries.swap_remove(idx);
                if idx < entries.len() {
                    // Re-point the entry that was moved into the hole.
                    self.index.insert(entries[idx].key, idx as u32);
                }
                key
            }
        }
    }

    /// The key a hyperbolic eviction would remove right now. Panics on an
    /// empty or non-hyperbolic cache.
    pub fn hyperbolic_victim(&mut self, now: u64) -> u64 {
        match &mut self.state {
            PolicyState::Hyperbolic { entries, rng } => {
                assert!(!entries.is_empty(), "victim of an empty cache");
                entries[hyperbolic_victim_index(entries, rng, now)].key
            }
            PolicyState::Lru { .. } => panic!("hyperbolic_victim on an LRU cache"),
        }
    }
}

/// Hyperbolic priority: access frequency over residency age. Lower is
/// evicted first. Age is clamped to 1 so entries probed in their insertion
/// slot stay finite.
#[inline]
fn hyperbolic_priority(e: &HypEntry, now: u64) -> f64 {
    e.access_count as f64 / now.saturating_sub(e.inserted).max(1) as f64
}

fn hyperbolic_victim_index(entries: &[HypEntry], rng: &mut SmallRng, now: u64) -> usize {
    debug_assert!(!entries.is_empty());
    let better = |cand: usize, best: usize| -> bool {
        let (pc, pb) = (
            hyperbolic_priority(&entries[cand], now),
            hyperbolic_priority(&entries[best], now),
        );
        if pc != pb {
            return pc < pb;
        }
        let (c, b) = (&entries[cand], &entries[best]);
        if c.inserted != b.inserted {
            return c.inserted < b.inserted;
        }
        mix64(c.key) < mix64(b.key)
    };

    if entries.len() <= HYPERBOLIC_SAMPLE {
        let mut best = 0;
        for cand in 1..entries.len() {
            if better(cand, best) {
                best = cand;
            }
        }
        return best;
    }

    // Uniform sample of 64 distinct residents.
    let mut picked = [0usize; HYPERBOLIC_SAMPLE];
    let mut count = 0;
    while count < HYPERBOLIC_SAMPLE {
        let idx = rng.gen_range(0..entries.len());
        if !picked[..count].contains(&idx) {
            picked[count] = idx;
            count += 1;
        }
    }
    let mut best = picked[0];
    for &cand in &picked[1..] {
        if better(cand, best) {
            best = cand;
        }
    }
    best
}

#[inline]
fn lru_unlink(nodes: &mut [LruNode], head: &mut u32, tail: &mut u32, slot: u32) {
    let (prev, next) = {
        let n = &nodes[slot as usize];
        (n.prev, n.next)
    };
    if prev != NIL {
        nodes[prev as usize].next = next;
    } else if *head == slot {
        *head = next;
    }
    if next != NIL {
        nodes[next as usize].prev = prev;
    } else if *tail == slot {
        *tail = prev;
    }
    nodes[slot as usize].prev = NIL;
    nodes[slot as usize].next = NIL;
}

#[inline]
fn lru_push_front(nodes: &mut [LruNode], head: &mut u32, tail: &mut u32, slot: u32) {
    nodes[slot as usize].prev = NIL;
    nodes[slot as usize].next = *head;
    if *head != NIL {
        nodes[*head as usize].prev = slot;
    }
    *head = slot;
    if *tail == NIL {
        *tail = slot;
    }
}

//! Advertisement scheduling and the self-adjusting configuration loop.
//!
//! A configuration is the pair (indicator size in bits, update interval in
//! requests). At the end of every segment the controller inspects the
//! segment's statistics and picks the next configuration in one of three
//! modes:
//!
//! - **Mode 1** (a full update was sent): rescale the indicator by
//!   `sqrt(FP / ((M-1) FN))`, which moves toward the point where the extra
//!   cost of false positives equals that of false negatives, then set the
//!   interval so a full indicator per update fits the budget.
//! - **Mode 2** (all updates were deltas, and the size can still shrink or
//!   the budget held): pin the interval to its minimum and rescale the
//!   indicator so the per-change delta traffic matches the budget. The new
//!   size solves `x log2 x = (B / BW) * |I| log2 |I|`.
//! - **Mode 3** (deltas at the minimum size still blew the budget): keep
//!   the size and fall back to the interval that makes full updates
//!   budget-feasible, which lets the loop escape the delta regime.
//!
//! The pipeline half of this module maintains the cache-side counting
//! filter, tracks which advertised bits have flipped since the client's
//! filter was last updated, and emits full or delta advertisements on the
//! configured cadence.

use crate::cache::Cache;
use crate::indicator::{
    apply_ref, delta_is_cheaper, diff, Advertisement, BitFilter, CountingFilter,
};

/// Indicator size in bits and update interval in requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Configuration {
    pub indicator_bits: u64,
    pub update_interval: u64,
}

/// Static controller limits: the budget, the miss penalty, and the
/// feasible configuration box.
#[derive(Debug, Clone, Copy)]
pub struct ControlParams {
    /// Bandwidth budget B, in advertisement bits per request.
    pub budget: u64,
    /// Miss penalty M (integral, > 1).
    pub miss_penalty: u64,
    pub min_bits: u64,
    pub max_bits: u64,
    pub min_interval: u64,
}

/// Statistics gathered over one segment.
#[derive(Debug, Clone, Copy, Default)]
pub struct SegmentStats {
    pub requests: u64,
    pub fp_count: u64,
    pub fn_count: u64,
    /// Advertisement payload bits handed to the network (pre-policing).
    pub bits_sent: u64,
    /// Did a cost-chosen full update reach the client this segment? This
    /// is the full-indicator-regime detector, so it counts neither forced
    /// fulls (initial advertisement, post-resize rebuilds say nothing
    /// about delta economics) nor fulls the network dropped (a segment
    /// drowning in policing drops is a budget-violation signal for the
    /// delta branches, not evidence of an operating full-update regime).
    pub full_update_sent: bool,
}

impl SegmentStats {
    pub fn fp_ratio(&self) -> f64 {
        self.fp_count as f64 / self.requests as f64
    }

    pub fn fn_ratio(&self) -> f64 {
        self.fn_count as f64 / self.requests as f64
    }

    /// Average attempted bits per request.
    pub fn bandwidth(&self) -> f64 {
        self.bits_sent as f64 / self.requests as f64
    }

    /// `BW_t <= B`, evaluated exactly in integers.
    pub fn within_budget(&self, budget: u64) -> bool {
        self.bits_sent <= budget * self.requests
    }
}

/// The controller branch taken at a segment boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Full-indicator regime: balance error costs.
    Full,
    /// Delta regime: pin the interval, rescale the size to the budget.
    Delta,
    /// Delta regime infeasible at minimum size: back off the interval.
    Fallback,
}

impl Mode {
    pub fn index(self) -> u8 {
        match self {
            Mode::Full => 1,
            Mode::Delta => 2,
            Mode::Fallback => 3,
        }
    }
}

/// Starting configuration: the minimal indicator, updated as often as the
/// budget allows for full snapshots (never below the minimum interval).
pub fn initial_config(p: &ControlParams) -> Configuration {
    Configuration {
        indicator_bits: p.min_bits,
        update_interval: (p.min_bits / p.budget).max(p.min_interval),
    }
}

/// Largest interval the controller ever needs: one maximal full indicator
/// per interval exactly meets the budget.
pub fn max_interval(max_bits: u64, budget: u64) -> u64 {
    max_bits / budget
}

/// Segment length `T = alpha * max(u_max, C)`: long enough for stable
/// statistics and for several updates per segment.
pub fn segment_length(alpha: u64, max_interval: u64, capacity: u64) -> u64 {
    alpha * max_interval.max(capacity)
}

/// Clamp a proposed indicator size into the feasible box.
pub fn fit_to_range(size: u64, p: &ControlParams) -> u64 {
    size.min(p.max_bits).max(p.min_bits)
}

/// Which branch the stats select, exactly as the controller's predicates
/// read them.
pub fn classify(stats: &SegmentStats, cur: Configuration, p: &ControlParams) -> Mode {
    if stats.full_update_sent {
        Mode::Full
    } else if cur.indicator_bits > p.min_bits || stats.within_budget(p.budget) {
        Mode::Delta
    } else {
        Mode::Fallback
    }
}

/// Solve `x * log2(x) = a` for `x >= 1` (Newton; the function is convex
/// and increasing there, so iteration from below converges after one
/// overshoot). For `a <= 0` returns 1.
pub fn solve_x_log2x(a: f64) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    let inv_ln2 = std::f64::consts::LOG2_E;
    // First guess: x ~ a / log2(a), decent for a >= 2.
    let mut x = (a / a.max(2.0).log2()).max(1.0);
    for _ in 0..64 {
        let f = x * x.log2() - a;
        let df = x.log2() + inv_ln2;
        let step = f / df;
        let next = (x - step).max(1.0);
        if (next - x).abs() <= 1e-15 * x.abs() {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Largest integer `y >= 1` with `y * log2(y) <= a` — the floored solution
/// of `x log2 x = a`. A short integer scan around the Newton root makes
/// the floor exact even when the root lands within rounding error of an
/// integer, so a budget-neutral segment reproduces its size bit-for-bit.
pub fn floor_solve_x_log2x(a: f64) -> u64 {
    let x = solve_x_log2x(a);
    let mut best = 1u64;
    let center = x as u64;
    for cand in center.saturating_sub(2)..=center + 2 {
        if cand >= 1 {
            let v = cand as f64;
            if v * v.log2() <= a && cand > best {
                best = cand;
            }
        }
    }
    best
}

/// The delta-regime resize target: the real solution of
/// `x log2 x = (B / BW_t) * |I| log2 |I|`. With nothing sent (`BW_t = 0`)
/// the budget allows unbounded growth, so the maximal size is returned.
pub fn lambert_size(bits: u64, budget: u64, bandwidth: f64, max_bits: u64) -> f64 {
    if bandwidth <= 0.0 {
        return max_bits as f64;
    }
    let b = bits as f64;
    let a = (budget as f64 / bandwidth) * b * b.log2();
    solve_x_log2x(a)
}

/// One controller step: map the closed segment's statistics to the next
/// configuration. Total over all inputs.
pub fn reconfigure(
    stats: &SegmentStats,
    cur: Configuration,
    p: &ControlParams,
) -> (Configuration, Mode) {
    let mode = classify(stats, cur, p);
    let cfg = match mode {
        Mode::Full => {
            let t = stats.requests as f64;
            // Zero-count protection: half a pseudo-event keeps the step
            // finite without moving the balance fixed point.
            let fp = if stats.fp_count == 0 {
                0.5 / t
            } else {
                stats.fp_count as f64 / t
            };
            let fnr = if stats.fn_count == 0 {
                0.5 / t
            } else {
                stats.fn_count as f64 / t
            };
            let factor = (fp / ((p.miss_penalty - 1) as f64 * fnr))
                .sqrt()
                .clamp(0.25, 4.0);
            let bits = fit_to_range((cur.indicator_bits as f64 * factor) as u64, p);
            Configuration {
                indicator_bits: bits,
                update_interval: full_feasible_interval(bits, p),
            }
        }
        Mode::Delta => {
            let bits = if stats.bits_sent == 0 {
                p.max_bits
            } else {
                let b = cur.indicator_bits as f64;
                let ratio = p.budget as f64 / stats.bandwidth();
                fit_to_range(floor_solve_x_log2x(ratio * b * b.log2()), p)
            };
            Configuration {
                indicator_bits: bits,
                update_interval: p.min_interval,
            }
        }
        Mode::Fallback => Configuration {
            indicator_bits: cur.indicator_bits,
            update_interval: full_feasible_interval(cur.indicator_bits, p),
        },
    };
    (cfg, mode)
}

/// Smallest interval at which one full `bits`-sized update per interval
/// respects `|I| / u <= B`, floored at the minimum interval.
fn full_feasible_interval(bits: u64, p: &ControlParams) -> u64 {
    bits.div_ceil(p.budget).max(p.min_interval)
}

// ---------------------------------------------------------------------------
// Advertisement pipeline
// ---------------------------------------------------------------------------

/// Cache-side advertisement machinery for one simulation run: the counting
/// filter mirroring the resident set, its compressed bit view, a mirror of
/// the client's filter (reconstructible because policing is deterministic
/// and cache-visible), and the per-segment statistics.
pub struct Advertiser {
    cfg: Configuration,
    capacity: u64,
    seed: u64,
    cbf: CountingFilter,
    cur: BitFilter,
    /// The cache's copy of the filter the client currently holds.
    mirror: BitFilter,
    /// Number of positions where `cur` and `mirror` differ. Maintained
    /// incrementally on every bit transition; meaningless while
    /// `reshaped`.
    diff_count: u64,
    since_attempt: u64,
    stats: SegmentStats,
    /// The client's filter has a different shape (size changed since the
    /// last delivered full update); deltas are undefined until a full
    /// update lands.
    reshaped: bool,
    /// The advertisement just built was a cost-chosen full; on delivery
    /// it flags the segment as full-indicator regime.
    pending_organic_full: bool,
}

impl Advertiser {
    pub fn new(cfg: Configuration, capacity: u64, seed: u64) -> Self {
        let m = cfg.indicator_bits;
        let cbf = CountingFilter::new(m, capacity, seed).expect("positive filter dimensions");
        let cur = BitFilter::new(m, cbf.hash_count(), seed);
        Advertiser {
            cfg,
            capacity,
            seed,
            mirror: cur.clone(),
            cur,
            cbf,
            diff_count: 0,
            since_attempt: 0,
            stats: SegmentStats::default(),
            reshaped: false,
            pending_organic_full: false,
        }
    }

    pub fn config(&self) -> Configuration {
        self.cfg
    }

    pub fn stats(&self) -> &SegmentStats {
        &self.stats
    }

    /// Mirror an admission into the counting filter.
    #[inline]
    pub fn on_admit(&mut self, key: u64) {
        let (cur, mirror, diff, reshaped) = (
            &mut self.cur,
            &self.mirror,
            &mut self.diff_count,
            self.reshaped,
        );
        self.cbf.insert_with(key, |pos| {
            cur.set(pos);
            if !reshaped {
                // The bit just became 1; it now differs from the client
                // iff the client holds 0 there.
                if mirror.bit(pos) {
                    *diff -= 1;
                } else {
                    *diff += 1;
                }
            }
        });
    }

    /// Mirror an eviction into the counting filter.
    #[inline]
    pub fn on_evict(&mut self, key: u64) {
        let (cur, mirror, diff, reshaped) = (
            &mut self.cur,
            &self.mirror,
            &mut self.diff_count,
            self.reshaped,
        );
        self.cbf.remove_with(key, |pos| {
            cur.clear(pos);
            if !reshaped {
                if mirror.bit(pos) {
                    *diff += 1;
                } else {
                    *diff -= 1;
                }
            }
        });
    }

    /// Record the request's indication outcome.
    #[inline]
    pub fn on_request(&mut self, indication_positive: bool, present: bool) {
        self.stats.requests += 1;
        if indication_positive && !present {
            self.stats.fp_count += 1;
        } else if !indication_positive && present {
            self.stats.fn_count += 1;
        }
    }

    /// Advance the update schedule; true when an advertisement is due.
    #[inline]
    pub fn advance_schedule(&mut self) -> bool {
        self.since_attempt += 1;
        if self.since_attempt >= self.cfg.update_interval {
            self.since_attempt = 0;
            true
        } else {
            false
        }
    }

    /// Build the advertisement for the current attempt and charge its cost
    /// to the segment. After a resize the update is a forced full
    /// snapshot; otherwise the cheaper of delta and full is chosen.
    pub fn build_advertisement(&mut self) -> Advertisement {
        let m = self.cur.size_bits();
        self.pending_organic_full = false;
        let adv = if self.reshaped {
            Advertisement::Full(self.cur.clone())
        } else if delta_is_cheaper(self.diff_count, m) {
            let positions =
                diff(&self.mirror, &self.cur).expect("mirror and cur share a shape");
            debug_assert_eq!(positions.len() as u64, self.diff_count);
            Advertisement::Delta { m, positions }
        } else {
            self.pending_organic_full = true;
            Advertisement::Full(self.cur.clone())
        };
        self.stats.bits_sent += adv.bit_cost();
        adv
    }

    /// The initial full advertisement, emitted before the first request.
    /// Charged like any other update but not counted as a cost-chosen
    /// full.
    pub fn initial_advertisement(&mut self) -> Advertisement {
        let adv = Advertisement::Full(self.cur.clone());
        self.pending_organic_full = false;
        self.stats.bits_sent += adv.bit_cost();
        adv
    }

    /// The network delivered this advertisement: replay it onto the mirror
    /// so it tracks the client exactly, and let a delivered cost-chosen
    /// full mark the segment as full-indicator regime.
    pub fn note_delivered(&mut self, adv: &Advertisement) {
        match adv {
            Advertisement::Full(_) => {
                self.mirror.clone_from(&self.cur);
                self.reshaped = false;
                if self.pending_organic_full {
                    self.stats.full_update_sent = true;
                }
            }
            Advertisement::Delta { .. } => {
                apply_ref(&mut self.mirror, adv).expect("delta built against this mirror");
            }
        }
        self.diff_count = 0;
        debug_assert_eq!(self.mirror, self.cur);
    }

    /// Dropped advertisements leave the client (and thus the mirror)
    /// untouched; the next delta is still computed against the client's
    /// actual state.
    pub fn note_dropped(&mut self) {}

    /// Close the segment: hand back its statistics and start a fresh one.
    pub fn take_segment_stats(&mut self) -> SegmentStats {
        std::mem::take(&mut self.stats)
    }

    /// Install the next configuration. A size change rebuilds the filter
    /// from the cache's current residents (new size, new hash count) and
    /// forces the next update to be a full snapshot. The schedule counter
    /// restarts either way.
    pub fn apply_config(&mut self, cfg: Configuration, cache: &Cache) {
        if cfg.indicator_bits != self.cfg.indicator_bits {
            let m = cfg.indicator_bits;
            self.cbf = CountingFilter::new(m, self.capacity, self.seed)
                .expect("positive filter dimensions");
            for key in cache.keys() {
                self.cbf.insert(key);
            }
            self.cur = self.cbf.compress();
            self.reshaped = true;
        }
        self.cfg = cfg;
        self.since_attempt = 0;
    }

    /// Advertised-bit view of the cache side.
    pub fn current_filter(&self) -> &BitFilter {
        &self.cur
    }

    /// The cache's reconstruction of the client's filter.
    pub fn mirror_filter(&self) -> &BitFilter {
        &self.mirror
    }

    #[cfg(test)]
    fn counting_filter(&self) -> &CountingFilter {
        &self.cbf
    }
}

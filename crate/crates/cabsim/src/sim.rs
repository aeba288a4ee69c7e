//! The request loop: indication, cache access, cost accounting, and the
//! advertisement pipeline, plus the static-configuration grid search and
//! the cache-first baseline.
//!
//! Cost model per request (access cost 1, miss penalty M): a positive
//! indication costs one cache access plus M if the item is absent; a
//! negative indication skips the cache and pays M outright. Costs are
//! integers, accumulated exactly, so the average is reproducible
//! bit-for-bit from the event totals.

use crate::advertiser::{
    initial_config, max_interval, reconfigure, segment_length, Advertiser, Configuration,
    ControlParams, Mode,
};
use crate::cache::{Cache, PolicyKind};
use crate::hash::mix64;
use crate::network::{Netlink, SendOutcome};
use crate::workload::{WorkloadError, WorkloadSource};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("workload is empty")]
    EmptyWorkload,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// One experiment's full parameterization.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub capacity: u64,
    pub policy: PolicyKind,
    pub workload: WorkloadSource,
    /// Bandwidth budget B in bits per request.
    pub budget: u64,
    /// Miss penalty M (integral, at least 2).
    pub miss_penalty: u64,
    /// Segment length multiplier.
    pub alpha: u64,
    pub min_interval: u64,
    pub min_bits: u64,
    pub max_bits: u64,
    pub seed: u64,
}

impl Scenario {
    /// Scenario with the standard defaults: B = 20 bits/request, M = 3,
    /// alpha = 10, minimum interval 10, indicator bounds 2.5 and 15 bits
    /// per cached element.
    pub fn new(capacity: u64, policy: PolicyKind, workload: WorkloadSource, seed: u64) -> Self {
        Scenario {
            capacity,
            policy,
            workload,
            budget: 20,
            miss_penalty: 3,
            alpha: 10,
            min_interval: 10,
            min_bits: (2.5 * capacity as f64) as u64,
            max_bits: 15 * capacity,
            seed,
        }
    }

    pub fn control_params(&self) -> ControlParams {
        ControlParams {
            budget: self.budget,
            miss_penalty: self.miss_penalty,
            min_bits: self.min_bits,
            max_bits: self.max_bits,
            min_interval: self.min_interval,
        }
    }

    pub fn max_interval(&self) -> u64 {
        max_interval(self.max_bits, self.budget)
    }

    pub fn segment_length(&self) -> u64 {
        segment_length(self.alpha, self.max_interval(), self.capacity)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: &str| Err(SimError::InvalidScenario(msg.to_string()));
        if self.capacity == 0 {
            return fail("cache capacity must be positive");
        }
        if self.budget == 0 {
            return fail("budget must be positive");
        }
        if self.miss_penalty < 2 {
            return fail("miss penalty must exceed 1");
        }
        if self.alpha == 0 {
            return fail("alpha must be positive");
        }
        if self.min_interval == 0 {
            return fail("minimum update interval must be positive");
        }
        if self.min_bits == 0 || self.min_bits > self.max_bits {
            return fail("indicator size bounds must satisfy 0 < min <= max");
        }
        let t = self
            .alpha
            .checked_mul(self.max_interval().max(self.capacity));
        if t.and_then(|t| t.checked_mul(self.budget)).is_none() {
            return fail("budget * segment length overflows");
        }
        Ok(())
    }
}

/// Which advertisement policy drives a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdvertiserKind {
    /// The self-adjusting controller.
    Cab,
    /// A fixed configuration for the whole run.
    Static(Configuration),
    /// No indicators: every request accesses the cache.
    CacheFirst,
    /// Diagnostic: indications are ground truth (no false indications).
    Oracle,
}

impl AdvertiserKind {
    pub fn label(&self) -> String {
        match self {
            AdvertiserKind::Cab => "cab".to_string(),
            AdvertiserKind::Static(c) => {
                format!("static:{},{}", c.indicator_bits, c.update_interval)
            }
            AdvertiserKind::CacheFirst => "cf".to_string(),
            AdvertiserKind::Oracle => "oracle".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Record one event per request for the cost-accounting oracle.
    pub log_events: bool,
}

/// Per-request outcome, enough to recompute the run's cost exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestEvent {
    pub indication: bool,
    pub present: bool,
}

/// One segment's row in the per-segment report.
#[derive(Debug, Clone)]
pub struct SegmentRow {
    pub index: u64,
    /// Request count at the segment's end (exclusive).
    pub t_end: u64,
    /// Configuration active while the segment ran.
    pub indicator_bits: u64,
    pub update_interval: u64,
    /// Controller branch taken at this segment's end (self-adjusting runs
    /// on complete segments only).
    pub mode: Option<Mode>,
    pub requests: u64,
    pub fp_count: u64,
    pub fn_count: u64,
    pub hits: u64,
    pub bits_attempted: u64,
    pub bits_delivered: u64,
    pub cost_sum: u64,
    pub dropped_updates: u64,
    pub full_update_sent: bool,
}

impl SegmentRow {
    pub fn fp_ratio(&self) -> f64 {
        self.fp_count as f64 / self.requests as f64
    }

    pub fn fn_ratio(&self) -> f64 {
        self.fn_count as f64 / self.requests as f64
    }

    pub fn bw_attempted(&self) -> f64 {
        self.bits_attempted as f64 / self.requests as f64
    }

    pub fn bw_delivered(&self) -> f64 {
        self.bits_delivered as f64 / self.requests as f64
    }

    pub fn hit_ratio(&self) -> f64 {
        self.hits as f64 / self.requests as f64
    }

    pub fn avg_cost(&self) -> f64 {
        self.cost_sum as f64 / self.requests as f64
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub requests: u64,
    pub total_cost: u64,
    pub avg_cost: f64,
    pub hits: u64,
    pub misses: u64,
    pub fp: u64,
    pub fn_: u64,
    /// Requests that skipped the cache (negative indications).
    pub skips: u64,
    pub attempted_bits: u64,
    pub delivered_bits: u64,
    pub dropped_updates: u64,
    pub segment_len: u64,
    pub segments: Vec<SegmentRow>,
    /// The configuration in force when the run ended (indicator runs).
    pub final_config: Option<Configuration>,
    pub events: Option<Vec<RequestEvent>>,
}

impl RunResult {
    pub fn hit_ratio(&self) -> f64 {
        self.hits as f64 / self.requests as f64
    }

    /// Attempted advertisement traffic within `B * T` in every complete
    /// segment? This is the static-feasibility test: policing would cap
    /// the delivered bits anyway, but a configuration that needs capping
    /// does not satisfy the budget.
    pub fn budget_feasible(&self, budget: u64) -> bool {
        self.segments
            .iter()
            .filter(|row| row.requests == self.segment_len)
            .all(|row| row.bits_attempted <= budget * row.requests)
    }

    pub fn hits_per_segment(&self) -> Vec<u64> {
        self.segments.iter().map(|row| row.hits).collect()
    }
}

/// Recompute the average cost from a request-event log:
/// `(pos_hit * 1 + pos_miss * (1 + M) + neg * M) / N`. Exact, so it must
/// reproduce the streaming accumulator bit-for-bit.
pub fn cost_oracle(events: &[RequestEvent], miss_penalty: u64) -> f64 {
    let mut pos_hit = 0u64;
    let mut pos_miss = 0u64;
    let mut neg = 0u64;
    for e in events {
        match (e.indication, e.present) {
            (true, true) => pos_hit += 1,
            (true, false) => pos_miss += 1,
            (false, _) => neg += 1,
        }
    }
    let total = pos_hit + pos_miss * (1 + miss_penalty) + neg * miss_penalty;
    total as f64 / events.len() as f64
}

/// Materialize the scenario's workload and run.
pub fn run_scenario(
    scenario: &Scenario,
    kind: &AdvertiserKind,
    opts: RunOptions,
) -> Result<RunResult, SimError> {
    let keys = scenario.workload.materialize(scenario.seed)?;
    run(scenario, kind, &keys, opts)
}

/// Run one simulation over a pre-materialized key stream.
pub fn run(
    scenario: &Scenario,
    kind: &AdvertiserKind,
    keys: &[u64],
    opts: RunOptions,
) -> Result<RunResult, SimError> {
    scenario.validate()?;
    if keys.is_empty() {
        return Err(SimError::EmptyWorkload);
    }
    if let AdvertiserKind::Static(c) = kind {
        if c.indicator_bits == 0 || c.update_interval == 0 {
            return Err(SimError::InvalidScenario(
                "static configuration must be positive".to_string(),
            ));
        }
    }

    let params = scenario.control_params();
    let seg_len = scenario.segment_length();
    let miss_penalty = scenario.miss_penalty;
    let reconfiguring = matches!(kind, AdvertiserKind::Cab);
    let mut cache = Cache::new(scenario.capacity, scenario.policy, scenario.seed);

    // The indicator pipeline exists only when indicators are advertised.
    let mut pipeline: Option<(Advertiser, Netlink)> = match kind {
        AdvertiserKind::Cab | AdvertiserKind::Static(_) => {
            let cfg = match kind {
                AdvertiserKind::Cab => initial_config(&params),
                AdvertiserKind::Static(c) => *c,
                _ => unreachable!(),
            };
            let mut adv = Advertiser::new(cfg, scenario.capacity, mix64(scenario.seed ^ 0xf117e5));
            let mut net = Netlink::new(scenario.budget * seg_len, adv.current_filter().clone());
            // One full snapshot before the first request, charged against
            // the first segment's tokens.
            let first = adv.initial_advertisement();
            match net.try_send(&first) {
                SendOutcome::Delivered(_) => adv.note_delivered(&first),
                SendOutcome::Dropped => adv.note_dropped(),
            }
            Some((adv, net))
        }
        AdvertiserKind::CacheFirst | AdvertiserKind::Oracle => None,
    };
    let mut final_config = pipeline.as_ref().map(|(adv, _)| adv.config());

    let mut events = if opts.log_events {
        Some(Vec::with_capacity(keys.len()))
    } else {
        None
    };

    let mut total_cost = 0u64;
    let mut hits = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut skips = 0u64;

    let mut segments: Vec<SegmentRow> = Vec::new();
    let mut seg_hits = 0u64;
    let mut cost_baseline = 0u64; // total_cost at the current segment's start
    let mut seg_start = 0u64;
    let mut dropped_base = 0u64;

    for (i, &key) in keys.iter().enumerate() {
        let now = i as u64;
        let indication = match kind {
            AdvertiserKind::CacheFirst => true,
            AdvertiserKind::Oracle => cache.contains(key),
            _ => pipeline.as_ref().unwrap().1.indication(key),
        };

        // The access bundles the positive-indication get with the
        // unconditional put; refreshes are idempotent per time slot, so
        // the cache evolves identically whichever indication was given.
        let out = cache.access(key, now);
        let present = out.present;

        total_cost += if indication {
            if present {
                1
            } else {
                1 + miss_penalty
            }
        } else {
            miss_penalty
        };
        if present {
            hits += 1;
            seg_hits += 1;
        }
        if !indication {
            skips += 1;
        }

        if let Some((adv, net)) = pipeline.as_mut() {
            if indication && !present {
                fp += 1;
            } else if !indication && present {
                fn_ += 1;
            }
            if let Some(victim) = out.evicted {
                adv.on_evict(victim);
            }
            if out.admitted() {
                adv.on_admit(key);
            }
            adv.on_request(indication, present);
            if adv.advance_schedule() {
                let ad = adv.build_advertisement();
                match net.try_send(&ad) {
                    SendOutcome::Delivered(_) => adv.note_delivered(&ad),
                    SendOutcome::Dropped => adv.note_dropped(),
                }
            }
        }

        if let Some(log) = events.as_mut() {
            log.push(RequestEvent {
                indication,
                present,
            });
        }

        // Segment boundary: emit the row, reconfigure, regrant tokens.
        let t_end = now + 1;
        if t_end.is_multiple_of(seg_len) {
            let index = segments.len() as u64;
            let requests = t_end - seg_start;
            let seg_cost = total_cost - cost_baseline;
            let row = match pipeline.as_mut() {
                Some((adv, net)) => {
                    let active = adv.config();
                    let stats = adv.take_segment_stats();
                    debug_assert_eq!(stats.requests, requests);
                    let (mode, next_cfg) = if reconfiguring {
                        let (cfg, mode) = reconfigure(&stats, active, &params);
                        (Some(mode), Some(cfg))
                    } else {
                        (None, None)
                    };
                    let dropped_now = net.dropped_updates();
                    let row = SegmentRow {
                        index,
                        t_end,
                        indicator_bits: active.indicator_bits,
                        update_interval: active.update_interval,
                        mode,
                        requests,
                        fp_count: stats.fp_count,
                        fn_count: stats.fn_count,
                        hits: seg_hits,
                        bits_attempted: stats.bits_sent,
                        bits_delivered: net.delivered_bits(),
                        cost_sum: seg_cost,
                        dropped_updates: dropped_now - dropped_base,
                        full_update_sent: stats.full_update_sent,
                    };
                    dropped_base = dropped_now;
                    net.segment_reset();
                    if let Some(cfg) = next_cfg {
                        adv.apply_config(cfg, &cache);
                        final_config = Some(cfg);
                    }
                    row
                }
                None => SegmentRow {
                    index,
                    t_end,
                    indicator_bits: 0,
                    update_interval: 0,
                    mode: None,
                    requests,
                    fp_count: 0,
                    fn_count: 0,
                    hits: seg_hits,
                    bits_attempted: 0,
                    bits_delivered: 0,
                    cost_sum: seg_cost,
                    dropped_updates: 0,
                    full_update_sent: false,
                },
            };
            segments.push(row);
            seg_start = t_end;
            seg_hits = 0;
            cost_baseline = total_cost;
        }
    }

    // Trailing partial segment: processed and costed, but no
    // reconfiguration fires and feasibility checks exclude it.
    let n = keys.len() as u64;
    if seg_start < n {
        let index = segments.len() as u64;
        let requests = n - seg_start;
        let row = match pipeline.as_mut() {
            Some((adv, net)) => {
                let active = adv.config();
                let stats = adv.take_segment_stats();
                SegmentRow {
                    index,
                    t_end: n,
                    indicator_bits: active.indicator_bits,
                    update_interval: active.update_interval,
                    mode: None,
                    requests,
                    fp_count: stats.fp_count,
                    fn_count: stats.fn_count,
                    hits: seg_hits,
                    bits_attempted: stats.bits_sent,
                    bits_delivered: net.delivered_bits(),
                    cost_sum: total_cost - cost_baseline,
                    dropped_updates: net.dropped_updates() - dropped_base,
                    full_update_sent: stats.full_update_sent,
                }
            }
            None => SegmentRow {
                index,
                t_end: n,
                indicator_bits: 0,
                update_interval: 0,
                mode: None,
                requests,
                fp_count: 0,
                fn_count: 0,
                hits: seg_hits,
                bits_attempted: 0,
                bits_delivered: 0,
                cost_sum: total_cost - cost_baseline,
                dropped_updates: 0,
                full_update_sent: false,
            },
        };
        segments.push(row);
    }

    let attempted_bits = segments.iter().map(|r| r.bits_attempted).sum();
    let delivered_bits = segments.iter().map(|r| r.bits_delivered).sum();
    let dropped_updates = segments.iter().map(|r| r.dropped_updates).sum();
    Ok(RunResult {
        requests: n,
        total_cost,
        avg_cost: total_cost as f64 / n as f64,
        hits,
        misses: n - hits,
        fp,
        fn_,
        skips,
        attempted_bits,
        delivered_bits,
        dropped_updates,
        segment_len: seg_len,
        segments,
        final_config,
        events,
    })
}

// ---------------------------------------------------------------------------
// Static-configuration grid
// ---------------------------------------------------------------------------

/// Candidate indicator sizes: the geometric ladder
/// `{min * 1.1^i : min * 1.1^i <= max}` plus the maximal size itself.
pub fn size_grid(min_bits: u64, max_bits: u64) -> Vec<u64> {
    let mut sizes = Vec::new();
    let mut i = 0;
    loop {
        let real = min_bits as f64 * 1.1f64.powi(i);
        if real > max_bits as f64 {
            break;
        }
        sizes.push(real as u64);
        i += 1;
    }
    if sizes.last() != Some(&max_bits) {
        sizes.push(max_bits);
    }
    sizes.dedup();
    sizes
}

/// Candidate update intervals: `{min * 1.15^j : min * 1.15^j <= max}`.
pub fn interval_grid(min_interval: u64, max_interval: u64) -> Vec<u64> {
    let mut intervals = Vec::new();
    let mut j = 0;
    loop {
        let real = min_interval as f64 * 1.15f64.powi(j);
        if real > max_interval as f64 {
            break;
        }
        intervals.push(real as u64);
        j += 1;
    }
    intervals.dedup();
    intervals
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub config: Configuration,
    pub avg_cost: f64,
    pub feasible: bool,
    pub hit_ratio: f64,
    pub attempted_bits: u64,
    pub dropped_updates: u64,
    pub hits_per_segment: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub sizes: Vec<u64>,
    pub intervals: Vec<u64>,
    pub cells: Vec<GridCell>,
    /// Minimum-cost feasible configuration; ties go to the smaller size,
    /// then the smaller interval.
    pub best: Option<(Configuration, f64)>,
}

/// Run every static configuration on the grid and pick the best feasible
/// one. Runs are independent and execute in parallel; the result is
/// reduced in grid order, so it does not depend on scheduling.
pub fn grid_search(scenario: &Scenario, keys: &[u64]) -> Result<GridSearchOutcome, SimError> {
    scenario.validate()?;
    if keys.is_empty() {
        return Err(SimError::EmptyWorkload);
    }
    let sizes = size_grid(scenario.min_bits, scenario.max_bits);
    let intervals = interval_grid(scenario.min_interval, scenario.max_interval());
    let configs: Vec<Configuration> = sizes
        .iter()
        .flat_map(|&bits| {
            intervals.iter().map(move |&u| Configuration {
                indicator_bits: bits,
                update_interval: u,
            })
        })
        .collect();

    let cells: Vec<GridCell> = configs
        .par_iter()
        .map(|cfg| {
            let result = run(
                scenario,
                &AdvertiserKind::Static(*cfg),
                keys,
                RunOptions::default(),
            )
            .expect("validated scenario and non-empty keys");
            GridCell {
                config: *cfg,
                avg_cost: result.avg_cost,
                feasible: result.budget_feasible(scenario.budget),
                hit_ratio: result.hit_ratio(),
                attempted_bits: result.attempted_bits,
                dropped_updates: result.dropped_updates,
                hits_per_segment: result.hits_per_segment(),
            }
        })
        .collect();

    let mut best: Option<(Configuration, f64)> = None;
    for cell in &cells {
        if cell.feasible && best.is_none_or(|(_, cost)| cell.avg_cost < cost) {
            best = Some((cell.config, cell.avg_cost));
        }
    }

    Ok(GridSearchOutcome {
        sizes,
        intervals,
        cells,
        best,
    })
}

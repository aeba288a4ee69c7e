//! Trace-driven simulation of cache-content advertisement under a
//! bandwidth budget.
//!
//! A cache serves a request stream and advertises an approximate sketch
//! of its content (a Bloom-filter *indicator*) so clients can skip the
//! cache when their datum is unlikely to be there. Advertisements compete
//! for a fixed bandwidth budget of B bits per request, enforced per
//! segment by a token-policing network model: updates beyond the budget
//! are dropped, and the client's view goes stale.
//!
//! The crate provides:
//!
//! - [`indicator`]: counting Bloom filters, their compressed bit form,
//!   and full/delta advertisement encoding with exact bit costs;
//! - [`cache`]: a bounded cache with LRU and hyperbolic eviction,
//!   reporting admissions/evictions so the filter mirrors it exactly;
//! - [`advertiser`]: the update schedule and the self-adjusting
//!   controller that re-picks (indicator size, update interval) each
//!   segment;
//! - [`network`]: segment-scoped token policing and the client filter;
//! - [`workload`]: trace ingestion and multi-phase Zipf generation;
//! - [`sim`]: the request loop, cost accounting, grid search, and the
//!   cache-first baseline;
//! - [`report`]: CSV emission.

pub mod advertiser;
pub mod cache;
pub mod hash;
pub mod indicator;
pub mod network;
pub mod report;
pub mod sim;
pub mod workload;

pub use advertiser::{Configuration, ControlParams, Mode, SegmentStats};
pub use cache::{Cache, PolicyKind};
pub use indicator::{Advertisement, BitFilter, CountingFilter};
pub use sim::{
    cost_oracle, grid_search, run, run_scenario, AdvertiserKind, RunOptions, RunResult, Scenario,
    SimError,
};
pub use workload::WorkloadSource;

//! Cross-module invariants: delta round-trips, wire encoding, mirror
//! fidelity, policing, and advertisement-policy neutrality.

use cabsim::advertiser::{reconfigure, Configuration, ControlParams, SegmentStats};
use cabsim::cache::{Cache, PolicyKind};
use cabsim::indicator::{
    apply, choose_update, diff, Advertisement, AdvertisementKind, BitFilter, CountingFilter,
};
use cabsim::network::{Netlink, SendOutcome};
use cabsim::sim::{run, AdvertiserKind, RunOptions, Scenario};
use cabsim::workload::WorkloadSource;
use proptest::prelude::*;

fn arb_filter(m: u64) -> impl Strategy<Value = BitFilter> {
    prop::collection::vec(any::<bool>(), m as usize).prop_map(move |bits| {
        let mut f = BitFilter::new(m, 3, 42);
        for (i, b) in bits.iter().enumerate() {
            if *b {
                f.set(i);
            }
        }
        f
    })
}

fn arb_filter_pair() -> impl Strategy<Value = (BitFilter, BitFilter)> {
    (1u64..300).prop_flat_map(|m| (arb_filter(m), arb_filter(m)))
}

proptest! {
    #[test]
    fn delta_roundtrip_reconstructs_target((x, y) in arb_filter_pair()) {
        let m = x.size_bits();
        let flips = diff(&x, &y).unwrap();
        let mut client = x.clone();
        apply(&mut client, Advertisement::Delta { m, positions: flips }).unwrap();
        prop_assert_eq!(client, y);
    }

    #[test]
    fn wire_roundtrip_both_kinds((f, _) in arb_filter_pair()) {
        let m = f.size_bits();
        let full = Advertisement::Full(f.clone());
        prop_assert_eq!(
            Advertisement::decode(&full.encode(), m, f.hash_count(), f.seed()).unwrap(),
            full
        );
        let empty = BitFilter::new(m, f.hash_count(), f.seed());
        let delta = choose_update(&empty, &f).unwrap();
        if delta.kind() == AdvertisementKind::Delta {
            prop_assert_eq!(
                Advertisement::decode(&delta.encode(), m, f.hash_count(), f.seed()).unwrap(),
                delta
            );
        }
    }

    #[test]
    fn chosen_update_is_cost_minimal(m in 2u64..5000, flip_seed in any::<u64>()) {
        // Random pair of filters; the chosen kind must cost
        // min(m, flips * ceil(log2 m)), full winning ties.
        let mut prev = BitFilter::new(m, 2, 1);
        let mut cur = BitFilter::new(m, 2, 1);
        let mut state = flip_seed;
        for i in 0..m as usize {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if state >> 60 < 6 {
                prev.set(i);
            }
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if state >> 60 < 6 {
                cur.set(i);
            }
        }
        let flips = diff(&prev, &cur).unwrap().len() as u64;
        let width = if m <= 1 { 0 } else { 64 - (m - 1).leading_zeros() } as u64;
        let delta_cost = flips * width;
        let adv = choose_update(&prev, &cur).unwrap();
        if delta_cost != m {
            prop_assert_eq!(adv.bit_cost(), delta_cost.min(m));
        } else {
            prop_assert_eq!(adv.kind(), AdvertisementKind::Full);
        }
    }

    #[test]
    fn full_regime_configs_satisfy_the_budget_bound(
        bits in 1000u64..1_000_000,
        budget in 1u64..500,
        fp in 0u64..5000,
        fn_ in 0u64..5000,
        full in any::<bool>(),
    ) {
        // Any configuration produced by the full-indicator or fallback
        // branches keeps |I'| <= B * u'.
        let p = ControlParams {
            budget,
            miss_penalty: 3,
            min_bits: 1000,
            max_bits: 1_000_000,
            min_interval: 10,
        };
        let stats = SegmentStats {
            requests: 10_000,
            fp_count: fp,
            fn_count: fn_,
            bits_sent: if full { 0 } else { budget * 10_000 + 1 },
            full_update_sent: full,
        };
        let cur = Configuration { indicator_bits: bits.clamp(p.min_bits, p.max_bits), update_interval: 10 };
        let (next, mode) = reconfigure(&stats, cur, &p);
        if mode != cabsim::Mode::Delta {
            prop_assert!(next.indicator_bits <= budget * next.update_interval,
                "mode {mode:?}: {next:?} at B = {budget}");
        }
        prop_assert!(next.indicator_bits >= p.min_bits && next.indicator_bits <= p.max_bits);
        prop_assert!(next.update_interval >= p.min_interval);
    }
}

/// Replaying admit/evict events from an empty set reconstructs the cache
/// exactly, and a fresh filter built from those events never reports a
/// resident key absent.
#[test]
fn mirror_fidelity_under_random_requests() {
    for policy in [PolicyKind::Lru, PolicyKind::Hyperbolic] {
        let capacity = 96u64;
        let mut cache = Cache::new(capacity, policy, 11);
        let mut cbf = CountingFilter::new(capacity * 4, capacity, 77).unwrap();
        let mut shadow: std::collections::BTreeSet<u64> = std::collections::BTreeSet::new();

        let keys = WorkloadSource::Zipf {
            universe: 4 * capacity,
            skew: 0.8,
            length: 100_000,
            phases: 1,
        }
        .materialize(5)
        .unwrap();

        for (now, &key) in keys.iter().enumerate() {
            let out = cache.put(key, now as u64);
            if let Some(victim) = out.evicted {
                cbf.remove(victim);
                assert!(shadow.remove(&victim), "evicted a key not in the shadow set");
            }
            if out.admitted {
                cbf.insert(key);
                shadow.insert(key);
            }
            assert!(cache.len() <= capacity as usize);
        }

        let resident: std::collections::BTreeSet<u64> = cache.keys().collect();
        assert_eq!(resident, shadow, "{policy:?}: event replay must equal S_t");

        let bits = cbf.compress();
        for &key in &resident {
            assert!(bits.query(key), "{policy:?}: false negative for a resident key");
        }
    }
}

/// Per-segment delivered bits never exceed the token grant, and a dropped
/// advertisement leaves the client filter bit-identical.
#[test]
fn policing_cap_and_drop_atomicity() {
    let m = 4096u64;
    let cap = 10_000u64;
    let mut net = Netlink::new(cap, BitFilter::new(m, 3, 9));
    let mut rng_state = 123456789u64;
    let mut rand = move || {
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        rng_state
    };

    for segment in 0..50 {
        let mut delivered = 0u64;
        for _ in 0..40 {
            let adv = if rand() % 4 == 0 {
                Advertisement::Full(BitFilter::new(m, 3, 9))
            } else {
                let count = (rand() % 80) as usize;
                let mut positions: Vec<u32> =
                    (0..count).map(|_| (rand() % m) as u32).collect();
                positions.sort_unstable();
                positions.dedup();
                Advertisement::Delta { m, positions }
            };
            let before = net.client().clone();
            let cost = adv.bit_cost();
            match net.try_send(&adv) {
                SendOutcome::Delivered(_) => delivered += cost,
                SendOutcome::Dropped => {
                    assert_eq!(net.client(), &before, "drop must not touch the client")
                }
            }
            assert!(net.delivered_bits() <= cap, "segment {segment}");
            assert_eq!(net.delivered_bits(), delivered);
        }
        net.segment_reset();
    }
}

/// The advertisement pipeline must not influence cache behavior: for a
/// fixed scenario and seed, the hit sequence is identical whichever
/// advertiser runs, for both eviction policies.
#[test]
fn advertisement_policy_neutrality_small() {
    for policy in [PolicyKind::Lru, PolicyKind::Hyperbolic] {
        let scenario = Scenario::new(
            512,
            policy,
            WorkloadSource::Zipf {
                universe: 6000,
                skew: 0.9,
                length: 150_000,
                phases: 2,
            },
            31,
        );
        let keys = scenario.workload.materialize(scenario.seed).unwrap();
        let kinds = [
            AdvertiserKind::Cab,
            AdvertiserKind::CacheFirst,
            AdvertiserKind::Oracle,
            AdvertiserKind::Static(Configuration {
                indicator_bits: 1280,
                update_interval: 64,
            }),
            AdvertiserKind::Static(Configuration {
                indicator_bits: 7680,
                update_interval: 10,
            }),
        ];
        let results: Vec<_> = kinds
            .iter()
            .map(|k| run(&scenario, k, &keys, RunOptions::default()).unwrap())
            .collect();
        let reference = results[0].hits_per_segment();
        for (kind, result) in kinds.iter().zip(&results) {
            assert_eq!(
                result.hits_per_segment(),
                reference,
                "{policy:?}/{kind:?}: hit sequence diverged"
            );
            assert_eq!(result.hits, results[0].hits);
        }
    }
}

/// A larger budget lets the controller keep larger, fresher indicators, so
/// the cost must not degrade as the budget grows.
#[test]
fn budget_relaxation_does_not_hurt() {
    let base = Scenario::new(
        2048,
        PolicyKind::Lru,
        WorkloadSource::Zipf {
            universe: 20_000,
            skew: 0.9,
            length: 400_000,
            phases: 1,
        },
        23,
    );
    let keys = base.workload.materialize(base.seed).unwrap();
    let cost_at = |budget: u64| {
        let scenario = Scenario { budget, ..base.clone() };
        run(&scenario, &AdvertiserKind::Cab, &keys, RunOptions::default())
            .unwrap()
            .avg_cost
    };
    let tight = cost_at(10);
    let loose = cost_at(80);
    assert!(
        loose <= tight + 1e-9,
        "cost at B=80 ({loose}) should not exceed cost at B=10 ({tight})"
    );
}

/// A phase boundary must depress the hit ratio in the segment that follows
/// it relative to the segment before it.
#[test]
fn phase_shift_depresses_hit_ratio() {
    let scenario = Scenario::new(
        1024,
        PolicyKind::Lru,
        WorkloadSource::Zipf {
            universe: 50_000,
            skew: 0.9,
            length: 400_000,
            phases: 2,
        },
        13,
    );
    let seg = scenario.segment_length();
    let r = run_scenario_cab(&scenario);
    let boundary = 200_000u64 / seg; // segment containing the phase shift
    let before = &r[boundary as usize - 1];
    let after = &r[boundary as usize + 1];
    assert!(
        after.1 < before.1,
        "hit ratio must drop across the boundary: {before:?} vs {after:?}"
    );
    let _ = before;
}

fn run_scenario_cab(scenario: &Scenario) -> Vec<(u64, f64)> {
    let keys = scenario.workload.materialize(scenario.seed).unwrap();
    let r = run(scenario, &AdvertiserKind::Cab, &keys, RunOptions::default()).unwrap();
    r.segments
        .iter()
        .map(|s| (s.index, s.hit_ratio()))
        .collect()
}

use livecast_core::engine::{Engine, EngineConfig, SongSpec, StartRequest};
use livecast_core::event::{EventKind, LiveEvent};
use livecast_core::loadgen::LoadProfile;
use livecast_core::metrics::{jitter, percentile, LatencyHistogram, RunReport, WallClockInfo};
use livecast_core::persona::bundled_persona;
use livecast_core::reaction::{
    classify, default_rules, Category, CooldownScope, ReactionConfig, ReactionEngine, ReactionOutcome,
};
use proptest::prelude::*;

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..10_000.0f64, 1..300)
}

proptest! {
    #[test]
    fn percentile_is_a_sample_and_monotone(xs in samples(), p in 0.0..=100.0f64, q in 0.0..=100.0f64) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let a = percentile(&xs, lo).unwrap();
        let b = percentile(&xs, hi).unwrap();
        prop_assert!(a <= b);
        prop_assert!(xs.contains(&a));
        let max = xs.iter().copied().fold(f64::MIN, f64::max);
        prop_assert_eq!(percentile(&xs, 100.0).unwrap(), max);
    }

    #[test]
    fn percentile_ignores_order(xs in samples(), p in 0.0..=100.0f64, seed: u64) {
        let mut shuffled = xs.clone();
        let n = shuffled.len();
        // deterministic rotation plus reversal
        shuffled.rotate_left((seed as usize) % n);
        if seed % 2 == 0 {
            shuffled.reverse();
        }
        prop_assert_eq!(percentile(&xs, p).unwrap(), percentile(&shuffled, p).unwrap());
    }

    #[test]
    fn percentile_rank_counts(xs in samples(), p in 1.0..=100.0f64) {
        let v = percentile(&xs, p).unwrap();
        let at_most = xs.iter().filter(|&&x| x <= v).count() as f64;
        let below = xs.iter().filter(|&&x| x < v).count() as f64;
        let need = (p / 100.0 * xs.len() as f64).ceil();
        prop_assert!(at_most >= need);
        prop_assert!(below < need);
    }

    #[test]
    fn histogram_agrees_with_exact_percentile_on_microseconds(
        us in prop::collection::vec(0u32..5_000_000, 1..400),
        p in 0.0..=100.0f64,
    ) {
        let ms: Vec<f64> = us.iter().map(|&u| f64::from(u) / 1000.0).collect();
        let mut h = LatencyHistogram::new();
        ms.iter().for_each(|&x| h.record_ms(x));
        prop_assert_eq!(h.count(), ms.len() as u64);
        prop_assert!((h.percentile_ms(p).unwrap() - percentile(&ms, p).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn jitter_is_absolute_deviation(pairs in prop::collection::vec((0.0..100.0f64, -1.0..1.0f64), 1..100)) {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().map(|(t, d)| (t, t + d)).collect();
        let j = jitter(&pairs);
        let devs: Vec<f64> = pairs.iter().map(|(i, a)| (a - i).abs() * 1000.0).collect();
        prop_assert_eq!(j.count, pairs.len());
        prop_assert_eq!(j.max_ms, percentile(&devs, 100.0).unwrap());
        prop_assert!(j.p25_ms <= j.median_ms && j.median_ms <= j.p75_ms && j.p75_ms <= j.max_ms);
    }
}

#[test]
fn percentile_rejects_bad_input() {
    assert!(percentile(&[], 50.0).is_err());
    assert!(percentile(&[1.0], 101.0).is_err());
    assert!(percentile(&[1.0], f64::NAN).is_err());
}

#[test]
fn histogram_memory_is_bounded_by_distinct_values() {
    let mut h = LatencyHistogram::new();
    for i in 0..1_000_000u64 {
        h.record_ms((i % 2_000) as f64 * 0.5);
    }
    assert_eq!(h.distinct_values(), 2_000);
    assert_eq!(h.summary().p50_ms, 499.5);
}

#[test]
fn first_matching_rule_wins_case_insensitively() {
    let rules = default_rules();
    assert_eq!(classify("这歌是SUNO做的吗", &rules), Some(Category::Technical));
    assert_eq!(classify("主播加油 ai 真厉害", &rules), Some(Category::Technical));
    assert_eq!(classify("主播加油", &rules), Some(Category::Emotional));
    assert_eq!(classify("能定制一首吗", &rules), Some(Category::Cocreation));
    assert_eq!(classify("晚上好", &rules), None);
}

/// Reference cooldown: fires when no fire of the same scope key happened in
/// the last `window` seconds; non-matches never touch state.
fn reference_fired(contents: &[(f64, &str)], scope: CooldownScope, window: f64) -> Vec<Option<Category>> {
    let rules = default_rules();
    let mut last: Vec<(Option<Category>, f64)> = Vec::new();
    contents
        .iter()
        .map(|&(t, c)| {
            let cat = classify(c, &rules)?;
            let key = match scope {
                CooldownScope::Global => None,
                CooldownScope::PerCategory => Some(cat),
            };
            let recent = last.iter().rev().find(|(k, _)| *k == key).map(|&(_, at)| at);
            if recent.is_some_and(|at| t - at < window) {
                return None;
            }
            last.push((key, t));
            Some(cat)
        })
        .collect()
}

const LINES: [&str; 6] = ["怎么写的", "加油", "定制一首", "晚上好", "哈哈", "AI做的?"];

proptest! {
    #[test]
    fn cooldown_matches_reference(
        raw in prop::collection::vec((0.0..300.0f64, 0usize..6), 0..200),
        per_category: bool,
        window in 0.0..60.0f64,
    ) {
        let mut raw = raw;
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let scope = if per_category { CooldownScope::PerCategory } else { CooldownScope::Global };
        let contents: Vec<(f64, &str)> = raw.iter().map(|&(t, i)| (t, LINES[i])).collect();
        let mut engine = ReactionEngine::new(ReactionConfig { scope, window, ..ReactionConfig::default() }).unwrap();
        let got: Vec<Option<Category>> = contents
            .iter()
            .map(|&(t, c)| match engine.maybe_react(&LiveEvent::danmaku(t, "v", c), t) {
                ReactionOutcome::Fired { category, .. } => Some(category),
                _ => None,
            })
            .collect();
        prop_assert_eq!(&got, &reference_fired(&contents, scope, window));
        let c = engine.counters();
        prop_assert_eq!(c.fired_total() + c.suppressed + c.no_match, contents.len() as u64);
    }
}

#[test]
fn gifts_never_react() {
    let mut engine = ReactionEngine::new(ReactionConfig::default()).unwrap();
    let gift = LiveEvent::new(EventKind::Gift, 1.0, "g", "AI 加油");
    assert_eq!(engine.maybe_react(&gift, 1.0), ReactionOutcome::NoMatch);
    assert_eq!(engine.counters().no_match, 0);
}

fn session_report(seed: u64) -> RunReport {
    let cfg = EngineConfig {
        seed,
        ..EngineConfig::default()
    };
    let mut engine = Engine::simulated(cfg, bundled_persona("suwanli").unwrap()).unwrap();
    let profile = LoadProfile {
        duration: 120.0,
        dmk_rate: 30.0,
        storm_probability: 1.0,
        storm_period: 60,
        seed,
        ..LoadProfile::default()
    };
    engine
        .start(StartRequest {
            profile: Some(profile),
            playlist: vec![SongSpec::new("一", 200.0), SongSpec::new("二", 180.0)],
        })
        .unwrap();
    engine.run_until_quiet(2_000.0);
    engine.report(WallClockInfo {
        elapsed_secs: 0.5,
        generated_at: "now".into(),
    })
}

#[test]
fn reports_are_deterministic_modulo_wall_clock() {
    let a = session_report(9);
    let b = session_report(9);
    assert_eq!(a.without_wall_clock().to_json(), b.without_wall_clock().to_json());
    assert_ne!(a.without_wall_clock(), session_report(10).without_wall_clock());
}

#[test]
fn report_round_trips_and_is_consistent() {
    let r = session_report(4);
    let back = RunReport::from_json(&r.to_json()).unwrap();
    assert_eq!(back, r);
    assert_eq!(r.percentile_method, "nearest-rank");
    assert_eq!(r.offered, r.emitted + r.drop_count);
    assert_eq!(r.overlapping_frames, 0);
    assert_eq!(r.duplicate_rate, 0.0);
    assert_eq!(r.segments.songs, 2);
    assert_eq!(r.segments.planned, 8);
    assert_eq!(r.segments.spoken + r.segments.skipped, 8);
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    for key in [
        "overlap_rate",
        "duplicate_rate",
        "drop_count",
        "latency_by_kind",
        "jitter",
        "segments",
        "config",
    ] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

mod common;

use std::collections::HashMap;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use navmatrix::classify::{classify, classify_course, ClassifierConfig, FiredRule, PatternKind};
use navmatrix::ingest::{
    filter_courses, parse_event_log, remove_self_loops, write_event_log, Event, FilterConfig,
    FormatDescriptor,
};
use navmatrix::matrix::{
    build_matrix, cross_course_matrix, normalize, ordinal_labels, TransitionMatrix,
};
use navmatrix::metrics::{
    compute_metrics, diagonal_strength, matrix_entropy, DominantSection, MetricConfig, MetricVector,
};
use navmatrix::render::{render_heatmap, HeatmapStyle, Rgb};
use navmatrix::synth::{generate, SynthSpec};
use proptest::prelude::*;

fn base() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 1, 15)
        .unwrap()
        .and_hms_opt(10, 0, 0)
        .unwrap()
}

fn event(course: u8, user: u8, section: u32, second: i64) -> Event {
    Event {
        timestamp: base() + Duration::seconds(second),
        course_id: format!("c{course}"),
        course_name: format!("Course {course}"),
        section_index: section,
        section_name: Some(format!("S{section}")),
        user_id: format!("u{user}"),
    }
}

/// Micro logs: few courses, users and sections, many timestamp ties.
fn micro_log(max_events: usize) -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((0u8..3, 0u8..4, 1u32..=5, 0i64..30), 0..=max_events).prop_map(|raw| {
        raw.into_iter()
            .map(|(c, u, s, t)| event(c, u, s, t))
            .collect()
    })
}

/// A count matrix with a zero diagonal.
fn count_matrix() -> impl Strategy<Value = TransitionMatrix> {
    (2usize..=7)
        .prop_flat_map(|n| prop::collection::vec(0u64..60, n * n).prop_map(move |v| (n, v)))
        .prop_filter_map("needs a transition", |(n, v)| {
            let rows: Vec<Vec<u64>> = (0..n)
                .map(|s| {
                    (0..n)
                        .map(|d| if s == d { 0 } else { v[s * n + d] })
                        .collect()
                })
                .collect();
            let m = TransitionMatrix::from_rows(None, ordinal_labels(n), &rows).unwrap();
            (!m.is_empty()).then_some(m)
        })
}

fn metric_vector() -> impl Strategy<Value = MetricVector> {
    (
        0.0..=1.0f64,
        0.0..=1.0f64,
        0.0..=1.0f64,
        prop::option::of((1usize..=10, 0.3..=1.0f64)),
        0.0..=1.0f64,
    )
        .prop_map(|(main, prev, blended, dominant, entropy)| MetricVector {
            main_diag_strength: main,
            prev_diag_strength: prev,
            blended_score: blended,
            dominant_section: dominant.map(|(ordinal, share)| DominantSection { ordinal, share }),
            entropy_norm: entropy,
            total_main_diagonals: main + prev,
        })
}

fn stable_sorted(events: &[Event], course: &str, user: &str) -> Vec<Event> {
    let mut mine: Vec<Event> = events
        .iter()
        .filter(|e| e.course_id == course && e.user_id == user)
        .cloned()
        .collect();
    mine.sort_by_key(|e| e.timestamp);
    mine
}

fn is_subsequence(short: &[Event], long: &[Event]) -> bool {
    let mut it = long.iter();
    short.iter().all(|e| it.any(|x| x == e))
}

fn multiset(events: &[Event]) -> HashMap<&Event, usize> {
    let mut m = HashMap::new();
    for e in events {
        *m.entry(e).or_default() += 1;
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn self_loop_removal_is_idempotent(events in micro_log(60)) {
        let once = remove_self_loops(events);
        let flat: Vec<Event> = once.iter().flat_map(|l| l.events().cloned()).collect();
        let twice = remove_self_loops(flat);
        prop_assert_eq!(
            once.iter().map(|l| &l.students).collect::<Vec<_>>(),
            twice.iter().map(|l| &l.students).collect::<Vec<_>>()
        );
    }

    #[test]
    fn self_loop_removal_keeps_order_and_fields(events in micro_log(60)) {
        for log in remove_self_loops(events.clone()) {
            for s in &log.students {
                let sorted = stable_sorted(&events, &log.course_id, &s.user_id);
                prop_assert!(is_subsequence(&s.events, &sorted));
                prop_assert_eq!(s.events.first(), sorted.first());
                for w in s.events.windows(2) {
                    prop_assert_ne!(w[0].section_index, w[1].section_index);
                }
            }
        }
    }

    #[test]
    fn filter_returns_sub_multiset(events in micro_log(80), min in 0usize..40) {
        let cfg = FilterConfig { min_events_per_course: min, ..FilterConfig::default() };
        let kept = filter_courses(events.clone(), &cfg);
        let (all, sub) = (multiset(&events), multiset(&kept));
        for (e, n) in &sub {
            prop_assert!(all.get(e).copied().unwrap_or(0) >= *n);
        }
        let per_course = |evs: &[Event], c: &str| evs.iter().filter(|e| e.course_id == c).count();
        for e in &kept {
            prop_assert!(per_course(&events, &e.course_id) >= min);
            prop_assert_eq!(per_course(&kept, &e.course_id), per_course(&events, &e.course_id));
        }
    }

    #[test]
    fn write_then_parse_round_trips(
        rows in prop::collection::vec(
            (
                "[A-Za-z0-9]([A-Za-z0-9 ,;\"']{0,10}[A-Za-z0-9])?",
                prop::option::of("[A-Za-z]([A-Za-z0-9 ,\"]{0,10}[A-Za-z0-9])?"),
                1u32..50,
                "[a-z0-9]{1,6}",
                0i64..10_000_000,
                0u32..1000,
            ),
            0..30,
        )
    ) {
        let events: Vec<Event> = rows
            .into_iter()
            .map(|(name, section_name, section, user, sec, ms)| Event {
                timestamp: base() + Duration::seconds(sec) + Duration::milliseconds(i64::from(ms)),
                course_id: format!("id-{}", section % 7),
                course_name: name,
                section_index: section,
                section_name,
                user_id: user,
            })
            .collect();
        let mut buf = Vec::new();
        write_event_log(&events, &mut buf).unwrap();
        let parsed = parse_event_log(buf.as_slice(), FormatDescriptor::strict()).unwrap();
        prop_assert!(parsed.skipped.is_empty());
        prop_assert_eq!(parsed.events, events);
    }

    #[test]
    fn matrix_matches_pair_oracle(events in micro_log(20)) {
        let oracle = common::pair_counts(&events);
        for log in remove_self_loops(events) {
            let expected_total: u64 = log.students.iter().map(|s| s.events.len() as u64 - 1).sum();
            match build_matrix(&log) {
                Ok(m) => {
                    prop_assert_eq!(m.total_transitions(), expected_total);
                    prop_assert_eq!(m.to_rows(), common::dense(&oracle, &log.course_id, m.n_sections));
                }
                Err(_) => prop_assert_eq!(expected_total, 0),
            }
        }
    }

    #[test]
    fn matrix_ignores_student_order(events in micro_log(50), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        // distinct timestamps so only grouping order varies
        let events: Vec<Event> = events
            .into_iter()
            .enumerate()
            .map(|(i, mut e)| { e.timestamp += Duration::milliseconds(i as i64); e })
            .collect();
        let mut shuffled = events.clone();
        shuffled.shuffle(&mut common::rng(seed));
        let a: Vec<_> = remove_self_loops(events).iter().map(build_matrix).map(Result::ok).collect();
        let b: Vec<_> = remove_self_loops(shuffled).iter().map(build_matrix).map(Result::ok).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn normalize_ignores_scaling(m in count_matrix(), k in 1u64..50) {
        prop_assert_eq!(normalize(&m.scaled(k)), normalize(&m));
    }

    #[test]
    fn singleton_cross_course_is_cropped_course(events in micro_log(60), limit in 1usize..6) {
        let cfg = FilterConfig { max_sections_cross_course: limit, ..FilterConfig::default() };
        for log in remove_self_loops(events) {
            let Ok(m) = build_matrix(&log) else { continue };
            let cross = cross_course_matrix(std::slice::from_ref(&log), &cfg);
            prop_assert_eq!(cross, m.cropped(limit).with_id(None));
        }
    }

    #[test]
    fn metrics_match_oracle_from_raw_log(events in micro_log(50)) {
        let oracle = common::pair_counts(&events);
        for log in remove_self_loops(events) {
            let Ok(m) = build_matrix(&log) else { continue };
            let v = compute_metrics(&m, &normalize(&m), &MetricConfig::default()).unwrap();
            let o = common::metrics(&common::dense(&oracle, &log.course_id, m.n_sections));
            prop_assert_eq!(v.main_diag_strength, o.main);
            prop_assert_eq!(v.prev_diag_strength, o.prev);
            prop_assert_eq!(v.blended_score, o.blended);
            prop_assert_eq!(v.total_main_diagonals, o.main + o.prev);
            prop_assert_eq!(v.dominant_section.map(|d| (d.ordinal, d.share)), o.dominant);
            prop_assert!((v.entropy_norm - o.entropy).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_ignore_scaling(m in count_matrix(), k in 2u64..20) {
        let cfg = MetricConfig::default();
        let a = compute_metrics(&m, &normalize(&m), &cfg).unwrap();
        let s = m.scaled(k);
        let b = compute_metrics(&s, &normalize(&s), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn strength_monotone_in_diagonal_cells(
        m in count_matrix(),
        pick in any::<prop::sample::Index>(),
        d in prop::sample::select(vec![1isize, -1, 2]),
        extra in 1u64..100,
    ) {
        let n = m.n_sections as isize;
        prop_assume!(d < n);
        let cfg = MetricConfig::default();
        let cells: Vec<(usize, usize)> = (1..=n)
            .filter_map(|s| { let t = s + d; (1..=n).contains(&t).then_some((s as usize, t as usize)) })
            .collect();
        let (s, t) = cells[pick.index(cells.len())];
        let mut rows = m.to_rows();
        rows[s - 1][t - 1] += extra;
        let bumped = TransitionMatrix::from_rows(None, m.labels.clone(), &rows).unwrap();
        let before = diagonal_strength(&normalize(&m), d, &cfg).unwrap();
        let after = diagonal_strength(&normalize(&bumped), d, &cfg).unwrap();
        prop_assert!(after >= before);
    }

    #[test]
    fn strength_non_increasing_in_threshold(m in count_matrix(), lo in 1.0..99.0f64, gap in 0.0..50.0f64) {
        let p = normalize(&m);
        let hi = (lo + gap).min(99.9);
        for d in [1isize, -1] {
            let a = diagonal_strength(&p, d, &MetricConfig { meaningful_threshold: lo, ..MetricConfig::default() }).unwrap();
            let b = diagonal_strength(&p, d, &MetricConfig { meaningful_threshold: hi, ..MetricConfig::default() }).unwrap();
            prop_assert!(b <= a);
        }
    }

    #[test]
    fn entropy_bounded_and_zero_only_for_one_cell(m in count_matrix()) {
        let h = matrix_entropy(&m).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        let occupied = m.to_rows().iter().flatten().filter(|&&c| c > 0).count();
        prop_assert_eq!(h == 0.0, occupied == 1);
    }

    #[test]
    fn relabeling_keeps_entropy_and_dominant_share(m in count_matrix(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let n = m.n_sections;
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut common::rng(seed));
        let rows = m.to_rows();
        let mut moved = vec![vec![0u64; n]; n];
        for s in 0..n {
            for d in 0..n {
                moved[perm[s]][perm[d]] = rows[s][d];
            }
        }
        let pm = TransitionMatrix::from_rows(None, ordinal_labels(n), &moved).unwrap();
        let cfg = MetricConfig::default();
        let a = compute_metrics(&m, &normalize(&m), &cfg).unwrap();
        let b = compute_metrics(&pm, &normalize(&pm), &cfg).unwrap();
        prop_assert!((a.entropy_norm - b.entropy_norm).abs() < 1e-12);
        prop_assert_eq!(a.dominant_section.map(|d| d.share), b.dominant_section.map(|d| d.share));
        // the argmax may move to a tied column; its incoming count must match
        if let (Some(da), Some(db)) = (&a.dominant_section, &b.dominant_section) {
            prop_assert_eq!(m.column_sum(da.ordinal), pm.column_sum(db.ordinal));
            prop_assert_eq!(pm.column_sum(perm[da.ordinal - 1] + 1), pm.column_sum(db.ordinal));
        }
    }

    #[test]
    fn classifier_is_total_and_deterministic(v in metric_vector(), swap in any::<bool>()) {
        let cfg = ClassifierConfig { blended_before_combination: swap, ..ClassifierConfig::default() };
        let a = classify(&v, &cfg).unwrap();
        let b = classify(&v, &cfg).unwrap();
        prop_assert_eq!(a.fired_rule.class(), a.class);
        prop_assert_eq!(&a, &b);
    }

    #[test]
    fn high_blended_wins_below_earlier_rules(v in metric_vector(), blended in 0.3..=1.0f64) {
        let cfg = ClassifierConfig::default();
        let mut v = v;
        v.entropy_norm = v.entropy_norm.min(cfg.entropy_high);
        if v.dominant_section.is_some() && v.total_main_diagonals > cfg.total_main_high {
            v.dominant_section = None;
        }
        v.blended_score = blended;
        let c = classify(&v, &cfg).unwrap();
        prop_assert_eq!(c.class, PatternKind::Blended);
        prop_assert_eq!(c.fired_rule, FiredRule::Blended);
    }

    #[test]
    fn duplicating_students_keeps_class(events in micro_log(50), k in 2usize..5) {
        let cfg = (MetricConfig::default(), ClassifierConfig::default());
        for log in remove_self_loops(events) {
            let Ok(original) = classify_course(&log, &cfg.0, &cfg.1) else { continue };
            let copies: Vec<Event> = (0..k)
                .flat_map(|i| log.events().cloned().map(move |mut e| { e.user_id = format!("{}#{i}", e.user_id); e }))
                .collect();
            let dup = remove_self_loops(copies).remove(0);
            prop_assert_eq!(build_matrix(&dup).unwrap().to_rows(), build_matrix(&log).unwrap().scaled(k as u64).to_rows());
            let again = classify_course(&dup, &cfg.0, &cfg.1).unwrap();
            prop_assert_eq!(again.class, original.class);
            prop_assert_eq!(again.fired_rule, original.fired_rule);
        }
    }

    #[test]
    fn colors_darken_with_value(a in 0.0..=100.0f64, b in 0.0..=100.0f64) {
        let style = HeatmapStyle::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (x, y) = (style.color(lo), style.color(hi));
        prop_assert!(x.0 >= y.0 && x.1 >= y.1 && x.2 >= y.2);
    }

    #[test]
    fn svg_is_deterministic_with_one_rect_per_cell(m in count_matrix(), show in any::<bool>()) {
        let style = HeatmapStyle { show_values: show, ..HeatmapStyle::default() };
        let p = normalize(&m);
        let draw = || { let mut b = Vec::new(); render_heatmap(&p, &m.labels, &style, None, &mut b).unwrap(); b };
        let (first, second) = (draw(), draw());
        prop_assert_eq!(&first, &second);
        let text = String::from_utf8(first).unwrap();
        prop_assert_eq!(text.matches("class=\"cell\"").count(), m.n_sections * m.n_sections);
        for s in 1..=m.n_sections {
            for d in 1..=m.n_sections {
                let needle = format!("data-src=\"{s}\" data-dst=\"{d}\"");
                prop_assert_eq!(text.matches(&needle).count(), 1);
            }
        }
    }
}

#[test]
fn diagonal_strengths_are_not_relabeling_invariant() {
    // swapping labels 2 and 3 turns the chain 1->2->3->4 into 1->3->2->4
    let chain = TransitionMatrix::from_rows(
        None,
        ordinal_labels(4),
        &[
            vec![0, 9, 0, 0],
            vec![0, 0, 9, 0],
            vec![0, 0, 0, 9],
            vec![0, 0, 0, 0],
        ],
    )
    .unwrap();
    let relabeled = TransitionMatrix::from_rows(
        None,
        ordinal_labels(4),
        &[
            vec![0, 0, 9, 0],
            vec![0, 0, 0, 9],
            vec![0, 9, 0, 0],
            vec![0, 0, 0, 0],
        ],
    )
    .unwrap();
    let cfg = MetricConfig::default();
    let a = compute_metrics(&chain, &normalize(&chain), &cfg).unwrap();
    let b = compute_metrics(&relabeled, &normalize(&relabeled), &cfg).unwrap();
    assert_eq!(a.entropy_norm, b.entropy_norm);
    assert_eq!(a.main_diag_strength, 1.0);
    assert_eq!(b.main_diag_strength, 0.0);
    assert!((b.prev_diag_strength - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn synthetic_ground_truth_sweep() {
    let (mc, cc) = (MetricConfig::default(), ClassifierConfig::default());
    for pattern in PatternKind::ALL {
        for seed in 1..=100 {
            let log =
                remove_self_loops(generate(&SynthSpec::new(pattern, seed)).unwrap()).remove(0);
            let class = classify_course(&log, &mc, &cc).unwrap();
            assert_eq!(class.class, pattern, "seed {seed}: {:?}", class.evidence);
        }
    }
}

#[test]
fn synthetic_timestamps_strictly_increase() {
    for pattern in PatternKind::ALL {
        let events = generate(&SynthSpec::new(pattern, 11).with_noise(0.3)).unwrap();
        let mut last: HashMap<&str, NaiveDateTime> = HashMap::new();
        for e in &events {
            if let Some(prev) = last.insert(&e.user_id, e.timestamp) {
                assert!(
                    prev < e.timestamp,
                    "{pattern}: {} not after {}",
                    e.timestamp,
                    prev
                );
            }
        }
    }
}

#[test]
fn noise_raises_mean_entropy() {
    let cfg = MetricConfig::default();
    for pattern in PatternKind::ALL {
        let mean: Vec<f64> = [0.0, 0.2, 0.5, 1.0]
            .iter()
            .map(|&noise| {
                let total: f64 = (1..=50)
                    .map(|seed| {
                        let log = remove_self_loops(
                            generate(&SynthSpec::new(pattern, seed).with_noise(noise)).unwrap(),
                        )
                        .remove(0);
                        let m = build_matrix(&log).unwrap();
                        compute_metrics(&m, &normalize(&m), &cfg)
                            .unwrap()
                            .entropy_norm
                    })
                    .sum();
                total / 50.0
            })
            .collect();
        for w in mean.windows(2) {
            assert!(w[1] >= w[0], "{pattern}: mean entropy {mean:?}");
        }
    }
}

#[test]
fn color_endpoints() {
    let style = HeatmapStyle::default();
    assert_eq!(style.color(0.0), Rgb::WHITE);
    assert_eq!(style.color(100.0), Rgb(8, 48, 107));
}

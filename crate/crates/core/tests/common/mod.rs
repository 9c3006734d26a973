//! Reference implementations written directly from the definitions, kept
//! deliberately naive so they share no code with the library.

#![allow(dead_code, clippy::needless_range_loop, clippy::type_complexity)]

use std::collections::HashMap;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use navmatrix::ingest::Event;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counts `(course, src, dst) -> n` over consecutive events of each student
/// whose sections differ, straight from the raw log.
pub fn pair_counts(events: &[Event]) -> HashMap<(String, u32, u32), u64> {
    let mut per_student: HashMap<(String, String), Vec<(NaiveDateTime, usize, u32)>> =
        HashMap::new();
    for (i, e) in events.iter().enumerate() {
        per_student
            .entry((e.course_id.clone(), e.user_id.clone()))
            .or_default()
            .push((e.timestamp, i, e.section_index));
    }
    let mut out = HashMap::new();
    for ((course, _), mut seq) in per_student {
        seq.sort();
        for w in seq.windows(2) {
            if w[0].2 != w[1].2 {
                *out.entry((course.clone(), w[0].2, w[1].2)).or_insert(0) += 1;
            }
        }
    }
    out
}

/// Dense `rows[src-1][dst-1]` counts for one course from [`pair_counts`].
pub fn dense(counts: &HashMap<(String, u32, u32), u64>, course: &str, n: usize) -> Vec<Vec<u64>> {
    let mut rows = vec![vec![0u64; n]; n];
    for ((c, s, d), k) in counts {
        if c == course {
            rows[*s as usize - 1][*d as usize - 1] += k;
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMetrics {
    pub main: f64,
    pub prev: f64,
    pub blended: f64,
    pub dominant: Option<(usize, f64)>,
    pub entropy: f64,
}

/// The six metrics evaluated by brute force over all cells.
pub fn metrics(rows: &[Vec<u64>]) -> OracleMetrics {
    let n = rows.len();
    let pct = |s: usize, d: usize| -> f64 {
        let total: u64 = rows[s].iter().sum();
        if total == 0 {
            0.0
        } else {
            rows[s][d] as f64 * 100.0 / total as f64
        }
    };
    let strength = |disp: i64| -> f64 {
        let mut cells = 0;
        let mut strong = 0;
        for s in 0..n {
            for d in 0..n {
                if d as i64 - s as i64 == disp {
                    cells += 1;
                    if pct(s, d) > 30.0 {
                        strong += 1;
                    }
                }
            }
        }
        if cells == 0 {
            0.0
        } else {
            strong as f64 / cells as f64
        }
    };
    let total: u64 = rows.iter().flatten().sum();
    let mut dominant = None;
    let mut best = 0u64;
    for d in 0..n {
        let incoming: u64 = (0..n).map(|s| rows[s][d]).sum();
        if incoming > best {
            best = incoming;
            dominant = Some(d + 1);
        }
    }
    let dominant = dominant
        .map(|d| (d, best as f64 / total as f64))
        .filter(|&(_, share)| share >= 0.30);
    let mut h = 0.0;
    for s in 0..n {
        for d in 0..n {
            if s != d && rows[s][d] > 0 {
                let p = rows[s][d] as f64 / total as f64;
                h -= p * p.log2();
            }
        }
    }
    let entropy = if n < 2 {
        0.0
    } else {
        (h / ((n * (n - 1)) as f64).log2()).clamp(0.0, 1.0)
    };
    OracleMetrics {
        main: if n < 2 { 0.0 } else { strength(1) },
        prev: if n < 2 { 0.0 } else { strength(-1) },
        blended: if n < 3 { 0.0 } else { strength(2) },
        dominant,
        entropy,
    }
}

/// A small random log: up to `max_sections` sections, `n_events` events
/// spread over a few courses and students, timestamps with frequent ties.
pub fn random_log(rng: &mut ChaCha8Rng, max_sections: u32, n_events: usize) -> Vec<Event> {
    let base = NaiveDate::from_ymd_opt(2023, 10, 2)
        .unwrap()
        .and_hms_opt(9, 0, 0)
        .unwrap();
    let courses = rng.random_range(1..=3);
    let students = rng.random_range(1..=4);
    (0..n_events)
        .map(|_| {
            let course = rng.random_range(0..courses);
            let section = rng.random_range(1..=max_sections);
            Event {
                timestamp: base + Duration::seconds(rng.random_range(0..40)),
                course_id: format!("c{course}"),
                course_name: format!("Course {course}"),
                section_index: section,
                section_name: Some(format!("S{section}")),
                user_id: format!("s{}", rng.random_range(0..students)),
            }
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mean over all sources of the percentage at displacement `d`, with
/// sources that have no such cell counting as 0.
pub fn diagonal_share(p: &navmatrix::matrix::PercentMatrix, d: i64) -> f64 {
    let n = p.n_sections as i64;
    let mut sum = 0.0;
    for s in 1..=n {
        let t = s + d;
        if (1..=n).contains(&t) {
            sum += p.get(s as usize, t as usize);
        }
    }
    sum / n as f64
}

//! Section transition matrices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CourseLog, FilterConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("course {course_id} has no transitions")]
    Empty { course_id: String },
    #[error("invalid matrix document: {0}")]
    Invalid(String),
}

/// Counts of observed transitions, `counts[src][dst]` stored row-major with
/// 0-based indices (ordinal `k` lives at index `k - 1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    /// `None` for the cross-course aggregate.
    pub course_id: Option<String>,
    pub n_sections: usize,
    pub labels: Vec<String>,
    counts: Vec<u64>,
    total: u64,
}

impl TransitionMatrix {
    pub fn zeros(course_id: Option<String>, n_sections: usize, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), n_sections, "one label per section");
        TransitionMatrix {
            course_id,
            n_sections,
            labels,
            counts: vec![0; n_sections * n_sections],
            total: 0,
        }
    }

    /// Builds a matrix from nested rows. Diagonal cells must be zero.
    pub fn from_rows(
        course_id: Option<String>,
        labels: Vec<String>,
        rows: &[Vec<u64>],
    ) -> Result<Self, MatrixError> {
        let n = rows.len();
        if labels.len() != n {
            return Err(MatrixError::Invalid(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        let mut m = TransitionMatrix::zeros(course_id, n, labels);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(MatrixError::Invalid(format!(
                    "row {} has {} cells, expected {n}",
                    s + 1,
                    row.len()
                )));
            }
            for (d, &c) in row.iter().enumerate() {
                if s == d && c != 0 {
                    return Err(MatrixError::Invalid(format!(
                        "self-transition count on section {}",
                        s + 1
                    )));
                }
                m.counts[s * n + d] = c;
                m.total += c;
            }
        }
        Ok(m)
    }

    /// Count for 1-based ordinals.
    pub fn count(&self, src: usize, dst: usize) -> u64 {
        self.counts[(src - 1) * self.n_sections + (dst - 1)]
    }

    pub fn total_transitions(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Row `ordinal` as a slice indexed by destination - 1.
    pub fn row(&self, ordinal: usize) -> &[u64] {
        let n = self.n_sections;
        &self.counts[(ordinal - 1) * n..ordinal * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> + '_ {
        self.counts
            .chunks(self.n_sections.max(1))
            .take(self.n_sections)
    }

    pub fn row_sum(&self, ordinal: usize) -> u64 {
        self.row(ordinal).iter().sum()
    }

    /// Incoming transitions of `ordinal`.
    pub fn column_sum(&self, ordinal: usize) -> u64 {
        (1..=self.n_sections).map(|s| self.count(s, ordinal)).sum()
    }

    /// Adds one observed transition; self-loops are ignored.
    pub fn record(&mut self, src: u32, dst: u32) {
        if src == dst {
            return;
        }
        let (s, d) = (src as usize - 1, dst as usize - 1);
        self.counts[s * self.n_sections + d] += 1;
        self.total += 1;
    }

    /// Adds another matrix of the same shape cell by cell.
    pub fn merge(&mut self, other: &TransitionMatrix) {
        assert_eq!(self.n_sections, other.n_sections, "shape mismatch");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    /// Every count multiplied by `k`.
    pub fn scaled(&self, k: u64) -> TransitionMatrix {
        let mut m = self.clone();
        m.counts.iter_mut().for_each(|c| *c *= k);
        m.total *= k;
        m
    }

    /// The top-left `limit` x `limit` block, zero-padded when the matrix is
    /// smaller. Labels become plain ordinals.
    pub fn cropped(&self, limit: usize) -> TransitionMatrix {
        let mut m = TransitionMatrix::zeros(self.course_id.clone(), limit, ordinal_labels(limit));
        let keep = limit.min(self.n_sections);
        for s in 0..keep {
            for d in 0..keep {
                let c = self.counts[s * self.n_sections + d];
                m.counts[s * limit + d] = c;
                m.total += c;
            }
        }
        m
    }

    pub fn with_id(mut self, course_id: Option<String>) -> Self {
        self.course_id = course_id;
        self
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.rows().map(<[u64]>::to_vec).collect()
    }
}

pub fn ordinal_labels(n: usize) -> Vec<String> {
    (1..=n).map(|k| k.to_string()).collect()
}

pub fn fallback_label(ordinal: usize) -> String {
    format!("Section {ordinal}")
}

fn count_course(log: &CourseLog) -> TransitionMatrix {
    let n = log.max_section as usize;
    let labels = log
        .section_labels()
        .into_iter()
        .enumerate()
        .map(|(i, name)| name.unwrap_or_else(|| fallback_label(i + 1)))
        .collect();
    let mut m = TransitionMatrix::zeros(Some(log.course_id.clone()), n, labels);
    for student in &log.students {
        for pair in student.events.windows(2) {
            m.record(pair[0].section_index, pair[1].section_index);
        }
    }
    m
}

/// Counts each student's adjacent event pairs. The time between the two
/// events plays no role. The dimension is the highest ordinal in the course.
pub fn build_matrix(log: &CourseLog) -> Result<TransitionMatrix, MatrixError> {
    let m = count_course(log);
    if m.is_empty() {
        return Err(MatrixError::Empty {
            course_id: log.course_id.clone(),
        });
    }
    Ok(m)
}

/// Row-normalized percentages: each non-empty source row sums to 100.
#[derive(Debug, Clone, PartialEq)]
pub struct PercentMatrix {
    pub n_sections: usize,
    cells: Vec<f64>,
    /// Ordinals of sources without outgoing transitions.
    pub zero_rows: Vec<usize>,
}

pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

impl PercentMatrix {
    pub fn zeros(n_sections: usize) -> Self {
        PercentMatrix {
            n_sections,
            cells: vec![0.0; n_sections * n_sections],
            zero_rows: (1..=n_sections).collect(),
        }
    }

    /// Value for 1-based ordinals.
    pub fn get(&self, src: usize, dst: usize) -> f64 {
        self.cells[(src - 1) * self.n_sections + (dst - 1)]
    }

    pub fn row(&self, ordinal: usize) -> &[f64] {
        let n = self.n_sections;
        &self.cells[(ordinal - 1) * n..ordinal * n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (1..=self.n_sections)
            .map(|s| self.row(s).to_vec())
            .collect()
    }

    /// Accepts externally supplied rows after checking the row invariant.
    pub fn from_rows(rows: &[Vec<f64>], zero_rows: &[usize]) -> Result<Self, MatrixError> {
        let n = rows.len();
        let mut cells = Vec::with_capacity(n * n);
        let mut found_zero = Vec::new();
        for (s, row) in rows.iter().enumerate() {
            let ordinal = s + 1;
            if row.len() != n {
                return Err(MatrixError::Invalid(format!(
                    "percent row {ordinal} has {} cells, expected {n}",
                    row.len()
                )));
            }
            if let Some(bad) = row
                .iter()
                .find(|v| !v.is_finite() || **v < 0.0 || **v > 100.0)
            {
                return Err(MatrixError::Invalid(format!(
                    "percent row {ordinal} has value {bad} outside [0, 100]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().all(|v| *v == 0.0) {
                found_zero.push(ordinal);
            } else if (sum - 100.0).abs() > ROW_SUM_TOLERANCE {
                return Err(MatrixError::Invalid(format!(
                    "percent row {ordinal} sums to {sum}, expected 100"
                )));
            }
            cells.extend_from_slice(row);
        }
        let mut declared = zero_rows.to_vec();
        declared.sort_unstable();
        declared.dedup();
        if declared != found_zero {
            return Err(MatrixError::Invalid(format!(
                "zero_rows {declared:?} do not match all-zero rows {found_zero:?}"
            )));
        }
        Ok(PercentMatrix {
            n_sections: n,
            cells,
            zero_rows: found_zero,
        })
    }
}

/// `cell[s][d] = 100 * counts[s][d] / rowsum(s)`; rows without outgoing
/// transitions stay all-zero and are listed in `zero_rows`.
pub fn normalize(m: &TransitionMatrix) -> PercentMatrix {
    let n = m.n_sections;
    let mut cells = vec![0.0; n * n];
    let mut zero_rows = Vec::new();
    for (s, row) in m.rows().enumerate() {
        let sum: u64 = row.iter().sum();
        if sum == 0 {
            zero_rows.push(s + 1);
            continue;
        }
        let sum = sum as f64;
        for (d, &c) in row.iter().enumerate() {
            cells[s * n + d] = 100.0 * c as f64 / sum;
        }
    }
    PercentMatrix {
        n_sections: n,
        cells,
        zero_rows,
    }
}

/// How per-course matrices are combined into the cross-course view.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossCourseMode {
    /// Sum raw counts over all courses, normalize once.
    #[default]
    Aggregate,
    /// Normalize each course, then average each source row over the courses
    /// in which that source has outgoing transitions.
    Average,
}

/// Cross-course counts over ordinals `1..=max_sections_cross_course`. A
/// transition counts only when both endpoints are within the limit.
pub fn cross_course_matrix(logs: &[CourseLog], cfg: &FilterConfig) -> TransitionMatrix {
    let limit = cfg.max_sections_cross_course;
    let mut m = TransitionMatrix::zeros(None, limit, ordinal_labels(limit));
    let inside = |k: u32| (k as usize) <= limit;
    for log in logs {
        for student in &log.students {
            for pair in student.events.windows(2) {
                let (src, dst) = (pair[0].section_index, pair[1].section_index);
                if inside(src) && inside(dst) {
                    m.record(src, dst);
                }
            }
        }
    }
    m
}

/// Percent view of the cross-course matrix under `mode`.
pub fn cross_course_percent(
    logs: &[CourseLog],
    cfg: &FilterConfig,
    mode: CrossCourseMode,
) -> PercentMatrix {
    match mode {
        CrossCourseMode::Aggregate => normalize(&cross_course_matrix(logs, cfg)),
        CrossCourseMode::Average => {
            let limit = cfg.max_sections_cross_course;
            let mut sums = vec![0.0; limit * limit];
            let mut contributors = vec![0usize; limit];
            for log in logs {
                let single = cross_course_matrix(std::slice::from_ref(log), cfg);
                let p = normalize(&single);
                for s in 1..=limit {
                    if p.zero_rows.binary_search(&s).is_ok() {
                        continue;
                    }
                    contributors[s - 1] += 1;
                    for (acc, v) in sums[(s - 1) * limit..s * limit].iter_mut().zip(p.row(s)) {
                        *acc += v;
                    }
                }
            }
            let mut zero_rows = Vec::new();
            for (s, &n) in contributors.iter().enumerate() {
                let row = &mut sums[s * limit..(s + 1) * limit];
                if n == 0 {
                    zero_rows.push(s + 1);
                } else {
                    row.iter_mut().for_each(|v| *v /= n as f64);
                }
            }
            PercentMatrix {
                n_sections: limit,
                cells: sums,
                zero_rows,
            }
        }
    }
}

/// On-disk form of a matrix: counts are exact integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDocument {
    pub course_id: Option<String>,
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percent: Option<Vec<Vec<f64>>>,
    pub zero_rows: Vec<usize>,
}

impl MatrixDocument {
    pub fn new(m: &TransitionMatrix, p: &PercentMatrix) -> Self {
        MatrixDocument {
            course_id: m.course_id.clone(),
            labels: m.labels.clone(),
            counts: m.to_rows(),
            percent: Some(p.to_rows()),
            zero_rows: p.zero_rows.clone(),
        }
    }

    /// Validates the document and returns both views. Stored percentages are
    /// used as-is; they are derived from the counts only when absent.
    pub fn into_matrices(self) -> Result<(TransitionMatrix, PercentMatrix), MatrixError> {
        let m = TransitionMatrix::from_rows(self.course_id, self.labels, &self.counts)?;
        let p = match &self.percent {
            Some(rows) => {
                if rows.len() != m.n_sections {
                    return Err(MatrixError::Invalid(format!(
                        "{} percent rows for {} sections",
                        rows.len(),
                        m.n_sections
                    )));
                }
                PercentMatrix::from_rows(rows, &self.zero_rows)?
            }
            None => {
                let p = normalize(&m);
                if p.zero_rows != self.zero_rows {
                    return Err(MatrixError::Invalid(format!(
                        "zero_rows {:?} do not match counts {:?}",
                        self.zero_rows, p.zero_rows
                    )));
                }
                p
            }
        };
        Ok((m, p))
    }
}

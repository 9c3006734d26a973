//! The six per-course classification metrics.
//!
//! Diagonals are addressed by displacement `destination - source`:
//!
//! * `+1` main (forward) diagonal: moving on to the next section,
//! * `-1` previous diagonal: going back one section,
//! * `+2` blended diagonal: skipping one section.
//!
//! In the rendered heatmap rows are destinations, so these diagonals sit at
//! the opposite sign of offset there.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{PercentMatrix, TransitionMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("displacement {displacement} out of range for {n_sections} sections")]
    Displacement {
        displacement: isize,
        n_sections: usize,
    },
    #[error("matrix has no transitions")]
    EmptyMatrix,
    #[error("count and percent matrices disagree on shape ({counts} vs {percent})")]
    ShapeMismatch { counts: usize, percent: usize },
    #[error("invalid metric configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// A cell is meaningful when strictly above this percentage.
    pub meaningful_threshold: f64,
    /// Minimum incoming share for a dominant section to be reported.
    pub dominant_share_threshold: f64,
    /// The normalized entropy does not depend on the base; kept so reports
    /// can state which base was used.
    pub entropy_log_base: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            meaningful_threshold: 30.0,
            dominant_share_threshold: 0.30,
            entropy_log_base: 2.0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.meaningful_threshold > 0.0 && self.meaningful_threshold < 100.0) {
            return Err(MetricsError::Config(format!(
                "meaningful_threshold must be in (0, 100), got {}",
                self.meaningful_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.dominant_share_threshold) {
            return Err(MetricsError::Config(format!(
                "dominant_share_threshold must be in [0, 1], got {}",
                self.dominant_share_threshold
            )));
        }
        if self.entropy_log_base.is_nan() || self.entropy_log_base <= 1.0 {
            return Err(MetricsError::Config(format!(
                "entropy_log_base must exceed 1, got {}",
                self.entropy_log_base
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominantSection {
    pub ordinal: usize,
    pub share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub main_diag_strength: f64,
    pub prev_diag_strength: f64,
    pub blended_score: f64,
    pub dominant_section: Option<DominantSection>,
    pub entropy_norm: f64,
    pub total_main_diagonals: f64,
}

/// Fraction of cells on the diagonal `{(s, s + displacement)}` whose value
/// exceeds the meaningful threshold. The denominator is the diagonal's
/// length inside the matrix, `n - |displacement|`.
pub fn diagonal_strength(
    p: &PercentMatrix,
    displacement: isize,
    cfg: &MetricConfig,
) -> Result<f64, MetricsError> {
    let n = p.n_sections;
    if displacement.unsigned_abs() >= n {
        return Err(MetricsError::Displacement {
            displacement,
            n_sections: n,
        });
    }
    let len = n - displacement.unsigned_abs();
    let first = if displacement < 0 {
        1 - displacement
    } else {
        1
    } as usize;
    let meaningful = (first..first + len)
        .filter(|&s| {
            let d = (s as isize + displacement) as usize;
            p.get(s, d) > cfg.meaningful_threshold
        })
        .count();
    Ok(meaningful as f64 / len as f64)
}

/// Strength of the `+2` diagonal; 0 for courses with fewer than 3 sections.
pub fn blended_score(p: &PercentMatrix, cfg: &MetricConfig) -> f64 {
    if p.n_sections < 3 {
        return 0.0;
    }
    diagonal_strength(p, 2, cfg).unwrap_or(0.0)
}

/// The section with the most incoming transitions (lowest ordinal on ties),
/// reported when its share of all transitions reaches the threshold.
pub fn dominant_section(
    m: &TransitionMatrix,
    cfg: &MetricConfig,
) -> Result<Option<DominantSection>, MetricsError> {
    if m.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let mut best = (0usize, 0u64);
    for d in 1..=m.n_sections {
        let incoming = m.column_sum(d);
        if incoming > best.1 {
            best = (d, incoming);
        }
    }
    let share = best.1 as f64 / m.total_transitions() as f64;
    Ok(
        (share >= cfg.dominant_share_threshold).then_some(DominantSection {
            ordinal: best.0,
            share,
        }),
    )
}

/// Shannon entropy of the joint transition distribution over the `n(n-1)`
/// off-diagonal cells, divided by its maximum `log(n(n-1))`.
pub fn matrix_entropy(m: &TransitionMatrix) -> Result<f64, MetricsError> {
    if m.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let n = m.n_sections;
    let cells = n * n.saturating_sub(1);
    if cells <= 1 {
        return Ok(0.0);
    }
    let total = m.total_transitions() as f64;
    let h: f64 = m
        .rows()
        .flatten()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / total;
            -q * q.log2()
        })
        .sum();
    Ok((h / (cells as f64).log2()).clamp(0.0, 1.0))
}

pub fn compute_metrics(
    m: &TransitionMatrix,
    p: &PercentMatrix,
    cfg: &MetricConfig,
) -> Result<MetricVector, MetricsError> {
    if m.n_sections != p.n_sections {
        return Err(MetricsError::ShapeMismatch {
            counts: m.n_sections,
            percent: p.n_sections,
        });
    }
    if m.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let (main, prev) = if m.n_sections >= 2 {
        (
            diagonal_strength(p, 1, cfg)?,
            diagonal_strength(p, -1, cfg)?,
        )
    } else {
        (0.0, 0.0)
    };
    Ok(MetricVector {
        main_diag_strength: main,
        prev_diag_strength: prev,
        blended_score: blended_score(p, cfg),
        dominant_section: dominant_section(m, cfg)?,
        entropy_norm: matrix_entropy(m)?,
        total_main_diagonals: main + prev,
    })
}

//! Rule cascade mapping a course's metrics to a navigation pattern.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::CourseLog;
use crate::matrix::{build_matrix, normalize, MatrixError, PercentMatrix, TransitionMatrix};
use crate::metrics::{compute_metrics, MetricConfig, MetricVector, MetricsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    SingleDiagonal,
    DoubleDiagonal,
    Blended,
    DominantSection,
    Combination,
    NoSalientPattern,
}

impl PatternKind {
    pub const ALL: [PatternKind; 6] = [
        PatternKind::SingleDiagonal,
        PatternKind::DoubleDiagonal,
        PatternKind::Blended,
        PatternKind::DominantSection,
        PatternKind::Combination,
        PatternKind::NoSalientPattern,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PatternKind::SingleDiagonal => "single_diagonal",
            PatternKind::DoubleDiagonal => "double_diagonal",
            PatternKind::Blended => "blended",
            PatternKind::DominantSection => "dominant_section",
            PatternKind::Combination => "combination",
            PatternKind::NoSalientPattern => "no_salient_pattern",
        }
    }
}

impl std::fmt::Display for PatternKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PatternKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        PatternKind::ALL
            .into_iter()
            .find(|k| k.as_str() == key)
            .ok_or_else(|| {
                let names: Vec<_> = PatternKind::ALL.iter().map(|k| k.as_str()).collect();
                format!(
                    "unknown pattern {s:?}; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

/// Which cascade rule produced the class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiredRule {
    HighEntropy,
    Combination,
    Blended,
    DominantSection,
    DoubleDiagonal,
    SingleForward,
    SingleBackward,
    Fallback,
}

impl FiredRule {
    pub fn class(self) -> PatternKind {
        match self {
            FiredRule::HighEntropy | FiredRule::Fallback => PatternKind::NoSalientPattern,
            FiredRule::Combination => PatternKind::Combination,
            FiredRule::Blended => PatternKind::Blended,
            FiredRule::DominantSection => PatternKind::DominantSection,
            FiredRule::DoubleDiagonal => PatternKind::DoubleDiagonal,
            FiredRule::SingleForward | FiredRule::SingleBackward => PatternKind::SingleDiagonal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternClass {
    pub class: PatternKind,
    pub evidence: MetricVector,
    pub fired_rule: FiredRule,
}

/// Qualitative strength of a diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Band {
    Weak,
    Medium,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Diagonal strengths below this are weak.
    pub weak_below: f64,
    /// Diagonal strengths at or above this are strong.
    pub strong_at_least: f64,
    pub blended_high: f64,
    /// Entropy strictly above this means no salient pattern.
    pub entropy_high: f64,
    /// Total main diagonals strictly above this count as high.
    pub total_main_high: f64,
    /// Evaluate the blended rule before the combination rule.
    pub blended_before_combination: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            weak_below: 0.30,
            strong_at_least: 0.70,
            blended_high: 0.30,
            entropy_high: 0.85,
            total_main_high: 1.0,
            blended_before_combination: false,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let ok = 0.0 < self.weak_below
            && self.weak_below <= self.strong_at_least
            && self.strong_at_least < 1.0;
        if !ok {
            return Err(ClassifyError::Config(format!(
                "need 0 < weak_below ({}) <= strong_at_least ({}) < 1",
                self.weak_below, self.strong_at_least
            )));
        }
        for (name, v) in [
            ("blended_high", self.blended_high),
            ("entropy_high", self.entropy_high),
            ("total_main_high", self.total_main_high),
        ] {
            if !v.is_finite() {
                return Err(ClassifyError::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn band(&self, strength: f64) -> Band {
        if strength < self.weak_below {
            Band::Weak
        } else if strength < self.strong_at_least {
            Band::Medium
        } else {
            Band::Strong
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("metric {0} is not finite")]
    NonFinite(&'static str),
    #[error("invalid classifier configuration: {0}")]
    Config(String),
}

fn check_finite(v: &MetricVector) -> Result<(), ClassifyError> {
    let mut fields = vec![
        ("main_diag_strength", v.main_diag_strength),
        ("prev_diag_strength", v.prev_diag_strength),
        ("blended_score", v.blended_score),
        ("entropy_norm", v.entropy_norm),
        ("total_main_diagonals", v.total_main_diagonals),
    ];
    if let Some(d) = v.dominant_section {
        fields.push(("dominant_section.share", d.share));
    }
    match fields.into_iter().find(|(_, x)| !x.is_finite()) {
        Some((name, _)) => Err(ClassifyError::NonFinite(name)),
        None => Ok(()),
    }
}

/// First matching rule wins:
///
/// 1. entropy above `entropy_high` -> no salient pattern
/// 2. dominant section and high total main diagonals -> combination
/// 3. blended score at least `blended_high` -> blended
/// 4. dominant section (total main diagonals low to medium) -> dominant section
/// 5. main and previous both at least medium -> double diagonal
/// 6. exactly one of them at least medium -> single diagonal
/// 7. otherwise no salient pattern
///
/// `blended_before_combination` swaps rules 2 and 3.
pub fn classify(v: &MetricVector, cfg: &ClassifierConfig) -> Result<PatternClass, ClassifyError> {
    check_finite(v)?;
    let fired = select_rule(v, cfg);
    Ok(PatternClass {
        class: fired.class(),
        evidence: *v,
        fired_rule: fired,
    })
}

fn select_rule(v: &MetricVector, cfg: &ClassifierConfig) -> FiredRule {
    if v.entropy_norm > cfg.entropy_high {
        return FiredRule::HighEntropy;
    }
    let dominant = v.dominant_section.is_some();
    let high_total = v.total_main_diagonals > cfg.total_main_high;
    let combination = dominant && high_total;
    let blended = v.blended_score >= cfg.blended_high;
    if cfg.blended_before_combination {
        if blended {
            return FiredRule::Blended;
        }
        if combination {
            return FiredRule::Combination;
        }
    } else {
        if combination {
            return FiredRule::Combination;
        }
        if blended {
            return FiredRule::Blended;
        }
    }
    if dominant {
        return FiredRule::DominantSection;
    }
    let main = cfg.band(v.main_diag_strength) != Band::Weak;
    let prev = cfg.band(v.prev_diag_strength) != Band::Weak;
    match (main, prev) {
        (true, true) => FiredRule::DoubleDiagonal,
        (true, false) => FiredRule::SingleForward,
        (false, true) => FiredRule::SingleBackward,
        (false, false) => FiredRule::Fallback,
    }
}

/// Why a course could not be classified.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CourseError {
    #[error("course {course_id} is unclassifiable: no transitions")]
    NoTransitions { course_id: String },
    #[error("course {course_id}: {source}")]
    Metrics {
        course_id: String,
        #[source]
        source: MetricsError,
    },
    #[error("course {course_id}: {source}")]
    Classify {
        course_id: String,
        #[source]
        source: ClassifyError,
    },
}

/// Everything computed for one classified course.
#[derive(Debug, Clone)]
pub struct CourseAnalysis {
    pub matrix: TransitionMatrix,
    pub percent: PercentMatrix,
    pub class: PatternClass,
}

/// build_matrix -> normalize -> compute_metrics -> classify.
pub fn analyze_course(
    log: &CourseLog,
    metric_cfg: &MetricConfig,
    classifier_cfg: &ClassifierConfig,
) -> Result<CourseAnalysis, CourseError> {
    let course_id = || log.course_id.clone();
    let matrix = build_matrix(log).map_err(|e| match e {
        MatrixError::Empty { course_id } => CourseError::NoTransitions { course_id },
        MatrixError::Invalid(msg) => CourseError::Metrics {
            course_id: course_id(),
            source: MetricsError::Config(msg),
        },
    })?;
    let percent = normalize(&matrix);
    let metrics =
        compute_metrics(&matrix, &percent, metric_cfg).map_err(|source| CourseError::Metrics {
            course_id: course_id(),
            source,
        })?;
    let class = classify(&metrics, classifier_cfg).map_err(|source| CourseError::Classify {
        course_id: course_id(),
        source,
    })?;
    Ok(CourseAnalysis {
        matrix,
        percent,
        class,
    })
}

pub fn classify_course(
    log: &CourseLog,
    metric_cfg: &MetricConfig,
    classifier_cfg: &ClassifierConfig,
) -> Result<PatternClass, CourseError> {
    analyze_course(log, metric_cfg, classifier_cfg).map(|a| a.class)
}

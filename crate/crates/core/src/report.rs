//! Corpus report and the fixed-precision JSON writer it is saved with.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::classify::{FiredRule, PatternKind};
use crate::metrics::MetricVector;

/// Decimal places for every float written to JSON.
pub const FLOAT_DECIMALS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseRecord {
    pub course_id: String,
    /// Matrix dimension: the highest section ordinal seen.
    pub n_sections: usize,
    /// Events left after self-loop removal.
    pub n_events: usize,
    pub n_transitions: usize,
    pub metrics: Option<MetricVector>,
    pub class: Option<PatternKind>,
    pub fired_rule: Option<FiredRule>,
    pub heatmap_rendered: bool,
    /// Why the course has no class, when it has none.
    pub error: Option<String>,
}

impl CourseRecord {
    pub fn is_classified(&self) -> bool {
        self.class.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassShare {
    pub class: PatternKind,
    pub count: usize,
    /// Share of classified courses, in percent.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    /// Ordered by course id.
    pub courses: Vec<CourseRecord>,
    /// All six classes in a fixed order, including empty ones.
    pub distribution: Vec<ClassShare>,
    pub unclassifiable: usize,
    pub classified: usize,
    pub total_courses: usize,
}

impl CorpusReport {
    pub fn from_records(mut courses: Vec<CourseRecord>) -> CorpusReport {
        courses.sort_by(|a, b| a.course_id.cmp(&b.course_id));
        let classified = courses.iter().filter(|c| c.is_classified()).count();
        let distribution = PatternKind::ALL
            .iter()
            .map(|&class| {
                let count = courses.iter().filter(|c| c.class == Some(class)).count();
                let percent = if classified == 0 {
                    0.0
                } else {
                    100.0 * count as f64 / classified as f64
                };
                ClassShare {
                    class,
                    count,
                    percent,
                }
            })
            .collect();
        CorpusReport {
            unclassifiable: courses.len() - classified,
            classified,
            total_courses: courses.len(),
            courses,
            distribution,
        }
    }

    /// Report over the union of two corpora with disjoint course ids.
    pub fn merge(self, other: CorpusReport) -> CorpusReport {
        let mut courses = self.courses;
        courses.extend(other.courses);
        CorpusReport::from_records(courses)
    }

    pub fn share(&self, class: PatternKind) -> Option<&ClassShare> {
        self.distribution.iter().find(|s| s.class == class)
    }
}

/// Pretty JSON with floats at a fixed number of decimals.
#[derive(Default)]
pub struct FixedFloatFormatter {
    inner: PrettyFormatter<'static>,
}

impl Formatter for FixedFloatFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        // avoid "-0.000000"
        let value = if value == 0.0 { 0.0 } else { value };
        write!(w, "{value:.FLOAT_DECIMALS$}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloatFormatter::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

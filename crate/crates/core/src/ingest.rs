//! Event-log ingestion and data preparation.
//!
//! Reads a delimiter-separated export with the six event-log columns
//! (timestamp, course name, course id, section name, section ordinal, user id),
//! drops courses that are too small or excluded by allow/deny lists, and
//! collapses consecutive same-section events per student.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{NaiveDateTime, Timelike};
use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S%.f";

/// One logged student interaction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub timestamp: NaiveDateTime,
    pub course_id: String,
    pub course_name: String,
    /// 1-based position of the section in the course's display order.
    pub section_index: u32,
    pub section_name: Option<String>,
    pub user_id: String,
}

/// The six columns of an event-log export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    Timestamp,
    CourseName,
    CourseId,
    SectionName,
    Section,
    UserId,
}

impl Column {
    pub const ALL: [Column; 6] = [
        Column::Timestamp,
        Column::CourseName,
        Column::CourseId,
        Column::SectionName,
        Column::Section,
        Column::UserId,
    ];

    /// Header text used when writing an export.
    pub fn header(self) -> &'static str {
        match self {
            Column::Timestamp => "Timestamp",
            Column::CourseName => "Course Name",
            Column::CourseId => "CourseID",
            Column::SectionName => "Section name",
            Column::Section => "Section",
            Column::UserId => "UserID",
        }
    }

    fn from_header(raw: &str) -> Option<Column> {
        let key: String = raw
            .trim()
            .trim_start_matches('\u{feff}')
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "timestamp" | "time" => Some(Column::Timestamp),
            "coursename" => Some(Column::CourseName),
            "courseid" => Some(Column::CourseId),
            "sectionname" => Some(Column::SectionName),
            "section" | "sectionindex" | "sectionnumber" => Some(Column::Section),
            "userid" => Some(Column::UserId),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowErrorKind {
    MalformedTimestamp(String),
    NonNumericSection(String),
    SectionOutOfRange(u32),
    EmptyField(Column),
    FieldCount { expected: usize, found: usize },
    Malformed(String),
}

impl std::fmt::Display for RowErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowErrorKind::MalformedTimestamp(raw) => write!(f, "malformed timestamp {raw:?}"),
            RowErrorKind::NonNumericSection(raw) => write!(f, "non-numeric section index {raw:?}"),
            RowErrorKind::SectionOutOfRange(v) => {
                write!(f, "section index {v} out of range (must be >= 1)")
            }
            RowErrorKind::EmptyField(col) => write!(f, "empty {} field", col.header()),
            RowErrorKind::FieldCount { expected, found } => {
                write!(f, "expected {expected} fields, found {found}")
            }
            RowErrorKind::Malformed(msg) => f.write_str(msg),
        }
    }
}

/// A data row that could not be turned into an [`Event`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct RowError {
    /// 1-based line number in the source; the header is line 1.
    pub line: u64,
    pub kind: RowErrorKind,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("input has no header line")]
    MissingHeader,
    #[error("missing required column {0:?}")]
    MissingColumn(&'static str),
    #[error(transparent)]
    Row(#[from] RowError),
}

/// How an export should be read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FormatDescriptor {
    /// Field delimiter; `None` picks comma or semicolon from the header line.
    pub delimiter: Option<u8>,
    /// Abort on the first bad row instead of skipping it.
    pub strict: bool,
}

impl FormatDescriptor {
    pub fn strict() -> Self {
        FormatDescriptor {
            delimiter: None,
            strict: true,
        }
    }

    pub fn lenient() -> Self {
        FormatDescriptor::default()
    }
}

/// Parsed rows plus the rows skipped in lenient mode.
#[derive(Debug, Clone, Default)]
pub struct ParsedLog {
    pub events: Vec<Event>,
    pub skipped: Vec<RowError>,
}

fn detect_delimiter(header: &str) -> u8 {
    let commas = header.matches(',').count();
    let semis = header.matches(';').count();
    if semis > commas {
        b';'
    } else {
        b','
    }
}

/// Parses an event-log export. Column order is free; the header decides it.
pub fn parse_event_log<R: Read>(
    source: R,
    format: FormatDescriptor,
) -> Result<ParsedLog, IngestError> {
    let mut reader = BufReader::with_capacity(1 << 16, source);
    let mut header = String::new();
    // Skip leading blank lines, but count them for line numbering.
    let mut header_line = 0u64;
    loop {
        header.clear();
        if reader.read_line(&mut header)? == 0 {
            return Err(IngestError::MissingHeader);
        }
        header_line += 1;
        if !header.trim().is_empty() {
            break;
        }
    }
    let delimiter = format
        .delimiter
        .unwrap_or_else(|| detect_delimiter(&header));

    let mut columns: HashMap<Column, usize> = HashMap::new();
    let header_fields = split_header(&header, delimiter)?;
    for (pos, raw) in header_fields.iter().enumerate() {
        if let Some(col) = Column::from_header(raw) {
            columns.entry(col).or_insert(pos);
        }
    }
    let mut index = [0usize; 6];
    for (slot, col) in index.iter_mut().zip(Column::ALL) {
        *slot = *columns
            .get(&col)
            .ok_or(IngestError::MissingColumn(col.header()))?;
    }
    let width = header_fields.len();

    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut parsed = ParsedLog::default();
    let mut record = csv::StringRecord::new();
    loop {
        let line_hint = csv_reader.position().line() + header_line;
        match csv_reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record
                    .position()
                    .map(|p| p.line() + header_line)
                    .unwrap_or(line_hint);
                if record.len() == 1 && record[0].is_empty() {
                    continue;
                }
                match event_from_record(&record, &index, width) {
                    Ok(event) => parsed.events.push(event),
                    Err(kind) => {
                        let err = RowError { line, kind };
                        if format.strict {
                            return Err(err.into());
                        }
                        parsed.skipped.push(err);
                    }
                }
            }
            Err(e) => {
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(IngestError::Io(io::Error::other(e.to_string())));
                }
                let line = e
                    .position()
                    .map(|p| p.line() + header_line)
                    .unwrap_or(line_hint);
                let err = RowError {
                    line,
                    kind: RowErrorKind::Malformed(e.to_string()),
                };
                if format.strict {
                    return Err(err.into());
                }
                parsed.skipped.push(err);
            }
        }
    }
    Ok(parsed)
}

fn split_header(header: &str, delimiter: u8) -> Result<Vec<String>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(header.as_bytes());
    let mut record = csv::StringRecord::new();
    match rdr.read_record(&mut record) {
        Ok(true) => Ok(record.iter().map(str::to_owned).collect()),
        Ok(false) => Err(IngestError::MissingHeader),
        Err(e) => Err(IngestError::Io(io::Error::other(e.to_string()))),
    }
}

fn event_from_record(
    record: &csv::StringRecord,
    index: &[usize; 6],
    width: usize,
) -> Result<Event, RowErrorKind> {
    if record.len() != width {
        return Err(RowErrorKind::FieldCount {
            expected: width,
            found: record.len(),
        });
    }
    let field = |col: Column| -> &str { record.get(index[col as usize]).unwrap_or("") };

    let raw_ts = field(Column::Timestamp);
    let timestamp = parse_timestamp(raw_ts)
        .ok_or_else(|| RowErrorKind::MalformedTimestamp(raw_ts.to_owned()))?;

    let raw_section = field(Column::Section);
    let section_index: u32 = raw_section
        .parse()
        .map_err(|_| RowErrorKind::NonNumericSection(raw_section.to_owned()))?;
    if section_index == 0 {
        return Err(RowErrorKind::SectionOutOfRange(section_index));
    }

    let course_id = field(Column::CourseId);
    if course_id.is_empty() {
        return Err(RowErrorKind::EmptyField(Column::CourseId));
    }
    let user_id = field(Column::UserId);
    if user_id.is_empty() {
        return Err(RowErrorKind::EmptyField(Column::UserId));
    }
    let section_name = field(Column::SectionName);

    Ok(Event {
        timestamp,
        course_id: course_id.to_owned(),
        course_name: field(Column::CourseName).to_owned(),
        section_index,
        section_name: (!section_name.is_empty()).then(|| section_name.to_owned()),
        user_id: user_id.to_owned(),
    })
}

/// Parses `YYYY-MM-DD HH:MM:SS` with an optional fractional part.
pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(raw.trim(), TIMESTAMP_FORMAT).ok()
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    if ts.nanosecond().is_multiple_of(1_000_000) {
        ts.format("%Y-%m-%d %H:%M:%S%.3f").to_string()
    } else {
        ts.format(TIMESTAMP_FORMAT).to_string()
    }
}

/// Opens a path for parsing, transparently decompressing `.gz` files.
pub fn open_source(path: &Path) -> io::Result<Box<dyn Read>> {
    let file = File::open(path)?;
    let gz = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    if gz {
        Ok(Box::new(MultiGzDecoder::new(BufReader::new(file))))
    } else {
        Ok(Box::new(file))
    }
}

/// Writes events in the export format read by [`parse_event_log`].
pub fn write_event_log<W: Write>(events: &[Event], sink: W) -> io::Result<()> {
    let mut writer = csv::WriterBuilder::new().from_writer(sink);
    let write = |w: &mut csv::Writer<W>| -> csv::Result<()> {
        w.write_record(Column::ALL.iter().map(|c| c.header()))?;
        for e in events {
            let section = e.section_index.to_string();
            w.write_record([
                format_timestamp(&e.timestamp).as_str(),
                e.course_name.as_str(),
                e.course_id.as_str(),
                e.section_name.as_deref().unwrap_or(""),
                section.as_str(),
                e.user_id.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut writer).map_err(|e| io::Error::other(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_events_per_course: usize,
    pub course_allowlist: Option<BTreeSet<String>>,
    pub course_denylist: Option<BTreeSet<String>>,
    pub max_sections_cross_course: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_events_per_course: 100,
            course_allowlist: None,
            course_denylist: None,
            max_sections_cross_course: 10,
        }
    }
}

impl FilterConfig {
    pub fn admits(&self, course_id: &str) -> bool {
        if self
            .course_denylist
            .as_ref()
            .is_some_and(|deny| deny.contains(course_id))
        {
            return false;
        }
        self.course_allowlist
            .as_ref()
            .is_none_or(|allow| allow.contains(course_id))
    }
}

/// Drops courses with fewer than `min_events_per_course` events and applies
/// the allow/deny lists. Surviving events keep their relative order.
pub fn filter_courses(events: Vec<Event>, cfg: &FilterConfig) -> Vec<Event> {
    let mut per_course: HashMap<&str, usize> = HashMap::new();
    for e in &events {
        *per_course.entry(e.course_id.as_str()).or_default() += 1;
    }
    let keep: BTreeSet<String> = per_course
        .into_iter()
        .filter(|(id, n)| *n >= cfg.min_events_per_course && cfg.admits(id))
        .map(|(id, _)| id.to_owned())
        .collect();
    events
        .into_iter()
        .filter(|e| keep.contains(&e.course_id))
        .collect()
}

/// One student's time-ordered events within a course.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudentTrace {
    pub user_id: String,
    pub events: Vec<Event>,
}

impl StudentTrace {
    pub fn sections(&self) -> impl Iterator<Item = u32> + '_ {
        self.events.iter().map(|e| e.section_index)
    }
}

/// All events of one course after self-loop removal, grouped per student.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CourseLog {
    pub course_id: String,
    pub course_name: String,
    /// Number of distinct section ordinals seen in the course.
    pub n_sections: usize,
    /// Highest section ordinal seen in the course.
    pub max_section: u32,
    /// Students ordered by user id.
    pub students: Vec<StudentTrace>,
    /// First non-empty name seen for each ordinal.
    pub section_names: BTreeMap<u32, String>,
    /// Events (before self-loop removal) whose section name was absent.
    pub missing_section_names: usize,
    /// Events before self-loop removal.
    pub raw_event_count: usize,
}

impl CourseLog {
    pub fn event_count(&self) -> usize {
        self.students.iter().map(|s| s.events.len()).sum()
    }

    pub fn transition_count(&self) -> usize {
        self.students
            .iter()
            .map(|s| s.events.len().saturating_sub(1))
            .sum()
    }

    /// Events of every student, student by student.
    pub fn events(&self) -> impl Iterator<Item = &Event> + '_ {
        self.students.iter().flat_map(|s| s.events.iter())
    }

    /// Label per ordinal `1..=max_section`; `None` where no name was seen.
    pub fn section_labels(&self) -> Vec<Option<String>> {
        (1..=self.max_section)
            .map(|k| self.section_names.get(&k).cloned())
            .collect()
    }
}

/// Groups events by course and student, orders each student's events by
/// time (ties keep input order), and keeps only the first of each run of
/// consecutive same-section events. Courses are returned ordered by id.
pub fn remove_self_loops(events: Vec<Event>) -> Vec<CourseLog> {
    struct Acc {
        course_name: String,
        students: BTreeMap<String, Vec<Event>>,
        sections: BTreeSet<u32>,
        section_names: BTreeMap<u32, String>,
        missing_names: usize,
        raw: usize,
    }

    let mut courses: BTreeMap<String, Acc> = BTreeMap::new();
    for event in events {
        let acc = courses
            .entry(event.course_id.clone())
            .or_insert_with(|| Acc {
                course_name: event.course_name.clone(),
                students: BTreeMap::new(),
                sections: BTreeSet::new(),
                section_names: BTreeMap::new(),
                missing_names: 0,
                raw: 0,
            });
        acc.raw += 1;
        acc.sections.insert(event.section_index);
        match &event.section_name {
            Some(name) if !name.trim().is_empty() => {
                acc.section_names
                    .entry(event.section_index)
                    .or_insert_with(|| name.clone());
            }
            _ => acc.missing_names += 1,
        }
        acc.students
            .entry(event.user_id.clone())
            .or_default()
            .push(event);
    }

    courses
        .into_iter()
        .map(|(course_id, acc)| {
            let students = acc
                .students
                .into_iter()
                .map(|(user_id, mut events)| {
                    // stable: equal timestamps keep file order
                    events.sort_by_key(|e| e.timestamp);
                    events.dedup_by(|next, kept| next.section_index == kept.section_index);
                    StudentTrace { user_id, events }
                })
                .collect();
            CourseLog {
                course_id,
                course_name: acc.course_name,
                n_sections: acc.sections.len(),
                max_section: acc.sections.last().copied().unwrap_or(0),
                students,
                section_names: acc.section_names,
                missing_section_names: acc.missing_names,
                raw_event_count: acc.raw,
            }
        })
        .collect()
}

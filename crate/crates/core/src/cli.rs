//! Command-line front end: `analyze`, `generate` and `render`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use flate2::write::GzEncoder;
use flate2::Compression;
use rayon::prelude::*;
use thiserror::Error;

use crate::classify::{analyze_course, CourseAnalysis, CourseError, PatternKind};
use crate::config::Config;
use crate::ingest::{
    filter_courses, open_source, parse_event_log, remove_self_loops, write_event_log, CourseLog,
};
use crate::matrix::{cross_course_matrix, cross_course_percent, MatrixDocument};
use crate::render::{render_cross_course, render_heatmap, resolve_labels};
use crate::report::{to_json_bytes, CorpusReport, CourseRecord};
use crate::synth::{generate_corpus, SynthMetadata, SynthSpec, RNG_ALGORITHM};

#[derive(Debug, Parser)]
#[command(
    name = "navmatrix",
    version,
    about = "Section-navigation analysis of LMS event logs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze an event log and write matrices, heatmaps and a corpus report.
    Analyze(AnalyzeArgs),
    /// Write a synthetic event log with a known navigation pattern.
    Generate(GenerateArgs),
    /// Re-render a stored matrix JSON as an SVG heatmap.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Event log (CSV, optionally gzip-compressed).
    #[arg(long)]
    pub input: PathBuf,
    /// TOML configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Abort on the first malformed row.
    #[arg(long)]
    pub strict_parse: bool,
    /// Print percentages inside heatmap cells.
    #[arg(long)]
    pub show_values: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub pattern: PatternKind,
    #[arg(long, default_value_t = 10)]
    pub sections: u32,
    #[arg(long, default_value_t = 40)]
    pub students: u32,
    /// Events per student.
    #[arg(long, default_value_t = 60)]
    pub events: u32,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of courses; course i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub courses: u32,
    /// Course id for a single-course log.
    #[arg(long)]
    pub course_id: Option<String>,
    /// Output CSV; a `.gz` suffix compresses it.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Matrix JSON written by `analyze`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub show_values: bool,
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Fatal = 1,
    /// The run completed but some courses could not be classified.
    Partial = 2,
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct CliError(pub String);

fn fail(context: impl std::fmt::Display, err: impl std::fmt::Display) -> CliError {
    CliError(format!("{context}: {err}"))
}

fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        Some(p) => Config::load(p).map_err(|e| CliError(e.to_string())),
        None => Ok(Config::default()),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Exit
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Exit::Fatal
            } else {
                Exit::Success
            };
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => run_analyze(&a),
        Command::Generate(g) => cmd_generate(&g).map(|_| Exit::Success),
        Command::Render(r) => cmd_render(&r).map(|_| Exit::Success),
    };
    match result {
        Ok(exit) => exit,
        Err(e) => {
            eprintln!("error: {e}");
            Exit::Fatal
        }
    }
}

fn run_analyze(args: &AnalyzeArgs) -> Result<Exit, CliError> {
    let mut config = load_config(args.config.as_deref())?;
    config.parse.strict |= args.strict_parse;
    config.render.show_values |= args.show_values;
    let report = cmd_analyze(&args.input, &config, &args.out_dir)?;
    println!(
        "{} courses: {} classified, {} unclassifiable",
        report.total_courses, report.classified, report.unclassifiable
    );
    for share in &report.distribution {
        println!(
            "  {:<20} {:>6} {:>7.2}%",
            share.class.as_str(),
            share.count,
            share.percent
        );
    }
    Ok(if report.unclassifiable > 0 {
        Exit::Partial
    } else {
        Exit::Success
    })
}

/// File stem for a course id: kept as-is when already safe, otherwise
/// sanitized and suffixed with a hash of the original id.
pub fn course_file_stem(course_id: &str) -> String {
    let safe = |c: char| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.');
    if !course_id.is_empty() && course_id.chars().all(safe) && !course_id.starts_with('.') {
        return course_id.to_owned();
    }
    let cleaned: String = course_id
        .chars()
        .enumerate()
        .map(|(i, c)| {
            if safe(c) && !(i == 0 && c == '.') {
                c
            } else {
                '_'
            }
        })
        .take(64)
        .collect();
    // FNV-1a keeps distinct ids on distinct files
    let hash = course_id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    });
    format!("{cleaned}-{hash:016x}")
}

/// Classifies every course and assembles the report, in memory.
pub fn analyze_logs(
    logs: &[CourseLog],
    config: &Config,
) -> Vec<(CourseRecord, Result<CourseAnalysis, CourseError>)> {
    logs.par_iter()
        .map(|log| {
            let outcome = analyze_course(log, &config.metrics, &config.classifier);
            let record = CourseRecord {
                course_id: log.course_id.clone(),
                n_sections: log.max_section as usize,
                n_events: log.event_count(),
                n_transitions: log.transition_count(),
                metrics: outcome.as_ref().ok().map(|a| a.class.evidence),
                class: outcome.as_ref().ok().map(|a| a.class.class),
                fired_rule: outcome.as_ref().ok().map(|a| a.class.fired_rule),
                heatmap_rendered: false,
                error: outcome.as_ref().err().map(|e| e.to_string()),
            };
            (record, outcome)
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| fail(path.display(), e))
}

fn render_to_file(
    path: &Path,
    render: impl FnOnce(&mut BufWriter<File>) -> Result<(), crate::render::RenderError>,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| fail(path.display(), e))?;
    let mut out = BufWriter::new(file);
    render(&mut out).map_err(|e| fail(path.display(), e))?;
    out.flush().map_err(|e| fail(path.display(), e))
}

/// Runs the full pipeline on `input` and writes all outputs to `out_dir`.
/// Inputs that yield no courses are fatal and produce no output files.
pub fn cmd_analyze(
    input: &Path,
    config: &Config,
    out_dir: &Path,
) -> Result<CorpusReport, CliError> {
    config.validate().map_err(CliError)?;
    let source = open_source(input).map_err(|e| fail(input.display(), e))?;
    let parsed =
        parse_event_log(source, config.parse.descriptor()).map_err(|e| fail(input.display(), e))?;
    if !parsed.skipped.is_empty() {
        eprintln!(
            "warning: {}: skipped {} malformed rows",
            input.display(),
            parsed.skipped.len()
        );
        for row in parsed.skipped.iter().take(5) {
            eprintln!("  {row}");
        }
    }
    if parsed.events.is_empty() {
        return Err(fail(input.display(), "no events"));
    }
    let events = filter_courses(parsed.events, &config.filter);
    if events.is_empty() {
        return Err(fail(input.display(), "no course passes the filter"));
    }
    let logs = remove_self_loops(events);

    let course_dir = out_dir.join("courses");
    fs::create_dir_all(&course_dir).map_err(|e| fail(course_dir.display(), e))?;

    let analyzed = analyze_logs(&logs, config);
    let records: Vec<CourseRecord> = analyzed
        .into_par_iter()
        .zip(logs.par_iter())
        .map(
            |((mut record, outcome), log)| -> Result<CourseRecord, CliError> {
                let Ok(analysis) = outcome else {
                    return Ok(record);
                };
                let stem = course_file_stem(&log.course_id);
                let doc = MatrixDocument::new(&analysis.matrix, &analysis.percent);
                let json = serde_json::to_vec_pretty(&doc).map_err(|e| fail(&stem, e))?;
                write_file(&course_dir.join(format!("{stem}.json")), &json)?;
                match resolve_labels(&log.section_labels(), &config.render, &log.course_id) {
                    Ok(labels) => {
                        let title = format!("{} ({})", log.course_name, log.course_id);
                        render_to_file(&course_dir.join(format!("{stem}.svg")), |out| {
                            render_heatmap(
                                &analysis.percent,
                                &labels,
                                &config.render,
                                Some(&title),
                                out,
                            )
                        })?;
                        record.heatmap_rendered = true;
                    }
                    Err(e) => eprintln!("warning: {e}"),
                }
                Ok(record)
            },
        )
        .collect::<Result<_, _>>()?;

    let cross_counts = cross_course_matrix(&logs, &config.filter);
    let cross = cross_course_percent(&logs, &config.filter, config.matrix.cross_course_mode);
    render_to_file(&out_dir.join("cross_course.svg"), |out| {
        render_cross_course(&cross, &config.render, out)
    })?;
    let doc = MatrixDocument::new(&cross_counts, &cross);
    let json = serde_json::to_vec_pretty(&doc).map_err(|e| fail("cross_course.json", e))?;
    write_file(&out_dir.join("cross_course.json"), &json)?;

    let report = CorpusReport::from_records(records);
    let bytes = to_json_bytes(&report).map_err(|e| fail("report.json", e))?;
    write_file(&out_dir.join("report.json"), &bytes)?;
    Ok(report)
}

fn open_sink(path: &Path) -> Result<Box<dyn Write>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| fail(parent.display(), e))?;
    }
    let file = BufWriter::new(File::create(path).map_err(|e| fail(path.display(), e))?);
    Ok(if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzEncoder::new(file, Compression::default()))
    } else {
        Box::new(file)
    })
}

/// Specs for `generate`: one per course, seeds counting up from `seed`.
pub fn generate_specs(args: &GenerateArgs) -> Result<Vec<SynthSpec>, CliError> {
    if args.courses == 0 {
        return Err(CliError("--courses must be at least 1".into()));
    }
    if args.courses > 1 && args.course_id.is_some() {
        return Err(CliError(
            "--course-id applies to a single course only".into(),
        ));
    }
    let specs: Vec<SynthSpec> = (0..u64::from(args.courses))
        .map(|i| SynthSpec {
            pattern: args.pattern,
            n_sections: args.sections,
            n_students: args.students,
            events_per_student: args.events,
            noise: args.noise,
            seed: args.seed.wrapping_add(i),
            course_id: args.course_id.clone(),
        })
        .collect();
    for spec in &specs {
        spec.validate()
            .map_err(|e| CliError(format!("invalid spec: {e}")))?;
    }
    Ok(specs)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let specs = generate_specs(args)?;
    let events = generate_corpus(&specs).map_err(|e| CliError(format!("invalid spec: {e}")))?;

    let mut sink = open_sink(&args.output)?;
    write_event_log(&events, &mut sink).map_err(|e| fail(args.output.display(), e))?;
    sink.flush().map_err(|e| fail(args.output.display(), e))?;
    drop(sink);

    let meta: Vec<SynthMetadata> = specs
        .iter()
        .map(|spec| SynthMetadata {
            spec,
            course_id: spec.course_id(),
            rng: RNG_ALGORITHM,
            n_events: (spec.n_students * spec.events_per_student) as usize,
        })
        .collect();
    let mut meta_path = args.output.clone().into_os_string();
    meta_path.push(".meta.json");
    let bytes = to_json_bytes(&meta).map_err(|e| fail("metadata", e))?;
    write_file(Path::new(&meta_path), &bytes)?;

    let first = &specs[0];
    println!(
        "pattern={} sections={} students={} events={} noise={} seed={} courses={} rng=\"{}\" events_written={} output={}",
        first.pattern,
        first.n_sections,
        first.n_students,
        first.events_per_student,
        first.noise,
        first.seed,
        specs.len(),
        RNG_ALGORITHM,
        events.len(),
        args.output.display()
    );
    Ok(())
}

pub fn cmd_render(args: &RenderArgs) -> Result<(), CliError> {
    let mut config = load_config(args.config.as_deref())?;
    config.render.show_values |= args.show_values;
    let text = fs::read(&args.input).map_err(|e| fail(args.input.display(), e))?;
    let doc: MatrixDocument =
        serde_json::from_slice(&text).map_err(|e| fail(args.input.display(), e))?;
    let (m, p) = doc
        .into_matrices()
        .map_err(|e| fail(args.input.display(), e))?;
    let title = m.course_id.clone();
    render_to_file(&args.output, |out| {
        render_heatmap(&p, &m.labels, &config.render, title.as_deref(), out)
    })
}

pub fn main_exit() -> i32 {
    let exit = run(std::env::args_os());
    let _ = io::stdout().flush();
    exit as i32
}

//! Seeded generator of event logs with a known navigation pattern.
//!
//! Every student starts in section 1 and takes `events_per_student - 1`
//! steps. Each step first flips the noise coin; a noisy step jumps
//! uniformly to any other section, otherwise the pattern kernel moves.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::PatternKind;
use crate::ingest::Event;
use crate::matrix::fallback_label;

/// Identifier of the random source, recorded in generator metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64)";

/// Section that dominant-section and combination students keep returning to.
pub const HUB_SECTION: u32 = 1;

const BLENDED_SKIP: f64 = 0.4;
const DOMINANT_HUB_RATE: f64 = 0.75;
const COMBINATION_HUB_RATE: f64 = 0.55;
const COMBINATION_RESTART: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub pattern: PatternKind,
    #[serde(default = "default_sections")]
    pub n_sections: u32,
    #[serde(default = "default_students")]
    pub n_students: u32,
    #[serde(default = "default_events")]
    pub events_per_student: u32,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `<pattern>-<seed>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub course_id: Option<String>,
}

fn default_sections() -> u32 {
    10
}
fn default_students() -> u32 {
    40
}
fn default_events() -> u32 {
    60
}

impl SynthSpec {
    pub fn new(pattern: PatternKind, seed: u64) -> Self {
        SynthSpec {
            pattern,
            n_sections: default_sections(),
            n_students: default_students(),
            events_per_student: default_events(),
            noise: 0.0,
            seed,
            course_id: None,
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn course_id(&self) -> String {
        self.course_id
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.pattern, self.seed))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let min = if self.pattern == PatternKind::Blended {
            3
        } else {
            2
        };
        if self.n_sections < min {
            return Err(SynthError::TooFewSections {
                pattern: self.pattern,
                n_sections: self.n_sections,
                min,
            });
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(SynthError::Noise(self.noise));
        }
        if self.n_students == 0 {
            return Err(SynthError::NoStudents);
        }
        if self.events_per_student == 0 {
            return Err(SynthError::NoEvents);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("{pattern} needs at least {min} sections, got {n_sections}")]
    TooFewSections {
        pattern: PatternKind,
        n_sections: u32,
        min: u32,
    },
    #[error("noise must lie in [0, 1], got {0}")]
    Noise(f64),
    #[error("at least one student is required")]
    NoStudents,
    #[error("at least one event per student is required")]
    NoEvents,
}

/// Echo of a generator run, written next to generated logs.
#[derive(Debug, Clone, Serialize)]
pub struct SynthMetadata<'a> {
    pub spec: &'a SynthSpec,
    pub course_id: String,
    pub rng: &'static str,
    pub n_events: usize,
}

struct Walker<'a> {
    spec: &'a SynthSpec,
    rng: &'a mut ChaCha8Rng,
    current: u32,
    /// Where a hub visitor goes next when leaving the hub.
    resume: Option<u32>,
}

impl Walker<'_> {
    fn n(&self) -> u32 {
        self.spec.n_sections
    }

    fn cyclic(&self, c: u32, by: u32) -> u32 {
        (c - 1 + by) % self.n() + 1
    }

    fn uniform_other(&mut self) -> u32 {
        let pick = self.rng.random_range(1..self.n());
        if pick >= self.current {
            pick + 1
        } else {
            pick
        }
    }

    fn step(&mut self) -> u32 {
        let noisy = self.rng.random::<f64>() < self.spec.noise;
        let next = if noisy {
            self.resume = None;
            self.uniform_other()
        } else {
            self.kernel()
        };
        self.current = next;
        next
    }

    fn kernel(&mut self) -> u32 {
        let c = self.current;
        let n = self.n();
        match self.spec.pattern {
            PatternKind::SingleDiagonal => self.cyclic(c, 1),
            PatternKind::DoubleDiagonal => {
                if c == 1 {
                    2
                } else if c == n {
                    n - 1
                } else if self.rng.random_bool(0.5) {
                    c + 1
                } else {
                    c - 1
                }
            }
            PatternKind::Blended => {
                let by = if self.rng.random_bool(BLENDED_SKIP) {
                    2
                } else {
                    1
                };
                self.cyclic(c, by)
            }
            PatternKind::DominantSection => {
                if c == HUB_SECTION {
                    self.resume.take().unwrap_or(HUB_SECTION + 1)
                } else if self.rng.random_bool(DOMINANT_HUB_RATE) {
                    self.resume = Some(c);
                    HUB_SECTION
                } else {
                    self.cyclic(c, 1)
                }
            }
            PatternKind::Combination => {
                let bounce = |c: u32| if c < n { c + 1 } else { n - 1 };
                if c == HUB_SECTION {
                    let resume = self.resume.take();
                    match resume {
                        Some(r) if !self.rng.random_bool(COMBINATION_RESTART) => r,
                        _ => HUB_SECTION + 1,
                    }
                } else if self.rng.random_bool(COMBINATION_HUB_RATE) {
                    self.resume = Some(bounce(c));
                    HUB_SECTION
                } else {
                    bounce(c)
                }
            }
            PatternKind::NoSalientPattern => self.uniform_other(),
        }
    }
}

fn epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 3, 4)
        .and_then(|d| d.and_hms_opt(8, 0, 0))
        .expect("valid epoch")
}

/// Generates the events of one synthetic course, ordered by timestamp.
pub fn generate(spec: &SynthSpec) -> Result<Vec<Event>, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let course_id = spec.course_id();
    let course_name = format!("Synthetic {}", spec.pattern);
    let width = spec.n_students.to_string().len().max(3);
    let mut events = Vec::with_capacity((spec.n_students * spec.events_per_student) as usize);

    for s in 0..spec.n_students {
        let user_id = format!("u{:0width$}", s + 1);
        let mut at = epoch() + Duration::seconds(rng.random_range(0..86_400 * 7));
        let mut walker = Walker {
            spec,
            rng: &mut rng,
            current: 1,
            resume: None,
        };
        let mut section = 1;
        for i in 0..spec.events_per_student {
            if i > 0 {
                section = walker.step();
                at += Duration::milliseconds(walker.rng.random_range(1_000..900_000));
            }
            events.push(Event {
                timestamp: at,
                course_id: course_id.clone(),
                course_name: course_name.clone(),
                section_index: section,
                section_name: Some(fallback_label(section as usize)),
                user_id: user_id.clone(),
            });
        }
    }
    events.sort_by_key(|e| e.timestamp);
    Ok(events)
}

/// Generates several courses in parallel; output order follows `specs`.
pub fn generate_corpus(specs: &[SynthSpec]) -> Result<Vec<Event>, SynthError> {
    let parts: Vec<Vec<Event>> = specs.par_iter().map(generate).collect::<Result<_, _>>()?;
    Ok(parts.into_iter().flatten().collect())
}

//! SVG heatmaps of percent matrices.
//!
//! Columns are source sections (left to right), rows are destination
//! sections (top to bottom). Cells are colored by linear RGB interpolation
//! from `color_low` at 0 to `color_high` at 100.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::matrix::{fallback_label, ordinal_labels, PercentMatrix};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("course {course}: missing section names for sections {sections:?}")]
    MissingLabels {
        course: String,
        sections: Vec<usize>,
    },
    #[error("{labels} labels for {n_sections} sections")]
    LabelCount { labels: usize, n_sections: usize },
    #[error("cannot render an empty matrix")]
    NoSections,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub const WHITE: Rgb = Rgb(255, 255, 255);
    pub const DARK_BLUE: Rgb = Rgb(8, 48, 107);

    pub fn hex(self) -> String {
        format!("#{:02X}{:02X}{:02X}", self.0, self.1, self.2)
    }

    pub fn parse_hex(raw: &str) -> Option<Rgb> {
        let digits = raw.trim().strip_prefix('#')?;
        if digits.len() != 6 || !digits.is_ascii() {
            return None;
        }
        let channel = |i: usize| u8::from_str_radix(&digits[i..i + 2], 16).ok();
        Some(Rgb(channel(0)?, channel(2)?, channel(4)?))
    }
}

impl Serialize for Rgb {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.hex())
    }
}

impl<'de> Deserialize<'de> for Rgb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Rgb::parse_hex(&raw)
            .ok_or_else(|| serde::de::Error::custom(format!("expected #RRGGBB, got {raw:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapStyle {
    pub color_low: Rgb,
    pub color_high: Rgb,
    pub cell_size: u32,
    pub show_values: bool,
    /// Use "Section <ordinal>" where a section has no name.
    pub label_fallback: bool,
}

impl Default for HeatmapStyle {
    fn default() -> Self {
        HeatmapStyle {
            color_low: Rgb::WHITE,
            color_high: Rgb::DARK_BLUE,
            cell_size: 24,
            show_values: false,
            label_fallback: true,
        }
    }
}

impl HeatmapStyle {
    /// Color for a value in `[0, 100]`; out-of-range values are clamped.
    /// Channels are truncated toward the low endpoint's side of zero.
    pub fn color(&self, value: f64) -> Rgb {
        let t = if value.is_finite() {
            (value / 100.0).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let mix = |lo: u8, hi: u8| -> u8 {
            let v = f64::from(lo) + (f64::from(hi) - f64::from(lo)) * t;
            v.trunc().clamp(0.0, 255.0) as u8
        };
        Rgb(
            mix(self.color_low.0, self.color_high.0),
            mix(self.color_low.1, self.color_high.1),
            mix(self.color_low.2, self.color_high.2),
        )
    }
}

/// Resolves per-section labels, falling back to "Section <ordinal>" when
/// allowed.
pub fn resolve_labels(
    names: &[Option<String>],
    style: &HeatmapStyle,
    course: &str,
) -> Result<Vec<String>, RenderError> {
    let missing: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.as_deref().is_none_or(|s| s.trim().is_empty()))
        .map(|(i, _)| i + 1)
        .collect();
    if !missing.is_empty() && !style.label_fallback {
        return Err(RenderError::MissingLabels {
            course: course.to_owned(),
            sections: missing,
        });
    }
    Ok(names
        .iter()
        .enumerate()
        .map(|(i, n)| match n {
            Some(s) if !s.trim().is_empty() => s.clone(),
            _ => fallback_label(i + 1),
        })
        .collect())
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

const CHAR_WIDTH: u32 = 7;
const MAX_LABEL_CHARS: usize = 28;

fn clip(label: &str) -> String {
    if label.chars().count() <= MAX_LABEL_CHARS {
        label.to_owned()
    } else {
        let mut s: String = label.chars().take(MAX_LABEL_CHARS - 1).collect();
        s.push('…');
        s
    }
}

/// Writes a standalone SVG document. Output bytes depend only on the inputs.
pub fn render_heatmap<W: Write>(
    p: &PercentMatrix,
    labels: &[String],
    style: &HeatmapStyle,
    title: Option<&str>,
    mut out: W,
) -> Result<(), RenderError> {
    let n = p.n_sections;
    if n == 0 {
        return Err(RenderError::NoSections);
    }
    if labels.len() != n {
        return Err(RenderError::LabelCount {
            labels: labels.len(),
            n_sections: n,
        });
    }
    let labels: Vec<String> = labels.iter().map(|l| clip(l)).collect();
    let cell = style.cell_size.max(1);
    let label_px = labels
        .iter()
        .map(|l| l.chars().count() as u32)
        .max()
        .unwrap_or(1)
        * CHAR_WIDTH
        + 8;
    let title_px = if title.is_some() { 28 } else { 8 };
    let axis_px = 22;
    let left = axis_px + label_px;
    let top = title_px;
    let grid = cell * n as u32;
    let width = left + grid + 16;
    let height = top + grid + label_px + axis_px;

    let mut svg = String::with_capacity(256 + n * n * 96);
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r##"<rect width="{width}" height="{height}" fill="#FFFFFF"/>"##
    );
    if let Some(title) = title {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
            left + grid / 2,
            escape(title)
        );
    }

    let _ = writeln!(svg, r#"<g class="cells">"#);
    for dst in 1..=n {
        for src in 1..=n {
            let v = p.get(src, dst);
            let x = left + cell * (src as u32 - 1);
            let y = top + cell * (dst as u32 - 1);
            let _ = writeln!(
                svg,
                r#"<rect class="cell" data-src="{src}" data-dst="{dst}" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}"/>"#,
                style.color(v).hex()
            );
        }
    }
    let _ = writeln!(svg, "</g>");

    if style.show_values {
        let _ = writeln!(
            svg,
            r#"<g class="values" text-anchor="middle" font-size="9">"#
        );
        for dst in 1..=n {
            for src in 1..=n {
                let v = p.get(src, dst);
                let ink = if v > 50.0 { "#FFFFFF" } else { "#000000" };
                let _ = writeln!(
                    svg,
                    r#"<text class="value" x="{}" y="{}" fill="{ink}">{v:.0}</text>"#,
                    left + cell * (src as u32 - 1) + cell / 2,
                    top + cell * (dst as u32 - 1) + cell / 2 + 3
                );
            }
        }
        let _ = writeln!(svg, "</g>");
    }

    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{top}" width="{grid}" height="{grid}" fill="none" stroke="#888888" stroke-width="1"/>"##
    );

    // destination labels, one per row
    let _ = writeln!(svg, r#"<g class="row-labels" text-anchor="end">"#);
    for (i, label) in labels.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            left - 4,
            top + cell * i as u32 + cell / 2 + 4,
            escape(label)
        );
    }
    let _ = writeln!(svg, "</g>");

    // source labels, rotated below the grid
    let _ = writeln!(svg, r#"<g class="column-labels" text-anchor="end">"#);
    for (i, label) in labels.iter().enumerate() {
        let x = left + cell * i as u32 + cell / 2 + 4;
        let y = top + grid + 6;
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{y}" transform="rotate(-90 {x} {y})">{}</text>"#,
            escape(label)
        );
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(
        svg,
        r#"<text class="axis-title" x="{}" y="{}" text-anchor="middle" font-size="12">source section</text>"#,
        left + grid / 2,
        height - 6
    );
    let cy = top + grid / 2;
    let _ = writeln!(
        svg,
        r#"<text class="axis-title" x="14" y="{cy}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {cy})">destination section</text>"#
    );
    let _ = writeln!(svg, "</svg>");

    out.write_all(svg.as_bytes())?;
    Ok(())
}

/// Cross-course heatmap with ordinal labels "1".."n".
pub fn render_cross_course<W: Write>(
    p: &PercentMatrix,
    style: &HeatmapStyle,
    out: W,
) -> Result<(), RenderError> {
    render_heatmap(
        p,
        &ordinal_labels(p.n_sections),
        style,
        Some("cross-course"),
        out,
    )
}

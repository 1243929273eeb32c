//! Plain-text file formats. Every parser works on a `&str` and reports
//! 1-based line numbers; blank lines and lines starting with `#` are ignored
//! unless a format says otherwise.

mod embeddings;
mod forge;
mod images;
mod lists;
mod manifest;
mod schedule;
mod spec;

use std::fmt;

pub use embeddings::{format_embeddings, parse_embeddings, strip_extension, Embeddings};
pub use forge::{format_photos, format_seeds, parse_aggregation, parse_forge_config, parse_names, parse_photos, parse_seeds};
pub use images::{read_gray, write_pgm};
pub use lists::{
    format_blufr, format_pairs, format_video, parse_blufr, parse_pairs, parse_video, PairRef, TrialRef,
    VideoRef,
};
pub use manifest::{format_manifest, parse_manifest, ManifestFile};
pub(crate) use schedule::key_values;
pub use schedule::{format_schedule, parse_schedule};
pub use spec::{format_spec, parse_spec};

/// A parse failure. Line 0 refers to the file as a whole.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ParseError {}

/// Non-blank, non-comment lines with their 1-based numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}

pub(crate) fn parse_num<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T, ParseError> {
    field
        .trim()
        .parse()
        .map_err(|_| ParseError::new(line, format!("bad {what}: {field:?}")))
}

pub(crate) fn parse_flag(line: usize, field: &str, what: &str) -> Result<bool, ParseError> {
    match field.trim() {
        "1" | "true" | "same" => Ok(true),
        "0" | "false" | "diff" => Ok(false),
        other => Err(ParseError::new(line, format!("bad {what}: {other:?}"))),
    }
}

//! The canonical plain-text note table.
//!
//! Header lines `divisions=<int>`, optional `class=<int>`, optional repeatable
//! `timesig=<start>:<num>/<den>`; then one note per line as
//! `onset,duration,pitch,voice`. `#` starts a comment.

use super::{NoteEvent, Score, TimeSignatureEvent};
use crate::error::{Error, Result};
use std::fmt::Write as _;

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::NoteTable {
        line,
        msg: msg.into(),
    }
}

fn parse_int<T: std::str::FromStr>(s: &str, line: usize, field: &str) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| err(line, format!("{field}: expected integer, got {s:?}")))
}

/// Parse the canonical note-table text into a Score.
pub fn parse_note_table(text: &str, source_name: &str) -> Result<Score> {
    let mut divisions: Option<i64> = None;
    let mut class_label: Option<u32> = None;
    let mut time_signatures = Vec::new();
    let mut notes = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }

        if let Some((key, value)) = line.split_once('=') {
            match key.trim() {
                "divisions" => divisions = Some(parse_int(value, lineno, "divisions")?),
                "class" => class_label = Some(parse_int(value, lineno, "class")?),
                "timesig" => {
                    let (start, rest) = value
                        .split_once(':')
                        .ok_or_else(|| err(lineno, "timesig: expected <start>:<num>/<den>"))?;
                    let (num, den) = rest
                        .split_once('/')
                        .ok_or_else(|| err(lineno, "timesig: expected <start>:<num>/<den>"))?;
                    time_signatures.push(TimeSignatureEvent {
                        start: parse_int(start, lineno, "timesig start")?,
                        numerator: parse_int(num, lineno, "timesig numerator")?,
                        denominator: parse_int(den, lineno, "timesig denominator")?,
                    });
                }
                other => return Err(err(lineno, format!("unknown header key {other:?}"))),
            }
            continue;
        }

        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(err(
                lineno,
                format!(
                    "expected 4 fields onset,duration,pitch,voice, got {}",
                    fields.len()
                ),
            ));
        }
        let onset: i64 = parse_int(fields[0], lineno, "onset")?;
        let duration: i64 = parse_int(fields[1], lineno, "duration")?;
        let pitch: i64 = parse_int(fields[2], lineno, "pitch")?;
        let voice: u32 = parse_int(fields[3], lineno, "voice")?;
        if duration <= 0 {
            return Err(err(lineno, "duration must be positive"));
        }
        if onset < 0 {
            return Err(err(lineno, "onset must be non-negative"));
        }
        if !(0..=127).contains(&pitch) {
            return Err(err(lineno, format!("pitch {pitch} out of [0,127]")));
        }
        notes.push(NoteEvent {
            onset,
            duration,
            pitch: pitch as u8,
            voice,
            id: notes.len(),
        });
    }

    let divisions =
        divisions.ok_or_else(|| err(text.lines().count() + 1, "missing required field divisions"))?;
    Score::new(divisions, notes, time_signatures, source_name, class_label)
}

/// Serialize a Score to the canonical note-table text.
///
/// The inserted default 4/4 at tick 0 is written explicitly, so parse/write
/// round-trips are stable.
pub fn write_note_table(score: &Score) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "divisions={}", score.divisions_per_quarter);
    if let Some(c) = score.class_label {
        let _ = writeln!(out, "class={c}");
    }
    for ts in &score.time_signatures {
        let _ = writeln!(out, "timesig={}:{}/{}", ts.start, ts.numerator, ts.denominator);
    }
    for n in &score.notes {
        let _ = writeln!(out, "{},{},{},{}", n.onset, n.duration, n.pitch, n.voice);
    }
    out
}

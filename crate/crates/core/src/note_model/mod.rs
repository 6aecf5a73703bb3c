//! Canonical note-event representation plus the ingestion paths that produce it:
//! Standard MIDI Files, the plain-text note table, and a synthetic generator.

mod midi;
mod synth;
mod table;

pub use midi::{parse_midi, MidiWarnings};
pub use synth::{stock_classes, synth_dataset, RegisterBand, StyleClass, SynthSpec};
pub use table::{parse_note_table, write_note_table};

use crate::error::{Error, Result};

/// One note. Times are in score divisions (ticks), pitch is MIDI pitch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoteEvent {
    pub onset: i64,
    pub duration: i64,
    pub pitch: u8,
    /// Ground-truth stream id.
    pub voice: u32,
    /// Dense 0..n-1 after ingestion, unique within a Score.
    pub id: usize,
}

impl NoteEvent {
    pub fn offset(&self) -> i64 {
        self.onset + self.duration
    }
}

/// A time-signature change at an absolute tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSignatureEvent {
    pub start: i64,
    pub numerator: u32,
    /// Power of two.
    pub denominator: u32,
}

/// An ordered collection of notes with the time-signature map needed for
/// bar-relative durations.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub divisions_per_quarter: i64,
    pub notes: Vec<NoteEvent>,
    pub time_signatures: Vec<TimeSignatureEvent>,
    pub source_name: String,
    /// Composer/style id for classification tasks.
    pub class_label: Option<u32>,
}

impl Score {
    /// Build a score from raw notes, enforcing the container invariants:
    /// notes sorted by (onset, pitch, insertion order) with dense ids,
    /// time signatures sorted with a 4/4 default at tick 0 when absent.
    pub fn new(
        divisions_per_quarter: i64,
        mut notes: Vec<NoteEvent>,
        mut time_signatures: Vec<TimeSignatureEvent>,
        source_name: impl Into<String>,
        class_label: Option<u32>,
    ) -> Result<Score> {
        if divisions_per_quarter <= 0 {
            return Err(Error::Data(format!(
                "divisions_per_quarter must be positive, got {divisions_per_quarter}"
            )));
        }
        for n in &notes {
            if n.duration <= 0 {
                return Err(Error::Data(format!(
                    "note duration must be positive, got {} (pitch {})",
                    n.duration, n.pitch
                )));
            }
            if n.onset < 0 {
                return Err(Error::Data(format!("negative onset {}", n.onset)));
            }
            if n.pitch > 127 {
                return Err(Error::Data(format!("pitch {} out of [0,127]", n.pitch)));
            }
        }
        notes.sort_by_key(|n| (n.onset, n.pitch, n.id));
        for (i, n) in notes.iter_mut().enumerate() {
            n.id = i;
        }

        time_signatures.sort_by_key(|ts| ts.start);
        for ts in &time_signatures {
            if ts.numerator == 0 {
                return Err(Error::Data("time signature numerator must be >= 1".into()));
            }
            if ts.denominator == 0 || !ts.denominator.is_power_of_two() {
                return Err(Error::Data(format!(
                    "time signature denominator must be a power of two, got {}",
                    ts.denominator
                )));
            }
        }
        if time_signatures.first().map_or(true, |ts| ts.start != 0) {
            time_signatures.insert(
                0,
                TimeSignatureEvent {
                    start: 0,
                    numerator: 4,
                    denominator: 4,
                },
            );
        }

        Ok(Score {
            divisions_per_quarter,
            notes,
            time_signatures,
            source_name: source_name.into(),
            class_label,
        })
    }

    /// Bar length in ticks under the latest time signature at or before `tick`.
    pub fn bar_duration_at(&self, tick: i64) -> i64 {
        let ts = self
            .time_signatures
            .iter()
            .rev()
            .find(|ts| ts.start <= tick)
            .unwrap_or(&self.time_signatures[0]);
        ts.numerator as i64 * 4 * self.divisions_per_quarter / ts.denominator as i64
    }
}

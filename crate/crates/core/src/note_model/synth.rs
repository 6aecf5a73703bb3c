//! Deterministic polyphonic data generator for desk-scale experiments.
//!
//! Each piece is a set of monophonic voices walking inside a register band,
//! with notes laid back to back from tick 0.

use super::{NoteEvent, Score};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

/// Pitch band `center - range ..= center + range` for one voice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterBand {
    pub center: u8,
    pub range: u8,
}

/// Interval and duration distributions defining one style class.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleClass {
    pub label: u32,
    /// Signed semitone steps with weights.
    pub intervals: Vec<(i32, f64)>,
    /// Duration alphabet in ticks with weights.
    pub durations: Vec<(i64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub pieces: usize,
    pub voices: usize,
    pub notes_per_voice: usize,
    /// One band per voice.
    pub registers: Vec<RegisterBand>,
    pub intervals: Vec<(i32, f64)>,
    pub durations: Vec<(i64, f64)>,
    pub divisions_per_quarter: i64,
    pub seed: u64,
    /// When non-empty, pieces cycle through these classes round-robin and the
    /// class distributions replace the defaults above.
    pub classes: Vec<StyleClass>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            pieces: 1,
            voices: 2,
            notes_per_voice: 16,
            registers: vec![
                RegisterBand { center: 48, range: 5 },
                RegisterBand { center: 72, range: 5 },
            ],
            intervals: vec![(-2, 1.0), (-1, 1.0), (1, 1.0), (2, 1.0)],
            durations: vec![(2, 1.0), (4, 2.0), (8, 1.0)],
            divisions_per_quarter: 4,
            seed: 0,
            classes: Vec::new(),
        }
    }
}

fn weighted_pick<T: Copy>(rng: &mut ChaCha8Rng, table: &[(T, f64)]) -> T {
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    let mut x = rng.random::<f64>() * total;
    for &(item, w) in table {
        x -= w;
        if x <= 0.0 {
            return item;
        }
    }
    table.last().unwrap().0
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.voices == 0 {
            return Err(Error::Config("voices must be >= 1".into()));
        }
        if self.registers.len() != self.voices {
            return Err(Error::Config(format!(
                "need one register band per voice: {} bands for {} voices",
                self.registers.len(),
                self.voices
            )));
        }
        for band in &self.registers {
            let lo = band.center as i32 - band.range as i32;
            let hi = band.center as i32 + band.range as i32;
            if lo < 0 || hi > 127 {
                return Err(Error::Config(format!(
                    "register band {}..{} outside [0,127]",
                    lo, hi
                )));
            }
        }
        if self.intervals.is_empty() || self.durations.is_empty() {
            return Err(Error::Config("interval and duration tables must be non-empty".into()));
        }
        for class in &self.classes {
            if class.intervals.is_empty() || class.durations.is_empty() {
                return Err(Error::Config(format!(
                    "class {}: interval and duration tables must be non-empty",
                    class.label
                )));
            }
        }
        Ok(())
    }
}

/// `k` built-in style classes with clearly distinct interval and duration
/// habits, for quick classification experiments.
pub fn stock_classes(k: usize) -> Vec<StyleClass> {
    (0..k as u32)
        .map(|label| {
            let step = 1 + (2 * label as i32) % 11;
            let durations = match label % 3 {
                0 => vec![(4, 3.0), (2, 1.0)],
                1 => vec![(2, 3.0), (4, 1.0)],
                _ => vec![(8, 3.0), (4, 1.0)],
            };
            StyleClass {
                label,
                intervals: vec![(-step, 1.0), (step, 1.0), (-step - 1, 0.5), (step + 1, 0.5)],
                durations,
            }
        })
        .collect()
}

/// Generate `spec.pieces` scores, deterministically from `spec.seed`.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Vec<Score>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.pieces);

    for piece_idx in 0..spec.pieces {
        let (class_label, intervals, durations) = if spec.classes.is_empty() {
            (None, &spec.intervals, &spec.durations)
        } else {
            let class = &spec.classes[piece_idx % spec.classes.len()];
            (Some(class.label), &class.intervals, &class.durations)
        };

        let mut notes = Vec::with_capacity(spec.voices * spec.notes_per_voice);
        for (voice, band) in spec.registers.iter().enumerate() {
            let lo = band.center as i32 - band.range as i32;
            let hi = band.center as i32 + band.range as i32;
            let mut pitch = band.center as i32;
            let mut tick: i64 = 0;
            for _ in 0..spec.notes_per_voice {
                let duration = weighted_pick(&mut rng, durations);
                notes.push(NoteEvent {
                    onset: tick,
                    duration,
                    pitch: pitch as u8,
                    voice: voice as u32,
                    id: notes.len(),
                });
                tick += duration;
                pitch = (pitch + weighted_pick(&mut rng, intervals)).clamp(lo, hi);
            }
        }

        out.push(Score::new(
            spec.divisions_per_quarter,
            notes,
            vec![],
            format!("synth-{piece_idx:04}"),
            class_label,
        )?);
    }
    Ok(out)
}

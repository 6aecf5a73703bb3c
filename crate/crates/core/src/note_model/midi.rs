//! Standard MIDI File ingestion (formats 0 and 1).
//!
//! Only what the note model needs survives: matched note pairs and
//! time-signature meta events. Tempo, velocity, and program data are
//! discarded.

use super::{NoteEvent, Score, TimeSignatureEvent};
use crate::error::{Error, Result};
use std::collections::{HashMap, VecDeque};

/// Counters for recoverable oddities found while parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MidiWarnings {
    /// Note-ons still open at end of track, closed at the track end tick.
    pub unmatched_note_ons: usize,
    /// Zero-length notes clamped to 1 tick.
    pub clamped_zero_length: usize,
    /// Note-ons duplicating an already-open note at the same tick, dropped.
    pub duplicate_note_ons: usize,
    /// Note-offs with no matching open note, ignored.
    pub orphan_note_offs: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::MidiParse {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| self.err("unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes([self.u8()?, self.u8()?]))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes([
            self.u8()?,
            self.u8()?,
            self.u8()?,
            self.u8()?,
        ]))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!("chunk overruns file (need {n} bytes)")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    /// Variable-length quantity, at most 4 bytes.
    fn varlen(&mut self) -> Result<u32> {
        let mut value: u32 = 0;
        for i in 0.. {
            if i == 4 {
                return Err(self.err("variable-length quantity longer than 4 bytes"));
            }
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                break;
            }
        }
        Ok(value)
    }
}

#[derive(Clone, Copy)]
struct OpenNote {
    onset: i64,
    voice: u32,
}

/// Parse a Standard MIDI File into a Score plus warning counters.
///
/// Voices are the dense index of each (track, channel) pair in order of first
/// note-on. Overlapping same-pitch notes are paired FIFO per
/// (track, channel, pitch).
pub fn parse_midi(bytes: &[u8], source_name: &str) -> Result<(Score, MidiWarnings)> {
    let mut c = Cursor { bytes, pos: 0 };

    if c.take(4)? != b"MThd" {
        return Err(Error::MidiParse {
            offset: 0,
            msg: "missing MThd header".into(),
        });
    }
    let header_len = c.u32()?;
    if header_len < 6 {
        return Err(c.err(format!("header length {header_len} < 6")));
    }
    let format = c.u16()?;
    if format > 1 {
        return Err(c.err(format!("unsupported format {format}")));
    }
    let declared_tracks = c.u16()?;
    let division = c.u16()?;
    if division & 0x8000 != 0 {
        return Err(c.err("SMPTE time division is not supported"));
    }
    if division == 0 {
        return Err(c.err("zero ticks-per-quarter division"));
    }
    // Extra header bytes beyond the standard 6 are skipped.
    c.take(header_len as usize - 6)?;

    let mut warnings = MidiWarnings::default();
    let mut notes: Vec<NoteEvent> = Vec::new();
    let mut time_signatures: Vec<TimeSignatureEvent> = Vec::new();
    let mut voices: HashMap<(usize, u8), u32> = HashMap::new();
    let mut track_idx = 0usize;

    while c.pos < bytes.len() {
        let chunk_type: [u8; 4] = c.take(4)?.try_into().unwrap();
        let chunk_len = c.u32()? as usize;
        let chunk_end = c.pos + chunk_len;
        if chunk_end > bytes.len() {
            return Err(c.err(format!("chunk length {chunk_len} overruns file")));
        }
        if &chunk_type != b"MTrk" {
            // Unknown chunks are skipped per the SMF spec.
            c.pos = chunk_end;
            continue;
        }

        parse_track(
            &mut c,
            chunk_end,
            track_idx,
            &mut notes,
            &mut time_signatures,
            &mut voices,
            &mut warnings,
        )?;
        c.pos = chunk_end;
        track_idx += 1;
    }

    if track_idx == 0 && declared_tracks > 0 {
        return Err(Error::MidiParse {
            offset: bytes.len(),
            msg: "no MTrk chunks found".into(),
        });
    }

    let score = Score::new(
        division as i64,
        notes,
        time_signatures,
        source_name,
        None,
    )?;
    Ok((score, warnings))
}

fn parse_track(
    c: &mut Cursor<'_>,
    chunk_end: usize,
    track_idx: usize,
    notes: &mut Vec<NoteEvent>,
    time_signatures: &mut Vec<TimeSignatureEvent>,
    voices: &mut HashMap<(usize, u8), u32>,
    warnings: &mut MidiWarnings,
) -> Result<()> {
    let mut open: HashMap<(u8, u8), VecDeque<OpenNote>> = HashMap::new();
    let mut abs_time: i64 = 0;
    let mut running_status: Option<u8> = None;

    let mut close = |open_note: OpenNote, pitch: u8, off_tick: i64, w: &mut MidiWarnings| {
        let mut duration = off_tick - open_note.onset;
        if duration <= 0 {
            duration = 1;
            w.clamped_zero_length += 1;
        }
        notes.push(NoteEvent {
            onset: open_note.onset,
            duration,
            pitch,
            voice: open_note.voice,
            id: notes.len(),
        });
    };

    while c.pos < chunk_end {
        abs_time += c.varlen()? as i64;
        let first = c.u8()?;

        let status = if first == 0xff {
            // Meta event; cancels running status.
            running_status = None;
            let meta_type = c.u8()?;
            let len = c.varlen()? as usize;
            let data = c.take(len)?;
            match meta_type {
                0x58 => {
                    if data.len() < 2 {
                        return Err(c.err("time signature meta shorter than 2 bytes"));
                    }
                    time_signatures.push(TimeSignatureEvent {
                        start: abs_time,
                        numerator: data[0] as u32,
                        denominator: 1u32 << data[1],
                    });
                }
                0x2f => break,
                _ => {}
            }
            continue;
        } else if first == 0xf0 || first == 0xf7 {
            running_status = None;
            let len = c.varlen()? as usize;
            c.take(len)?;
            continue;
        } else if first & 0x80 != 0 {
            running_status = Some(first);
            first
        } else {
            // Data byte under running status.
            c.pos -= 1;
            running_status.ok_or_else(|| c.err("data byte without running status"))?
        };

        let channel = status & 0x0f;
        match status & 0xf0 {
            0x90 => {
                let pitch = c.u8()? & 0x7f;
                let velocity = c.u8()?;
                let queue = open.entry((channel, pitch)).or_default();
                if velocity > 0 {
                    if queue.iter().any(|n| n.onset == abs_time) {
                        warnings.duplicate_note_ons += 1;
                    } else {
                        let n_voices = voices.len() as u32;
                        let voice =
                            *voices.entry((track_idx, channel)).or_insert(n_voices);
                        queue.push_back(OpenNote {
                            onset: abs_time,
                            voice,
                        });
                    }
                } else {
                    match queue.pop_front() {
                        Some(n) => close(n, pitch, abs_time, warnings),
                        None => warnings.orphan_note_offs += 1,
                    }
                }
            }
            0x80 => {
                let pitch = c.u8()? & 0x7f;
                let _velocity = c.u8()?;
                match open.entry((channel, pitch)).or_default().pop_front() {
                    Some(n) => close(n, pitch, abs_time, warnings),
                    None => warnings.orphan_note_offs += 1,
                }
            }
            0xa0 | 0xb0 | 0xe0 => {
                c.take(2)?;
            }
            0xc0 | 0xd0 => {
                c.take(1)?;
            }
            other => {
                return Err(c.err(format!("unexpected status byte {other:#04x}")));
            }
        }
    }

    // Anything still open closes at the end-of-track tick.
    let mut leftovers: Vec<(u8, OpenNote)> = open
        .into_iter()
        .flat_map(|((_, pitch), queue)| queue.into_iter().map(move |n| (pitch, n)))
        .collect();
    leftovers.sort_by_key(|(pitch, n)| (n.onset, *pitch));
    for (pitch, n) in leftovers {
        warnings.unmatched_note_ons += 1;
        close(n, pitch, abs_time, warnings);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal SMF builder for fixtures; tests hand-assemble event payloads.
    fn smf(format: u16, division: u16, tracks: &[Vec<u8>]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"MThd");
        out.extend_from_slice(&6u32.to_be_bytes());
        out.extend_from_slice(&format.to_be_bytes());
        out.extend_from_slice(&(tracks.len() as u16).to_be_bytes());
        out.extend_from_slice(&division.to_be_bytes());
        for t in tracks {
            out.extend_from_slice(b"MTrk");
            out.extend_from_slice(&(t.len() as u32).to_be_bytes());
            out.extend_from_slice(t);
        }
        out
    }

    const EOT: [u8; 4] = [0x00, 0xff, 0x2f, 0x00];

    #[test]
    fn single_note() {
        let mut track = vec![0x00, 0x90, 60, 100];
        track.extend([0x83, 0x60, 0x80, 60, 0]); // delta 480
        track.extend(EOT);
        let bytes = smf(0, 480, &[track]);
        let (score, w) = parse_midi(&bytes, "t").unwrap();
        assert_eq!(w, MidiWarnings::default());
        assert_eq!(score.notes.len(), 1);
        let n = &score.notes[0];
        assert_eq!((n.onset, n.duration, n.pitch, n.voice), (0, 480, 60, 0));
        assert_eq!(score.divisions_per_quarter, 480);
    }

    #[test]
    fn fifo_pairing_of_overlapping_same_pitch() {
        // on@0, on@240 (same pitch), offs at 480 and 720: FIFO gives 480/480.
        let mut track = vec![0x00, 0x90, 60, 100];
        track.extend([0x81, 0x70, 0x90, 60, 100]); // delta 240
        track.extend([0x81, 0x70, 0x80, 60, 0]); // delta 240 -> 480
        track.extend([0x81, 0x70, 0x80, 60, 0]); // delta 240 -> 720
        track.extend(EOT);
        let bytes = smf(0, 480, &[track]);
        let (score, _) = parse_midi(&bytes, "t").unwrap();
        let spans: Vec<(i64, i64)> = score.notes.iter().map(|n| (n.onset, n.duration)).collect();
        assert_eq!(spans, vec![(0, 480), (240, 480)]);
    }

    #[test]
    fn format_two_rejected() {
        let bytes = smf(2, 480, &[EOT.to_vec()]);
        let e = parse_midi(&bytes, "t").unwrap_err();
        assert!(e.to_string().contains("unsupported format"), "{e}");
    }

    #[test]
    fn smpte_division_rejected() {
        let bytes = smf(0, 0xe250, &[EOT.to_vec()]);
        assert!(parse_midi(&bytes, "t").is_err());
    }

    #[test]
    fn running_status_and_velocity_zero_off() {
        // Status byte 0x90 issued once; later events reuse it, including
        // velocity-0 note-offs.
        let mut track = vec![0x00, 0x90, 60, 100];
        track.extend([0x60, 60, 0]); // delta 96: off via vel 0, running status
        track.extend([0x00, 64, 100]); // on pitch 64
        track.extend([0x60, 64, 0]);
        track.extend(EOT);
        let bytes = smf(0, 96, &[track]);
        let (score, w) = parse_midi(&bytes, "t").unwrap();
        assert_eq!(w, MidiWarnings::default());
        let spans: Vec<(i64, i64, u8)> = score
            .notes
            .iter()
            .map(|n| (n.onset, n.duration, n.pitch))
            .collect();
        assert_eq!(spans, vec![(0, 96, 60), (96, 96, 64)]);
    }

    #[test]
    fn voices_follow_track_channel_first_appearance() {
        let mut t0 = vec![0x00u8, 0x91, 70, 100]; // channel 1 first
        t0.extend([0x10, 0x81, 70, 0]);
        t0.extend([0x00, 0x90, 60, 100]); // channel 0 second
        t0.extend([0x10, 0x80, 60, 0]);
        t0.extend(EOT);
        let mut t1 = vec![0x00u8, 0x90, 50, 100];
        t1.extend([0x10, 0x80, 50, 0]);
        t1.extend(EOT);
        let bytes = smf(1, 96, &[t0, t1]);
        let (score, _) = parse_midi(&bytes, "t").unwrap();
        let mut by_pitch: Vec<(u8, u32)> = score.notes.iter().map(|n| (n.pitch, n.voice)).collect();
        by_pitch.sort();
        assert_eq!(by_pitch, vec![(50, 2), (60, 1), (70, 0)]);
    }

    #[test]
    fn unmatched_note_on_closes_at_track_end() {
        let mut track = vec![0x00, 0x90, 60, 100];
        track.extend([0x83, 0x60, 0xff, 0x2f, 0x00]); // EOT at 480
        let bytes = smf(0, 480, &[track]);
        let (score, w) = parse_midi(&bytes, "t").unwrap();
        assert_eq!(w.unmatched_note_ons, 1);
        assert_eq!(score.notes[0].duration, 480);
    }

    #[test]
    fn zero_length_note_clamped() {
        let mut track = vec![0x00, 0x90, 60, 100];
        track.extend([0x00, 0x80, 60, 0]);
        track.extend(EOT);
        let bytes = smf(0, 480, &[track]);
        let (score, w) = parse_midi(&bytes, "t").unwrap();
        assert_eq!(w.clamped_zero_length, 1);
        assert_eq!(score.notes[0].duration, 1);
    }

    #[test]
    fn time_signature_meta_parsed() {
        let mut track = vec![0x00, 0xff, 0x58, 0x04, 6, 3, 24, 8]; // 6/8
        track.extend([0x00, 0x90, 60, 100]);
        track.extend([0x60, 0x80, 60, 0]);
        track.extend(EOT);
        let bytes = smf(0, 96, &[track]);
        let (score, _) = parse_midi(&bytes, "t").unwrap();
        assert_eq!(score.bar_duration_at(0), 6 * 96 / 2);
    }

    #[test]
    fn truncated_chunk_reports_offset() {
        let mut bytes = smf(0, 480, &[EOT.to_vec()]);
        let len = bytes.len();
        bytes.truncate(len - 2);
        match parse_midi(&bytes, "t") {
            Err(Error::MidiParse { offset, .. }) => assert!(offset > 0),
            other => panic!("expected MidiParse error, got {other:?}"),
        }
    }

    #[test]
    fn garbage_header_rejected() {
        let e = parse_midi(b"RIFFxxxx", "t").unwrap_err();
        assert!(e.to_string().contains("MThd"));
    }
}

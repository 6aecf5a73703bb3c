//! Shared fixtures for the pipeline benchmarks.

use musgconv_core::note_model::{synth_dataset, write_note_table, SynthSpec};
use musgconv_core::Score;

/// A mid-sized two-voice piece (256 notes), plus its note-table text.
pub fn bench_piece() -> (Score, String) {
    let spec = SynthSpec {
        pieces: 1,
        notes_per_voice: 128,
        seed: 17,
        ..SynthSpec::default()
    };
    let score = synth_dataset(&spec).unwrap().remove(0);
    let table = write_note_table(&score);
    (score, table)
}

//! Layered key=value settings: built-in defaults, then an optional settings
//! file, then `--set KEY=VALUE` overrides, then dedicated flags like
//! `--seed`. Every run echoes the merged result so logs show exactly what
//! was used.

use std::collections::BTreeMap;
use std::path::Path;

use musgconv_core::note_model::{stock_classes, SynthSpec};
use musgconv_core::{EdgeOp, Error, MusGConvConfig, Result, TrainConfig, Variant};

/// Every recognized key with its default value (empty string = unset).
const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    // Encoder.
    ("hidden_dim", "32"),
    ("n_layers", "2"),
    ("variant", "plain"),
    ("edge_op", "concat"),
    ("use_pcint", "true"),
    ("use_manual_edge_input", "true"),
    ("signed_distances", "false"),
    ("pc_embed_dim", "16"),
    // Training.
    ("lr", "0.001"),
    ("weight_decay", "0.0005"),
    ("epochs", "50"),
    ("batch_subgraphs", "8"),
    ("k_nodes", "512"),
    ("neg_per_pos", "5"),
    ("tau", ""),
    ("threshold", "0.5"),
    ("patience", "10"),
    // Classification.
    ("n_classes", "3"),
    // Synthesis.
    ("pieces", "12"),
    ("voices", "2"),
    ("notes_per_voice", "16"),
    ("divisions", "4"),
];

#[derive(Debug, Clone)]
pub struct Settings {
    entries: BTreeMap<String, String>,
}

fn unknown_key(key: &str) -> Error {
    Error::Config(format!(
        "unknown setting {key:?}; known keys: {}",
        DEFAULTS
            .iter()
            .map(|(k, _)| *k)
            .collect::<Vec<_>>()
            .join(", ")
    ))
}

impl Settings {
    /// Merge defaults, settings file, `--set` pairs, and the seed flag.
    pub fn load(file: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = DEFAULTS
            .iter()
            .map(|&(k, v)| (k.to_string(), v.to_string()))
            .collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read settings file {}: {e}", path.display()))
            })?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = match raw.find('#') {
                    Some(pos) => &raw[..pos],
                    None => raw,
                };
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!(
                        "{}:{}: expected key=value, got {line:?}",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                let key = key.trim();
                if !entries.contains_key(key) {
                    return Err(unknown_key(key));
                }
                entries.insert(key.to_string(), value.trim().to_string());
            }
        }
        for pair in sets {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {pair:?}")))?;
            let key = key.trim();
            if !entries.contains_key(key) {
                return Err(unknown_key(key));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        if let Some(seed) = seed {
            entries.insert("seed".to_string(), seed.to_string());
        }
        Ok(Settings { entries })
    }

    /// The merged settings, one `key=value` per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    fn raw(&self, key: &str) -> &str {
        self.entries
            .get(key)
            .unwrap_or_else(|| panic!("unregistered settings key {key:?}"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, kind: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| Error::Config(format!("{key}: expected {kind}, got {v:?}")))
    }

    fn get_bool(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(Error::Config(format!(
                "{key}: expected true or false, got {other:?}"
            ))),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed", "a non-negative integer")
    }

    pub fn n_classes(&self) -> Result<usize> {
        self.parse("n_classes", "a non-negative integer")
    }

    pub fn encoder_config(&self) -> Result<MusGConvConfig> {
        let variant = match self.raw("variant") {
            "plain" => Variant::Plain,
            "edge_forwarding" => Variant::EdgeForwarding,
            other => {
                return Err(Error::Config(format!(
                    "variant: expected plain or edge_forwarding, got {other:?}"
                )))
            }
        };
        let edge_op = match self.raw("edge_op") {
            "concat" => EdgeOp::Concat,
            "multiply" => EdgeOp::Multiply,
            other => {
                return Err(Error::Config(format!(
                    "edge_op: expected concat or multiply, got {other:?}"
                )))
            }
        };
        let cfg = MusGConvConfig {
            hidden_dim: self.parse("hidden_dim", "a positive integer")?,
            n_layers: self.parse("n_layers", "a positive integer")?,
            variant,
            edge_op,
            use_pcint: self.get_bool("use_pcint")?,
            use_manual_edge_input: self.get_bool("use_manual_edge_input")?,
            signed_distances: self.get_bool("signed_distances")?,
            pc_embed_dim: self.parse("pc_embed_dim", "a positive integer")?,
            ..MusGConvConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let tau = match self.raw("tau") {
            "" => None,
            v => Some(v.parse().map_err(|_| {
                Error::Config(format!("tau: expected ticks or empty for one bar, got {v:?}"))
            })?),
        };
        let cfg = TrainConfig {
            lr: self.parse("lr", "a number")?,
            weight_decay: self.parse("weight_decay", "a number")?,
            epochs: self.parse("epochs", "a non-negative integer")?,
            batch_subgraphs: self.parse("batch_subgraphs", "a positive integer")?,
            k_nodes: self.parse("k_nodes", "a positive integer")?,
            neg_per_pos: self.parse("neg_per_pos", "a non-negative integer")?,
            tau,
            threshold: self.parse("threshold", "a number in (0, 1)")?,
            patience: self.parse("patience", "a non-negative integer")?,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let n_classes = self.n_classes()?;
        let spec = SynthSpec {
            pieces: self.parse("pieces", "a positive integer")?,
            voices: self.parse("voices", "a positive integer")?,
            notes_per_voice: self.parse("notes_per_voice", "a positive integer")?,
            divisions_per_quarter: self.parse("divisions", "a positive integer")?,
            seed: self.seed()?,
            classes: stock_classes(n_classes),
            ..SynthSpec::default()
        };
        if spec.voices != 2 {
            // The default register bands cover two voices; other counts need
            // bands spread across the keyboard.
            let spread = 88 / (spec.voices + 1);
            let registers = (0..spec.voices)
                .map(|v| musgconv_core::note_model::RegisterBand {
                    center: (21 + spread * (v + 1)).min(108) as u8,
                    range: (spread / 2).min(12) as u8,
                })
                .collect();
            return Ok(SynthSpec { registers, ..spec });
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_round_trip_through_builders() {
        let s = Settings::load(None, &[], None).unwrap();
        let enc = s.encoder_config().unwrap();
        assert_eq!(enc.hidden_dim, 32);
        assert_eq!(enc.variant, Variant::Plain);
        let t = s.train_config().unwrap();
        assert_eq!(t.epochs, 50);
        assert_eq!(t.tau, None);
        let spec = s.synth_spec().unwrap();
        assert_eq!(spec.pieces, 12);
        assert_eq!(spec.classes.len(), 3);
    }

    #[test]
    fn file_then_set_then_seed_layering() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\nepochs=7\nseed=3\nvariant=edge_forwarding").unwrap();
        let sets = vec!["epochs=9".to_string()];
        let s = Settings::load(Some(f.path()), &sets, Some(42)).unwrap();
        assert_eq!(s.train_config().unwrap().epochs, 9);
        assert_eq!(s.seed().unwrap(), 42);
        assert_eq!(
            s.encoder_config().unwrap().variant,
            Variant::EdgeForwarding
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "learning_rate=0.1").unwrap();
        let err = Settings::load(Some(f.path()), &[], None).unwrap_err();
        assert!(err.to_string().contains("learning_rate"));
        let err = Settings::load(None, &["nope=1".into()], None).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn bad_values_name_the_key() {
        let s = Settings::load(None, &["epochs=many".into()], None).unwrap();
        let err = s.train_config().unwrap_err();
        assert!(err.to_string().contains("epochs"), "{err}");
        let s = Settings::load(None, &["tau=later".into()], None).unwrap();
        assert!(s.train_config().is_err());
        let s = Settings::load(None, &["use_pcint=maybe".into()], None).unwrap();
        assert!(s.encoder_config().is_err());
    }

    #[test]
    fn render_lists_every_key_once() {
        let s = Settings::load(None, &[], Some(5)).unwrap();
        let text = s.render();
        assert_eq!(text.lines().count(), DEFAULTS.len());
        assert!(text.contains("seed=5\n"));
        assert!(text.contains("tau=\n"));
    }

    #[test]
    fn explicit_tau_parses() {
        let s = Settings::load(None, &["tau=32".into()], None).unwrap();
        assert_eq!(s.train_config().unwrap().tau, Some(32));
    }

    #[test]
    fn many_voices_get_spread_registers() {
        let s = Settings::load(None, &["voices=4".into()], None).unwrap();
        let spec = s.synth_spec().unwrap();
        assert_eq!(spec.registers.len(), 4);
        // Bands must be valid midi and strictly increasing.
        for w in spec.registers.windows(2) {
            assert!(w[0].center < w[1].center);
        }
    }
}

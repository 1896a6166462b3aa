//! Flat `key = value` configuration files with `#` comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use eegcn_core::corpus::SynthSpec;
use eegcn_core::model::ModelConfig;

use crate::error::{Error, Result};

/// Everything a run needs besides the command line.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub model: ModelConfig,
    pub seed: u64,
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Used when no corpus paths are given.
    pub synth: SynthSpec,
    pub synth_seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            model: ModelConfig::default(),
            seed: 1,
            train_path: None,
            dev_path: None,
            test_path: None,
            embeddings: None,
            synth: SynthSpec::default(),
            synth_seed: 7,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Usage(format!("bad value `{value}` for `{key}`")))
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let s = &mut self.synth;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "train_path" => self.train_path = path(value),
            "dev_path" => self.dev_path = path(value),
            "test_path" => self.test_path = path(value),
            "embeddings" => self.embeddings = path(value),
            "synth_seed" => self.synth_seed = parse(key, value)?,
            "synth_event_types" => s.event_types = parse(key, value)?,
            "synth_train" => s.train = parse(key, value)?,
            "synth_dev" => s.dev = parse(key, value)?,
            "synth_test" => s.test = parse(key, value)?,
            "synth_min_len" => s.min_len = parse(key, value)?,
            "synth_max_len" => s.max_len = parse(key, value)?,
            "synth_nouns_per_type" => s.nouns_per_type = parse(key, value)?,
            "synth_trigger_verbs" => s.trigger_verbs = parse(key, value)?,
            "synth_other_verbs" => s.other_verbs = parse(key, value)?,
            "synth_event_rate" => s.event_rate = parse(key, value)?,
            "synth_multiword_rate" => s.multiword_rate = parse(key, value)?,
            "synth_label_blind" => s.label_blind = parse(key, value)?,
            _ if ModelConfig::KEYS.contains(&key) => {
                self.model.set(key, value).map_err(|e| Error::Usage(e.to_string()))?
            }
            _ => return Err(Error::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("expected key=value, got `{assignment}`")))?;
        self.set(k.trim(), v)
    }

    pub fn parse_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.apply(line)
                .map_err(|e| Error::Usage(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = Settings::default();
        s.parse_text(&text)?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| Error::Usage(e.to_string()))?;
        if self.train_path.is_some() != self.dev_path.is_some() {
            return Err(Error::Usage("train_path and dev_path go together".into()));
        }
        for (key, p) in [
            ("train_path", &self.train_path),
            ("dev_path", &self.dev_path),
            ("test_path", &self.test_path),
            ("embeddings", &self.embeddings),
        ] {
            if let Some(p) = p.as_ref().filter(|p| !p.exists()) {
                return Err(Error::Usage(format!("{key} {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// The settings as a config file that [`Settings::parse_text`] reads back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = |x: &Option<PathBuf>| x.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let s = &self.synth;
        let mut lines = vec![
            ("seed", self.seed.to_string()),
            ("train_path", p(&self.train_path)),
            ("dev_path", p(&self.dev_path)),
            ("test_path", p(&self.test_path)),
            ("embeddings", p(&self.embeddings)),
            ("synth_seed", self.synth_seed.to_string()),
            ("synth_event_types", s.event_types.to_string()),
            ("synth_train", s.train.to_string()),
            ("synth_dev", s.dev.to_string()),
            ("synth_test", s.test.to_string()),
            ("synth_min_len", s.min_len.to_string()),
            ("synth_max_len", s.max_len.to_string()),
            ("synth_nouns_per_type", s.nouns_per_type.to_string()),
            ("synth_trigger_verbs", s.trigger_verbs.to_string()),
            ("synth_other_verbs", s.other_verbs.to_string()),
            ("synth_event_rate", s.event_rate.to_string()),
            ("synth_multiword_rate", s.multiword_rate.to_string()),
            ("synth_label_blind", s.label_blind.to_string()),
        ];
        lines.extend(self.model.entries());
        for (k, v) in lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_overrides() {
        let mut s = Settings::default();
        s.parse_text("# run\nlayers = 3  # deeper\n\nsynth_label_blind=true\ntrain_path = a.jsonl\n")
            .unwrap();
        assert_eq!(s.model.layers, 3);
        assert!(s.synth.label_blind);
        assert_eq!(s.train_path.as_deref(), Some(Path::new("a.jsonl")));
    }

    #[test]
    fn unknown_key_is_usage_error() {
        let mut s = Settings::default();
        let err = s.parse_text("layres = 3").unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
        assert_eq!(err.exit_code(), 2);
        assert!(matches!(s.apply("layers"), Err(Error::Usage(_))));
    }

    #[test]
    fn text_round_trip() {
        let mut s = Settings::default();
        s.apply("baseline=gcn").unwrap();
        s.apply("dev_path=d.jsonl").unwrap();
        s.apply("synth_event_rate=0.5").unwrap();
        let mut t = Settings::default();
        t.parse_text(&s.to_text()).unwrap();
        assert_eq!(s, t);
    }
}

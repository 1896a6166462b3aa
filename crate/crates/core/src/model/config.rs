use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Which graph encoder sits between the input layer and the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    EeGcn,
    Gcn,
    Rgcn,
}

/// Node representation fed to the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassifierInput {
    /// Output of the last layer.
    Last,
    /// Outputs of every layer, concatenated.
    ConcatLayers,
}

impl Baseline {
    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::EeGcn => "eegcn",
            Baseline::Gcn => "gcn",
            Baseline::Rgcn => "rgcn",
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eegcn" => Ok(Baseline::EeGcn),
            "gcn" => Ok(Baseline::Gcn),
            "rgcn" => Ok(Baseline::Rgcn),
            _ => Err(Error::Argument(format!("unknown baseline `{s}`"))),
        }
    }
}

impl ClassifierInput {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierInput::Last => "last",
            ClassifierInput::ConcatLayers => "concat_layers",
        }
    }
}

impl FromStr for ClassifierInput {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(ClassifierInput::Last),
            "concat_layers" => Ok(ClassifierInput::ConcatLayers),
            _ => Err(Error::Argument(format!("unknown classifier_input `{s}`"))),
        }
    }
}

/// Model and optimisation hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub entity_dim: usize,
    pub edge_dim: usize,
    pub lstm_hidden: usize,
    pub gcn_hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub alpha: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub max_len: usize,
    pub use_typed_labels: bool,
    pub use_naeu: bool,
    pub use_bilstm: bool,
    pub naeu_masked: bool,
    pub classifier_input: ClassifierInput,
    pub baseline: Baseline,
    pub add_all_self_loops: bool,
    pub allow_unk_label: bool,
    pub max_epochs: usize,
    pub patience: usize,
    /// Global gradient-norm cap; `0` disables clipping.
    pub clip_norm: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 100,
            entity_dim: 25,
            edge_dim: 50,
            lstm_hidden: 100,
            gcn_hidden: 150,
            layers: 2,
            dropout: 0.6,
            alpha: 5.0,
            lr: 0.1,
            batch_size: 30,
            l2: 1e-5,
            max_len: 50,
            use_typed_labels: true,
            use_naeu: true,
            use_bilstm: true,
            naeu_masked: false,
            classifier_input: ClassifierInput::Last,
            baseline: Baseline::EeGcn,
            add_all_self_loops: false,
            allow_unk_label: false,
            max_epochs: 100,
            patience: 15,
            clip_norm: 5.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Argument(format!("bad value `{value}` for `{key}`")))
}

impl ModelConfig {
    /// Every key understood by [`ModelConfig::set`].
    pub const KEYS: [&'static str; 23] = [
        "word_dim",
        "entity_dim",
        "edge_dim",
        "lstm_hidden",
        "gcn_hidden",
        "layers",
        "dropout",
        "alpha",
        "lr",
        "batch_size",
        "l2",
        "max_len",
        "use_typed_labels",
        "use_naeu",
        "use_bilstm",
        "naeu_masked",
        "classifier_input",
        "baseline",
        "add_all_self_loops",
        "allow_unk_label",
        "max_epochs",
        "patience",
        "clip_norm",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "word_dim" => self.word_dim = parse(key, value)?,
            "entity_dim" => self.entity_dim = parse(key, value)?,
            "edge_dim" => self.edge_dim = parse(key, value)?,
            "lstm_hidden" => self.lstm_hidden = parse(key, value)?,
            "gcn_hidden" => self.gcn_hidden = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "l2" => self.l2 = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "use_typed_labels" => self.use_typed_labels = parse(key, value)?,
            "use_naeu" => self.use_naeu = parse(key, value)?,
            "use_bilstm" => self.use_bilstm = parse(key, value)?,
            "naeu_masked" => self.naeu_masked = parse(key, value)?,
            "classifier_input" => self.classifier_input = value.trim().parse()?,
            "baseline" => self.baseline = value.trim().parse()?,
            "add_all_self_loops" => self.add_all_self_loops = parse(key, value)?,
            "allow_unk_label" => self.allow_unk_label = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            _ => return Err(Error::Argument(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// `(key, value)` pairs in [`ModelConfig::KEYS`] order; values parse back
    /// to the same config.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let v: [String; 23] = [
            self.word_dim.to_string(),
            self.entity_dim.to_string(),
            self.edge_dim.to_string(),
            self.lstm_hidden.to_string(),
            self.gcn_hidden.to_string(),
            self.layers.to_string(),
            self.dropout.to_string(),
            self.alpha.to_string(),
            self.lr.to_string(),
            self.batch_size.to_string(),
            self.l2.to_string(),
            self.max_len.to_string(),
            self.use_typed_labels.to_string(),
            self.use_naeu.to_string(),
            self.use_bilstm.to_string(),
            self.naeu_masked.to_string(),
            self.classifier_input.as_str().to_string(),
            self.baseline.as_str().to_string(),
            self.add_all_self_loops.to_string(),
            self.allow_unk_label.to_string(),
            self.max_epochs.to_string(),
            self.patience.to_string(),
            self.clip_norm.to_string(),
        ];
        Self::KEYS.iter().copied().zip(v).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("word_dim", self.word_dim),
            ("edge_dim", self.edge_dim),
            ("gcn_hidden", self.gcn_hidden),
            ("layers", self.layers),
            ("batch_size", self.batch_size),
            ("max_len", self.max_len),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Argument(format!("`{k}` must be positive")));
            }
        }
        if self.use_bilstm && self.lstm_hidden == 0 {
            return Err(Error::Argument("`lstm_hidden` must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Argument(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !(self.alpha >= 1.0) || !self.alpha.is_finite() {
            return Err(Error::Argument(format!("alpha {} must be ≥ 1", self.alpha)));
        }
        if !(self.lr >= 0.0) || !(self.l2 >= 0.0) || !(self.clip_norm >= 0.0) {
            return Err(Error::Argument("lr, l2 and clip_norm must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_defaults() {
        let c = ModelConfig::default();
        assert_eq!((c.word_dim, c.entity_dim, c.edge_dim), (100, 25, 50));
        assert_eq!((c.lstm_hidden, c.gcn_hidden, c.layers), (100, 150, 2));
        assert_eq!((c.dropout, c.alpha, c.lr, c.l2), (0.6, 5.0, 0.1, 1e-5));
        assert_eq!((c.batch_size, c.max_len), (30, 50));
        assert_eq!(c.clip_norm, 5.0);
        c.validate().unwrap();
    }

    #[test]
    fn entries_round_trip() {
        let mut c = ModelConfig::default();
        c.set("baseline", "rgcn").unwrap();
        c.set("l2", "3e-7").unwrap();
        c.set("classifier_input", "concat_layers").unwrap();
        let mut d = ModelConfig::default();
        for (k, v) in c.entries() {
            d.set(k, &v).unwrap();
        }
        assert_eq!(c, d);
    }

    #[test]
    fn unknown_key_and_bad_value() {
        let mut c = ModelConfig::default();
        assert!(c.set("alhpa", "5").is_err());
        assert!(c.set("layers", "two").is_err());
        assert!(c.set("baseline", "gat").is_err());
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig::default();
        c.alpha = 0.5;
        assert!(c.validate().is_err());
        c = ModelConfig { dropout: 1.0, ..ModelConfig::default() };
        assert!(c.validate().is_err());
    }
}

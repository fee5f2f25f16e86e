//! Flat `key=value` run configuration and manifests.
//!
//! Lines are `key=value`; blank lines and lines starting with `#` are
//! ignored. Every key has a default, so an empty file is a valid
//! configuration. The canonical rendering lists every key in a fixed order,
//! which keeps manifests diffable and makes their hash meaningful.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::labels::Scheme;
use crate::model::{LossWeights, ModelVariant};
use crate::train::{PerturbationNorm, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: ModelVariant,
    pub scheme: Scheme,
    pub types: Vec<String>,
    pub encoder: EncoderConfig,
    pub weights: LossWeights,
    pub train: TrainConfig,
    /// Training files; each file's label availability is inferred, so full
    /// and partial data can be mixed.
    pub train_paths: Vec<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub embeddings_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: ModelVariant::TIg,
            scheme: Scheme::Bio2,
            types: vec!["positive".into(), "neutral".into(), "negative".into()],
            encoder: EncoderConfig::default(),
            weights: LossWeights::default(),
            train: TrainConfig::default(),
            train_paths: Vec::new(),
            dev_path: None,
            test_path: None,
            embeddings_path: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Sets one key; used for both file lines and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let (e, t) = (&mut self.encoder, &mut self.train);
        match key.trim() {
            "variant" => self.variant = value.parse()?,
            "scheme" => {
                self.scheme = value
                    .parse()
                    .map_err(|_| Error::Config(format!("unknown scheme `{value}`")))?
            }
            "types" => self.types = value.split_whitespace().map(String::from).collect(),
            "char_embed_dim" => e.char_embed_dim = parse(key, value)?,
            "char_hidden" => e.char_hidden = parse(key, value)?,
            "word_embed_dim" => e.word_embed_dim = parse(key, value)?,
            "word_hidden" => e.word_hidden = parse(key, value)?,
            "dropout" => e.dropout = parse(key, value)?,
            "use_highway" => e.use_highway = parse(key, value)?,
            "width_multiplier" => e.width_multiplier = parse(key, value)?,
            "fine_tune_embeddings" => e.fine_tune_embeddings = parse(key, value)?,
            "alpha" => self.weights.alpha = parse(key, value)?,
            "beta" => self.weights.beta = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "decay" => t.decay = parse(key, value)?,
            "momentum" => t.momentum = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "clip" => t.clip = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "min_epochs" => t.min_epochs = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "adversarial" => t.adversarial.enabled = parse(key, value)?,
            "epsilon" => t.adversarial.epsilon = parse(key, value)?,
            "adversarial_norm" => t.adversarial.norm = value.parse::<PerturbationNorm>()?,
            "seed" => t.seed = parse(key, value)?,
            "train" => self.train_paths = value.split(',').filter_map(|p| path(p.trim())).collect(),
            "dev" => self.dev_path = path(value),
            "test" => self.test_path = path(value),
            "embeddings" => self.embeddings_path = path(value),
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.weights.validate()?;
        self.train.validate()?;
        crate::labels::LabelSpace::new(self.scheme, &self.types)?;
        Ok(())
    }

    /// Every key in canonical order.
    pub fn to_text(&self) -> String {
        let (e, t) = (&self.encoder, &self.train);
        let pairs: Vec<(&str, String)> = vec![
            ("variant", self.variant.to_string()),
            ("scheme", self.scheme.to_string()),
            ("types", self.types.join(" ")),
            ("char_embed_dim", e.char_embed_dim.to_string()),
            ("char_hidden", e.char_hidden.to_string()),
            ("word_embed_dim", e.word_embed_dim.to_string()),
            ("word_hidden", e.word_hidden.to_string()),
            ("dropout", e.dropout.to_string()),
            ("use_highway", e.use_highway.to_string()),
            ("width_multiplier", e.width_multiplier.to_string()),
            ("fine_tune_embeddings", e.fine_tune_embeddings.to_string()),
            ("alpha", self.weights.alpha.to_string()),
            ("beta", self.weights.beta.to_string()),
            ("lr", t.lr.to_string()),
            ("decay", t.decay.to_string()),
            ("momentum", t.momentum.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("clip", t.clip.to_string()),
            ("patience", t.patience.to_string()),
            ("min_epochs", t.min_epochs.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("adversarial", t.adversarial.enabled.to_string()),
            ("epsilon", t.adversarial.epsilon.to_string()),
            ("adversarial_norm", t.adversarial.norm.to_string()),
            ("seed", t.seed.to_string()),
            ("train", self.train_paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",")),
            ("dev", show(&self.dev_path)),
            ("test", show(&self.test_path)),
            ("embeddings", show(&self.embeddings_path)),
        ];
        pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    /// The canonical rendering followed by the config hash.
    pub fn manifest(&self) -> String {
        format!(
            "# modcrf {}\n{}config_hash={}\n",
            env!("CARGO_PKG_VERSION"),
            self.to_text(),
            self.hash()
        )
    }
}

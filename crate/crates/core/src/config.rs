//! Run configuration as flat `key = value` text.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelSet;
use crate::dep::DepModelConfig;
use crate::error::{Error, Result};
use crate::rst::{DiscTree, RstModelConfig};
use crate::tensor::AdamConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Dep,
    Rst,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dep" => Ok(Task::Dep),
            "rst" => Ok(Task::Rst),
            _ => Err(Error::Config(format!("unknown task `{s}` (expected dep or rst)"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Dep => "dep",
            Task::Rst => "rst",
        })
    }
}

/// Where the discourse label inventory comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelSource {
    /// The shipped 39-label inventory.
    Full,
    /// Labels seen in the training trees, in inventory order.
    Corpus,
    /// One label per line.
    File(PathBuf),
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => LabelSource::Full,
            "corpus" => LabelSource::Corpus,
            "" => return Err(Error::Config("empty label source".into())),
            path => LabelSource::File(PathBuf::from(path)),
        })
    }
}

impl LabelSource {
    /// Builds the label set, reading the training trees for `Corpus`.
    pub fn resolve(&self, train: &[DiscTree]) -> Result<LabelSet> {
        match self {
            LabelSource::Full => Ok(LabelSet::rst_full()),
            LabelSource::File(p) => LabelSet::parse(&std::fs::read_to_string(p)?),
            LabelSource::Corpus => {
                let seen: BTreeSet<String> = train
                    .iter()
                    .flat_map(|t| t.splits().into_iter().map(|s| s.label.to_string()))
                    .collect();
                let full = LabelSet::rst_full();
                let mut names: Vec<String> = full.names().iter().filter(|n| seen.contains(*n)).cloned().collect();
                names.extend(seen.iter().filter(|n| full.get(n).is_none()).cloned());
                LabelSet::new(names)
            }
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelSource::Full => f.write_str("full"),
            LabelSource::Corpus => f.write_str("corpus"),
            LabelSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// Everything one training or parsing run needs. Defaults follow the
/// published hyper-parameter tables of each task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub threads: Option<usize>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub labels: LabelSource,
    pub beam: usize,
    /// Exclude punctuation from dependency scores.
    pub exclude_punct: bool,
    pub dep: DepModelConfig,
    pub rst: RstModelConfig,
    pub training: TrainConfig,
}

impl RunConfig {
    pub fn defaults(task: Task) -> Self {
        let training = match task {
            Task::Dep => TrainConfig::default(),
            Task::Rst => TrainConfig {
                batch_size: 64,
                adam: AdamConfig {
                    lr: 0.001,
                    beta1: 0.9,
                    beta2: 0.95,
                    ..AdamConfig::default()
                },
                l2: 0.0005,
                ..TrainConfig::default()
            },
        };
        RunConfig {
            task,
            seed: 1,
            threads: None,
            train: None,
            dev: None,
            output: None,
            embeddings: None,
            labels: LabelSource::Full,
            beam: 1,
            exclude_punct: true,
            dep: DepModelConfig::default(),
            rst: RstModelConfig::default(),
            training,
        }
    }

    /// Parses config text and applies `overrides` after it. The task is
    /// resolved first so that its defaults underlie every other key.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        pairs.extend(overrides.iter().cloned());
        let task = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "task")
            .map(|(_, v)| v.parse())
            .transpose()?
            .unwrap_or(Task::Dep);
        let mut cfg = RunConfig::defaults(task);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::Config(format!("invalid value `{v}` for `{key}`"))),
            }
        }
        fn opt_path(v: &str) -> Option<PathBuf> {
            (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
        }
        fn opt_num(key: &str, v: &str) -> Result<Option<f64>> {
            if v.is_empty() || v == "none" {
                Ok(None)
            } else {
                num(key, v).map(Some)
            }
        }
        let t = &mut self.training;
        let dep = self.task == Task::Dep;
        let d = &mut self.dep;
        let r = &mut self.rst;
        match key {
            "task" => {
                let task: Task = value.parse()?;
                if task != self.task {
                    return Err(Error::Config("task must be resolved before other keys".into()));
                }
            }
            "seed" => self.seed = num(key, value)?,
            "threads" => self.threads = if value == "none" { None } else { Some(num(key, value)?) },
            "train" => self.train = opt_path(value),
            "dev" => self.dev = opt_path(value),
            "output" => self.output = opt_path(value),
            "embeddings" => self.embeddings = opt_path(value),
            "labels" => self.labels = value.parse()?,
            "beam" => self.beam = num(key, value)?,
            "exclude_punct" => self.exclude_punct = flag(key, value)?,

            "epochs" => t.epochs = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "lr" => t.adam.lr = num(key, value)?,
            "beta1" => t.adam.beta1 = num(key, value)?,
            "beta2" => t.adam.beta2 = num(key, value)?,
            "eps" => t.adam.eps = num(key, value)?,
            "decay" => t.adam.decay = num(key, value)?,
            "clip" => t.clip = num(key, value)?,
            "patience" => t.patience = num(key, value)?,
            "l2" => t.l2 = num(key, value)?,
            "target_primary" => t.target_primary = opt_num(key, value)?,
            "target_secondary" => t.target_secondary = opt_num(key, value)?,

            "variant" if dep => d.variant = value.parse()?,
            "variant" => r.variant = value.parse()?,
            "fusion" if dep => d.fusion = value.parse()?,
            "fusion" => r.fusion = value.parse()?,
            "word_dim" if dep => d.encoder.word_dim = num(key, value)?,
            "word_dim" => r.encoder.word_dim = num(key, value)?,
            "encoder_size" if dep => d.encoder.hidden = num(key, value)?,
            "encoder_size" => r.encoder.hidden = num(key, value)?,
            "encoder_layers" if dep => d.encoder.layers = num(key, value)?,
            "encoder_layers" => r.encoder.layers = num(key, value)?,
            "decoder_layers" if dep => d.decoder_layers = num(key, value)?,
            "decoder_layers" => r.decoder_layers = num(key, value)?,
            "decoder_size" if dep => d.decoder_size = num(key, value)?,
            "decoder_size" => r.decoder_size = num(key, value)?,
            "decoder_dropout" if dep => d.decoder_dropout = num(key, value)?,
            "decoder_dropout" => r.decoder_dropout = num(key, value)?,
            "label_mlp" if dep => d.label_mlp = num(key, value)?,
            "label_mlp" => r.label_mlp = num(key, value)?,
            "classifier_dropout" if dep => d.classifier_dropout = num(key, value)?,
            "classifier_dropout" => r.classifier_dropout = num(key, value)?,
            "partial_tree" if dep => d.partial_tree = flag(key, value)?,
            "partial_tree" => r.partial_tree = flag(key, value)?,

            "pos_dim" if dep => d.encoder.pos_dim = num(key, value)?,
            "char_dim" if dep => d.encoder.char_dim = num(key, value)?,
            "char_filters" if dep => d.encoder.char_filters = num(key, value)?,
            "char_window" if dep => d.encoder.char_window = num(key, value)?,
            "embedding_dropout" if dep => d.encoder.embedding_dropout = num(key, value)?,
            "recurrent_dropout" if dep => d.encoder.recurrent_dropout = num(key, value)?,
            "layer_dropout" if dep => d.encoder.layer_dropout = num(key, value)?,
            "max_len" if dep => d.encoder.max_len = num(key, value)?,
            "arc_mlp" if dep => d.arc_mlp = num(key, value)?,
            "self_point_loss" if dep => d.self_point_loss = flag(key, value)?,

            "encoder_dropout" if !dep => r.encoder.dropout = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}` for task {}", self.task))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.beam == 0 {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be positive".into()));
        }
        let rates = match self.task {
            Task::Dep => vec![
                self.dep.encoder.embedding_dropout,
                self.dep.encoder.recurrent_dropout,
                self.dep.encoder.layer_dropout,
                self.dep.decoder_dropout,
                self.dep.classifier_dropout,
            ],
            Task::Rst => vec![self.rst.encoder.dropout, self.rst.decoder_dropout, self.rst.classifier_dropout],
        };
        if rates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::Config("dropout rates must lie in [0, 1)".into()));
        }
        if self.task == Task::Rst && self.rst.decoder_size != self.rst.encoder.hidden {
            return Err(Error::Config("discourse decoder size must equal the encoder size".into()));
        }
        Ok(())
    }

    /// Resolved configuration in the same `key = value` format, one key per
    /// line in a fixed order.
    pub fn to_text(&self) -> String {
        fn opt<T: fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
        }
        let path = |p: &Option<PathBuf>| opt(&p.as_ref().map(|p| p.display().to_string()));
        let t = &self.training;
        let mut kv: Vec<(&str, String)> = vec![
            ("task", self.task.to_string()),
            ("seed", self.seed.to_string()),
            ("threads", opt(&self.threads)),
            ("train", path(&self.train)),
            ("dev", path(&self.dev)),
            ("output", path(&self.output)),
            ("embeddings", path(&self.embeddings)),
            ("labels", self.labels.to_string()),
            ("beam", self.beam.to_string()),
            ("exclude_punct", self.exclude_punct.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("lr", t.adam.lr.to_string()),
            ("beta1", t.adam.beta1.to_string()),
            ("beta2", t.adam.beta2.to_string()),
            ("eps", t.adam.eps.to_string()),
            ("decay", t.adam.decay.to_string()),
            ("clip", t.clip.to_string()),
            ("patience", t.patience.to_string()),
            ("l2", t.l2.to_string()),
            ("target_primary", opt(&t.target_primary)),
            ("target_secondary", opt(&t.target_secondary)),
        ];
        match self.task {
            Task::Dep => {
                let d = &self.dep;
                kv.extend([
                    ("variant", d.variant.to_string()),
                    ("fusion", d.fusion.to_string()),
                    ("word_dim", d.encoder.word_dim.to_string()),
                    ("pos_dim", d.encoder.pos_dim.to_string()),
                    ("char_dim", d.encoder.char_dim.to_string()),
                    ("char_filters", d.encoder.char_filters.to_string()),
                    ("char_window", d.encoder.char_window.to_string()),
                    ("encoder_size", d.encoder.hidden.to_string()),
                    ("encoder_layers", d.encoder.layers.to_string()),
                    ("embedding_dropout", d.encoder.embedding_dropout.to_string()),
                    ("recurrent_dropout", d.encoder.recurrent_dropout.to_string()),
                    ("layer_dropout", d.encoder.layer_dropout.to_string()),
                    ("max_len", d.encoder.max_len.to_string()),
                    ("decoder_layers", d.decoder_layers.to_string()),
                    ("decoder_size", d.decoder_size.to_string()),
                    ("decoder_dropout", d.decoder_dropout.to_string()),
                    ("arc_mlp", d.arc_mlp.to_string()),
                    ("label_mlp", d.label_mlp.to_string()),
                    ("classifier_dropout", d.classifier_dropout.to_string()),
                    ("self_point_loss", d.self_point_loss.to_string()),
                    ("partial_tree", d.partial_tree.to_string()),
                ]);
            }
            Task::Rst => {
                let r = &self.rst;
                kv.extend([
                    ("variant", r.variant.to_string()),
                    ("fusion", r.fusion.to_string()),
                    ("word_dim", r.encoder.word_dim.to_string()),
                    ("encoder_size", r.encoder.hidden.to_string()),
                    ("encoder_layers", r.encoder.layers.to_string()),
                    ("encoder_dropout", r.encoder.dropout.to_string()),
                    ("decoder_layers", r.decoder_layers.to_string()),
                    ("decoder_size", r.decoder_size.to_string()),
                    ("decoder_dropout", r.decoder_dropout.to_string()),
                    ("label_mlp", r.label_mlp.to_string()),
                    ("classifier_dropout", r.classifier_dropout.to_string()),
                    ("partial_tree", r.partial_tree.to_string()),
                ]);
            }
        }
        kv.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{Fusion, Variant};

    #[test]
    fn dep_defaults() {
        let c = RunConfig::defaults(Task::Dep);
        assert_eq!(c.dep.encoder.hidden, 512);
        assert_eq!(c.dep.encoder.layers, 3);
        assert_eq!(c.dep.decoder_size, 512);
        assert_eq!(c.dep.arc_mlp, 512);
        assert_eq!(c.dep.label_mlp, 128);
        assert_eq!(c.dep.encoder.char_filters, 50);
        assert_eq!(c.dep.encoder.char_window, 3);
        assert_eq!(c.training.adam.lr, 0.01);
        assert_eq!((c.training.adam.beta1, c.training.adam.beta2), (0.9, 0.9));
        assert_eq!(c.training.adam.decay, 0.75);
        assert_eq!(c.training.clip, 5.0);
        assert_eq!(c.dep.encoder.embedding_dropout, 0.33);
    }

    #[test]
    fn rst_defaults() {
        let c = RunConfig::defaults(Task::Rst);
        assert_eq!(c.training.batch_size, 64);
        assert_eq!(c.rst.encoder.word_dim, 1024);
        assert_eq!(c.rst.encoder.hidden, 64);
        assert_eq!(c.rst.decoder_size, 64);
        assert_eq!(c.rst.encoder.dropout, 0.4);
        assert_eq!(c.rst.decoder_dropout, 0.6);
        assert_eq!(c.rst.classifier_dropout, 0.5);
        assert_eq!(c.training.adam.lr, 0.001);
        assert_eq!((c.training.adam.beta1, c.training.adam.beta2), (0.9, 0.95));
        assert_eq!(c.training.l2, 0.0005);
        assert_eq!(c.rst.fusion, Fusion::Plain);
    }

    #[test]
    fn text_round_trip() {
        for task in [Task::Dep, Task::Rst] {
            let mut c = RunConfig::defaults(task);
            c.seed = 7;
            c.training.target_primary = Some(99.0);
            c.output = Some("out dir".into());
            let text = c.to_text();
            assert_eq!(RunConfig::parse(&text, &[]).unwrap(), c);
        }
    }

    #[test]
    fn overrides_win_and_task_goes_first() {
        let text = "variant = p\n# comment\n\ntask = rst\nepochs = 3\n";
        let c = RunConfig::parse(text, &[("epochs".into(), "5".into())]).unwrap();
        assert_eq!(c.task, Task::Rst);
        assert_eq!(c.rst.variant, Variant::P);
        assert_eq!(c.training.epochs, 5);
        assert_eq!(c.training.batch_size, 64);
    }

    #[test]
    fn errors() {
        for text in ["variant = q", "bogus = 1", "epochs = x", "task = srl", "no equals sign", "beam = 0", "arc_mlp = 3\ntask = rst"] {
            assert!(matches!(RunConfig::parse(text, &[]), Err(Error::Config(_))), "{text}");
        }
    }
}

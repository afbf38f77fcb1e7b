//! JSON checkpoints: model config, vocabularies, label inventory with its
//! hash, and every parameter by name.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Task;
use crate::corpus::{LabelSet, Vocab};
use crate::dep::{DepModelConfig, DepParser};
use crate::encoder::DepVocabs;
use crate::error::{Error, Result};
use crate::rst::{RstModelConfig, RstParser};
use crate::tensor::{ParamStore, Tensor};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Dep(DepParser),
    Rst(RstParser),
}

impl Model {
    pub fn task(&self) -> Task {
        match self {
            Model::Dep(_) => Task::Dep,
            Model::Rst(_) => Task::Rst,
        }
    }

    pub fn labels(&self) -> &LabelSet {
        match self {
            Model::Dep(p) => &p.labels,
            Model::Rst(p) => &p.labels,
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            Model::Dep(p) => &p.store,
            Model::Rst(p) => &p.store,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
enum Architecture {
    Dep { config: DepModelConfig, vocabs: DepVocabs },
    Rst { config: RstModelConfig, words: Vocab },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SavedParam {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    model: Architecture,
    labels: LabelSet,
    label_hash: String,
    params: Vec<SavedParam>,
}

pub fn to_json(model: &Model) -> Result<String> {
    let (arch, labels, store) = match model {
        Model::Dep(p) => (
            Architecture::Dep {
                config: p.config.clone(),
                vocabs: p.vocabs.clone(),
            },
            &p.labels,
            &p.store,
        ),
        Model::Rst(p) => (
            Architecture::Rst {
                config: p.config.clone(),
                words: p.words.clone(),
            },
            &p.labels,
            &p.store,
        ),
    };
    let file = CheckpointFile {
        version: FORMAT_VERSION,
        model: arch,
        labels: labels.clone(),
        label_hash: labels.hash(),
        params: store
            .iter()
            .map(|(_, p)| SavedParam {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                values: p.value.data().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string(&file).map_err(|e| Error::Load(format!("cannot serialize checkpoint: {e}")))
}

/// Rebuilds the model from its stored configuration and copies parameters
/// by name. `expected_labels`, when given, must hash to the stored inventory.
pub fn from_json(text: &str, expected_labels: Option<&LabelSet>) -> Result<Model> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| Error::Load(format!("malformed checkpoint: {e}")))?;
    if file.version != FORMAT_VERSION {
        return Err(Error::Load(format!("unsupported checkpoint version {}", file.version)));
    }
    if file.labels.hash() != file.label_hash {
        return Err(Error::Load("stored label inventory does not match its hash".into()));
    }
    if let Some(l) = expected_labels {
        if l.hash() != file.label_hash {
            return Err(Error::Load(format!(
                "label inventory hash {} does not match checkpoint hash {}",
                l.hash(),
                file.label_hash
            )));
        }
    }
    let mut saved = ParamStore::new();
    for p in file.params {
        saved.add(p.name, Tensor::new(p.shape, p.values).map_err(|e| Error::Load(e.to_string()))?)?;
    }
    let mut model = match file.model {
        Architecture::Dep { config, vocabs } => Model::Dep(DepParser::new(config, vocabs, file.labels, 0)?),
        Architecture::Rst { config, words } => Model::Rst(RstParser::new(config, words, file.labels, 0)?),
    };
    let store = match &mut model {
        Model::Dep(p) => &mut p.store,
        Model::Rst(p) => &mut p.store,
    };
    if saved.len() != store.len() {
        return Err(Error::Load(format!(
            "checkpoint has {} parameters, model expects {}",
            saved.len(),
            store.len()
        )));
    }
    let missing = store.load_from(&saved);
    if !missing.is_empty() {
        return Err(Error::Load(format!("missing or mis-shaped parameters: {}", missing.join(", "))));
    }
    Ok(model)
}

pub fn save(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load(path: &Path, expected_labels: Option<&LabelSet>) -> Result<Model> {
    let text = fs::read_to_string(path)?;
    from_json(&text, expected_labels)
}

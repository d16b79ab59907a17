//! Versioned JSON checkpoints for decoders and actors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{ActorConfig, ActorModel};
use crate::autodiff::{ParamStore, Tensor};
use crate::decoder::{DecoderConfig, DecoderModel};
use crate::error::{Error, Result};

pub const FORMAT: &str = "advqec-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Decoder,
    Actor,
}

/// Where a model came from, for robust decoders and trained actors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: Kind,
    pub config: serde_json::Value,
    pub seed: u64,
    #[serde(default)]
    pub provenance: Provenance,
    pub params: Vec<StoredParam>,
}

impl Checkpoint {
    fn new(kind: Kind, config: serde_json::Value, seed: u64, provenance: Provenance, params: &ParamStore) -> Self {
        let params = params
            .iter()
            .map(|(_, p)| StoredParam { name: p.name.clone(), shape: p.value.shape().to_vec(), values: p.value.values().to_vec() })
            .collect();
        Checkpoint { format: FORMAT.into(), version: VERSION, kind, config, seed, provenance, params }
    }

    pub fn decoder(model: &DecoderModel, seed: u64, provenance: Provenance) -> Result<Self> {
        let config = serde_json::to_value(&model.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self::new(Kind::Decoder, config, seed, provenance, &model.params))
    }

    pub fn actor(model: &ActorModel, seed: u64, provenance: Provenance) -> Result<Self> {
        let config = serde_json::to_value(&model.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self::new(Kind::Actor, config, seed, provenance, &model.params))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if raw.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
            return Err(Error::Checkpoint(format!("not an {FORMAT} file")));
        }
        match raw.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(VERSION) => {}
            other => {
                return Err(Error::Checkpoint(format!("unsupported checkpoint version {other:?}, expected {VERSION}")))
            }
        }
        serde_json::from_value(raw).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn expect(&self, kind: Kind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind:?} checkpoint, found {:?}", self.kind)));
        }
        Ok(())
    }

    fn param_store(&self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for p in &self.params {
            store.insert(&p.name, Tensor::new(p.shape.clone(), p.values.clone())?)?;
        }
        Ok(store)
    }

    pub fn into_decoder(&self) -> Result<DecoderModel> {
        self.expect(Kind::Decoder)?;
        let config: DecoderConfig =
            serde_json::from_value(self.config.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        DecoderModel::from_params(config, self.param_store()?)
    }

    pub fn into_actor(&self) -> Result<ActorModel> {
        self.expect(Kind::Actor)?;
        let config: ActorConfig =
            serde_json::from_value(self.config.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ActorModel::from_params(config, self.param_store()?)
    }
}

pub fn save_decoder(path: &Path, model: &DecoderModel, seed: u64, provenance: Provenance) -> Result<()> {
    Checkpoint::decoder(model, seed, provenance)?.save(path)
}

pub fn load_decoder(path: &Path) -> Result<DecoderModel> {
    Checkpoint::load(path)?.into_decoder()
}

pub fn save_actor(path: &Path, model: &ActorModel, seed: u64, provenance: Provenance) -> Result<()> {
    Checkpoint::actor(model, seed, provenance)?.save(path)
}

pub fn load_actor(path: &Path) -> Result<ActorModel> {
    Checkpoint::load(path)?.into_actor()
}

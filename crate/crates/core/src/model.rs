//! Trained-model envelope and model file format.
//!
//! A model file is a single header line followed by a JSON body:
//!
//! ```text
//! CLADMODEL <version> <family> <body-length> <sha256-of-body>\n
//! { ...TrainedModel as JSON... }
//! ```
//!
//! * `version` is [`FORMAT_VERSION`]; other versions are rejected.
//! * `family` is `gbdt` or `mlp` and must match the body.
//! * `body-length` is the exact byte length of the body; a shorter body is
//!   reported as truncation.
//! * the digest is lowercase hex SHA-256 of the body bytes.
//!
//! Floats in the body are written in shortest round-trip form, so decoding
//! reproduces the model bit for bit.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::{costs_for, neutral_probability, CostParams};
use crate::data::CladRecord;
use crate::error::{Error, Result};
use crate::gbdt::GbdtModel;
use crate::mlp::MlpModel;

pub const MAGIC: &str = "CLADMODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Gbdt,
    Mlp,
}

impl ModelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Gbdt => "gbdt",
            ModelFamily::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbdt" => Ok(ModelFamily::Gbdt),
            "mlp" => Ok(ModelFamily::Mlp),
            other => Err(Error::config("family", format!("unknown model family `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Gbdt(GbdtModel),
    Mlp(MlpModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub learner: Learner,
    /// Cost parameters the training weights were derived from; `None` when
    /// trained with unit weights.
    pub training_costs: Option<CostParams>,
}

impl From<GbdtModel> for TrainedModel {
    fn from(m: GbdtModel) -> Self {
        TrainedModel {
            learner: Learner::Gbdt(m),
            training_costs: None,
        }
    }
}

impl From<MlpModel> for TrainedModel {
    fn from(m: MlpModel) -> Self {
        TrainedModel {
            learner: Learner::Mlp(m),
            training_costs: None,
        }
    }
}

impl TrainedModel {
    pub fn family(&self) -> ModelFamily {
        match self.learner {
            Learner::Gbdt(_) => ModelFamily::Gbdt,
            Learner::Mlp(_) => ModelFamily::Mlp,
        }
    }

    /// The learner's own output.
    pub fn raw_probability(&self, rec: &CladRecord) -> Result<f64> {
        match &self.learner {
            Learner::Gbdt(m) => m.predict_record(rec),
            Learner::Mlp(m) => m.predict_record(rec),
        }
    }

    /// Probability of a positive outcome with any training-weight shift
    /// removed; this is what decision thresholds apply to.
    pub fn probability(&self, rec: &CladRecord) -> Result<f64> {
        let raw = self.raw_probability(rec)?;
        match &self.training_costs {
            None => Ok(raw),
            Some(params) => {
                let costs = costs_for(rec.limit_before, rec.outstanding_balance, params)?;
                Ok(neutral_probability(raw, &costs))
            }
        }
    }

    /// Gain importance for tree models; empty for networks.
    pub fn top_features(&self, k: usize) -> Vec<(String, f64)> {
        match &self.learner {
            Learner::Gbdt(m) => m.top_features(k),
            Learner::Mlp(_) => Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let body = serde_json::to_vec(self).expect("model serializes");
        let digest = hex::encode(Sha256::digest(&body));
        let mut out = format!(
            "{MAGIC} {FORMAT_VERSION} {} {} {digest}\n",
            self.family(),
            body.len()
        )
        .into_bytes();
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("truncated: missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..newline])
            .map_err(|_| Error::Format("header is not utf-8".into()))?;
        let mut parts = header.split(' ');
        if parts.next() != Some(MAGIC) {
            return Err(Error::Format("bad magic header".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("unreadable format version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let family: ModelFamily = parts
            .next()
            .ok_or_else(|| Error::Format("missing model family".into()))?
            .parse()
            .map_err(|_| Error::Format("unknown model family".into()))?;
        let len: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("unreadable body length".into()))?;
        let digest = parts
            .next()
            .ok_or_else(|| Error::Format("missing checksum".into()))?;
        if parts.next().is_some() {
            return Err(Error::Format("unexpected header fields".into()));
        }

        let body = &bytes[newline + 1..];
        if body.len() < len {
            return Err(Error::Format(format!(
                "truncated: expected {len} body bytes, found {}",
                body.len()
            )));
        }
        if body.len() > len {
            return Err(Error::Format(format!(
                "{} trailing bytes after body",
                body.len() - len
            )));
        }
        if hex::encode(Sha256::digest(body)) != digest {
            return Err(Error::Format("checksum mismatch".into()));
        }
        let model: TrainedModel = serde_json::from_slice(body)
            .map_err(|e| Error::Format(format!("invalid body: {e}")))?;
        if model.family() != family {
            return Err(Error::Format(format!(
                "header says {family} but body holds {}",
                model.family()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// First 16 hex digits of the SHA-256 of the model file bytes.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))[..16].to_string()
    }
}

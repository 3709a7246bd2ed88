//! Single-file checkpoints: a magic line, one JSON header line describing the
//! architecture and tensor sizes, then the tensors as little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::network::NetConfig;
use super::policy::{GaussianPolicy, LogStdRange, ValueNet};
use crate::action::ActionPipeline;
use crate::error::{Error, Result};
use crate::sim::SensorConfig;

const MAGIC: &str = "smdpnav-checkpoint 1\n";

/// Everything needed to rebuild the networks and feed them observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub net: NetConfig,
    pub pipeline: ActionPipeline,
    pub sensor: SensorConfig,
    pub log_std_range: LogStdRange,
    /// Multiplier on the value head output.
    pub value_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub policy: GaussianPolicy,
    pub value: ValueNet,
    pub policy_opt: Adam,
    pub value_opt: Adam,
    /// Completed training epochs.
    pub epoch: u64,
    pub env_steps: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    epoch: u64,
    env_steps: u64,
    policy_opt: Adam,
    value_opt: Adam,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    fn tensors(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("policy", &self.policy.params),
            ("value", &self.value.params),
            ("policy_opt.m", &self.policy_opt.m),
            ("policy_opt.v", &self.policy_opt.v),
            ("value_opt.m", &self.value_opt.m),
            ("value_opt.v", &self.value_opt.v),
        ]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.tensors();
        let header = Header {
            spec: self.spec.clone(),
            epoch: self.epoch,
            env_steps: self.env_steps,
            policy_opt: self.policy_opt.clone(),
            value_opt: self.value_opt.clone(),
            tensors: tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.to_string(),
                    len: t.len(),
                })
                .collect(),
        };
        let mut bytes = MAGIC.as_bytes().to_vec();
        bytes.extend(serde_json::to_string(&header)?.as_bytes());
        bytes.push(b'\n');
        for (_, t) in tensors {
            for x in t {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC.as_bytes())
            .ok_or_else(|| Error::Checkpoint("missing magic line".into()))?;
        let newline = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("missing header".into()))?;
        let header: Header = serde_json::from_slice(&rest[..newline])?;
        let mut body = &rest[newline + 1..];
        let mut tensors = Vec::new();
        for entry in &header.tensors {
            let n_bytes = entry.len * 8;
            if body.len() < n_bytes {
                return Err(Error::Checkpoint(format!("tensor {} truncated", entry.name)));
            }
            let (chunk, tail) = body.split_at(n_bytes);
            tensors.push(
                chunk
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                    .collect::<Vec<f64>>(),
            );
            body = tail;
        }
        if !body.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len())));
        }
        let expected = ["policy", "value", "policy_opt.m", "policy_opt.v", "value_opt.m", "value_opt.v"];
        let names: Vec<&str> = header.tensors.iter().map(|t| t.name.as_str()).collect();
        if names != expected {
            return Err(Error::Checkpoint(format!("unexpected tensors {names:?}")));
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("tensor count checked");
        let spec = header.spec;
        let action_dim = spec.pipeline.raw_dim();
        let policy = GaussianPolicy::from_params(spec.net.clone(), action_dim, next(), spec.log_std_range)?;
        let value = ValueNet::from_params(spec.net.clone(), spec.value_scale, next())?;
        let mut policy_opt = header.policy_opt;
        policy_opt.m = next();
        policy_opt.v = next();
        let mut value_opt = header.value_opt;
        value_opt.m = next();
        value_opt.v = next();
        if policy_opt.m.len() != policy.params.len() || value_opt.m.len() != value.params.len() {
            return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
        }
        Ok(Self {
            spec,
            policy,
            value,
            policy_opt,
            value_opt,
            epoch: header.epoch,
            env_steps: header.env_steps,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

//! Binary checkpoints. All integers and reals are little-endian.
//!
//! | field            | encoding                                               |
//! |------------------|--------------------------------------------------------|
//! | magic            | 4 bytes `VGCK`                                          |
//! | version          | u32, currently 1                                        |
//! | config           | u32 length + UTF-8 JSON of the model config             |
//! | parameter count  | u32                                                     |
//! | each parameter   | u32 name length, name, u32 rank, rank × u64 dims, f64s  |
//! | priors           | u32 C, C × f64 prevalence, u32 length + source string   |
//! | optimizer flag   | u8, 0 or 1                                              |
//! | optimizer state  | u64 step, f64 β₁, β₂, ε, then m and v for each parameter |
//!
//! Parameters appear in canonical order: trunk layers, view branch layers,
//! then each expert, each layer as weight then bias.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{AttributePriors, Model, ModelConfig, ModelParams};
use crate::tensor::Tensor;

use super::adam::{AdamConfig, OptimState};

pub const MAGIC: &[u8; 4] = b"VGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub priors: AttributePriors,
    pub optim: Option<OptimState>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_reals(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(
            &mut out,
            &serde_json::to_string(&self.model.config).expect("config serializes"),
        );
        let layout = self.model.config.param_layout();
        let tensors = self.model.params.tensors();
        put_u32(&mut out, tensors.len());
        for ((name, _, _), t) in layout.iter().zip(&tensors) {
            put_str(&mut out, name);
            put_u32(&mut out, t.shape().len());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_reals(&mut out, t.data());
        }
        put_u32(&mut out, self.priors.prevalence.len());
        put_reals(&mut out, &self.priors.prevalence);
        put_str(&mut out, &self.priors.source);
        match &self.optim {
            None => out.push(0),
            Some(st) => {
                out.push(1);
                out.extend_from_slice(&st.t.to_le_bytes());
                put_reals(&mut out, &[st.hyper.beta1, st.hyper.beta2, st.hyper.eps]);
                for (m, v) in st.m.iter().zip(&st.v) {
                    put_reals(&mut out, m.data());
                    put_reals(&mut out, v.data());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::format_at_offset(0, "not a checkpoint (bad magic)"));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let at = r.pos;
        let config_text = r.string("config")?;
        let config: ModelConfig = serde_json::from_str(&config_text)
            .map_err(|e| Error::format_at_offset(at, format!("bad config: {e}")))?;
        config
            .validate()
            .map_err(|e| Error::format_at_offset(at, format!("invalid config: {e}")))?;

        let layout = config.param_layout();
        let at = r.pos;
        let count = r.u32("parameter count")? as usize;
        if count != layout.len() {
            return Err(Error::format_at_offset(
                at,
                format!("{count} parameter arrays, config implies {}", layout.len()),
            ));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, _, shape) in &layout {
            let at = r.pos;
            let stored = r.string("parameter name")?;
            if &stored != name {
                return Err(Error::format_at_offset(
                    at,
                    format!("expected parameter `{name}`, found `{stored}`"),
                ));
            }
            let rank = r.u32("rank")? as usize;
            if rank == 0 || rank > 3 {
                return Err(Error::format_at_offset(
                    r.pos - 4,
                    format!("bad rank {rank}"),
                ));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u64("dimension")? as usize);
            }
            if &dims != shape {
                return Err(Error::ShapeMismatch {
                    group: name.clone(),
                    expected: shape.clone(),
                    found: dims,
                });
            }
            let data = r.reals(dims.iter().product(), "parameter data")?;
            tensors.push(Tensor::new(dims, data)?);
        }
        let params = ModelParams::from_tensors(&config, tensors)?;

        let c = r.u32("prior count")? as usize;
        let prevalence = r.reals(c, "priors")?;
        let source = r.string("prior source")?;

        let at = r.pos;
        let optim = match r.take(1, "optimizer flag")?[0] {
            0 => None,
            1 => {
                let t = r.u64("optimizer step")?;
                let h = r.reals(3, "optimizer hyperparameters")?;
                let mut m = Vec::new();
                let mut v = Vec::new();
                for p in params.tensors() {
                    m.push(Tensor::new(
                        p.shape().to_vec(),
                        r.reals(p.len(), "first moment")?,
                    )?);
                    v.push(Tensor::new(
                        p.shape().to_vec(),
                        r.reals(p.len(), "second moment")?,
                    )?);
                }
                Some(OptimState {
                    m,
                    v,
                    t,
                    hyper: AdamConfig {
                        beta1: h[0],
                        beta2: h[1],
                        eps: h[2],
                    },
                })
            }
            other => {
                return Err(Error::format_at_offset(
                    at,
                    format!("bad optimizer flag {other}"),
                ))
            }
        };
        if r.pos != bytes.len() {
            return Err(Error::format_at_offset(r.pos, "trailing bytes"));
        }
        Ok(Checkpoint {
            model: Model { config, params },
            priors: AttributePriors { prevalence, source },
            optim,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks that the stored model matches `expected`, naming the
    /// first parameter array whose shape differs.
    pub fn load_for(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        ensure_same_layout(expected, &ck.model.config)?;
        Ok(ck)
    }
}

pub fn ensure_same_layout(expected: &ModelConfig, found: &ModelConfig) -> Result<()> {
    let a = expected.param_layout();
    let b = found.param_layout();
    for (i, (name, _, shape)) in a.iter().enumerate() {
        match b.get(i) {
            Some((n2, _, s2)) if n2 == name && s2 == shape => {}
            Some((_, _, s2)) => {
                return Err(Error::ShapeMismatch {
                    group: name.clone(),
                    expected: shape.clone(),
                    found: s2.clone(),
                })
            }
            None => {
                return Err(Error::ShapeMismatch {
                    group: name.clone(),
                    expected: shape.clone(),
                    found: Vec::new(),
                })
            }
        }
    }
    if let Some((name, _, shape)) = b.get(a.len()) {
        return Err(Error::ShapeMismatch {
            group: name.clone(),
            expected: Vec::new(),
            found: shape.clone(),
        });
    }
    Ok(())
}

/// Checks a model against data dimensions, naming the offending array.
pub fn ensure_data_dims(
    config: &ModelConfig,
    feature_dim: usize,
    attribute_count: usize,
) -> Result<()> {
    let layout = config.param_layout();
    if feature_dim != config.input_dim {
        let (name, _, shape) = &layout[0];
        return Err(Error::ShapeMismatch {
            group: name.clone(),
            expected: shape.clone(),
            found: vec![feature_dim, shape[1]],
        });
    }
    if attribute_count != config.attribute_count {
        let (name, _, shape) = layout
            .iter()
            .rev()
            .find(|(n, _, _)| n.starts_with("expert"))
            .expect("at least one expert");
        return Err(Error::ShapeMismatch {
            group: name.clone(),
            expected: shape.clone(),
            found: vec![attribute_count],
        });
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format_at_offset(
                self.pos,
                format!("truncated while reading {what}"),
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let at = self.pos;
        let n = self.u32(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::format_at_offset(at, format!("{what} is not UTF-8")))
    }

    fn reals(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::format_at_offset(self.pos, format!("{what} too large")))?;
        let raw = self.take(len, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut cfg = ModelConfig::new(4, 3);
        cfg.trunk_widths = vec![5, 6];
        let model = Model::init(cfg, 3).unwrap();
        let optim = OptimState::new(&model.params, AdamConfig::default());
        Checkpoint {
            model,
            priors: AttributePriors {
                prevalence: vec![0.1, 0.2, 0.7],
                source: "0123456789abcdef".into(),
            },
            optim: Some(optim),
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn every_truncation_is_a_format_error() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 7, 20, bytes.len() / 2, bytes.len() - 1] {
            match Checkpoint::from_bytes(&bytes[..cut]) {
                Err(Error::Format { location, .. }) => assert!(location.starts_with("byte offset")),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[4] = 7;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Version {
                found: 7,
                expected: 1
            })
        ));
    }

    #[test]
    fn other_config_names_group() {
        let ck = sample();
        let mut other = ck.model.config.clone();
        other.expert_widths = vec![8];
        match ensure_same_layout(&other, &ck.model.config) {
            Err(Error::ShapeMismatch { group, .. }) => assert_eq!(group, "expert0.0.weight"),
            e => panic!("{e:?}"),
        }
        match ensure_data_dims(&ck.model.config, 4, 5) {
            Err(Error::ShapeMismatch { group, .. }) => assert!(group.ends_with(".bias"), "{group}"),
            e => panic!("{e:?}"),
        }
    }
}

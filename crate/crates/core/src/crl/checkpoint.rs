//! Checkpoints: a versioned little-endian binary file with every parameter
//! tensor, plus a JSON sidecar with the trainer config and RNG position.
//!
//! Binary layout: magic `HPCKPT01`, `u32` format version, `u32` tensor count,
//! then per tensor a `u32` name length, the UTF-8 name, a `u32` rank, `u64`
//! dimensions and the `f64` values in row-major order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{Agent, TrainerConfig};
use super::mlp::{Dense, Mlp};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HPCKPT01";
pub const FORMAT_VERSION: u32 = 1;

/// Position of the trainer's ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    /// Word position, as a decimal string because it is 128 bits wide.
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

mod u128_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub trainer: TrainerConfig,
    pub episode: usize,
    pub env_steps: usize,
    pub log_alpha: f64,
    pub beta_raw: f64,
    pub rng: RngState,
    pub tensors: Vec<String>,
}

/// `<path>.json` next to a checkpoint file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn named_nets(agent: &Agent) -> Vec<(String, &Mlp)> {
    let mut v = vec![("actor".to_string(), &agent.actor)];
    for k in 0..2 {
        v.push((format!("qr{k}"), &agent.qr[k]));
        v.push((format!("qr{k}_target"), &agent.qr_target[k]));
    }
    if let Some((online, target)) = &agent.qc {
        for k in 0..2 {
            v.push((format!("qc{k}"), &online[k]));
            v.push((format!("qc{k}_target"), &target[k]));
        }
    }
    v
}

enum Tensor {
    Matrix(Array2<f64>),
    Vector(Array1<f64>),
}

fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn save_checkpoint(path: &Path, agent: &Agent, episode: usize, env_steps: usize, rng: RngState) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    write_u32(&mut buf, FORMAT_VERSION);
    let nets = named_nets(agent);
    let mut names = Vec::new();
    let count: usize = nets.iter().map(|(_, m)| 2 * m.layers.len()).sum();
    write_u32(&mut buf, count as u32);
    for (prefix, net) in &nets {
        for (i, l) in net.layers.iter().enumerate() {
            for (suffix, shape, data) in [
                ("w", vec![l.w.nrows(), l.w.ncols()], l.w.iter().copied().collect::<Vec<_>>()),
                ("b", vec![l.b.len()], l.b.to_vec()),
            ] {
                let name = format!("{prefix}.{i}.{suffix}");
                write_u32(&mut buf, name.len() as u32);
                buf.extend_from_slice(name.as_bytes());
                write_u32(&mut buf, shape.len() as u32);
                for d in shape {
                    buf.extend_from_slice(&(d as u64).to_le_bytes());
                }
                for v in data {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                names.push(name);
            }
        }
    }
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))?;
    let sidecar = Sidecar {
        format_version: FORMAT_VERSION,
        trainer: agent.cfg.clone(),
        episode,
        env_steps,
        log_alpha: agent.log_alpha,
        beta_raw: agent.beta_raw,
        rng,
        tensors: names,
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Json {
        path: side.clone(),
        source: e,
    })?;
    fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Parse {
                path: self.path.to_path_buf(),
                line: 0,
                reason: format!("truncated checkpoint at byte {}", self.pos),
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: reason.into(),
    }
}

fn read_tensors(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let mut data = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path, e))?;
    let mut r = Reader { data: &data, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(bad(path, "not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(bad(path, format!("unsupported format version {version}")));
    }
    let count = r.u32()?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| bad(path, "tensor name is not UTF-8"))?;
        let rank = r.u32()?;
        let dims: Vec<usize> = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.data.len() - r.pos))
            .ok_or_else(|| bad(path, format!("tensor {name} larger than the file")))?;
        let values: Vec<f64> = (0..n).map(|_| r.f64()).collect::<Result<_>>()?;
        let t = match dims.as_slice() {
            [rows, cols] => Tensor::Matrix(Array2::from_shape_vec((*rows, *cols), values).expect("sized")),
            [_] => Tensor::Vector(Array1::from(values)),
            _ => return Err(bad(path, format!("tensor {name} has rank {rank}"))),
        };
        out.insert(name, t);
    }
    if r.pos != data.len() {
        return Err(bad(path, "trailing bytes after last tensor"));
    }
    Ok(out)
}

fn take_net(tensors: &mut BTreeMap<String, Tensor>, prefix: &str, path: &Path) -> Result<Option<Mlp>> {
    let mut layers = Vec::new();
    loop {
        let i = layers.len();
        let w = tensors.remove(&format!("{prefix}.{i}.w"));
        let b = tensors.remove(&format!("{prefix}.{i}.b"));
        match (w, b) {
            (Some(Tensor::Matrix(w)), Some(Tensor::Vector(b))) if w.ncols() == b.len() => layers.push(Dense { w, b }),
            (None, None) => break,
            _ => return Err(bad(path, format!("malformed layer {prefix}.{i}"))),
        }
    }
    Ok((!layers.is_empty()).then_some(Mlp { layers }))
}

pub fn load_sidecar(path: &Path) -> Result<Sidecar> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: side, source: e })
}

/// Restore the networks and scalar parameters. Optimizer moments are not
/// stored, so a restored agent continues with fresh moment estimates.
pub fn load_checkpoint(path: &Path) -> Result<(Agent, Sidecar)> {
    let side = load_sidecar(path)?;
    let mut tensors = read_tensors(path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(side.rng.seed);
    let mut agent = Agent::new(side.trainer.clone(), &mut rng)?;
    let mut need = |name: &str| -> Result<Mlp> {
        take_net(&mut tensors, name, path)?.ok_or_else(|| bad(path, format!("missing network {name}")))
    };
    let mut restore = |slot: &mut Mlp, name: &str| -> Result<()> {
        let net = need(name)?;
        if net.sizes() != slot.sizes() {
            return Err(bad(path, format!("network {name} has sizes {:?}, config expects {:?}", net.sizes(), slot.sizes())));
        }
        *slot = net;
        Ok(())
    };
    restore(&mut agent.actor, "actor")?;
    for k in 0..2 {
        restore(&mut agent.qr[k], &format!("qr{k}"))?;
        restore(&mut agent.qr_target[k], &format!("qr{k}_target"))?;
    }
    if let Some((online, target)) = agent.qc.as_mut() {
        for k in 0..2 {
            restore(&mut online[k], &format!("qc{k}"))?;
            restore(&mut target[k], &format!("qc{k}_target"))?;
        }
    }
    agent.log_alpha = side.log_alpha;
    agent.beta_raw = side.beta_raw;
    Ok((agent, side))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crl::agent::Algorithm;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt").join("agent.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = TrainerConfig {
            algorithm: Algorithm::SacLag,
            hidden: vec![6, 5],
            ..Default::default()
        };
        let mut agent = Agent::new(cfg, &mut rng).unwrap();
        agent.log_alpha = -1.25;
        let state = RngState {
            seed: 4,
            stream: 0,
            word_pos: u128::MAX - 3,
        };
        save_checkpoint(&path, &agent, 7, 672, state).unwrap();
        let (back, side) = load_checkpoint(&path).unwrap();
        assert_eq!(back.actor, agent.actor);
        assert_eq!(back.qr, agent.qr);
        assert_eq!(back.qc, agent.qc);
        assert_eq!(back.log_alpha, -1.25);
        assert_eq!(side.rng, state);
        assert_eq!((side.episode, side.env_steps), (7, 672));
        assert_eq!(side.tensors.len(), 9 * 3 * 2);
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = TrainerConfig {
            algorithm: Algorithm::SacPenalty { penalty: 2.0 },
            hidden: vec![3],
            ..Default::default()
        };
        let agent = Agent::new(cfg, &mut rng).unwrap();
        let st = RngState { seed: 0, stream: 0, word_pos: 0 };
        save_checkpoint(&path, &agent, 0, 0, st).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_checkpoint(&path).is_err());
        fs::write(&path, b"garbage!").unwrap();
        assert!(load_checkpoint(&path).is_err());
        assert!(load_checkpoint(&dir.path().join("missing.bin")).is_err());
    }
}

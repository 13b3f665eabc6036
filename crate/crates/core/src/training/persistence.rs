//! Model files.
//!
//! Layout (little-endian): the magic bytes `TJF1`, a `u64` byte length, that many
//! bytes of UTF-8 metadata (one record per line), the raw `f64` parameter arrays in
//! the order the metadata declares them, and finally the SHA-256 of everything
//! before it. Reals in the metadata are written with Rust's shortest round-trip
//! formatting, so loading restores every value bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Ablation, ClusterModelSet};
use crate::clustering::ClusterDescriptor;
use crate::data::{NormalizationTransform, Point};
use crate::error::{Error, Result};
use crate::model::{AttentionMode, ModelConfig, OutputMode, PredictionModel};
use crate::numerics::{Matrix, ParameterStore};

pub const MAGIC: &[u8; 4] = b"TJF1";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

fn model_key(cluster: Option<i64>) -> String {
    cluster.map_or_else(|| "single".to_string(), |c| c.to_string())
}

fn models_in_order(set: &ClusterModelSet) -> Vec<(Option<i64>, &PredictionModel)> {
    let mut out: Vec<_> = set.models.iter().map(|(&k, m)| (Some(k), m)).collect();
    if let Some(m) = &set.single_model {
        out.push((None, m));
    }
    out
}

/// Serializes a model set to bytes.
pub fn write_model(set: &ClusterModelSet) -> Result<Vec<u8>> {
    set.validate()?;
    let mut meta = String::new();
    let t = &set.transform;
    // Writing to a String cannot fail.
    let _ = writeln!(meta, "format_version {FORMAT_VERSION}");
    let _ = writeln!(meta, "ablation {}", set.ablation.as_str());
    let _ = writeln!(meta, "transform {:?} {:?} {:?}", t.origin.x, t.origin.y, t.scale);
    for d in &set.descriptors {
        let _ = write!(meta, "descriptor {} {} {}", d.cluster_id, d.member_count, d.centroid_observed.len());
        for p in &d.centroid_observed {
            let _ = write!(meta, " {:?} {:?}", p.x, p.y);
        }
        meta.push('\n');
    }
    let models = models_in_order(set);
    for (key, m) in &models {
        let c = &m.config;
        let _ = writeln!(
            meta,
            "model {} {} {} {} {} {} {} {}",
            model_key(*key),
            c.hidden_size,
            c.embedding_size,
            c.t_obs,
            c.t_pred,
            c.mode.as_str(),
            c.output.as_str(),
            c.normalize_hardwired
        );
    }
    for (key, m) in &models {
        for (name, p) in m.params.iter() {
            let (rows, cols) = p.value.shape();
            let _ = writeln!(meta, "param {} {name} {rows} {cols}", model_key(*key));
        }
    }

    let mut bytes = Vec::with_capacity(meta.len() + 64);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    bytes.extend_from_slice(meta.as_bytes());
    for (_, m) in &models {
        for (_, p) in m.params.iter() {
            for v in p.value.as_slice() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest[..]);
    Ok(bytes)
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

fn field<'a, T: std::str::FromStr>(it: &mut impl Iterator<Item = &'a str>, what: &str, line: usize) -> Result<T> {
    let tok = it
        .next()
        .ok_or_else(|| corrupt(format!("metadata line {line}: missing {what}")))?;
    tok.parse()
        .map_err(|_| corrupt(format!("metadata line {line}: bad {what} {tok:?}")))
}

fn parse_key(s: &str, line: usize) -> Result<Option<i64>> {
    if s == "single" {
        Ok(None)
    } else {
        s.parse()
            .map(Some)
            .map_err(|_| corrupt(format!("metadata line {line}: bad model key {s:?}")))
    }
}

/// Parses bytes produced by [`write_model`]. Nothing is returned unless the whole
/// file checks out.
pub fn read_model(bytes: &[u8]) -> Result<ClusterModelSet> {
    let header = MAGIC.len() + 8;
    if bytes.len() < header + DIGEST_LEN {
        return Err(corrupt(format!("file is {} bytes, too short for a model", bytes.len())));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("missing TJF1 magic; not a model file"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body)[..] != *digest {
        return Err(corrupt("checksum mismatch; file is truncated or corrupted"));
    }
    let meta_len = u64::from_le_bytes(bytes[MAGIC.len()..header].try_into().expect("8 bytes")) as usize;
    let meta_end = header
        .checked_add(meta_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| corrupt("metadata length exceeds file size"))?;
    let meta = std::str::from_utf8(&body[header..meta_end]).map_err(|_| corrupt("metadata is not UTF-8"))?;

    let mut version = None;
    let mut ablation = None;
    let mut transform = None;
    let mut descriptors = Vec::new();
    let mut configs: BTreeMap<Option<i64>, ModelConfig> = BTreeMap::new();
    let mut model_order = Vec::new();
    let mut params: Vec<(Option<i64>, String, usize, usize)> = Vec::new();

    for (idx, text) in meta.lines().enumerate() {
        let line = idx + 1;
        let mut it = text.split_ascii_whitespace();
        let Some(kind) = it.next() else { continue };
        match kind {
            "format_version" => version = Some(field::<u32>(&mut it, "version", line)?),
            "ablation" => {
                let s: String = field(&mut it, "ablation", line)?;
                ablation = Some(Ablation::parse(&s).map_err(|e| corrupt(e.to_string()))?);
            }
            "transform" => {
                let ox = field(&mut it, "origin x", line)?;
                let oy = field(&mut it, "origin y", line)?;
                let scale = field(&mut it, "scale", line)?;
                transform = Some(NormalizationTransform {
                    origin: Point::new(ox, oy),
                    scale,
                });
            }
            "descriptor" => {
                let cluster_id = field(&mut it, "cluster id", line)?;
                let member_count = field(&mut it, "member count", line)?;
                let n: usize = field(&mut it, "centroid length", line)?;
                let centroid_observed = (0..n)
                    .map(|_| Ok(Point::new(field(&mut it, "x", line)?, field(&mut it, "y", line)?)))
                    .collect::<Result<Vec<_>>>()?;
                descriptors.push(ClusterDescriptor {
                    cluster_id,
                    centroid_observed,
                    member_count,
                });
            }
            "model" => {
                let key = parse_key(&field::<String>(&mut it, "model key", line)?, line)?;
                let config = ModelConfig {
                    hidden_size: field(&mut it, "hidden size", line)?,
                    embedding_size: field(&mut it, "embedding size", line)?,
                    t_obs: field(&mut it, "t_obs", line)?,
                    t_pred: field(&mut it, "t_pred", line)?,
                    mode: AttentionMode::parse(&field::<String>(&mut it, "mode", line)?)
                        .map_err(|e| corrupt(e.to_string()))?,
                    output: OutputMode::parse(&field::<String>(&mut it, "output", line)?)
                        .map_err(|e| corrupt(e.to_string()))?,
                    normalize_hardwired: field(&mut it, "normalize flag", line)?,
                };
                if configs.insert(key, config).is_some() {
                    return Err(corrupt(format!("metadata line {line}: duplicate model")));
                }
                model_order.push(key);
            }
            "param" => {
                let key = parse_key(&field::<String>(&mut it, "model key", line)?, line)?;
                let name = field(&mut it, "name", line)?;
                let rows = field(&mut it, "rows", line)?;
                let cols = field(&mut it, "cols", line)?;
                params.push((key, name, rows, cols));
            }
            other => return Err(corrupt(format!("metadata line {line}: unknown record {other:?}"))),
        }
    }
    match version {
        Some(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(corrupt(format!(
                "format version {v} is not supported (expected {FORMAT_VERSION})"
            )))
        }
        None => return Err(corrupt("metadata has no format_version")),
    }
    let ablation = ablation.ok_or_else(|| corrupt("metadata has no ablation"))?;
    let transform = transform.ok_or_else(|| corrupt("metadata has no transform"))?;

    let mut data = &body[meta_end..];
    let mut stores: BTreeMap<Option<i64>, ParameterStore> = BTreeMap::new();
    for (key, name, rows, cols) in params {
        if !configs.contains_key(&key) {
            return Err(corrupt(format!("parameter {name} belongs to undeclared model {}", model_key(key))));
        }
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n > 0)
            .ok_or_else(|| corrupt(format!("parameter {name} has invalid shape {rows}x{cols}")))?;
        let needed = n * 8;
        if data.len() < needed {
            return Err(corrupt(format!("parameter data for {name} is truncated")));
        }
        let values = data[..needed]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        data = &data[needed..];
        stores
            .entry(key)
            .or_default()
            .insert(name, Matrix::from_vec(rows, cols, values)?)
            .map_err(|e| corrupt(e.to_string()))?;
    }
    if !data.is_empty() {
        return Err(corrupt(format!("{} unexpected bytes after parameter data", data.len())));
    }

    let mut models = BTreeMap::new();
    let mut single_model = None;
    for key in model_order {
        let config = configs[&key];
        let params = stores.remove(&key).unwrap_or_default();
        let model = PredictionModel { config, params };
        model
            .ids()
            .map_err(|e| corrupt(format!("model {}: {e}", model_key(key))))?;
        match key {
            Some(c) => {
                models.insert(c, model);
            }
            None => single_model = Some(model),
        }
    }
    let set = ClusterModelSet {
        ablation,
        transform,
        descriptors,
        models,
        single_model,
    };
    set.validate().map_err(|e| corrupt(e.to_string()))?;
    Ok(set)
}

pub fn save_model(set: &ClusterModelSet, path: impl AsRef<Path>) -> Result<()> {
    let bytes = write_model(set)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClusterModelSet> {
    let bytes = fs::read(path)?;
    read_model(&bytes)
}

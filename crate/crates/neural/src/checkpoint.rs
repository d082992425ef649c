//! Versioned binary model container.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` manifest length, JSON
//! manifest, then every tensor listed in the manifest as little-endian `f64`
//! values in manifest order. All integers are little-endian.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cnn::{Cnn, CnnSpec};
use crate::error::{Error, Result};
use crate::gan::{Gan, GanSpec};
use crate::network::Network;
use crate::optim::Adam;
use crate::real::Real;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"CHESTCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Gan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Param,
    AdamM,
    AdamV,
    Buffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub tag: String,
    pub role: Role,
    pub shape: [usize; 4],
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: ModelKind,
    /// Precision the model was trained in; payloads are always `f64`.
    pub dtype: String,
    pub spec: serde_json::Value,
    pub optimizers: BTreeMap<String, Adam>,
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<TensorEntry>,
}

/// Models that can be written to and rebuilt from a checkpoint.
pub trait Checkpointable<T: Real>: Network<T> + Sized {
    const KIND: ModelKind;
    fn spec_value(&self) -> serde_json::Value;
    fn from_spec(spec: &serde_json::Value) -> Result<Self>;
    fn optimizers(&self) -> BTreeMap<String, Adam>;
    fn set_optimizers(&mut self, opts: &BTreeMap<String, Adam>) -> Result<()>;
}

fn spec_err(e: serde_json::Error) -> Error {
    Error::Checkpoint(format!("bad model spec: {e}"))
}

fn take_opt(opts: &BTreeMap<String, Adam>, key: &str) -> Result<Adam> {
    opts.get(key)
        .cloned()
        .ok_or_else(|| Error::Checkpoint(format!("missing optimizer state {key:?}")))
}

impl<T: Real> Checkpointable<T> for Cnn<T> {
    const KIND: ModelKind = ModelKind::Cnn;

    fn spec_value(&self) -> serde_json::Value {
        serde_json::to_value(&self.spec).expect("spec serializes")
    }

    fn from_spec(spec: &serde_json::Value) -> Result<Self> {
        let spec: CnnSpec = serde_json::from_value(spec.clone()).map_err(spec_err)?;
        Cnn::new(spec, 0)
    }

    fn optimizers(&self) -> BTreeMap<String, Adam> {
        BTreeMap::from([("cnn".to_string(), self.optimizer.clone())])
    }

    fn set_optimizers(&mut self, opts: &BTreeMap<String, Adam>) -> Result<()> {
        self.optimizer = take_opt(opts, "cnn")?;
        Ok(())
    }
}

impl<T: Real> Checkpointable<T> for Gan<T> {
    const KIND: ModelKind = ModelKind::Gan;

    fn spec_value(&self) -> serde_json::Value {
        serde_json::to_value(&self.spec).expect("spec serializes")
    }

    fn from_spec(spec: &serde_json::Value) -> Result<Self> {
        let spec: GanSpec = serde_json::from_value(spec.clone()).map_err(spec_err)?;
        Gan::new(spec, 0)
    }

    fn optimizers(&self) -> BTreeMap<String, Adam> {
        BTreeMap::from([
            ("discriminator".to_string(), self.disc_optimizer.clone()),
            ("generator".to_string(), self.gen_optimizer.clone()),
        ])
    }

    fn set_optimizers(&mut self, opts: &BTreeMap<String, Adam>) -> Result<()> {
        self.gen_optimizer = take_opt(opts, "generator")?;
        self.disc_optimizer = take_opt(opts, "discriminator")?;
        Ok(())
    }
}

fn entries<T: Real, M: Checkpointable<T>>(model: &M) -> Vec<(TensorEntry, &Tensor<T>)> {
    let mut out = Vec::new();
    for p in model.params() {
        for (role, t) in [(Role::Param, &p.value), (Role::AdamM, &p.adam_m), (Role::AdamV, &p.adam_v)] {
            let entry = TensorEntry {
                name: p.name.clone(),
                tag: p.tag.clone(),
                role,
                shape: t.shape(),
                trainable: p.trainable,
            };
            out.push((entry, t));
        }
    }
    for b in model.buffers() {
        let entry = TensorEntry {
            name: b.name.clone(),
            tag: b.tag.clone(),
            role: Role::Buffer,
            shape: b.value.shape(),
            trainable: false,
        };
        out.push((entry, &b.value));
    }
    out
}

pub fn write<T: Real, M: Checkpointable<T>>(
    model: &M,
    metadata: &BTreeMap<String, String>,
    mut w: impl Write,
) -> Result<()> {
    let list = entries(model);
    let manifest = Manifest {
        model: M::KIND,
        dtype: T::NAME.to_string(),
        spec: model.spec_value(),
        optimizers: model.optimizers(),
        metadata: metadata.clone(),
        tensors: list.iter().map(|(e, _)| e.clone()).collect(),
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, t) in list {
        for v in t.data() {
            w.write_all(&v.f64().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save<T: Real, M: Checkpointable<T>>(model: &M, metadata: &BTreeMap<String, String>, path: &Path) -> Result<()> {
    write(model, metadata, BufWriter::new(File::create(path)?))
}

pub fn read_manifest(mut r: impl Read) -> Result<Manifest> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let version = u32::from_le_bytes(u32b);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b)?;
    let len = u64::from_le_bytes(u64b);
    if len > (1 << 30) {
        return Err(Error::Checkpoint(format!("manifest length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)?;
    serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))
}

/// Reads a model of kind `M`, returning it with the stored metadata.
pub fn read<T: Real, M: Checkpointable<T>>(mut r: impl Read) -> Result<(M, Manifest)> {
    let manifest = read_manifest(&mut r)?;
    if manifest.model != M::KIND {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds a {:?} model, expected {:?}",
            manifest.model,
            M::KIND
        )));
    }
    let mut model = M::from_spec(&manifest.spec)?;
    model.set_optimizers(&manifest.optimizers)?;
    let expected: Vec<TensorEntry> = entries(&model).into_iter().map(|(e, _)| e).collect();
    let layout = |e: &TensorEntry| (e.name.clone(), e.role, e.shape);
    if expected.len() != manifest.tensors.len()
        || expected.iter().zip(&manifest.tensors).any(|(a, b)| layout(a) != layout(b))
    {
        return Err(Error::Checkpoint("tensor list does not match the model spec".into()));
    }
    let mut payload = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let vals: Vec<T> = bytes
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        payload.push(Tensor::from_vec(e.shape, vals)?);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }

    let mut it = manifest.tensors.iter().zip(payload);
    for p in model.params_mut() {
        let (entry, value) = it.next().expect("length checked");
        p.value = value;
        p.trainable = entry.trainable;
        p.adam_m = it.next().expect("length checked").1;
        p.adam_v = it.next().expect("length checked").1;
    }
    for b in model.buffers_mut() {
        b.value = it.next().expect("length checked").1;
    }
    Ok((model, manifest))
}

pub fn load<T: Real, M: Checkpointable<T>>(path: &Path) -> Result<(M, Manifest)> {
    read(BufReader::new(File::open(path)?))
}

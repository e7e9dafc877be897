//! Self-describing checkpoint archive.
//!
//! ```text
//! "FSRCKPT1" | u64 LE header length | JSON header | raw little-endian tensors
//! ```
//! The header carries the model spec, epoch, run seed, element type and the
//! name/shape of every tensor in payload order.

use std::fs;
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::{build, registry::slug, Discriminator, Generator, SRModelSpec};
use crate::error::{Error, Result};
use crate::nn::Layer;
use crate::tensor::Float;

const MAGIC: &[u8; 8] = b"FSRCKPT1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    net: String,
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    spec: SRModelSpec,
    epoch: usize,
    seed: u64,
    dtype: String,
    tensors: Vec<TensorEntry>,
}

pub struct Checkpoint<F: Float> {
    pub spec: SRModelSpec,
    pub epoch: usize,
    pub seed: u64,
    pub generator: Generator<F>,
    pub discriminator: Option<Discriminator<F>>,
}

pub fn checkpoint_file_name(spec: &SRModelSpec, epoch: usize) -> String {
    format!("{}_e{epoch}.ckpt", slug(&spec.name()))
}

fn collect<F: Float>(net_name: &str, net: &dyn Layer<F>, entries: &mut Vec<TensorEntry>, payload: &mut Vec<u8>) {
    let mut push = |name: &str, arr: &ArrayD<F>| {
        entries.push(TensorEntry {
            net: net_name.to_string(),
            name: name.to_string(),
            shape: arr.shape().to_vec(),
        });
        for &v in arr.iter() {
            v.write_le(payload);
        }
    };
    net.visit_params("", &mut |n, p| push(n, &p.value));
    net.visit_buffers("", &mut |n, b| push(n, b));
}

pub fn save_checkpoint<F: Float>(
    path: &Path,
    generator: &Generator<F>,
    discriminator: Option<&Discriminator<F>>,
    epoch: usize,
    seed: u64,
) -> Result<()> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    collect("generator", generator.network(), &mut tensors, &mut payload);
    if let Some(d) = discriminator {
        collect("discriminator", d.network(), &mut tensors, &mut payload);
    }
    let header = serde_json::to_vec(&Header {
        spec: *generator.spec(),
        epoch,
        seed,
        dtype: F::DTYPE.to_string(),
        tensors,
    })?;
    let mut bytes = Vec::with_capacity(16 + header.len() + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn corrupt(path: &Path, what: &str) -> Error {
    Error::Data(format!("{}: {what}", path.display()))
}

pub fn load_checkpoint<F: Float>(path: &Path) -> Result<Checkpoint<F>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt(path, "not a checkpoint archive"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt(path, "truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])?;
    if header.dtype != F::DTYPE {
        return Err(corrupt(path, &format!("stored as {}, requested {}", header.dtype, F::DTYPE)));
    }
    let mut model = build::<F>(&header.spec, header.seed)?;

    let mut offset = header_end;
    let mut by_net: std::collections::HashMap<String, Vec<(String, ArrayD<F>)>> = Default::default();
    for entry in &header.tensors {
        let len: usize = entry.shape.iter().product();
        let end = offset + len * F::BYTES;
        if end > bytes.len() {
            return Err(corrupt(path, "truncated payload"));
        }
        let values: Vec<F> = bytes[offset..end].chunks_exact(F::BYTES).map(F::read_le).collect();
        offset = end;
        let arr = ArrayD::from_shape_vec(entry.shape.clone(), values).map_err(|e| corrupt(path, &e.to_string()))?;
        by_net.entry(entry.net.clone()).or_default().push((entry.name.clone(), arr));
    }
    if offset != bytes.len() {
        return Err(corrupt(path, "trailing bytes"));
    }

    restore(path, "generator", model.generator.network_mut(), by_net.remove("generator"))?;
    if let Some(d) = model.discriminator.as_mut() {
        if let Some(stored) = by_net.remove("discriminator") {
            restore(path, "discriminator", d.network_mut(), Some(stored))?;
        }
    }
    Ok(Checkpoint {
        spec: header.spec,
        epoch: header.epoch,
        seed: header.seed,
        generator: model.generator,
        discriminator: model.discriminator,
    })
}

fn restore<F: Float>(path: &Path, net: &str, layer: &mut dyn Layer<F>, stored: Option<Vec<(String, ArrayD<F>)>>) -> Result<()> {
    let stored = stored.ok_or_else(|| corrupt(path, &format!("no {net} tensors")))?;
    let mut it = stored.into_iter();
    let mut err: Option<Error> = None;
    let mut take = |name: &str, target: &mut ArrayD<F>| {
        if err.is_some() {
            return;
        }
        match it.next() {
            Some((n, arr)) if n == name && arr.shape() == target.shape() => *target = arr,
            Some((n, arr)) => {
                err = Some(corrupt(
                    path,
                    &format!("{net}: expected {name} {:?}, found {n} {:?}", target.shape(), arr.shape()),
                ))
            }
            None => err = Some(corrupt(path, &format!("{net}: missing {name}"))),
        }
    };
    layer.visit_params_mut("", &mut |n, p| take(n, &mut p.value));
    layer.visit_buffers_mut("", &mut |n, b| take(n, b));
    if let Some(e) = err {
        return Err(e);
    }
    if it.next().is_some() {
        return Err(corrupt(path, &format!("{net}: unexpected extra tensors")));
    }
    Ok(())
}

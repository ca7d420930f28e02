//! Flat binary checkpoints.
//!
//! Layout (all integers little-endian):
//! - magic `CFCKPT01`
//! - `u32` tensor count
//! - per tensor: `u16` name length, UTF-8 name, `u32` rows, `u32` cols
//! - body: every tensor's values as row-major `f64`, in header order
//!
//! Weight matrices are stored `inputs x outputs`; vectors as `1 x n`.

use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use ndarray::{Array1, Array2};

use super::nn::{Adam, Linear, Mlp};
use super::policy::{Normalizer, Policy};
use super::{RlError, TrainState};

pub const MAGIC: &[u8; 8] = b"CFCKPT01";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    fn matrix(name: String, m: &Array2<f64>) -> Self {
        Self { name, rows: m.nrows(), cols: m.ncols(), data: m.iter().copied().collect() }
    }

    fn vector(name: String, v: &Array1<f64>) -> Self {
        Self { name, rows: 1, cols: v.len(), data: v.to_vec() }
    }

    fn scalar(name: &str, v: f64) -> Self {
        Self { name: name.into(), rows: 1, cols: 1, data: vec![v] }
    }
}

fn push_layers(out: &mut Vec<Tensor>, prefix: &str, layers: &[Linear]) {
    for (i, l) in layers.iter().enumerate() {
        out.push(Tensor::matrix(format!("{prefix}.{i}.w"), &l.w));
        out.push(Tensor::vector(format!("{prefix}.{i}.b"), &l.b));
    }
}

pub fn to_tensors(state: &TrainState) -> Vec<Tensor> {
    let p = &state.policy;
    let mut out = Vec::new();
    out.push(Tensor {
        name: "heads".into(),
        rows: 1,
        cols: p.heads.len(),
        data: p.heads.iter().map(|&h| h as f64).collect(),
    });
    push_layers(&mut out, "actor", &p.actor.layers);
    push_layers(&mut out, "critic", &p.critic.layers);
    out.push(Tensor::vector("norm.mean".into(), &p.norm.mean));
    out.push(Tensor::vector("norm.var".into(), &p.norm.var));
    out.push(Tensor::scalar("norm.count", p.norm.count));
    for (tag, adam) in [("actor", &state.adam_actor), ("critic", &state.adam_critic)] {
        out.push(Tensor::scalar(&format!("adam.{tag}.step"), adam.step as f64));
        out.push(Tensor::scalar(&format!("adam.{tag}.lr"), adam.lr));
        push_layers(&mut out, &format!("adam.{tag}.m"), &adam.m);
        push_layers(&mut out, &format!("adam.{tag}.v"), &adam.v);
    }
    out
}

pub fn encode(tensors: &[Tensor]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        buf.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.extend_from_slice(&(t.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(t.cols as u32).to_le_bytes());
    }
    for t in tensors {
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RlError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| RlError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, RlError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, RlError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<Vec<Tensor>, RlError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(RlError::Checkpoint("bad magic".into()));
    }
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| RlError::Checkpoint("tensor name is not UTF-8".into()))?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        tensors.push(Tensor { name, rows, cols, data: Vec::new() });
    }
    for t in &mut tensors {
        let n = t.rows.checked_mul(t.cols).ok_or_else(|| RlError::Checkpoint("tensor too large".into()))?;
        let bytes = r.take(n.checked_mul(8).ok_or_else(|| RlError::Checkpoint("tensor too large".into()))?)?;
        t.data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    }
    if r.pos != buf.len() {
        return Err(RlError::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(tensors)
}

struct Named(IndexMap<String, Tensor>);

impl Named {
    fn get(&self, name: &str) -> Result<&Tensor, RlError> {
        self.0.get(name).ok_or_else(|| RlError::Checkpoint(format!("missing tensor `{name}`")))
    }

    fn matrix(&self, name: &str) -> Result<Array2<f64>, RlError> {
        let t = self.get(name)?;
        Array2::from_shape_vec((t.rows, t.cols), t.data.clone()).map_err(|e| RlError::Checkpoint(e.to_string()))
    }

    fn vector(&self, name: &str) -> Result<Array1<f64>, RlError> {
        Ok(Array1::from(self.get(name)?.data.clone()))
    }

    fn scalar(&self, name: &str) -> Result<f64, RlError> {
        self.get(name)?.data.first().copied().ok_or_else(|| RlError::Checkpoint(format!("empty tensor `{name}`")))
    }

    fn layers(&self, prefix: &str) -> Result<Vec<Linear>, RlError> {
        let mut layers = Vec::new();
        while self.0.contains_key(&format!("{prefix}.{}.w", layers.len())) {
            let i = layers.len();
            let w = self.matrix(&format!("{prefix}.{i}.w"))?;
            let b = self.vector(&format!("{prefix}.{i}.b"))?;
            if b.len() != w.ncols() || layers.last().is_some_and(|l: &Linear| l.w.ncols() != w.nrows()) {
                return Err(RlError::Checkpoint(format!("inconsistent shapes in `{prefix}.{i}`")));
            }
            layers.push(Linear { w, b });
        }
        if layers.is_empty() {
            return Err(RlError::Checkpoint(format!("no layers under `{prefix}`")));
        }
        Ok(layers)
    }
}

pub fn from_tensors(tensors: Vec<Tensor>) -> Result<TrainState, RlError> {
    let named = Named(tensors.into_iter().map(|t| (t.name.clone(), t)).collect());
    let heads: Vec<usize> = named.get("heads")?.data.iter().map(|&h| h as usize).collect();
    let actor = Mlp { layers: named.layers("actor")? };
    let critic = Mlp { layers: named.layers("critic")? };
    if actor.output_dim() != heads.iter().sum::<usize>() || critic.output_dim() != 1 || actor.input_dim() != critic.input_dim() {
        return Err(RlError::Checkpoint("network shapes do not match the action heads".into()));
    }
    let norm = Normalizer { mean: named.vector("norm.mean")?, var: named.vector("norm.var")?, count: named.scalar("norm.count")? };
    if norm.mean.len() != actor.input_dim() || norm.var.len() != actor.input_dim() {
        return Err(RlError::Checkpoint("normalizer width does not match the network input".into()));
    }
    let adam = |tag: &str, net: &Mlp| -> Result<Adam, RlError> {
        let mut a = Adam::new(net, named.scalar(&format!("adam.{tag}.lr"))?);
        a.step = named.scalar(&format!("adam.{tag}.step"))? as u64;
        a.m = named.layers(&format!("adam.{tag}.m"))?;
        a.v = named.layers(&format!("adam.{tag}.v"))?;
        let same = |x: &[Linear]| x.len() == net.layers.len() && x.iter().zip(&net.layers).all(|(p, q)| p.w.dim() == q.w.dim());
        if !same(&a.m) || !same(&a.v) {
            return Err(RlError::Checkpoint(format!("optimizer state `{tag}` does not match the network")));
        }
        Ok(a)
    };
    let adam_actor = adam("actor", &actor)?;
    let adam_critic = adam("critic", &critic)?;
    Ok(TrainState { policy: Policy { actor, critic, heads, norm }, adam_actor, adam_critic })
}

/// Writes to a temporary file and renames it into place.
pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<(), RlError> {
    save_checkpoint_with_meta(path, state, &[])
}

/// Like [`save_checkpoint`], plus scalar `meta.<key>` tensors.
pub fn save_checkpoint_with_meta(path: &Path, state: &TrainState, meta: &[(&str, f64)]) -> Result<(), RlError> {
    let mut tensors = to_tensors(state);
    tensors.extend(meta.iter().map(|(k, v)| Tensor::scalar(&format!("meta.{k}"), *v)));
    let bytes = encode(&tensors);
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState, RlError> {
    Ok(load_checkpoint_with_meta(path)?.0)
}

/// The train state plus any `meta.<key>` scalars, keyed without the prefix.
pub fn load_checkpoint_with_meta(path: &Path) -> Result<(TrainState, IndexMap<String, f64>), RlError> {
    let tensors = decode(&fs::read(path)?)?;
    let meta = tensors
        .iter()
        .filter_map(|t| Some((t.name.strip_prefix("meta.")?.to_string(), *t.data.first()?)))
        .collect();
    Ok((from_tensors(tensors)?, meta))
}

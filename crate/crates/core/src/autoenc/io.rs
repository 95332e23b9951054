//! Model container:
//!
//! ```text
//! magic      8 bytes  "ELSEGMDL"
//! version    u16 major, u16 minor (little-endian)
//! topo_len   u32
//! topology   JSON: scale tag, input shape, latent size, layer specs, provenance
//! n_params   u64
//! params     n_params × f32 LE, layer by layer (weights then biases)
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{LayerSpec, Shape};
use super::model::{Model, Provenance, Scale};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ELSEGMDL";
pub const FORMAT_MAJOR: u16 = 1;
pub const FORMAT_MINOR: u16 = 0;

#[derive(Serialize, Deserialize)]
struct Topology {
    scale: String,
    input_shape: Shape,
    latent_dim: usize,
    layers: Vec<LayerSpec>,
    provenance: Provenance,
}

pub fn encode_model(m: &Model) -> Vec<u8> {
    let topo = Topology {
        scale: m.scale.tag().to_owned(),
        input_shape: m.input_shape,
        latent_dim: m.latent_dim,
        layers: m.layers.iter().map(|l| l.spec.clone()).collect(),
        provenance: m.provenance.clone(),
    };
    let json = serde_json::to_vec(&topo).expect("topology serializes");
    let params = m.params_flat();
    let mut out = Vec::with_capacity(8 + 4 + 4 + json.len() + 8 + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_MAJOR.to_le_bytes());
    out.extend_from_slice(&FORMAT_MINOR.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(format!("model file truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8, "magic")? != MAGIC {
        return Err(Error::format("not a model file (bad magic)"));
    }
    let major = c.u16("version")?;
    let minor = c.u16("version")?;
    if major != FORMAT_MAJOR {
        return Err(Error::format(format!(
            "unsupported model format version {major}.{minor} (expected {FORMAT_MAJOR}.x)"
        )));
    }
    let topo_len = c.u32("topology length")? as usize;
    let topo: Topology = serde_json::from_slice(c.take(topo_len, "topology")?)
        .map_err(|e| Error::format(format!("invalid topology block: {e}")))?;
    let scale = Scale::from_tag(&topo.scale)?;
    let mut m = Model::from_specs(scale, topo.input_shape, topo.latent_dim, topo.layers)
        .map_err(|e| Error::format(format!("inconsistent topology: {e}")))?;
    m.provenance = topo.provenance;
    let n = c.u64("parameter count")? as usize;
    if n != m.param_count() {
        return Err(Error::format(format!(
            "parameter count {n} does not match topology ({})",
            m.param_count()
        )));
    }
    let raw = c.take(n.checked_mul(4).ok_or_else(|| Error::format("parameter count overflow"))?, "parameters")?;
    let params: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    if c.pos != bytes.len() {
        return Err(Error::format("trailing bytes after parameter block"));
    }
    m.set_params_flat(&params)?;
    Ok(m)
}

pub fn save_model(m: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(m)).map_err(|e| Error::Io(e).at(path))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::Io(e).at(path))?;
    decode_model(&bytes).map_err(|e| e.at(path))
}

//! Binary model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "TCFMCKPT" | u32 version | u32 len, TOML metadata | u8 family
//! | stats: u32 dim, f64 min[dim], f64 max[dim] | u64 step
//! | params block | u8 has_optimizer [u64 step, first block, second block]
//! | sha256 of everything before it
//! ```
//!
//! A block is `u32 count` then per tensor `u32 name_len, name, u32 rank,
//! u64 dims[rank], f64 data[..]`, in name order.

use std::collections::BTreeMap;
use std::path::Path;

use diffcore::{AdamState, Array};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ModelFamily, RunConfig};
use crate::ddpm::DiffusionConfig;
use crate::domains::norm::{ContextLayout, NormStats};
use crate::error::{Result, TcfmError};
use crate::net::{NetConfig, VectorFieldNet};

pub const MAGIC: &[u8; 8] = b"TCFMCKPT";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub family: ModelFamily,
    pub net_config: NetConfig,
    pub diffusion: DiffusionConfig,
    pub layout: ContextLayout,
    /// The run configuration that produced the model.
    pub run: Option<RunConfig>,
    pub stats: NormStats,
    pub step: u64,
    pub params: BTreeMap<String, Array>,
    pub optimizer: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    family: ModelFamily,
    net: NetConfig,
    diffusion: DiffusionConfig,
    layout: ContextLayout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run: Option<RunConfig>,
}

fn family_tag(f: ModelFamily) -> u8 {
    match f {
        ModelFamily::Tcfm => 1,
        ModelFamily::Ddpm => 2,
    }
}

impl Checkpoint {
    pub fn net(&self) -> Result<VectorFieldNet> {
        VectorFieldNet::from_params(self.net_config.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Meta {
            family: self.family,
            net: self.net_config.clone(),
            diffusion: self.diffusion.clone(),
            layout: self.layout,
            run: self.run.clone(),
        };
        let meta = toml::to_string(&meta).expect("checkpoint metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_bytes(&mut out, meta.as_bytes());
        out.push(family_tag(self.family));
        out.extend_from_slice(&(self.stats.dim() as u32).to_le_bytes());
        for v in self.stats.min.iter().chain(&self.stats.max) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        put_block(&mut out, &self.params);
        match &self.optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                out.extend_from_slice(&opt.step.to_le_bytes());
                put_block(&mut out, &opt.first);
                put_block(&mut out, &opt.second);
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
            return Err(TcfmError::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(TcfmError::Checkpoint(format!(
                "unsupported checkpoint format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(TcfmError::Checkpoint("checksum mismatch: file is corrupted".into()));
        }
        let mut r = Reader { bytes: body, pos: 12 };
        let meta_text = std::str::from_utf8(r.bytes_prefixed()?)
            .map_err(|_| TcfmError::Checkpoint("metadata is not UTF-8".into()))?;
        let meta: Meta = toml::from_str(meta_text).map_err(|e| TcfmError::Checkpoint(format!("metadata: {e}")))?;
        if r.u8()? != family_tag(meta.family) {
            return Err(TcfmError::Checkpoint("family tag disagrees with metadata".into()));
        }
        let dim = r.u32()? as usize;
        let min = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let max = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let step = r.u64()?;
        let params = r.block()?;
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                Some(AdamState { step, first: r.block()?, second: r.block()? })
            }
            t => return Err(TcfmError::Checkpoint(format!("bad optimizer flag {t}"))),
        };
        if r.pos != body.len() {
            return Err(TcfmError::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
        }
        let ckpt = Self {
            family: meta.family,
            net_config: meta.net,
            diffusion: meta.diffusion,
            layout: meta.layout,
            run: meta.run,
            stats: NormStats { min, max },
            step,
            params,
            optimizer,
        };
        // Parameter names and shapes must match the architecture.
        ckpt.net()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| TcfmError::io(parent, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| TcfmError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| TcfmError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            TcfmError::Checkpoint(m) => TcfmError::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

fn put_block(out: &mut Vec<u8>, tensors: &BTreeMap<String, Array>) {
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, a) in tensors {
        put_bytes(out, name.as_bytes());
        out.extend_from_slice(&(a.rank() as u32).to_le_bytes());
        for &d in a.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in a.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| TcfmError::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
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

    fn bytes_prefixed(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn block(&mut self) -> Result<BTreeMap<String, Array>> {
        let count = self.u32()?;
        let mut out = BTreeMap::new();
        for _ in 0..count {
            let name = String::from_utf8(self.bytes_prefixed()?.to_vec())
                .map_err(|_| TcfmError::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = self.u32()? as usize;
            let shape = (0..rank).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = shape.iter().product::<usize>();
            if len.checked_mul(8).is_none_or(|b| b > self.bytes.len() - self.pos) {
                return Err(TcfmError::Checkpoint(format!("tensor `{name}` larger than the file")));
            }
            let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
            let array = Array::new(shape, data).map_err(|e| TcfmError::Checkpoint(format!("tensor `{name}`: {e}")))?;
            out.insert(name, array);
        }
        Ok(out)
    }
}

//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "WPNNCKPT"
//! version      u32
//! header_len   u64
//! header       JSON, header_len bytes
//! payload      f64 LE values in header order:
//!              per network: omega0, then per layer weights (row-major) and bias;
//!              then optimizer first moments, second moments (if present)
//! ```
//!
//! The header repeats omega0 for readability; the payload copy is authoritative.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, Layer, Network};
use crate::error::{Error, Result};
use crate::trainer::AdamState;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"WPNNCKPT";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Named networks, e.g. `("pressure", nf)`, `("ade", nade)`.
    pub networks: Vec<(String, Network)>,
    pub optimizer: Option<AdamState>,
    /// Completed training epochs.
    pub epoch: usize,
    /// Snapshot of the run configuration, stored verbatim.
    pub config: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    epoch: usize,
    networks: Vec<NetHeader>,
    optimizer: Option<OptHeader>,
    config: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct NetHeader {
    name: String,
    omega0: f64,
    layer_sizes: Vec<usize>,
    activations: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct OptHeader {
    step: u64,
    len: usize,
}

fn push_all(buf: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn f64s(&mut self, n: usize) -> Option<Vec<f64>> {
        let raw = self.take(n.checked_mul(8)?)?;
        Some(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        )
    }
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Option<&Network> {
        self.networks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, net)| net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: "wavepinn-checkpoint".into(),
            version: CHECKPOINT_VERSION,
            epoch: self.epoch,
            networks: self
                .networks
                .iter()
                .map(|(name, net)| NetHeader {
                    name: name.clone(),
                    omega0: net.omega0(),
                    layer_sizes: net.layer_sizes(),
                    activations: net
                        .layers()
                        .iter()
                        .map(|l| l.activation.tag().to_string())
                        .collect(),
                })
                .collect(),
            optimizer: self.optimizer.as_ref().map(|o| OptHeader {
                step: o.step,
                len: o.m.len(),
            }),
            config: self.config.clone(),
        };
        let header = serde_json::to_vec_pretty(&header).expect("header serializes");
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for (_, net) in &self.networks {
            push_all(&mut buf, &[net.omega0()]);
            for p in net.params() {
                push_all(&mut buf, p);
            }
        }
        if let Some(o) = &self.optimizer {
            push_all(&mut buf, &o.m);
            push_all(&mut buf, &o.v);
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            path: origin.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8) != Some(MAGIC.as_slice()) {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(
            cur.take(4)
                .ok_or_else(|| bad("truncated"))?
                .try_into()
                .unwrap(),
        );
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(
            cur.take(8)
                .ok_or_else(|| bad("truncated"))?
                .try_into()
                .unwrap(),
        );
        let hlen = usize::try_from(hlen).map_err(|_| bad("header too large"))?;
        let header: Header =
            serde_json::from_slice(cur.take(hlen).ok_or_else(|| bad("truncated header"))?)
                .map_err(|e| bad(&format!("header: {e}")))?;

        let mut networks = Vec::with_capacity(header.networks.len());
        for nh in &header.networks {
            let sizes = &nh.layer_sizes;
            if sizes.len() < 2 || nh.activations.len() != sizes.len() - 1 {
                return Err(bad(&format!(
                    "network {}: inconsistent layer description",
                    nh.name
                )));
            }
            let omega0 = cur.f64s(1).ok_or_else(|| bad("truncated payload"))?[0];
            let mut layers = Vec::with_capacity(sizes.len() - 1);
            for (i, tag) in nh.activations.iter().enumerate() {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let activation = Activation::from_tag(tag)
                    .ok_or_else(|| bad(&format!("unknown activation {tag}")))?;
                let w = cur
                    .f64s(fan_in * fan_out)
                    .ok_or_else(|| bad("truncated payload"))?;
                let b = cur.f64s(fan_out).ok_or_else(|| bad("truncated payload"))?;
                layers.push(Layer {
                    weights: Array2::from_shape_vec((fan_out, fan_in), w).expect("sized"),
                    bias: Array1::from_vec(b),
                    activation,
                });
            }
            let net = Network::new(layers, omega0).map_err(|e| bad(&e.to_string()))?;
            networks.push((nh.name.clone(), net));
        }
        let optimizer = match &header.optimizer {
            Some(oh) => {
                let m = cur
                    .f64s(oh.len)
                    .ok_or_else(|| bad("truncated optimizer state"))?;
                let v = cur
                    .f64s(oh.len)
                    .ok_or_else(|| bad("truncated optimizer state"))?;
                Some(AdamState {
                    step: oh.step,
                    m,
                    v,
                })
            }
            None => None,
        };
        if cur.pos != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            networks,
            optimizer,
            epoch: header.epoch,
            config: header.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, path)
    }
}

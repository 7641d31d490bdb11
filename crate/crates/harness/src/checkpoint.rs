//! Binary checkpoints for networks and oracle tables.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "SMDPCKPT"
//! version    u32      1
//! kind       u8       0 main, 1 target, 2 cloner, 3 tabular-oracle
//! seed       u64
//! epoch      u64
//! config     32 bytes SHA-256 of the resolved config
//! n_sizes    u32
//! sizes      n_sizes x u64
//! n_params   u64
//! params     n_params x f64
//! ```
//!
//! For networks `sizes` are the layer widths and `n_params` must equal the
//! weight-and-bias count they imply. For tables `sizes` is
//! `[num_states, num_options]` and `n_params` their product.

use std::fs;
use std::path::Path;

use smdp_core::approx::{param_count, Mlp};
use smdp_core::tabular::TabularQ;
use smdp_core::VariantKind;

use crate::error::{HarnessError, Result};

const MAGIC: &[u8; 8] = b"SMDPCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Main,
    Target,
    Cloner,
    TabularOracle,
}

impl CheckpointKind {
    fn tag(self) -> u8 {
        match self {
            CheckpointKind::Main => 0,
            CheckpointKind::Target => 1,
            CheckpointKind::Cloner => 2,
            CheckpointKind::TabularOracle => 3,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        Some(match t {
            0 => CheckpointKind::Main,
            1 => CheckpointKind::Target,
            2 => CheckpointKind::Cloner,
            3 => CheckpointKind::TabularOracle,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            CheckpointKind::Main => "main",
            CheckpointKind::Target => "target",
            CheckpointKind::Cloner => "cloner",
            CheckpointKind::TabularOracle => "tabular-oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub seed: u64,
    pub epoch: u64,
    pub config_hash: [u8; 32],
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

fn err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Checkpoint(msg.into())
}

fn expected_len(kind: CheckpointKind, sizes: &[usize]) -> Result<usize> {
    match kind {
        CheckpointKind::TabularOracle => match sizes {
            [s, o] => Ok(s * o),
            _ => Err(err(format!("table header needs 2 sizes, got {}", sizes.len()))),
        },
        _ if sizes.len() < 2 || sizes.contains(&0) => Err(err(format!("invalid layer sizes {sizes:?}"))),
        _ => Ok(param_count(sizes)),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| err("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl Checkpoint {
    pub fn new(kind: CheckpointKind, seed: u64, epoch: u64, config_hash: [u8; 32], sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        let want = expected_len(kind, &sizes)?;
        if params.len() != want {
            return Err(err(format!("payload has {} values, header implies {want}", params.len())));
        }
        Ok(Self {
            kind,
            seed,
            epoch,
            config_hash,
            sizes,
            params,
        })
    }

    pub fn from_mlp(kind: CheckpointKind, net: &Mlp<f64>, seed: u64, epoch: u64, config_hash: [u8; 32]) -> Result<Self> {
        if kind == CheckpointKind::TabularOracle {
            return Err(err("a network cannot be stored as a table"));
        }
        Self::new(kind, seed, epoch, config_hash, net.sizes().to_vec(), net.params().to_vec())
    }

    pub fn from_table(table: &TabularQ<f64>, seed: u64, config_hash: [u8; 32]) -> Result<Self> {
        Self::new(
            CheckpointKind::TabularOracle,
            seed,
            0,
            config_hash,
            vec![table.num_states(), table.num_options()],
            table.values().to_vec(),
        )
    }

    pub fn to_mlp(&self) -> Result<Mlp<f64>> {
        if self.kind == CheckpointKind::TabularOracle {
            return Err(err("checkpoint holds a table, not a network"));
        }
        Ok(Mlp::from_params(&self.sizes, self.params.clone())?)
    }

    pub fn to_table(&self, variant: VariantKind) -> Result<TabularQ<f64>> {
        if self.kind != CheckpointKind::TabularOracle {
            return Err(err(format!("checkpoint holds a {} network, not a table", self.kind.name())));
        }
        let mut q = TabularQ::from_values(self.sizes[0], self.sizes[1], self.params.clone())?;
        q.source = Some(variant);
        Ok(q)
    }

    /// Fails unless the checkpoint was written under `config_hash`.
    pub fn verify_config(&self, config_hash: &[u8; 32]) -> Result<()> {
        if &self.config_hash != config_hash {
            return Err(err("config hash does not match"));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(73 + 8 * (self.sizes.len() + self.params.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind.tag());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for &s in &self.sizes {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(err("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let tag = r.take(1)?[0];
        let kind = CheckpointKind::from_tag(tag).ok_or_else(|| err(format!("unknown kind tag {tag}")))?;
        let seed = r.u64()?;
        let epoch = r.u64()?;
        let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let n_sizes = r.u32()? as usize;
        if n_sizes > 64 {
            return Err(err(format!("implausible layer count {n_sizes}")));
        }
        let sizes = (0..n_sizes)
            .map(|_| r.u64().map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = r.u64()? as usize;
        let want = expected_len(kind, &sizes)?;
        if n != want {
            return Err(err(format!("payload length {n} does not match header ({want})")));
        }
        if bytes.len() - r.pos != 8 * n {
            return Err(err(format!(
                "payload holds {} bytes, header implies {}",
                bytes.len() - r.pos,
                8 * n
            )));
        }
        let params = (0..n)
            .map(|_| r.u64().map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kind, seed, epoch, config_hash, sizes, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            HarnessError::Checkpoint(m) => HarnessError::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

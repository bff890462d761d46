//! Binary checkpoint file: `"FHHN"`, version `u16`, a text header of sorted
//! `key=value` lines, then named f32 tensor blocks. All integers little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::CheckpointError;
use crate::nn::ParamSet;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"FHHN";
pub const CHECKPOINT_VERSION: u16 = 1;
const FROZEN_KEY: &str = "frozen";

#[derive(Clone, Debug, Default)]
pub struct Checkpoint {
    pub header: BTreeMap<String, String>,
    pub blocks: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.header.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Result<&str, CheckpointError> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CheckpointError::Corrupt(format!("missing header key {key}")))
    }

    pub fn parse<V: std::str::FromStr>(&self, key: &str) -> Result<V, CheckpointError> {
        self.get(key)?
            .parse()
            .map_err(|_| CheckpointError::Corrupt(format!("bad value for {key}")))
    }

    pub fn block(&self, name: &str) -> Option<&Tensor<f32>> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Store a parameter set as blocks named `{prefix}/{name}`.
    pub fn put_params(&mut self, prefix: &str, set: &ParamSet<f32>) {
        let mut frozen: Vec<String> = self
            .header
            .get(FROZEN_KEY)
            .map(|s| {
                s.split(',')
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default();
        for e in set.entries() {
            let name = format!("{prefix}/{}", e.name);
            if !e.trainable {
                frozen.push(name.clone());
            }
            self.blocks.push((name, e.value.clone()));
        }
        self.header.insert(FROZEN_KEY.into(), frozen.join(","));
    }

    /// Rebuild the parameter set stored under `prefix`, in stored order.
    pub fn take_params(&self, prefix: &str) -> ParamSet<f32> {
        let frozen: Vec<&str> = self
            .header
            .get(FROZEN_KEY)
            .map(|s| s.split(',').collect())
            .unwrap_or_default();
        let lead = format!("{prefix}/");
        let mut set = ParamSet::new();
        for (name, t) in &self.blocks {
            if let Some(short) = name.strip_prefix(&lead) {
                set.insert(short, t.clone(), !frozen.contains(&name.as_str()));
            }
        }
        set
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let mut header = String::new();
        for (k, v) in &self.header {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(CheckpointError::Corrupt(format!(
                    "header entry {k:?} is not a single line"
                )));
            }
            header.push_str(k);
            header.push('=');
            header.push_str(v);
            header.push('\n');
        }
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for (name, t) in &self.blocks {
            let len = u16::try_from(name.len())
                .map_err(|_| CheckpointError::Corrupt(format!("name too long: {name}")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&t.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let header_len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(header_len)?)
            .map_err(|_| CheckpointError::Corrupt("header is not UTF-8".into()))?;
        let mut header = BTreeMap::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CheckpointError::Corrupt(format!("bad header line {line:?}")))?;
            header.insert(k.to_string(), v.to_string());
        }
        let count = r.u32()? as usize;
        let mut blocks = Vec::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| CheckpointError::Corrupt("block name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| {
                    CheckpointError::Corrupt(format!("block {name} overruns the file"))
                })?;
            let data = r
                .take(n * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            blocks.push((name, Tensor::new(&shape, data)?));
        }
        if r.remaining() != 0 {
            return Err(CheckpointError::Corrupt("trailing bytes".into()));
        }
        Ok(Self { header, blocks })
    }

    /// Write atomically: to a sibling temp file, then rename.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if n > self.remaining() {
            return Err(CheckpointError::Corrupt("truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

//! Binary checkpoint format.
//!
//! ```text
//! magic    "HFCK"
//! version  u16 = 1
//! count    u32            number of entries
//! entry*   name_len u16, name (UTF-8), dims 4 × u32, values (f32 LE)
//! ```
//!
//! All integers are little-endian. Tensor entries are named
//! `layer<i>.<role>`; the init seed travels as an extra `rng_seed` entry
//! of dims (1, 1, 1, 2) whose two values hold the low and high 32 bits.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::params::{NetworkParams, ParamKey, ParamSet};
use super::tensor::{Dims, Tensor};

pub const MAGIC: [u8; 4] = *b"HFCK";
pub const VERSION: u16 = 1;
const SEED_ENTRY: &str = "rng_seed";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("entry {name}: dims {dims:?} overflow the address space")]
    DimOverflow { name: String, dims: [u32; 4] },
    #[error("entry name is not valid UTF-8")]
    BadName,
    #[error("unknown entry {0:?}")]
    UnknownEntry(String),
    #[error("duplicate entry {0:?}")]
    DuplicateEntry(String),
    #[error("{0} trailing bytes after the last entry")]
    TrailingBytes(usize),
    #[error("entry name longer than 65535 bytes")]
    NameTooLong,
}

pub fn encode(params: &NetworkParams) -> Result<Vec<u8>, CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = params.entries.len() as u32 + 1;
    out.extend_from_slice(&count.to_le_bytes());
    let mut put = |name: &str, dims: [usize; 4], values: &mut dyn Iterator<Item = u32>| {
        let len: u16 = name.len().try_into().map_err(|_| CheckpointError::NameTooLong)?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        for d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok::<(), CheckpointError>(())
    };
    for (key, t) in params.entries.iter() {
        put(
            &key.to_string(),
            t.dims().as_array(),
            &mut t.data().iter().map(|v| v.to_bits()),
        )?;
    }
    let seed = params.rng_seed;
    put(
        SEED_ENTRY,
        [1, 1, 1, 2],
        &mut [seed as u32, (seed >> 32) as u32].into_iter(),
    )?;
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode(buf: &[u8]) -> Result<NetworkParams, CheckpointError> {
    let mut r = Reader { buf, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = r.u32("entry count")?;
    let mut entries = ParamSet::new();
    let mut seed = None;
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| CheckpointError::BadName)?
            .to_string();
        let mut dims = [0u32; 4];
        for d in &mut dims {
            *d = r.u32("dims")?;
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .and_then(|n| n.checked_mul(4).map(|b| (n, b)));
        let (n, bytes) = match n {
            Some(v) => v,
            None => return Err(CheckpointError::DimOverflow { name, dims }),
        };
        if bytes > r.remaining() {
            return Err(CheckpointError::Truncated("values"));
        }
        let raw = r.take(bytes, "values")?;
        let values: Vec<u32> = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        debug_assert_eq!(values.len(), n);
        if name == SEED_ENTRY {
            if seed.is_some() {
                return Err(CheckpointError::DuplicateEntry(name));
            }
            if values.len() != 2 {
                return Err(CheckpointError::UnknownEntry(name));
            }
            seed = Some(values[0] as u64 | ((values[1] as u64) << 32));
            continue;
        }
        let key: ParamKey = name
            .parse()
            .map_err(|_| CheckpointError::UnknownEntry(name.clone()))?;
        let d = Dims::new(dims[0] as usize, dims[1] as usize, dims[2] as usize, dims[3] as usize);
        let t = Tensor::from_vec(d, values.into_iter().map(f32::from_bits).collect())
            .expect("length derived from dims");
        if entries.insert(key, t).is_some() {
            return Err(CheckpointError::DuplicateEntry(name));
        }
    }
    if r.remaining() > 0 {
        return Err(CheckpointError::TrailingBytes(r.remaining()));
    }
    Ok(NetworkParams {
        entries,
        rng_seed: seed.unwrap_or(0),
    })
}

pub fn save_checkpoint(params: &NetworkParams, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    fs::write(path, encode(params)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetworkParams, CheckpointError> {
    decode(&fs::read(path)?)
}

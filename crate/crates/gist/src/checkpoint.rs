//! Checkpoint container: magic "GDCK", version, a UTF-8 config block, and a
//! named tensor table with little-endian f64 payloads. Round-trips are
//! bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"GDCK";
const VERSION: u32 = 1;

pub fn save(path: &Path, params: &ParamSet, config: &str) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&params.step.to_le_bytes());
    let cfg = config.as_bytes();
    buf.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    buf.extend_from_slice(cfg);
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for (name, t) in params.iter() {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u64).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.extend_from_slice(&(t.shape.len() as u64).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            buf.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&buf).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated: wanted {} bytes at offset {}, file has {}",
                n,
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load(path: &Path) -> Result<(ParamSet, String)> {
    let mut data = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Reader { buf: &data, pos: 0 };

    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint(format!("{}: bad magic, not a checkpoint", path.display())));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let step = r.u64()?;
    let cfg_len = r.u64()? as usize;
    let config = String::from_utf8(r.take(cfg_len)?.to_vec())
        .map_err(|e| Error::Checkpoint(format!("config block is not UTF-8: {e}")))?;

    let count = r.u64()? as usize;
    let mut params = ParamSet::new();
    params.step = step;
    for _ in 0..count {
        let name_len = r.u64()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("tensor name is not UTF-8: {e}")))?;
        let ndim = r.u64()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut vals = Vec::with_capacity(numel);
        for _ in 0..numel {
            vals.push(f64::from_bits(u64::from_le_bytes(r.take(8)?.try_into().unwrap())));
        }
        params.insert(name, Tensor::new(shape, vals)?)?;
    }
    if r.pos != data.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after tensor table",
            data.len() - r.pos
        )));
    }
    Ok((params, config))
}

/// Read just the "kind" field of a checkpoint's config block, so callers
/// can reject the wrong model family before a strict full parse.
pub fn peek_kind(config: &str) -> Result<String> {
    #[derive(serde::Deserialize)]
    struct Probe {
        kind: String,
    }
    let probe: Probe = serde_json::from_str(config)
        .map_err(|e| Error::Checkpoint(format!("config block has no kind field: {e}")))?;
    Ok(probe.kind)
}

/// SHA-256 of the checkpoint file, hex-encoded. Used as the teacher
/// provenance hash in transfer sets.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path.display().to_string(), e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

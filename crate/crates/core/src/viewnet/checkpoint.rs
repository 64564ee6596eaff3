//! Binary checkpoint format.
//!
//! ```text
//! magic      b"VFCK"
//! version    u32 LE
//! config     u32 LE byte length, then canonical key = value text
//! count      u32 LE number of tensors
//! tensor*    u32 LE name length, name (UTF-8), u8 dtype tag, u32 LE rank,
//!            rank x u32 LE dims, little-endian element payload
//! crc32      u32 LE over every preceding byte
//! ```
//!
//! Parameters are stored under their own names; running batch-norm
//! statistics as `norm.<layer>.running_mean` / `norm.<layer>.running_var`.

use std::collections::BTreeMap;
use std::path::Path;

use super::{ViewNet, ViewNetConfig};
use crate::error::{CheckpointError, Error, Result};
use crate::kv::KvDoc;
use crate::tensor::{BatchNormState, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"VFCK";
pub const FORMAT_VERSION: u32 = 1;

const NORM_PREFIX: &str = "norm.";
const MEAN_SUFFIX: &str = ".running_mean";
const VAR_SUFFIX: &str = ".running_var";

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor<T: Scalar>(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[T]) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    out.push(T::DTYPE_TAG);
    put_u32(out, shape.len() as u32);
    for &d in shape {
        put_u32(out, d as u32);
    }
    for &v in data {
        v.write_le(out);
    }
}

pub fn to_bytes<T: Scalar>(net: &ViewNet<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    let cfg = net.config().to_kv().render();
    put_u32(&mut out, cfg.len() as u32);
    out.extend_from_slice(cfg.as_bytes());
    let count = net.params().len() + 2 * net.norm_states().len();
    put_u32(&mut out, count as u32);
    for (name, t) in net.params() {
        put_tensor(&mut out, name, t.shape(), t.data());
    }
    for (name, s) in net.norm_states() {
        let c = [s.channels()];
        put_tensor(
            &mut out,
            &format!("{NORM_PREFIX}{name}{MEAN_SUFFIX}"),
            &c,
            &s.running_mean,
        );
        put_tensor(
            &mut out,
            &format!("{NORM_PREFIX}{name}{VAR_SUFFIX}"),
            &c,
            &s.running_var,
        );
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
}

/// Parsed but not yet validated checkpoint contents.
#[derive(Debug, Clone)]
pub struct RawCheckpoint<T: Scalar> {
    pub config: KvDoc,
    /// Tensors in file order.
    pub tensors: Vec<(String, Tensor<T>)>,
}

pub fn parse_bytes<T: Scalar>(bytes: &[u8]) -> Result<RawCheckpoint<T>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let magic = c.take(4).map_err(|_| CheckpointError::BadMagic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic.into());
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let cfg_len = c.u32()? as usize;
    let cfg_text = std::str::from_utf8(c.take(cfg_len)?)
        .map_err(|_| CheckpointError::Malformed("config block is not UTF-8".into()))?;
    let config = KvDoc::parse(cfg_text)
        .map_err(|e| CheckpointError::Malformed(format!("config block: {e}")))?;
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?
            .to_string();
        let tag = c.u8()?;
        if tag != T::DTYPE_TAG {
            return Err(CheckpointError::Malformed(format!(
                "tensor {name} has dtype tag {tag}, expected {}",
                T::DTYPE_TAG
            ))
            .into());
        }
        let rank = c.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(c.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let payload = c.take(n.checked_mul(T::BYTES).ok_or(CheckpointError::Truncated)?)?;
        let data = payload.chunks_exact(T::BYTES).map(T::read_le).collect();
        let t = Tensor::from_vec(&shape, data)
            .map_err(|e| CheckpointError::Malformed(format!("tensor {name}: {e}")))?;
        tensors.push((name, t));
    }
    let body_end = c.pos;
    let stored = c.u32()?;
    if c.pos != bytes.len() {
        return Err(CheckpointError::Malformed("trailing bytes after checksum".into()).into());
    }
    if crc32fast::hash(&bytes[..body_end]) != stored {
        return Err(CheckpointError::ChecksumMismatch.into());
    }
    Ok(RawCheckpoint { config, tensors })
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<ViewNet<T>> {
    let raw = parse_bytes::<T>(bytes)?;
    let config = ViewNetConfig::from_kv(&raw.config)
        .map_err(|e| CheckpointError::Malformed(format!("config: {e}")))?;
    let mut params = BTreeMap::new();
    let mut means = BTreeMap::new();
    let mut vars = BTreeMap::new();
    for (name, t) in raw.tensors {
        if let Some(rest) = name.strip_prefix(NORM_PREFIX) {
            if let Some(layer) = rest.strip_suffix(MEAN_SUFFIX) {
                means.insert(layer.to_string(), t.into_data());
            } else if let Some(layer) = rest.strip_suffix(VAR_SUFFIX) {
                vars.insert(layer.to_string(), t.into_data());
            } else {
                return Err(
                    CheckpointError::Malformed(format!("unknown norm tensor {name}")).into(),
                );
            }
        } else if params.insert(name.clone(), t).is_some() {
            return Err(CheckpointError::Malformed(format!("duplicate tensor {name}")).into());
        }
    }
    let mut norm = BTreeMap::new();
    for (layer, running_mean) in means {
        let running_var = vars
            .remove(&layer)
            .ok_or_else(|| CheckpointError::Malformed(format!("norm {layer} lacks running_var")))?;
        norm.insert(
            layer,
            BatchNormState {
                running_mean,
                running_var,
            },
        );
    }
    if let Some(layer) = vars.keys().next() {
        return Err(CheckpointError::Malformed(format!("norm {layer} lacks running_mean")).into());
    }
    ViewNet::from_parts(config, params, norm)
        .map_err(|e| Error::Checkpoint(CheckpointError::Malformed(e.to_string())))
}

pub fn save_checkpoint<T: Scalar>(net: &ViewNet<T>, path: &Path) -> Result<()> {
    let bytes = to_bytes(net);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // Write-then-rename so an interrupted save never leaves a partial file.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ViewNet<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> ViewNet<f32> {
        ViewNet::build(ViewNetConfig::micro(), 3).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let mut n = net();
        n.set_skip_weights(&[0.25, -1.5]).unwrap();
        let back: ViewNet<f32> = from_bytes(&to_bytes(&n)).unwrap();
        assert_eq!(back, n);
    }

    #[test]
    fn corruption_classes() {
        let bytes = to_bytes(&net());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            from_bytes::<f32>(&bad),
            Err(Error::Checkpoint(CheckpointError::BadMagic))
        ));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            from_bytes::<f32>(&bad),
            Err(Error::Checkpoint(CheckpointError::VersionMismatch {
                found: 9,
                ..
            }))
        ));

        for cut in [2, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                from_bytes::<f32>(&bytes[..cut]),
                Err(Error::Checkpoint(
                    CheckpointError::Truncated | CheckpointError::BadMagic
                ))
            ));
        }
        assert!(matches!(
            from_bytes::<f32>(&bytes[..bytes.len() / 2]),
            Err(Error::Checkpoint(CheckpointError::Truncated))
        ));

        let mut bad = bytes.clone();
        let mid = bytes.len() - 40;
        bad[mid] ^= 0x55;
        assert!(matches!(
            from_bytes::<f32>(&bad),
            Err(Error::Checkpoint(CheckpointError::ChecksumMismatch))
        ));

        assert!(matches!(
            from_bytes::<f64>(&bytes),
            Err(Error::Checkpoint(CheckpointError::Malformed(_)))
        ));
    }
}

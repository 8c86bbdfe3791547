//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"TAGASCCK"            magic
//! u32                    format version (1)
//! u64 + bytes            config block: JSON {backbone, fusion, residual_skip}
//! u64                    parameter count
//!   per parameter, in build order:
//!   u32 + bytes          name
//!   u32, u64 * ndim      shape
//!   f64 * numel          values
//! u64                    batch-norm layer count
//!   per layer: u64 channels, f64 * channels running mean, f64 * channels running var
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::BackboneConfig;
use crate::error::{Error, ParseError, Result};
use crate::fusion::FusionConfig;
use crate::model::AscModel;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"TAGASCCK";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ConfigBlock {
    backbone: BackboneConfig,
    fusion: FusionConfig,
    residual_skip: bool,
}

pub fn to_bytes(model: &AscModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let block = ConfigBlock {
        backbone: model.backbone.cfg.clone(),
        fusion: model.fusion.cfg.clone(),
        residual_skip: model.backbone.residual_skip,
    };
    let json = serde_json::to_vec(&block).map_err(|e| Error::config(e.to_string()))?;
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for (name, t) in model.params.names().iter().zip(model.params.tensors()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(model.bn.len() as u64).to_le_bytes());
    for s in &model.bn {
        out.extend_from_slice(&(s.mean.len() as u64).to_le_bytes());
        for v in s.mean.iter().chain(&s.var) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    b: &'a [u8],
    off: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], ParseError> {
        let available = self.b.len() - self.off;
        if n > available {
            return Err(ParseError::Truncated {
                offset: self.off,
                expected: n,
                found: available,
            });
        }
        let s = &self.b[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, ParseError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<usize, ParseError> {
        let off = self.off;
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| malformed(off, format!("length {v} too large")))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, ParseError> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| malformed(self.off, "length overflow"))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn malformed(offset: usize, reason: impl Into<String>) -> ParseError {
    ParseError::MalformedHeader {
        offset,
        reason: reason.into(),
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<AscModel> {
    let mut r = Reader { b: bytes, off: 0 };
    if r.take(8)? != MAGIC {
        return Err(malformed(0, "not a checkpoint (bad magic)").into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(malformed(8, format!("unsupported checkpoint version {version}")).into());
    }
    let len = r.u64()?;
    let off = r.off;
    let block: ConfigBlock = serde_json::from_slice(r.take(len)?)
        .map_err(|e| malformed(off, format!("config block: {e}")))?;
    let mut model = AscModel::build(&block.backbone, &block.fusion, 0)?;
    model.backbone.residual_skip = block.residual_skip;

    let off = r.off;
    let count = r.u64()?;
    if count != model.params.len() {
        return Err(malformed(
            off,
            format!("{count} parameters, config implies {}", model.params.len()),
        )
        .into());
    }
    for i in 0..count {
        let off = r.off;
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| malformed(off, "parameter name is not UTF-8"))?;
        let expected = &model.params.names()[i];
        if name != expected {
            return Err(malformed(off, format!("parameter {i} is '{name}', expected '{expected}'")).into());
        }
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64()).collect::<std::result::Result<Vec<_>, _>>()?;
        let slot = &mut model.params.tensors_mut()[i];
        if shape != slot.shape() {
            return Err(malformed(
                off,
                format!("parameter '{name}' has shape {shape:?}, expected {:?}", slot.shape()),
            )
            .into());
        }
        let data = r.f64s(slot.len())?;
        slot.data_mut().copy_from_slice(&data);
    }
    let off = r.off;
    let layers = r.u64()?;
    if layers != model.bn.len() {
        return Err(malformed(
            off,
            format!("{layers} batch-norm layers, config implies {}", model.bn.len()),
        )
        .into());
    }
    for s in model.bn.iter_mut() {
        let off = r.off;
        let ch = r.u64()?;
        if ch != s.mean.len() {
            return Err(malformed(off, format!("batch-norm width {ch}, expected {}", s.mean.len())).into());
        }
        s.mean = r.f64s(ch)?;
        s.var = r.f64s(ch)?;
    }
    if r.off != bytes.len() {
        return Err(malformed(r.off, "trailing bytes after checkpoint").into());
    }
    Ok(model)
}

pub fn save(model: &AscModel, path: &Path) -> Result<()> {
    Ok(fs::write(path, to_bytes(model)?)?)
}

pub fn load(path: &Path) -> Result<AscModel> {
    from_bytes(&fs::read(path)?)
}

/// Parameters as plain tensors, in build order.
pub fn parameter_tensors(model: &AscModel) -> Vec<(String, Tensor)> {
    model
        .params
        .names()
        .iter()
        .cloned()
        .zip(model.params.tensors().iter().cloned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionMode;

    fn model() -> AscModel {
        let fcfg = FusionConfig::new(FusionMode::CombinedSeparate, 8)
            .with_heads(4)
            .with_separate_layers(1, 2)
            .with_hidden(12);
        let mut m = AscModel::build(&BackboneConfig::desk(), &fcfg, 11).unwrap();
        m.bn[0].mean[3] = 0.125;
        m.bn[1].var[0] = std::f64::consts::PI;
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = to_bytes(&m).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = to_bytes(&model()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            from_bytes(&bad),
            Err(Error::Parse(ParseError::MalformedHeader { offset: 0, .. }))
        ));
        assert!(matches!(
            from_bytes(&bytes[..bytes.len() - 5]),
            Err(Error::Parse(ParseError::Truncated { .. }))
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(from_bytes(&long).is_err());
    }
}

//! Versioned binary checkpoints: magic "DTNN", a schema version, a JSON
//! config blob, a named tensor table, raw little-endian f32 parameters,
//! and a trailing SHA-256 over everything before it.

use std::path::Path;

use ndarray::{Array1, Array4, NdFloat};
use sha2::{Digest, Sha256};

use super::layers::Conv2d;
use super::model::{NetConfig, ReconNet};
use super::NetError;

const MAGIC: &[u8; 4] = b"DTNN";
const SCHEMA_VERSION: u32 = 1;
const HASH_LEN: usize = 32;

fn corrupt(reason: impl Into<String>) -> NetError {
    NetError::Checkpoint {
        reason: reason.into(),
    }
}

/// Serializes the network (converted to f32) plus a caller-supplied JSON
/// blob. The stored config has the shape
/// `{"net": <architecture>, "extra": <blob>}`.
pub fn save_checkpoint<T: NdFloat>(
    path: &Path,
    net: &ReconNet<T>,
    extra: &serde_json::Value,
) -> Result<(), NetError> {
    let net32 = net.to_f32();
    let config = serde_json::json!({
        "net": net32.config(),
        "extra": extra,
    });
    let config_bytes = serde_json::to_vec(&config)?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(config_bytes.len()).expect("config fits").to_le_bytes());
    out.extend_from_slice(&config_bytes);

    let layers = net32.layers();
    let tensor_count = layers.len() * 2;
    out.extend_from_slice(&u32::try_from(tensor_count).expect("small table").to_le_bytes());
    for (name, layer) in &layers {
        let (kh, kw, ci, co) = layer.weight.dim();
        write_table_entry(&mut out, &format!("{name}.weight"), &[kh, kw, ci, co]);
        write_table_entry(&mut out, &format!("{name}.bias"), &[layer.bias.len()]);
    }
    for (_, layer) in &layers {
        for v in layer.weight.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in layer.bias.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    std::fs::write(path, out)?;
    Ok(())
}

fn write_table_entry(out: &mut Vec<u8>, name: &str, dims: &[usize]) {
    let bytes = name.as_bytes();
    out.extend_from_slice(&u16::try_from(bytes.len()).expect("short name").to_le_bytes());
    out.extend_from_slice(bytes);
    out.push(u8::try_from(dims.len()).expect("small rank"));
    for &d in dims {
        out.extend_from_slice(&u32::try_from(d).expect("small dim").to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        if self.pos + n > self.buf.len() {
            return Err(corrupt("file truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NetError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NetError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, NetError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Loads a checkpoint, verifying magic, schema version, and the content
/// hash, and returns the network together with the stored config blob.
pub fn load_checkpoint(path: &Path) -> Result<(ReconNet<f32>, serde_json::Value), NetError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < HASH_LEN + 12 {
        return Err(corrupt("file too short to be a checkpoint"));
    }
    let (body, stored_hash) = bytes.split_at(bytes.len() - HASH_LEN);
    let digest = Sha256::digest(body);
    if digest.as_slice() != stored_hash {
        return Err(corrupt("content hash mismatch"));
    }

    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(corrupt("bad magic, not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != SCHEMA_VERSION {
        return Err(corrupt(format!(
            "unsupported schema version {version}, expected {SCHEMA_VERSION}"
        )));
    }
    let config_len = r.u32()? as usize;
    let config: serde_json::Value = serde_json::from_slice(r.take(config_len)?)?;
    let net_config: NetConfig = serde_json::from_value(
        config
            .get("net")
            .cloned()
            .ok_or_else(|| corrupt("config blob lacks a \"net\" entry"))?,
    )?;

    let tensor_count = r.u32()? as usize;
    if tensor_count != 14 {
        return Err(corrupt(format!(
            "expected 14 tensors (7 conv layers), found {tensor_count}"
        )));
    }
    let mut table = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| corrupt("tensor name is not UTF-8"))?
            .to_owned();
        let rank = r.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        table.push((name, dims));
    }

    let expected_names = ["enc1", "enc2", "enc3", "bottleneck", "dec1", "dec2", "head"];
    let mut layers = Vec::with_capacity(7);
    for (i, layer_name) in expected_names.iter().enumerate() {
        let (wname, wdims) = &table[2 * i];
        let (bname, bdims) = &table[2 * i + 1];
        if wname != &format!("{layer_name}.weight") || bname != &format!("{layer_name}.bias") {
            return Err(corrupt(format!(
                "unexpected tensor order: found {wname}/{bname}, expected {layer_name}.*"
            )));
        }
        if wdims.len() != 4 || bdims.len() != 1 || wdims[3] != bdims[0] {
            return Err(corrupt(format!("inconsistent shapes for layer {layer_name}")));
        }
        let mut weight = Vec::with_capacity(wdims.iter().product());
        for _ in 0..weight.capacity() {
            weight.push(r.f32()?);
        }
        let mut bias = Vec::with_capacity(bdims[0]);
        for _ in 0..bias.capacity() {
            bias.push(r.f32()?);
        }
        layers.push(Conv2d {
            weight: Array4::from_shape_vec((wdims[0], wdims[1], wdims[2], wdims[3]), weight)
                .map_err(|e| corrupt(format!("bad weight shape: {e}")))?,
            bias: Array1::from_vec(bias),
        });
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after parameter data"));
    }

    let derived = [layers[0].c_out(), layers[1].c_out(), layers[2].c_out()];
    if derived != net_config.channels {
        return Err(corrupt(format!(
            "layer shapes imply channels {derived:?} but config says {:?}",
            net_config.channels
        )));
    }
    Ok((ReconNet::from_layers(layers, net_config), config))
}

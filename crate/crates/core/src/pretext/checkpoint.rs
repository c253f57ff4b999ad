//! Binary checkpoints: `FMPT`, then version, `n`, `m` as little-endian u32,
//! then W1, b1, W2, b2 as little-endian f32.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use super::PretextModel;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FMPT";
const VERSION: u32 = 1;
const HEADER: usize = 16;

pub fn encode_checkpoint(model: &PretextModel) -> Vec<u8> {
    let count = model.param_count();
    let mut out = vec![0u8; HEADER + 4 * count];
    out[..4].copy_from_slice(MAGIC);
    LittleEndian::write_u32(&mut out[4..8], VERSION);
    LittleEndian::write_u32(&mut out[8..12], model.n as u32);
    LittleEndian::write_u32(&mut out[12..16], model.m as u32);
    for i in 0..count {
        let at = HEADER + 4 * i;
        LittleEndian::write_f32(&mut out[at..at + 4], model.param(i) as f32);
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<PretextModel> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::Parse("not a pretext checkpoint".into()));
    }
    let version = LittleEndian::read_u32(&bytes[4..8]);
    if version != VERSION {
        return Err(Error::Parse(format!("checkpoint version {version} unsupported")));
    }
    let n = LittleEndian::read_u32(&bytes[8..12]) as usize;
    let m = LittleEndian::read_u32(&bytes[12..16]) as usize;
    let mut model = PretextModel::zeros(n, m)?;
    let count = model.param_count();
    if bytes.len() != HEADER + 4 * count {
        return Err(Error::Parse(format!(
            "checkpoint has {} bytes, expected {}",
            bytes.len(),
            HEADER + 4 * count
        )));
    }
    for i in 0..count {
        let at = HEADER + 4 * i;
        model.set_param(i, LittleEndian::read_f32(&bytes[at..at + 4]) as f64);
    }
    Ok(model)
}

pub fn save_checkpoint(model: &PretextModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<PretextModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

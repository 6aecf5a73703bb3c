//! Checkpoint container: magic "MGCV", a version byte, then length-prefixed
//! records of (name, shape, f32 little-endian values) in registration order.

use super::params::ParamSet;
use super::{Elem, Tensor};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"MGCV";
const VERSION: u8 = 1;

pub fn save_checkpoint<E: Elem>(params: &ParamSet<E>, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (_, name, tensor) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(tensor.cols() as u32).to_le_bytes());
        for &v in tensor.data() {
            out.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Loads a checkpoint into an already-built parameter set. Every record must
/// match an existing parameter by name and shape, and every parameter must be
/// covered.
pub fn load_checkpoint<E: Elem>(params: &mut ParamSet<E>, path: &Path) -> Result<()> {
    fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
        if *at + n > bytes.len() {
            return Err(Error::Data(format!(
                "checkpoint truncated at byte {} (wanted {n} more)",
                *at
            )));
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    }
    fn take_u32(bytes: &[u8], at: &mut usize) -> Result<u32> {
        let b = take(bytes, at, 4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut at = 0usize;

    if take(&bytes, &mut at, 4)? != MAGIC {
        return Err(Error::Data("not a checkpoint file (bad magic)".into()));
    }
    let version = take(&bytes, &mut at, 1)?[0];
    if version != VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = take_u32(&bytes, &mut at)? as usize;
    if count != params.len() {
        return Err(Error::Data(format!(
            "checkpoint has {count} parameters, model has {}",
            params.len()
        )));
    }
    let mut seen = vec![false; params.len()];
    for _ in 0..count {
        let name_len = take_u32(&bytes, &mut at)? as usize;
        let name = std::str::from_utf8(take(&bytes, &mut at, name_len)?)
            .map_err(|_| Error::Data("checkpoint parameter name is not utf-8".into()))?
            .to_string();
        let rows = take_u32(&bytes, &mut at)? as usize;
        let cols = take_u32(&bytes, &mut at)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let b = take(&bytes, &mut at, 4)?;
            data.push(E::from_f32(f32::from_le_bytes(b.try_into().unwrap())));
        }
        let id = params
            .lookup(&name)
            .ok_or_else(|| Error::Data(format!("checkpoint has unknown parameter {name:?}")))?;
        if seen[id.index()] {
            return Err(Error::Data(format!(
                "checkpoint repeats parameter {name:?}"
            )));
        }
        seen[id.index()] = true;
        let target = params.get_mut(id);
        if target.shape() != (rows, cols) {
            return Err(Error::Data(format!(
                "checkpoint parameter {name:?} is {rows}x{cols}, model wants {}",
                target.shape_string()
            )));
        }
        *target = Tensor::from_vec(rows, cols, data)?;
    }
    if at != bytes.len() {
        return Err(Error::Data(format!(
            "checkpoint has {} trailing bytes",
            bytes.len() - at
        )));
    }
    Ok(())
}

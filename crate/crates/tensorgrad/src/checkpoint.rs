//! Binary tensor checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"TGCKPT01"
//! u32    entry count
//! entry: u32 name length, UTF-8 name, u8 kind (0 weight, 1 bias, 2 plain),
//!        u32 rank, rank x u64 dims, product(dims) x f64 values
//! ```

use std::io::{Read, Write};

use crate::error::{GradError, Result};
use crate::param::{ParamKind, ParameterSet};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"TGCKPT01";

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub kind: Option<ParamKind>,
    pub tensor: Tensor,
}

fn io_err(e: std::io::Error) -> GradError {
    GradError::Checkpoint(e.to_string())
}

pub fn write_entries<W: Write>(mut w: W, entries: &[Entry]) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&(entries.len() as u32).to_le_bytes()).map_err(io_err)?;
    for e in entries {
        let name = e.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name).map_err(io_err)?;
        let kind = match e.kind {
            Some(ParamKind::Weight) => 0u8,
            Some(ParamKind::Bias) => 1,
            None => 2,
        };
        w.write_all(&[kind]).map_err(io_err)?;
        let shape = e.tensor.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes()).map_err(io_err)?;
        for d in shape {
            w.write_all(&(*d as u64).to_le_bytes()).map_err(io_err)?;
        }
        let mut buf = Vec::with_capacity(e.tensor.len() * 8);
        for v in e.tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_entries<R: Read>(mut r: R) -> Result<Vec<Entry>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(GradError::Checkpoint("bad magic".into()));
    }
    let count = read_u32(&mut r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|e| GradError::Checkpoint(e.to_string()))?;
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind).map_err(io_err)?;
        let kind = match kind[0] {
            0 => Some(ParamKind::Weight),
            1 => Some(ParamKind::Bias),
            2 => None,
            k => return Err(GradError::Checkpoint(format!("unknown kind tag {k} for `{name}`"))),
        };
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(io_err)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw).map_err(io_err)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(Entry {
            name,
            kind,
            tensor: Tensor::new(shape, data),
        });
    }
    Ok(entries)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

pub fn parameter_entries(params: &ParameterSet) -> Vec<Entry> {
    params
        .iter()
        .map(|(name, p)| Entry {
            name: name.to_string(),
            kind: Some(p.kind),
            tensor: p.value.clone(),
        })
        .collect()
}

/// Collects entries carrying a parameter kind into a [`ParameterSet`];
/// plain entries are ignored.
pub fn parameters_from_entries(entries: &[Entry]) -> ParameterSet {
    let mut ps = ParameterSet::new();
    for e in entries {
        if let Some(kind) = e.kind {
            ps.insert(e.name.clone(), kind, e.tensor.clone());
        }
    }
    ps
}

pub fn save_parameters(path: &std::path::Path, params: &ParameterSet) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_entries(std::io::BufWriter::new(file), &parameter_entries(params))
}

pub fn load_parameters(path: &std::path::Path) -> Result<ParameterSet> {
    let file = std::fs::File::open(path).map_err(io_err)?;
    Ok(parameters_from_entries(&read_entries(std::io::BufReader::new(file))?))
}

//! Binary serialization for [`ParamVector`]: offset table followed by
//! little-endian 64-bit floats. Used for run checkpoints.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{LayerRole, LayerSegment, ParamVector};

const MAGIC: &[u8; 4] = b"FGV1";

pub fn write_param_vector<W: Write>(pv: &ParamVector, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(pv.segments().len() as u64).to_le_bytes())?;
    for seg in pv.segments() {
        w.write_all(&(seg.start as u64).to_le_bytes())?;
        w.write_all(&(seg.len as u64).to_le_bytes())?;
        let role = match seg.role {
            LayerRole::Representation => 0u8,
            LayerRole::Decision => 1u8,
        };
        w.write_all(&[role])?;
    }
    w.write_all(&(pv.len() as u64).to_le_bytes())?;
    for v in pv.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_param_vector<R: Read>(mut r: R) -> Result<ParamVector> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidArgument(
            "not a parameter-vector file (bad magic)".into(),
        ));
    }
    let n_segments = read_u64(&mut r)? as usize;
    let mut segments = Vec::with_capacity(n_segments);
    for _ in 0..n_segments {
        let start = read_u64(&mut r)? as usize;
        let len = read_u64(&mut r)? as usize;
        let mut role_byte = [0u8; 1];
        r.read_exact(&mut role_byte)?;
        let role = match role_byte[0] {
            0 => LayerRole::Representation,
            1 => LayerRole::Decision,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "invalid layer role byte {other}"
                )))
            }
        };
        segments.push(LayerSegment { start, len, role });
    }
    let n_values = read_u64(&mut r)? as usize;
    let mut values = Vec::with_capacity(n_values);
    let mut buf = [0u8; 8];
    for _ in 0..n_values {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    ParamVector::new(values, segments)
}

pub fn save_param_vector(pv: &ParamVector, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_param_vector(pv, std::io::BufWriter::new(file))?;
    Ok(())
}

pub fn load_param_vector(path: &Path) -> Result<ParamVector> {
    let file = std::fs::File::open(path)?;
    read_param_vector(std::io::BufReader::new(file))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

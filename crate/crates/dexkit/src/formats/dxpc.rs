//! DXPC point-cloud files.
//!
//! Little-endian layout: magic `DXPC`, version u32, point count u32, field
//! count u32 (5), then N records of (f32 x, f32 y, f32 z, u8 label,
//! u8 origin).

use std::fs;
use std::path::Path;

use dexkit_core::geometry::Vec3;
use dexkit_core::sensing::{LabeledPointCloud, PointLabel, PointOrigin};

use crate::{DexkitError, Result};

pub const MAGIC: &[u8; 4] = b"DXPC";
pub const VERSION: u32 = 1;
pub const FIELDS: u32 = 5;

pub fn encode(cloud: &LabeledPointCloud) -> Vec<u8> {
    let n = cloud.len();
    let mut out = Vec::with_capacity(16 + n * 14);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&FIELDS.to_le_bytes());
    for i in 0..n {
        let p = cloud.points[i];
        out.extend_from_slice(&(p.x as f32).to_le_bytes());
        out.extend_from_slice(&(p.y as f32).to_le_bytes());
        out.extend_from_slice(&(p.z as f32).to_le_bytes());
        out.push(cloud.labels[i].code());
        out.push(cloud.origins[i].code());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<LabeledPointCloud> {
    let bad = |msg: &str| DexkitError::runtime(format!("bad DXPC: {msg}"));
    if bytes.len() < 16 {
        return Err(bad("truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("magic mismatch"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let fields = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if fields != FIELDS {
        return Err(bad(&format!("unsupported field count {fields}")));
    }
    let rec = 14;
    if bytes.len() != 16 + n * rec {
        return Err(bad("length mismatch"));
    }
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut origins = Vec::with_capacity(n);
    for i in 0..n {
        let o = 16 + i * rec;
        let x = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let y = f32::from_le_bytes(bytes[o + 4..o + 8].try_into().unwrap());
        let z = f32::from_le_bytes(bytes[o + 8..o + 12].try_into().unwrap());
        points.push(Vec3::new(x as f64, y as f64, z as f64));
        labels.push(PointLabel::from_code(bytes[o + 12]).ok_or_else(|| bad("label code"))?);
        origins.push(PointOrigin::from_code(bytes[o + 13]).ok_or_else(|| bad("origin code"))?);
    }
    Ok(LabeledPointCloud { points, labels, origins })
}

pub fn write(path: &Path, cloud: &LabeledPointCloud) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, encode(cloud))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<LabeledPointCloud> {
    decode(&fs::read(path)?)
}

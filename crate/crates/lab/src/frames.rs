//! `RLGF` frame datasets: a small header followed by 8-bit planar frames.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use transferlab_core::envs::Frame;
use transferlab_core::numerics::Tensor;

use crate::error::{FormatError, Result};
use crate::wire::{put_u32, Cursor};

pub const MAGIC: &[u8; 4] = b"RLGF";
pub const VERSION: u32 = 1;

fn corrupt(msg: String) -> FormatError {
    FormatError::CorruptDataset(msg)
}

/// Writes `frames` (all `[C, H, W]` with values in `[0, 1]`).
pub fn write_frames(w: &mut impl Write, frames: &[Frame]) -> Result<()> {
    let shape: [usize; 3] = match frames.first() {
        Some(f) => f.shape().try_into().map_err(|_| corrupt(format!("frame rank {} is not 3", f.shape().len())))?,
        None => [0, 0, 0],
    };
    let [c, h, wd] = shape;
    if c > u8::MAX as usize || h > u16::MAX as usize || wd > u16::MAX as usize {
        return Err(corrupt(format!("frame shape {shape:?} does not fit the header")));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_u32(w, frames.len())?;
    w.write_all(&[c as u8])?;
    w.write_all(&(h as u16).to_le_bytes())?;
    w.write_all(&(wd as u16).to_le_bytes())?;
    let mut bytes = Vec::with_capacity(c * h * wd);
    for f in frames {
        if f.shape() != shape {
            return Err(corrupt(format!("frame shape {:?} differs from {shape:?}", f.shape())));
        }
        bytes.clear();
        bytes.extend(f.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_frames_from(buf: &[u8]) -> Result<Vec<Frame>> {
    let mut r = Cursor::new(buf, corrupt);
    if r.take(4)? != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let (c, h, w) = (r.u8()? as usize, r.u16()? as usize, r.u16()? as usize);
    let len = c * h * w;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let data = r.take(len)?.iter().map(|&b| b as f32 / 255.0).collect();
        out.push(Tensor::new([c, h, w], data)?);
    }
    if !r.is_empty() {
        return Err(corrupt("trailing bytes after the last frame".into()));
    }
    Ok(out)
}

pub fn save_frames(path: &Path, frames: &[Frame]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_frames(&mut w, frames)?;
    w.flush()?;
    Ok(())
}

pub fn load_frames(path: &Path) -> Result<Vec<Frame>> {
    read_frames_from(&fs::read(path)?)
}

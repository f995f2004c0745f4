//! Binary weight checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "SLDCKPT\0"
//! version u32      1
//! layers  u32
//! per layer:
//!   n u64, m u64
//!   order u8       0 = row-major, 1 = column-major
//!   storage u8     0 = f32, 1 = bf16
//!   weights        n*m f32 in storage order
//!   bias           n f32
//! ```
//!
//! BF16 weights are written as their exact `f32` value. Optimizer state and
//! hash tables are not saved; tables are rebuilt on load.

use std::io::{self, Read, Write};
use std::path::Path;

use slide_core::nn::NetworkSpec;
use slide_core::quant::WeightStorage;
use slide_core::{LayerWeights, Network, NnError, Rounding, StorageOrder};

pub const MAGIC: [u8; 8] = *b"SLDCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub fn write<W: Write>(net: &Network, mut w: W) -> Result<(), CheckpointError> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(net.num_layers() as u32).to_le_bytes())?;
    for layer in net.layers() {
        let lw = layer.weights();
        w.write_all(&(lw.n() as u64).to_le_bytes())?;
        w.write_all(&(lw.m() as u64).to_le_bytes())?;
        let order = match lw.order() {
            StorageOrder::RowMajor => 0u8,
            StorageOrder::ColMajor => 1,
        };
        let storage = match lw.storage() {
            WeightStorage::F32 => 0u8,
            WeightStorage::Bf16 => 1,
        };
        w.write_all(&[order, storage])?;
        let mut buf = Vec::with_capacity(4 * lw.n() * lw.m());
        for v in lw.buffer().to_vec().into_iter().chain(lw.bias().to_vec()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Read the weights of every layer.
pub fn read_weights<R: Read>(mut r: R) -> Result<Vec<LayerWeights>, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = read_u32(&mut r)? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let n = read_u64(&mut r)? as usize;
        let m = read_u64(&mut r)? as usize;
        let mut tags = [0u8; 2];
        r.read_exact(&mut tags)?;
        let order = match tags[0] {
            0 => StorageOrder::RowMajor,
            1 => StorageOrder::ColMajor,
            _ => return Err(CheckpointError::Corrupt("storage order tag")),
        };
        let storage = match tags[1] {
            0 => WeightStorage::F32,
            1 => WeightStorage::Bf16,
            _ => return Err(CheckpointError::Corrupt("weight storage tag")),
        };
        let len = n
            .checked_mul(m)
            .and_then(|nm| nm.checked_add(n))
            .ok_or(CheckpointError::Corrupt("layer size overflows"))?;
        let floats = read_f32s(&mut r, len)?;
        let (weights, bias) = floats.split_at(n * m);
        // BF16 values were written exactly, so the rounding mode is moot.
        layers.push(LayerWeights::from_physical(
            n,
            m,
            order,
            weights,
            bias,
            storage,
            Rounding::Truncate,
        )?);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(CheckpointError::Corrupt("trailing bytes"));
    }
    Ok(layers)
}

/// Rebuild a network from `spec` and saved weights.
pub fn read<R: Read>(spec: &NetworkSpec, r: R) -> Result<Network, CheckpointError> {
    Ok(Network::from_weights(spec, read_weights(r)?)?)
}

pub fn save(net: &Network, path: &Path) -> Result<(), CheckpointError> {
    write(net, io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load(spec: &NetworkSpec, path: &Path) -> Result<Network, CheckpointError> {
    read(spec, io::BufReader::new(std::fs::File::open(path)?))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, len: usize) -> Result<Vec<f32>, CheckpointError> {
    let mut out = Vec::new();
    let mut chunk = vec![0u8; 4 * 4096];
    let mut left = len;
    while left > 0 {
        let take = left.min(4096);
        let bytes = &mut chunk[..4 * take];
        r.read_exact(bytes)?;
        out.extend(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        left -= take;
    }
    Ok(out)
}

//! The `UACK` checkpoint format.
//!
//! ```text
//! "UACK"                     magic
//! u16                        version (1)
//! u32 len, len bytes         UTF-8 JSON hyperparameters
//! u32                        tensor count
//! per tensor:
//!   u16 len, len bytes       UTF-8 name
//!   u8 ndim, ndim x u32      shape
//!   prod(shape) x f32        row-major data
//! ```
//!
//! Integers and floats are little-endian. Tensors are written in the
//! parameter store's insertion order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde_json::Value;

use crate::error::{NnError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"UACK";
pub const VERSION: u16 = 1;

/// Hyperparameters plus trained weights.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub hyperparams: Value,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn new(hyperparams: Value, params: ParamStore<f32>) -> Self {
        Self { hyperparams, params }
    }

    /// The `kind` field of the hyperparameters, if any.
    pub fn kind(&self) -> Option<&str> {
        self.hyperparams.get("kind").and_then(Value::as_str)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(VERSION)?;
        let json = serde_json::to_vec(&self.hyperparams)?;
        w.write_u32::<LittleEndian>(len32(json.len())?)?;
        w.write_all(&json)?;
        w.write_u32::<LittleEndian>(len32(self.params.len())?)?;
        for p in self.params.iter() {
            let name = p.name.as_bytes();
            let nlen = u16::try_from(name.len()).map_err(|_| fmt_err("parameter name too long"))?;
            w.write_u16::<LittleEndian>(nlen)?;
            w.write_all(name)?;
            let shape = p.value.shape();
            let ndim = u8::try_from(shape.len()).map_err(|_| fmt_err("too many dimensions"))?;
            w.write_u8(ndim)?;
            for &d in shape {
                w.write_u32::<LittleEndian>(len32(d)?)?;
            }
            let mut buf = Vec::with_capacity(p.value.len() * 4);
            for &v in p.value.data() {
                buf.write_f32::<LittleEndian>(v)?;
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        Self::read_inner(&mut r).map_err(|e| match e {
            NnError::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => fmt_err("truncated checkpoint"),
            other => other,
        })
    }

    fn read_inner<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(fmt_err(format!("bad checkpoint magic {magic:?}")));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != VERSION {
            return Err(fmt_err(format!("unsupported checkpoint version {version}")));
        }
        let jlen = r.read_u32::<LittleEndian>()? as usize;
        let mut json = vec![0u8; jlen];
        r.read_exact(&mut json)?;
        let hyperparams = serde_json::from_slice(&json)?;
        let count = r.read_u32::<LittleEndian>()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let nlen = r.read_u16::<LittleEndian>()? as usize;
            let mut name = vec![0u8; nlen];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| fmt_err("parameter name is not UTF-8"))?;
            let ndim = r.read_u8()? as usize;
            let shape = (0..ndim)
                .map(|_| Ok(r.read_u32::<LittleEndian>()? as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut data = vec![0f32; n];
            r.read_f32_into::<LittleEndian>(&mut data)?;
            params.add(name, Tensor::new(shape, data)?)?;
        }
        Ok(Self { hyperparams, params })
    }

    /// Writes to `path`; a partially written file is removed on failure.
    pub fn save(&self, path: &Path) -> Result<()> {
        let result = (|| {
            let mut w = BufWriter::new(File::create(path)?);
            self.write(&mut w)?;
            w.flush()?;
            Ok(())
        })();
        if result.is_err() {
            let _ = std::fs::remove_file(path);
        }
        result
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

fn fmt_err(msg: impl Into<String>) -> NnError {
    NnError::Format(msg.into())
}

fn len32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| fmt_err("length exceeds u32"))
}

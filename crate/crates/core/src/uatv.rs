//! The `UATV` TVIR container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "UATV"                magic
//! u16                   version (1)
//! u32                   record count
//! per record:
//!   u16 T, u16 D
//!   f64 time_step, f64 delay_step
//!   T*D*2 x f32         interleaved (re, im), snapshot-major
//!   u32 len, len bytes  UTF-8 JSON metadata
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use serde_json::Value;

use crate::error::{CoreError, Result};
use crate::tvir::Tvir;

pub const MAGIC: &[u8; 4] = b"UATV";
pub const VERSION: u16 = 1;

/// One TVIR plus its free-form JSON metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct UatvRecord {
    pub tvir: Tvir,
    pub metadata: Value,
}

impl UatvRecord {
    pub fn new(tvir: Tvir, metadata: Value) -> Self {
        Self { tvir, metadata }
    }

    pub fn bare(tvir: Tvir) -> Self {
        Self { tvir, metadata: Value::Object(Default::default()) }
    }
}

fn format_err(msg: impl Into<String>) -> CoreError {
    CoreError::Format(msg.into())
}

pub fn write_records<W: Write>(mut w: W, records: &[UatvRecord]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    let count = u32::try_from(records.len()).map_err(|_| format_err("too many records"))?;
    w.write_u32::<LittleEndian>(count)?;
    for rec in records {
        write_record(&mut w, rec)?;
    }
    Ok(())
}

fn write_record<W: Write>(w: &mut W, rec: &UatvRecord) -> Result<()> {
    let t = &rec.tvir;
    let nt = u16::try_from(t.num_snapshots()).map_err(|_| format_err("T exceeds u16"))?;
    let nd = u16::try_from(t.num_taps()).map_err(|_| format_err("D exceeds u16"))?;
    w.write_u16::<LittleEndian>(nt)?;
    w.write_u16::<LittleEndian>(nd)?;
    w.write_f64::<LittleEndian>(t.time_step())?;
    w.write_f64::<LittleEndian>(t.delay_step())?;
    let mut buf = Vec::with_capacity(t.as_slice().len() * 8);
    for x in t.as_slice() {
        buf.write_f32::<LittleEndian>(x.re as f32)?;
        buf.write_f32::<LittleEndian>(x.im as f32)?;
    }
    w.write_all(&buf)?;
    let meta = serde_json::to_vec(&rec.metadata)?;
    let len = u32::try_from(meta.len()).map_err(|_| format_err("metadata too large"))?;
    w.write_u32::<LittleEndian>(len)?;
    w.write_all(&meta)?;
    Ok(())
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<UatvRecord>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(format_err(format!("bad magic {magic:?}")));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        records.push(read_record(&mut r).map_err(|e| match e {
            CoreError::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                format_err(format!("truncated at record {i}"))
            }
            other => other,
        })?);
    }
    Ok(records)
}

fn read_record<R: Read>(r: &mut R) -> Result<UatvRecord> {
    let nt = r.read_u16::<LittleEndian>()? as usize;
    let nd = r.read_u16::<LittleEndian>()? as usize;
    let time_step = r.read_f64::<LittleEndian>()?;
    let delay_step = r.read_f64::<LittleEndian>()?;
    let mut raw = vec![0f32; nt * nd * 2];
    r.read_f32_into::<LittleEndian>(&mut raw)?;
    let data = raw.chunks_exact(2).map(|p| Complex64::new(p[0] as f64, p[1] as f64)).collect();
    let tvir = Tvir::from_flat(data, nt, nd, time_step, delay_step)?;
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut meta = vec![0u8; len];
    r.read_exact(&mut meta)?;
    let metadata = serde_json::from_slice(&meta)?;
    Ok(UatvRecord { tvir, metadata })
}

/// Writes a UATV file. A partially written file is removed on failure.
pub fn write_file(path: &Path, records: &[UatvRecord]) -> Result<()> {
    let result = (|| {
        let mut w = BufWriter::new(File::create(path)?);
        write_records(&mut w, records)?;
        w.flush()?;
        Ok(())
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(path);
    }
    result
}

pub fn read_file(path: &Path) -> Result<Vec<UatvRecord>> {
    read_records(BufReader::new(File::open(path)?))
}

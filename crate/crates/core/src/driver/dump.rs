use std::io::{Read, Write};
use std::path::Path;

use super::DriverError;

/// File layout: magic, `u32` version, `u32` field count, then per field a
/// `u32` name length, the UTF-8 name, a `u64` value count and the values
/// as little-endian `f64`.
pub const DUMP_MAGIC: &[u8; 8] = b"ALEHYDRO";
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DumpField {
    pub name: String,
    pub values: Vec<f64>,
}

impl DumpField {
    pub fn new(name: &str, values: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            values: values.to_vec(),
        }
    }
}

pub fn write_dump(path: &Path, fields: &[DumpField]) -> Result<(), DriverError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    buf.extend_from_slice(&(fields.len() as u32).to_le_bytes());
    for f in fields {
        buf.extend_from_slice(&(f.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(f.name.as_bytes());
        buf.extend_from_slice(&(f.values.len() as u64).to_le_bytes());
        for v in &f.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DriverError> {
        if self.pos + n > self.data.len() {
            return Err(DriverError::Dump(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DriverError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DriverError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_dump(path: &Path) -> Result<Vec<DumpField>, DriverError> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut c = Cursor { data: &data, pos: 0 };
    if c.take(8)? != DUMP_MAGIC {
        return Err(DriverError::Dump("bad magic".into()));
    }
    let version = c.u32()?;
    if version != DUMP_VERSION {
        return Err(DriverError::Dump(format!("unsupported version {version}")));
    }
    let n = c.u32()?;
    let mut fields = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| DriverError::Dump("field name is not UTF-8".into()))?
            .to_string();
        let count = c.u64()? as usize;
        let raw = c.take(count.checked_mul(8).ok_or_else(|| DriverError::Dump("field too large".into()))?)?;
        let values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        fields.push(DumpField { name, values });
    }
    if c.pos != data.len() {
        return Err(DriverError::Dump("trailing bytes".into()));
    }
    Ok(fields)
}

//! Binary weight archive.
//!
//! Layout: magic bytes "WSG1", little-endian u32 tensor count, then per
//! tensor: u16 name length, UTF-8 name, u8 rank, rank x u32 dims, and the
//! raw little-endian f32 payload. Loaders reject unknown magic.

use crate::error::{Error, Result};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"WSG1";

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl ArchiveEntry {
    pub fn new(name: impl Into<String>, dims: Vec<u32>, data: Vec<f32>) -> Self {
        ArchiveEntry { name: name.into(), dims, data }
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }
}

pub fn save_archive(w: &mut impl Write, entries: &[ArchiveEntry]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for e in entries {
        if e.name.len() > u16::MAX as usize {
            return Err(Error::config(format!("tensor name too long: {}", e.name.len())));
        }
        if e.element_count() != e.data.len() {
            return Err(Error::internal(format!(
                "archive entry '{}': {} elements but dims {:?}",
                e.name,
                e.data.len(),
                e.dims
            )));
        }
        w.write_all(&(e.name.len() as u16).to_le_bytes())?;
        w.write_all(e.name.as_bytes())?;
        w.write_all(&[e.dims.len() as u8])?;
        for d in &e.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        for v in &e.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_archive(r: &mut impl Read) -> Result<Vec<ArchiveEntry>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::data(format!(
            "not a weight archive: magic {:02x?} (expected {:02x?})",
            magic, MAGIC
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let count = u32::from_le_bytes(b4) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let name_len = u16::from_le_bytes(b2) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::data("archive tensor name is not UTF-8"))?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let mut dims = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            r.read_exact(&mut b4)?;
            dims.push(u32::from_le_bytes(b4));
        }
        let n: usize = dims.iter().map(|&d| d as usize).product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b4)?;
            data.push(f32::from_le_bytes(b4));
        }
        entries.push(ArchiveEntry { name, dims, data });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let entries = vec![
            ArchiveEntry::new("enc.stem.w", vec![4, 3, 3, 3], (0..108).map(|i| i as f32).collect()),
            ArchiveEntry::new("head.b", vec![8], vec![0.5; 8]),
        ];
        let mut buf = Vec::new();
        save_archive(&mut buf, &entries).unwrap();
        let back = load_archive(&mut buf.as_slice()).unwrap();
        assert_eq!(back, entries);
    }

    #[test]
    fn rejects_unknown_magic() {
        let mut buf = b"NOPE".to_vec();
        buf.extend_from_slice(&0u32.to_le_bytes());
        assert!(load_archive(&mut buf.as_slice()).is_err());
    }
}

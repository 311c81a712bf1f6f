//! Binary container for named f64 arrays plus a JSON manifest.
//!
//! Layout (little endian): 8-byte magic, u32 version, u32 manifest length,
//! manifest bytes, u32 array count, then per array: u32 name length, name,
//! u32 rank, rank x u64 dims, f64 data.

use std::io::{Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"MURMCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub manifest: String,
    pub arrays: Vec<(String, Tensor)>,
}

impl Archive {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(self.manifest.as_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, t) in &self.arrays {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Corrupt("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Corrupt(format!("unsupported checkpoint version {version}")));
        }
        let len = r.u32()? as usize;
        let manifest = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Corrupt("manifest is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Corrupt("array name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&n| n <= (bytes.len() - r.pos) / 8)
                .ok_or_else(|| Error::Corrupt(format!("array {name} is truncated")))?;
            let data = r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Corrupt("trailing bytes after last array".into()));
        }
        Ok(Archive { manifest, arrays })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupt("unexpected end of checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Archive {
        Archive {
            manifest: r#"{"k":1}"#.into(),
            arrays: vec![
                ("a".into(), Tensor::new([2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap()),
                ("b".into(), Tensor::scalar(std::f64::consts::PI)),
            ],
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let a = sample();
        let b = Archive::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(a.manifest, b.manifest);
        for ((n1, t1), (n2, t2)) in a.arrays.iter().zip(&b.arrays) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(t1), bits(t2));
        }
    }

    #[test]
    fn truncation_and_garbage_are_corrupt() {
        let bytes = sample().to_bytes();
        for cut in [0, 5, 12, bytes.len() - 1] {
            assert!(matches!(Archive::from_bytes(&bytes[..cut]), Err(Error::Corrupt(_))), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Archive::from_bytes(&extra), Err(Error::Corrupt(_))));
    }
}

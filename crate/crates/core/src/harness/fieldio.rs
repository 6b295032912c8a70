//! Binary array files: a 16-byte magic, little-endian `u32` rank, `u32`
//! dims, then the `f64` payload in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{Density, DensityRole, Distribution, Field};
use crate::grid::{SpatialGrid, VelocityGrid};

pub const MAGIC: &[u8; 16] = b"GYRODRIFT\0FLD\0\0\0";

/// A dense array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl FieldFile {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = element_count(&dims)?;
        if len != data.len() {
            return Err(Error::FieldFormat(format!(
                "dims {dims:?} hold {len} values, payload has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn encoded_len(&self) -> usize {
        16 + 4 + 4 * self.dims.len() + 8 * self.data.len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&u32_of(self.dims.len())?.to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&u32_of(*d)?.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..16] != MAGIC {
            return Err(Error::FieldFormat("magic mismatch".into()));
        }
        let mut pos = 16;
        let mut read_u32 = |what: &str| -> Result<usize> {
            let chunk = bytes.get(pos..pos + 4).ok_or_else(|| {
                Error::FieldFormat(format!("truncated header while reading {what}"))
            })?;
            pos += 4;
            Ok(u32::from_le_bytes(chunk.try_into().unwrap()) as usize)
        };
        let rank = read_u32("rank")?;
        let dims = (0..rank)
            .map(|i| read_u32(&format!("dim {i}")))
            .collect::<Result<Vec<_>>>()?;
        let header = 20 + 4 * rank;
        let len = element_count(&dims)?;
        let expected = len
            .checked_mul(8)
            .and_then(|p| p.checked_add(header))
            .ok_or_else(|| Error::FieldFormat(format!("dimension overflow for {dims:?}")))?;
        if bytes.len() < expected {
            return Err(Error::FieldFormat(format!(
                "truncated payload: expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        if bytes.len() > expected {
            return Err(Error::FieldFormat(format!(
                "{} trailing bytes after payload",
                bytes.len() - expected
            )));
        }
        let data = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }
}

fn u32_of(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::FieldFormat(format!("dimension {n} exceeds u32")))
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .ok_or_else(|| Error::FieldFormat(format!("dimension overflow for {dims:?}")))
}

pub fn dump_field(file: &FieldFile, path: &Path) -> Result<()> {
    let bytes = file.to_bytes()?;
    let mut out = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    out.write_all(&bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_field(path: &Path) -> Result<FieldFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    FieldFile::from_bytes(&bytes)
}

impl From<&Density> for FieldFile {
    fn from(d: &Density) -> Self {
        let n = d.grid.n();
        FieldFile {
            dims: vec![n, n],
            data: d.values.clone(),
        }
    }
}

impl From<&Field> for FieldFile {
    fn from(e: &Field) -> Self {
        let n = e.grid.n();
        let mut data = e.x1.clone();
        data.extend_from_slice(&e.x2);
        FieldFile {
            dims: vec![2, n, n],
            data,
        }
    }
}

impl From<&Distribution> for FieldFile {
    fn from(f: &Distribution) -> Self {
        let (n, nv) = (f.spatial.n(), f.velocity.n());
        FieldFile {
            dims: vec![n, n, nv, nv],
            data: f.values.clone(),
        }
    }
}

impl FieldFile {
    fn expect_dims(&self, dims: &[usize]) -> Result<()> {
        if self.dims != dims {
            return Err(Error::FieldFormat(format!(
                "expected dims {dims:?}, found {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn into_density(self, grid: SpatialGrid, role: DensityRole) -> Result<Density> {
        self.expect_dims(&[grid.n(), grid.n()])?;
        Density::new(grid, self.data, role)
    }

    pub fn into_field(self, grid: SpatialGrid) -> Result<Field> {
        let n = grid.n();
        self.expect_dims(&[2, n, n])?;
        let mut x1 = self.data;
        let x2 = x1.split_off(n * n);
        Ok(Field { grid, x1, x2 })
    }

    pub fn into_distribution(
        self,
        spatial: SpatialGrid,
        velocity: VelocityGrid,
    ) -> Result<Distribution> {
        self.expect_dims(&[spatial.n(), spatial.n(), velocity.n(), velocity.n()])?;
        Distribution::new(spatial, velocity, self.data)
    }
}

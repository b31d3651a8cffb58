//! Feature-vector files: `BMFV | count u32 | dim u32 | count*dim f32`, all
//! little-endian and row-major, plus a one-vector-per-line CSV form.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub const FVEC_MAGIC: &[u8; 4] = b"BMFV";

#[derive(Debug, Error)]
pub enum FvecError {
    #[error("not a feature-vector file")]
    BadMagic,
    #[error("dimension {0} must be a positive power of two")]
    InvalidDim(usize),
    #[error("row {row} has {got} values, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("could not parse {0:?} as a number")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub dim: usize,
    pub rows: Vec<Vec<f32>>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.rows[i].iter().map(|&x| x as f64).collect()
    }

    /// Scales every nonzero row to unit L2 norm.
    pub fn normalize(&mut self) {
        for r in &mut self.rows {
            let n = r.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            if n > 0.0 {
                for x in r.iter_mut() {
                    *x = (*x as f64 / n) as f32;
                }
            }
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), FvecError> {
        w.write_all(FVEC_MAGIC)?;
        w.write_u32::<LittleEndian>(self.rows.len() as u32)?;
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        for r in &self.rows {
            for &x in r {
                w.write_f32::<LittleEndian>(x)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dim * self.rows.len());
        self.write(&mut out).expect("writing to memory");
        out
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, FvecError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != FVEC_MAGIC {
            return Err(FvecError::BadMagic);
        }
        let count = r.read_u32::<LittleEndian>()? as usize;
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let mut rows = Vec::with_capacity(count);
        for _ in 0..count {
            let mut row = vec![0f32; dim];
            r.read_f32_into::<LittleEndian>(&mut row)?;
            rows.push(row);
        }
        Ok(Self { dim, rows })
    }

    /// One vector per line, comma separated; blank lines are skipped.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, FvecError> {
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut rows: Vec<Vec<f32>> = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| FvecError::Parse(e.to_string()))?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            let row = rec
                .iter()
                .map(|f| f.parse::<f32>().map_err(|_| FvecError::Parse(f.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(FvecError::Ragged {
                        row: rows.len(),
                        got: row.len(),
                        expected: first.len(),
                    });
                }
            }
            rows.push(row);
        }
        let dim = rows.first().map_or(0, Vec::len);
        Ok(Self { dim, rows })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FvecError> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.write_record(r.iter().map(|x| x.to_string()))
                .map_err(|e| FvecError::Parse(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads either format, deciding by the magic bytes.
    pub fn read_any(bytes: &[u8]) -> Result<Self, FvecError> {
        if bytes.starts_with(FVEC_MAGIC) {
            Self::read(bytes)
        } else {
            Self::read_csv(bytes)
        }
    }
}

/// `count` independent unit vectors uniform on the sphere in dimension
/// `dim`, reproducible from `seed`.
pub fn gen_dataset(count: usize, dim: usize, seed: u64) -> Result<FeatureSet, FvecError> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(FvecError::InvalidDim(dim));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let rows = (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                break v.iter().map(|x| (x / n) as f32).collect();
            }
        })
        .collect();
    Ok(FeatureSet { dim, rows })
}

//! Binary and CSV persistence of sample paths.
//!
//! Binary layout, all little-endian: the magic `FRD1`, `u32` version (1),
//! `f64` Hurst tag (NaN when untagged), `u32` dimension, `u64` point count,
//! `f64` start and end times, `u64` seed (0 when absent), then the values in
//! time-major order.

use super::{HurstParam, SamplePath, TimeGrid};
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"FRD1";
const VERSION: u32 = 1;

impl SamplePath {
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.hurst.map_or(f64::NAN, HurstParam::value).to_le_bytes())?;
        let dim = u32::try_from(self.dim()).map_err(|_| Error::Format("dimension exceeds u32".into()))?;
        w.write_all(&dim.to_le_bytes())?;
        w.write_all(&(self.n_points() as u64).to_le_bytes())?;
        w.write_all(&self.grid().t_start().to_le_bytes())?;
        w.write_all(&self.grid().t_end().to_le_bytes())?;
        w.write_all(&self.seed.unwrap_or(0).to_le_bytes())?;
        for v in self.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a path written by [`SamplePath::write_binary`]. A stored seed of
    /// 0 reads back as absent.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("missing FRD1 magic".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let hurst = f64::from_le_bytes(read_array(&mut r)?);
        let dim = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let n = usize::try_from(u64::from_le_bytes(read_array(&mut r)?))
            .map_err(|_| Error::Format("point count overflows".into()))?;
        let t_start = f64::from_le_bytes(read_array(&mut r)?);
        let t_end = f64::from_le_bytes(read_array(&mut r)?);
        let seed = u64::from_le_bytes(read_array(&mut r)?);
        let count = n
            .checked_mul(dim)
            .ok_or_else(|| Error::Format("value count overflows".into()))?;
        let mut raw = Vec::new();
        r.take(count as u64 * 8).read_to_end(&mut raw)?;
        if raw.len() != count * 8 {
            return Err(Error::Format(format!("expected {count} values, file is truncated")));
        }
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let grid = TimeGrid::new(n, t_start, t_end).map_err(|e| Error::Format(e.to_string()))?;
        let hurst = if hurst.is_nan() {
            None
        } else {
            Some(HurstParam::new(hurst).map_err(|e| Error::Format(e.to_string()))?)
        };
        let path = SamplePath::new(grid, dim, values).map_err(|e| Error::Format(e.to_string()))?;
        Ok(path.with_tags(hurst, (seed != 0).then_some(seed)))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_binary(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_binary(BufReader::new(File::open(path)?))
    }

    /// CSV with header `t,x1,...,xd` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dim()).map(|j| format!("x{j}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, row) in self.grid().times().zip(self.rows()) {
            write!(w, "{t:.16e}")?;
            for v in row {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

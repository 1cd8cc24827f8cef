//! Binary field snapshots.
//!
//! Layout (little endian): magic `OPOF`, `u32` version = 1, `u32` nx, `u32` ny,
//! `u32` ncomp, then `ncomp·nx·ny` `f64` values, component-major and row-major
//! within each component.

use std::io::{Read, Write};

use crate::error::{OpoError, Result};

pub const MAGIC: &[u8; 4] = b"OPOF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub ny: usize,
    pub components: Vec<Vec<f64>>,
}

impl Snapshot {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.nx * self.ny;
        if self.components.iter().any(|c| c.len() != n) {
            return Err(OpoError::Format("component length does not match nx*ny".into()));
        }
        w.write_all(MAGIC)?;
        for v in [VERSION, self.nx as u32, self.ny as u32, self.components.len() as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for comp in &self.components {
            for v in comp {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(OpoError::Format(format!("bad magic {magic:?}")));
        }
        let mut word = [0u8; 4];
        let mut header = [0u32; 4];
        for h in header.iter_mut() {
            r.read_exact(&mut word)?;
            *h = u32::from_le_bytes(word);
        }
        let [version, nx, ny, ncomp] = header;
        if version != VERSION {
            return Err(OpoError::Format(format!("unsupported version {version}")));
        }
        let n = nx as usize * ny as usize;
        let mut buf = [0u8; 8];
        let mut components = Vec::with_capacity(ncomp as usize);
        for _ in 0..ncomp {
            let mut comp = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                comp.push(f64::from_le_bytes(buf));
            }
            components.push(comp);
        }
        Ok(Snapshot {
            nx: nx as usize,
            ny: ny as usize,
            components,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }
}

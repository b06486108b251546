//! Versioned binary container for MPS checkpoints: magic, format version,
//! center position, then per-site shape headers and little-endian complex
//! payloads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array3;
use num_complex::Complex64 as C64;

use crate::{Error, Result};

use super::TfdMps;

const MAGIC: &[u8; 8] = b"MQRMSNAP";
const VERSION: u32 = 1;

/// Largest tensor accepted on load (elements), guards against corrupt
/// headers.
const MAX_ELEMS: u64 = 1 << 28;

pub fn save_mps(path: &Path, state: &TfdMps) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(state.center() as u64)?;
    w.write_u64::<LittleEndian>(state.num_sites() as u64)?;
    for i in 0..state.num_sites() {
        let t = state.site_tensor(i);
        let (l, d, r) = t.dim();
        w.write_u64::<LittleEndian>(l as u64)?;
        w.write_u64::<LittleEndian>(d as u64)?;
        w.write_u64::<LittleEndian>(r as u64)?;
        for z in t.iter() {
            w.write_f64::<LittleEndian>(z.re)?;
            w.write_f64::<LittleEndian>(z.im)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_mps(path: &Path) -> Result<TfdMps> {
    let mut rd = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    rd.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Engine(format!("{}: not a snapshot file", path.display())));
    }
    let version = rd.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Engine(format!(
            "{}: unsupported snapshot version {version}",
            path.display()
        )));
    }
    let center = rd.read_u64::<LittleEndian>()? as usize;
    let num_sites = rd.read_u64::<LittleEndian>()? as usize;
    if num_sites == 0 || num_sites > 4096 {
        return Err(Error::Engine(format!("{}: corrupt site count", path.display())));
    }
    let mut tensors = Vec::with_capacity(num_sites);
    for _ in 0..num_sites {
        let l = rd.read_u64::<LittleEndian>()?;
        let d = rd.read_u64::<LittleEndian>()?;
        let r = rd.read_u64::<LittleEndian>()?;
        let elems = l
            .checked_mul(d)
            .and_then(|x| x.checked_mul(r))
            .filter(|&x| x > 0 && x <= MAX_ELEMS)
            .ok_or_else(|| Error::Engine(format!("{}: corrupt tensor shape", path.display())))?;
        let mut data = Vec::with_capacity(elems as usize);
        for _ in 0..elems {
            let re = rd.read_f64::<LittleEndian>()?;
            let im = rd.read_f64::<LittleEndian>()?;
            data.push(C64::new(re, im));
        }
        let t = Array3::from_shape_vec((l as usize, d as usize, r as usize), data)
            .map_err(|e| Error::Engine(format!("{}: {e}", path.display())))?;
        tensors.push(t);
    }
    if center >= num_sites {
        return Err(Error::Engine(format!("{}: corrupt center index", path.display())));
    }
    Ok(TfdMps { tensors, center })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensornet::ChainLayout;
    use approx::assert_relative_eq;

    #[test]
    fn roundtrip() {
        let layout = ChainLayout::new(2, 3, true).unwrap();
        let mut state = TfdMps::product_state(&layout);
        // give it nontrivial bonds and phases
        state.tensors[1] = Array3::from_shape_fn((1, 4, 2), |(_, d, r)| {
            C64::new(d as f64 + 0.5, -(r as f64))
        });
        state.tensors[2] = Array3::from_shape_fn((2, 4, 1), |(l, d, _)| {
            C64::new(0.1 * l as f64, d as f64)
        });
        state.canonicalize_to(2);
        state.normalize();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.mps");
        save_mps(&path, &state).unwrap();
        let loaded = load_mps(&path).unwrap();
        assert_eq!(loaded.num_sites(), state.num_sites());
        assert_eq!(loaded.center(), state.center());
        for i in 0..state.num_sites() {
            let (a, b) = (state.site_tensor(i), loaded.site_tensor(i));
            assert_eq!(a.dim(), b.dim());
            for (x, y) in a.iter().zip(b.iter()) {
                assert_relative_eq!(x.re, y.re);
                assert_relative_eq!(x.im, y.im);
            }
        }
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.mps");
        std::fs::write(&path, b"NOTASNAPxxxxxxxxxxxxxxxx").unwrap();
        assert!(load_mps(&path).is_err());
    }
}

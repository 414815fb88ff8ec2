//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "KDAR" | version | { name_len | name bytes | rank | dims[rank] | f32 data }*
//! ```
//!
//! Adam moments, when present, follow the parameters as records named
//! `adam.m.<param>` / `adam.v.<param>`, plus a rank-1 `adam.step` record.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{AdamState, ParameterStore, Real, Tensor};

pub const MAGIC: &[u8; 4] = b"KDAR";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("parameter `{name}` has shape {found:?} in checkpoint, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("parameter `{0}` missing from checkpoint")]
    Missing(String),
}

struct Record {
    name: String,
    dims: Vec<usize>,
    data: Vec<f32>,
}

fn write_record<W: Write>(w: &mut W, name: &str, dims: &[usize], data: impl Iterator<Item = f32>) -> io::Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_tensor<W: Write, T: Real>(w: &mut W, name: &str, t: &Tensor<T>) -> io::Result<()> {
    write_record(
        w,
        name,
        &[t.rows(), t.cols()],
        t.as_slice().iter().map(|v| v.to_f32().unwrap_or(f32::NAN)),
    )
}

/// Serializes `store` (and optionally the optimizer state) to any writer.
pub fn write<W: Write, T: Real>(w: &mut W, store: &ParameterStore<T>, adam: Option<&AdamState<T>>) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (_, name, t) in store.iter() {
        write_tensor(w, name, t)?;
    }
    if let Some(adam) = adam {
        for (id, name, _) in store.iter() {
            write_tensor(w, &format!("adam.m.{name}"), &adam.first[id.index()])?;
            write_tensor(w, &format!("adam.v.{name}"), &adam.second[id.index()])?;
        }
        write_record(w, "adam.step", &[1], std::iter::once(adam.step as f32))?;
    }
    Ok(())
}

pub fn save<T: Real>(
    path: impl AsRef<Path>,
    store: &ParameterStore<T>,
    adam: Option<&AdamState<T>>,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write(&mut w, store, adam)?;
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| CheckpointError::Corrupt(format!("truncated while reading {what}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_records<R: Read>(r: &mut R) -> Result<Vec<Record>, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| CheckpointError::Corrupt("missing magic".into()))?;
    if &magic != MAGIC {
        return Err(CheckpointError::Corrupt("bad magic".into()));
    }
    let version = read_u32(r, "version")?;
    if version != VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let mut out = Vec::new();
    loop {
        let mut first = [0u8; 4];
        match r.read(&mut first[..1])? {
            0 => break,
            _ => r
                .read_exact(&mut first[1..])
                .map_err(|_| CheckpointError::Corrupt("truncated record header".into()))?,
        }
        let name_len = u32::from_le_bytes(first) as usize;
        if name_len > 4096 {
            return Err(CheckpointError::Corrupt(format!("name length {name_len}")));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|_| CheckpointError::Corrupt("truncated name".into()))?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::Corrupt("name is not utf-8".into()))?;
        let rank = read_u32(r, "rank")? as usize;
        if rank > 8 {
            return Err(CheckpointError::Corrupt(format!("rank {rank} for `{name}`")));
        }
        let dims = (0..rank)
            .map(|_| read_u32(r, "dims").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let count: usize = dims.iter().product();
        let mut bytes = vec![0u8; count * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| CheckpointError::Corrupt(format!("truncated data for `{name}`")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(Record { name, dims, data });
    }
    Ok(out)
}

fn fill<T: Real>(dst: &mut Tensor<T>, name: &str, rec: &Record) -> Result<(), CheckpointError> {
    let found = match rec.dims.as_slice() {
        [r, c] => (*r, *c),
        [n] => (*n, 1),
        _ => (rec.data.len(), 0),
    };
    if found != dst.shape() {
        return Err(CheckpointError::ShapeMismatch {
            name: name.to_string(),
            expected: dst.shape(),
            found,
        });
    }
    for (d, &s) in dst.as_mut_slice().iter_mut().zip(&rec.data) {
        *d = T::from_f64_lossy(s as f64);
    }
    Ok(())
}

/// Loads parameters into an already-shaped `store`. Every store parameter
/// must be present with the same shape. Adam state is restored only when
/// requested and present.
pub fn read<R: Read, T: Real>(
    r: &mut R,
    store: &mut ParameterStore<T>,
    adam: Option<&mut AdamState<T>>,
) -> Result<(), CheckpointError> {
    let records = read_records(r)?;
    let find = |name: &str| records.iter().find(|rec| rec.name == name);
    let ids: Vec<_> = store.ids().collect();
    for &id in &ids {
        let name = store.name(id).to_string();
        let rec = find(&name).ok_or_else(|| CheckpointError::Missing(name.clone()))?;
        fill(store.get_mut(id), &name, rec)?;
    }
    if let Some(adam) = adam {
        if let Some(step) = find("adam.step") {
            for &id in &ids {
                let name = store.name(id).to_string();
                for (prefix, buf) in [("adam.m.", &mut adam.first), ("adam.v.", &mut adam.second)] {
                    let key = format!("{prefix}{name}");
                    let rec = find(&key).ok_or_else(|| CheckpointError::Missing(key.clone()))?;
                    fill(&mut buf[id.index()], &key, rec)?;
                }
            }
            adam.step = step.data.first().copied().unwrap_or(0.0) as u64;
        }
    }
    Ok(())
}

pub fn load<T: Real>(
    path: impl AsRef<Path>,
    store: &mut ParameterStore<T>,
    adam: Option<&mut AdamState<T>>,
) -> Result<(), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    read(&mut r, store, adam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Gradients;
    use rand::SeedableRng;

    fn sample_store(d: usize) -> ParameterStore<f32> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut s = ParameterStore::new();
        s.add_xavier("user_cf_emb", 5, d, &mut rng);
        s.add_xavier("w_k", d, d, &mut rng);
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample_store(4);
        let mut buf = Vec::new();
        write(&mut buf, &s, None).unwrap();
        assert_eq!(&buf[..4], b"KDAR");
        let mut loaded = sample_store(4);
        loaded.get_mut(loaded.id("w_k").unwrap()).fill_zero();
        read(&mut buf.as_slice(), &mut loaded, None).unwrap();
        assert_eq!(loaded, s);
    }

    #[test]
    fn round_trip_with_adam() {
        let mut s = sample_store(3);
        let mut adam = AdamState::new(&s);
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(s.id("w_k").unwrap()).as_mut_slice()[0] = 1.0;
        adam.step(&mut s, &mut g, 0.1);
        let mut buf = Vec::new();
        write(&mut buf, &s, Some(&adam)).unwrap();
        let mut s2 = sample_store(3);
        let mut adam2 = AdamState::new(&s2);
        read(&mut buf.as_slice(), &mut s2, Some(&mut adam2)).unwrap();
        assert_eq!(s2, s);
        assert_eq!(adam2, adam);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let s = sample_store(4);
        let mut buf = Vec::new();
        write(&mut buf, &s, None).unwrap();
        buf.truncate(buf.len() - 3);
        let mut t = sample_store(4);
        assert!(matches!(
            read(&mut buf.as_slice(), &mut t, None),
            Err(CheckpointError::Corrupt(_))
        ));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut t = sample_store(2);
        let mut buf = b"NOPE".to_vec();
        buf.extend_from_slice(&1u32.to_le_bytes());
        assert!(matches!(
            read(&mut buf.as_slice(), &mut t, None),
            Err(CheckpointError::Corrupt(_))
        ));
        let mut buf = b"KDAR".to_vec();
        buf.extend_from_slice(&9u32.to_le_bytes());
        assert!(matches!(
            read(&mut buf.as_slice(), &mut t, None),
            Err(CheckpointError::Version { found: 9 })
        ));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let s = sample_store(8);
        let mut buf = Vec::new();
        write(&mut buf, &s, None).unwrap();
        let mut narrow = sample_store(4);
        assert!(matches!(
            read(&mut buf.as_slice(), &mut narrow, None),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
    }
}

//! Binary checkpoint format.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic    b"TKPF"
//! version  u32 (= 1)
//! count    u32
//! count × { name_len u32, name utf-8, rows u32, cols u32, rows·cols × f32 }
//! step     u64
//! count    u32
//! count × { name_len u32, name utf-8, rows u32, cols u32,
//!           rows·cols × f32 first moment, rows·cols × f32 second moment }
//! ```

use crate::error::{NnError, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor2;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"TKPF";
pub const VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_name_shape<W: Write>(w: &mut W, name: &str, shape: (usize, usize)) -> Result<()> {
    put_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    put_u32(w, shape.0 as u32)?;
    put_u32(w, shape.1 as u32)
}

fn put_values<W: Write, T: Scalar>(w: &mut W, t: &Tensor2<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(t.data().len() * 4);
    for v in t.data() {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Serializes `store` (values and optimizer moments) as 32-bit floats.
pub fn write_checkpoint<W: Write, T: Scalar>(w: &mut W, store: &ParamStore<T>) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, store.len() as u32)?;
    for id in store.ids() {
        let t = store.get(id);
        put_name_shape(w, store.name(id), t.shape())?;
        put_values(w, t)?;
    }
    w.write_all(&store.step().to_le_bytes())?;
    put_u32(w, store.len() as u32)?;
    for id in store.ids() {
        let (m, v) = store.moments(id);
        put_name_shape(w, store.name(id), m.shape())?;
        put_values(w, m)?;
        put_values(w, v)?;
    }
    Ok(())
}

pub fn to_bytes<T: Scalar>(store: &ParamStore<T>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, store).expect("writing to memory cannot fail");
    buf
}

pub fn save<T: Scalar>(store: &ParamStore<T>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(store))?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| NnError::Format(format!("truncated checkpoint: {e}")))?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| NnError::Format(format!("truncated checkpoint: {e}")))?;
        Ok(u64::from_le_bytes(b))
    }

    fn name_shape(&mut self) -> Result<(String, usize, usize)> {
        let len = self.u32()? as usize;
        if len > 1 << 16 {
            return Err(NnError::Format(format!("implausible name length {len}")));
        }
        let mut name = vec![0u8; len];
        self.inner
            .read_exact(&mut name)
            .map_err(|e| NnError::Format(format!("truncated name: {e}")))?;
        let name =
            String::from_utf8(name).map_err(|_| NnError::Format("name is not utf-8".into()))?;
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        Ok((name, rows, cols))
    }

    fn values(&mut self, rows: usize, cols: usize) -> Result<Tensor2<f32>> {
        let mut buf = vec![0u8; rows * cols * 4];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| NnError::Format(format!("truncated values: {e}")))?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Tensor2::from_vec(rows, cols, data))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<ParamStore<f32>> {
    let mut rd = Reader { inner: r };
    let mut magic = [0u8; 4];
    rd.inner
        .read_exact(&mut magic)
        .map_err(|_| NnError::Format("missing magic".into()))?;
    if &magic != MAGIC {
        return Err(NnError::Format(format!("bad magic {magic:?}")));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let count = rd.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let (name, rows, cols) = rd.name_shape()?;
        let t = rd.values(rows, cols)?;
        if store.find(&name).is_some() {
            return Err(NnError::Format(format!("duplicate parameter `{name}`")));
        }
        store.add(name, t);
    }
    let step = rd.u64()?;
    let mcount = rd.u32()? as usize;
    if mcount != count {
        return Err(NnError::Format(format!(
            "moment section lists {mcount} parameters, expected {count}"
        )));
    }
    let mut first = Vec::with_capacity(count);
    let mut second = Vec::with_capacity(count);
    for id in store.ids().collect::<Vec<_>>() {
        let (name, rows, cols) = rd.name_shape()?;
        if name != store.name(id) || (rows, cols) != store.get(id).shape() {
            return Err(NnError::Format(format!(
                "moment record `{name}` does not match parameter `{}`",
                store.name(id)
            )));
        }
        first.push(rd.values(rows, cols)?);
        second.push(rd.values(rows, cols)?);
    }
    store.restore_moments(step, first, second);
    Ok(store)
}

pub fn load(path: &Path) -> Result<ParamStore<f32>> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(bytes.as_slice())
}

/// Loads values and moments into an existing store with the same layout.
pub fn load_into(store: &mut ParamStore<f32>, path: &Path) -> Result<()> {
    let loaded = load(path)?;
    if loaded.len() != store.len() {
        return Err(NnError::Format(format!(
            "checkpoint has {} parameters, model has {}",
            loaded.len(),
            store.len()
        )));
    }
    store.copy_values_from(&loaded)?;
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for id in store.ids() {
        let j = loaded
            .find(store.name(id))
            .expect("checked by copy_values_from");
        let (m, v) = loaded.moments(j);
        first.push(m.clone());
        second.push(v.clone());
    }
    store.restore_moments(loaded.step(), first, second);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_stable() {
        let mut s = ParamStore::<f32>::new();
        s.add(
            "a",
            Tensor2::from_vec(2, 2, vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE]),
        );
        s.add("layer.b", Tensor2::from_vec(1, 3, vec![0.1, 0.2, 0.3]));
        let bytes = to_bytes(&s);
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(to_bytes(&back), bytes);
        assert_eq!(
            back.get(back.find("a").unwrap()),
            s.get(s.find("a").unwrap())
        );
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_checkpoint(&b"NOPE\x01\0\0\0"[..]).is_err());
        let mut s = ParamStore::<f32>::new();
        s.add("a", Tensor2::zeros(3, 3));
        let bytes = to_bytes(&s);
        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
    }
}

//! Binary containers for named parameter tensors (`.tkws`) and single raw
//! tensors (`.tkrt`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! .tkws: "TKWS" | u8 version (=1) | u32 count | count x record
//! .tkrt: "TKRT" | record
//! record: u16 name_len | name (UTF-8) | u8 dtype (0 = f32) | u8 rank
//!         | rank x u64 extent | payload (f32 LE, row-major)
//! ```
//!
//! There is no padding and no compression. Readers validate every declared
//! length before trusting it and report malformed input as
//! [`Error::Format`]; they never read past a declared length.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{checked_numel, Tensor, MAX_RANK};

pub const STORE_MAGIC: &[u8; 4] = b"TKWS";
pub const RAW_MAGIC: &[u8; 4] = b"TKRT";
pub const FORMAT_VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;

/// Ordered name to tensor table. Names are unique; iteration follows
/// insertion (and therefore file) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl WeightStore {
    pub fn new() -> Self {
        WeightStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(Error::usage(format!("tensor name of {} bytes is too long", name.len())));
        }
        if self.index.contains_key(&name) {
            return Err(Error::usage(format!("duplicate tensor name `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    /// Like [`get`](Self::get) but a missing name is an error.
    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::MissingWeight(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

fn write_record<W: Write>(sink: &mut W, name: &str, tensor: &Tensor) -> Result<u64> {
    let name_len = u16::try_from(name.len())
        .map_err(|_| Error::usage(format!("tensor name of {} bytes is too long", name.len())))?;
    sink.write_all(&name_len.to_le_bytes())?;
    sink.write_all(name.as_bytes())?;
    sink.write_all(&[DTYPE_F32, tensor.rank() as u8])?;
    for &d in tensor.shape() {
        sink.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut payload = Vec::with_capacity(tensor.len() * 4);
    for v in tensor.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&payload)?;
    Ok(2 + name.len() as u64 + 2 + 8 * tensor.rank() as u64 + payload.len() as u64)
}

/// Serializes `store`, returning the number of bytes written.
pub fn write_weights<W: Write>(store: &WeightStore, sink: &mut W) -> Result<u64> {
    sink.write_all(STORE_MAGIC)?;
    sink.write_all(&[FORMAT_VERSION])?;
    let count = u32::try_from(store.len()).map_err(|_| Error::usage("too many tensors"))?;
    sink.write_all(&count.to_le_bytes())?;
    let mut written = 9;
    for (name, tensor) in store.iter() {
        written += write_record(sink, name, tensor)?;
    }
    sink.flush()?;
    Ok(written)
}

/// Serializes one raw tensor, returning the number of bytes written.
pub fn write_raw_tensor<W: Write>(name: &str, tensor: &Tensor, sink: &mut W) -> Result<u64> {
    sink.write_all(RAW_MAGIC)?;
    let n = write_record(sink, name, tensor)?;
    sink.flush()?;
    Ok(4 + n)
}

fn read_exact_or_truncated<R: Read>(source: &mut R, buf: &mut [u8]) -> Result<()> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format("truncated"),
        _ => Error::Stream(e),
    })
}

fn read_array<R: Read, const N: usize>(source: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact_or_truncated(source, &mut buf)?;
    Ok(buf)
}

fn read_record<R: Read>(source: &mut R) -> Result<(String, Tensor)> {
    let name_len = u16::from_le_bytes(read_array(source)?) as usize;
    let mut name = vec![0u8; name_len];
    read_exact_or_truncated(source, &mut name)?;
    let name = String::from_utf8(name).map_err(|_| Error::format("tensor name is not UTF-8"))?;

    let [dtype, rank] = read_array::<_, 2>(source)?;
    if dtype != DTYPE_F32 {
        return Err(Error::format(format!("unknown dtype {dtype} for `{name}`")));
    }
    let rank = rank as usize;
    if rank > MAX_RANK {
        return Err(Error::format(format!("rank {rank} of `{name}` exceeds {MAX_RANK}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = u64::from_le_bytes(read_array(source)?);
        shape.push(usize::try_from(d).map_err(|_| Error::format("extent overflows usize"))?);
    }
    let byte_len = checked_numel(&shape)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(format!("extents {shape:?} of `{name}` overflow")))?;

    // `take` bounds the read to the declared length and grows the buffer as
    // bytes actually arrive, so a lying header cannot force a huge allocation.
    let mut payload = Vec::new();
    source.take(byte_len as u64).read_to_end(&mut payload)?;
    if payload.len() != byte_len {
        return Err(Error::format("truncated"));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let tensor = Tensor::new(shape, data).map_err(|e| Error::format(e.to_string()))?;
    Ok((name, tensor))
}

fn expect_magic<R: Read>(source: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match source.read(&mut buf[got..])? {
            0 => break,
            n => got += n,
        }
    }
    if got < 4 || &buf != magic {
        return Err(Error::format("bad magic"));
    }
    Ok(())
}

fn expect_end<R: Read>(source: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match source.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::format("trailing bytes after last record")),
    }
}

/// Parses a `.tkws` stream.
pub fn read_weights<R: Read>(source: &mut R) -> Result<WeightStore> {
    expect_magic(source, STORE_MAGIC)?;
    let [version] = read_array::<_, 1>(source)?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(read_array(source)?);
    let mut store = WeightStore::new();
    for _ in 0..count {
        let (name, tensor) = read_record(source)?;
        if store.contains(&name) {
            return Err(Error::format(format!("duplicate tensor name `{name}`")));
        }
        store.insert(name, tensor)?;
    }
    expect_end(source)?;
    Ok(store)
}

/// Parses a `.tkrt` stream into its name and tensor.
pub fn read_raw_tensor<R: Read>(source: &mut R) -> Result<(String, Tensor)> {
    expect_magic(source, RAW_MAGIC)?;
    let record = read_record(source)?;
    expect_end(source)?;
    Ok(record)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_weights(&mut BufReader::new(file)).map_err(|e| attach_path(e, path))
}

pub fn save_weights(path: impl AsRef<Path>, store: &WeightStore) -> Result<u64> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_weights(store, &mut BufWriter::new(file)).map_err(|e| attach_path(e, path))
}

pub fn load_raw_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_tensor(&mut BufReader::new(file))
        .map(|(_, t)| t)
        .map_err(|e| attach_path(e, path))
}

pub fn save_raw_tensor(path: impl AsRef<Path>, name: &str, tensor: &Tensor) -> Result<u64> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_raw_tensor(name, tensor, &mut BufWriter::new(file)).map_err(|e| attach_path(e, path))
}

fn attach_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Stream(source) => Error::io(path, source),
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes(store: &WeightStore) -> Vec<u8> {
        let mut out = Vec::new();
        let n = write_weights(store, &mut out).unwrap();
        assert_eq!(n as usize, out.len());
        out
    }

    #[test]
    fn empty_store_is_header_only() {
        let b = bytes(&WeightStore::new());
        assert_eq!(b, [b'T', b'K', b'W', b'S', 1, 0, 0, 0, 0]);
        assert!(read_weights(&mut b.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn single_tensor_layout() {
        let mut store = WeightStore::new();
        store.insert("w", Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        let b = bytes(&store);
        let mut expected = b"TKWS".to_vec();
        expected.push(1);
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u16.to_le_bytes());
        expected.push(b'w');
        expected.extend_from_slice(&[0, 1]);
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&2.0f32.to_le_bytes());
        assert_eq!(b, expected);
    }

    #[test]
    fn rewrite_is_fixpoint() {
        let mut store = WeightStore::new();
        store.insert("a.weight", Tensor::new(vec![2, 1, 1, 3], vec![0.5; 6]).unwrap()).unwrap();
        store.insert("a.bias", Tensor::scalar(-1.0)).unwrap();
        let first = bytes(&store);
        let again = bytes(&read_weights(&mut first.as_slice()).unwrap());
        assert_eq!(first, again);
    }

    #[test]
    fn corrupt_magic() {
        let mut b = bytes(&WeightStore::new());
        b[0] = b'X';
        match read_weights(&mut b.as_slice()) {
            Err(Error::Format(m)) => assert_eq!(m, "bad magic"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cut_mid_payload() {
        let mut store = WeightStore::new();
        store.insert("w", Tensor::from_vec(vec![1.0; 16])).unwrap();
        let b = bytes(&store);
        match read_weights(&mut &b[..b.len() - 5]) {
            Err(Error::Format(m)) => assert_eq!(m, "truncated"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn huge_declared_extent_is_truncated_not_oom() {
        let mut b = b"TKWS".to_vec();
        b.push(1);
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.push(b'w');
        b.extend_from_slice(&[0, 1]);
        b.extend_from_slice(&(1u64 << 40).to_le_bytes());
        assert!(matches!(read_weights(&mut b.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_version_and_dtype() {
        let mut b = bytes(&WeightStore::new());
        b[4] = 2;
        assert!(matches!(read_weights(&mut b.as_slice()), Err(Error::Format(_))));

        let mut store = WeightStore::new();
        store.insert("w", Tensor::scalar(1.0)).unwrap();
        let mut b = bytes(&store);
        b[4 + 1 + 4 + 2 + 1] = 7;
        assert!(matches!(read_weights(&mut b.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn raw_tensor_round_trip() {
        let t = Tensor::new(vec![3, 2, 2], (0..12).map(|v| v as f32 * 0.5).collect()).unwrap();
        let mut b = Vec::new();
        write_raw_tensor("input", &t, &mut b).unwrap();
        assert_eq!(&b[..4], b"TKRT");
        let (name, back) = read_raw_tensor(&mut b.as_slice()).unwrap();
        assert_eq!(name, "input");
        assert_eq!(back, t);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = WeightStore::new();
        store.insert("w", Tensor::scalar(1.0)).unwrap();
        assert!(store.insert("w", Tensor::scalar(2.0)).is_err());
    }
}

//! Versioned little-endian binary files for networks (`CKDN`) and datasets
//! (`CKDD`). Both end in a CRC-32 of every preceding byte.
//!
//! Checkpoint layout:
//!
//! ```text
//! "CKDN" | version u32 | layers u32 | (in u32, out u32, activation u8)*
//!        | params u64 | f64* | crc32 u32
//! ```
//!
//! Dataset layout:
//!
//! ```text
//! "CKDD" | version u32 | task u8 | rows u64 | dim u64 | inputs f64*
//!        | targets (cols u64, f64*) or (classes u64, label u64*)
//!        | has_clean u8 [f64*] | metadata | crc32 u32
//! metadata: generator str | params u32 | (str, f64)* | seed u64
//!           | has_parent u8 [str] | indices u64 | u64*
//! str: len u32 | utf-8 bytes
//! ```

use std::fs;
use std::path::Path;

use contkd_core::{
    Activation, Dataset, DatasetMeta, LayerSpec, Network, Targets, TaskKind, Tensor,
};

use crate::error::{AppError, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CKDN";
pub const DATASET_MAGIC: [u8; 4] = *b"CKDD";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FormatError {
    #[error("not a {expected} file")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}, expected {VERSION}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("file is truncated")]
    Truncated,
    #[error("invalid contents: {0}")]
    Invalid(String),
}

type FResult<T> = std::result::Result<T, FormatError>;

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: [u8; 4]) -> Self {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&magic);
        w.u32(VERSION);
        w
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.0);
        self.u32(crc);
        self.0
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Verifies the checksum, magic and version, and positions after them.
    fn open(bytes: &'a [u8], magic: [u8; 4], name: &'static str) -> FResult<Self> {
        if bytes.len() < 12 {
            return Err(FormatError::Truncated);
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if body[..4] != magic {
            return Err(FormatError::BadMagic { expected: name });
        }
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed });
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> FResult<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(FormatError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> FResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> FResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> FResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> FResult<usize> {
        usize::try_from(self.u64()?).map_err(|_| FormatError::Invalid("length overflows".into()))
    }

    fn f64s(&mut self, n: usize) -> FResult<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or(FormatError::Truncated)?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn str(&mut self) -> FResult<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| FormatError::Invalid("string is not utf-8".into()))
    }

    fn flag(&mut self) -> FResult<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(FormatError::Invalid(format!("bad flag byte {b}"))),
        }
    }

    fn end(&self) -> FResult<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(FormatError::Invalid("trailing bytes".into()))
        }
    }
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
        Activation::Identity => 2,
    }
}

fn activation_from(code: u8) -> FResult<Activation> {
    match code {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Tanh),
        2 => Ok(Activation::Identity),
        c => Err(FormatError::Invalid(format!("unknown activation code {c}"))),
    }
}

fn invalid(e: impl std::fmt::Display) -> FormatError {
    FormatError::Invalid(e.to_string())
}

pub fn encode_checkpoint(net: &Network) -> Vec<u8> {
    let mut w = Writer::new(CHECKPOINT_MAGIC);
    w.u32(net.layers().len() as u32);
    for l in net.layers() {
        w.u32(l.in_dim as u32);
        w.u32(l.out_dim as u32);
        w.u8(activation_code(l.activation));
    }
    let flat = net.flat_params();
    w.len(flat.len());
    w.f64s(&flat);
    w.finish()
}

pub fn decode_checkpoint(bytes: &[u8]) -> FResult<Network> {
    let mut r = Reader::open(bytes, CHECKPOINT_MAGIC, "checkpoint")?;
    let n = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let act = activation_from(r.u8()?)?;
        layers.push(LayerSpec::new(in_dim, out_dim, act));
    }
    let count = r.len()?;
    let flat = r.f64s(count)?;
    r.end()?;
    Network::from_flat(layers, &flat).map_err(invalid)
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::new(DATASET_MAGIC);
    w.u8(match ds.task() {
        TaskKind::Regression => 0,
        TaskKind::Classification => 1,
    });
    w.len(ds.len());
    w.len(ds.dim());
    w.f64s(ds.inputs().data());
    match ds.targets() {
        Targets::Values(t) => {
            w.len(t.cols());
            w.f64s(t.data());
        }
        Targets::Classes { labels, classes } => {
            w.len(*classes);
            for &l in labels {
                w.len(l);
            }
        }
    }
    match ds.clean_targets() {
        Some(c) => {
            w.u8(1);
            w.f64s(c);
        }
        None => w.u8(0),
    }
    let m = ds.meta();
    w.str(&m.generator);
    w.u32(m.params.len() as u32);
    for (k, v) in &m.params {
        w.str(k);
        w.f64s(&[*v]);
    }
    w.u64(m.seed);
    match &m.parent {
        Some(p) => {
            w.u8(1);
            w.str(p);
        }
        None => w.u8(0),
    }
    w.len(m.indices.len());
    for &i in &m.indices {
        w.len(i);
    }
    w.finish()
}

pub fn decode_dataset(bytes: &[u8]) -> FResult<Dataset> {
    let mut r = Reader::open(bytes, DATASET_MAGIC, "dataset")?;
    let task = match r.u8()? {
        0 => TaskKind::Regression,
        1 => TaskKind::Classification,
        t => return Err(FormatError::Invalid(format!("unknown task code {t}"))),
    };
    let rows = r.len()?;
    let dim = r.len()?;
    let inputs = Tensor::matrix(rows, dim, r.f64s(rows.checked_mul(dim).ok_or(FormatError::Truncated)?)?)
        .map_err(invalid)?;
    let targets = match task {
        TaskKind::Regression => {
            let cols = r.len()?;
            let data = r.f64s(rows.checked_mul(cols).ok_or(FormatError::Truncated)?)?;
            Targets::Values(Tensor::matrix(rows, cols, data).map_err(invalid)?)
        }
        TaskKind::Classification => {
            let classes = r.len()?;
            let labels = (0..rows).map(|_| r.len()).collect::<FResult<Vec<_>>>()?;
            Targets::Classes { labels, classes }
        }
    };
    let clean = if r.flag()? { Some(r.f64s(rows)?) } else { None };
    let generator = r.str()?;
    let n_params = r.u32()? as usize;
    let mut params = Vec::with_capacity(n_params.min(1024));
    for _ in 0..n_params {
        let k = r.str()?;
        let v = r.f64s(1)?[0];
        params.push((k, v));
    }
    let seed = r.u64()?;
    let parent = if r.flag()? { Some(r.str()?) } else { None };
    let n_idx = r.len()?;
    let indices = (0..n_idx).map(|_| r.len()).collect::<FResult<Vec<_>>>()?;
    r.end()?;
    let meta = DatasetMeta {
        generator,
        params,
        seed,
        parent,
        indices,
    };
    Dataset::new(inputs, targets, clean, meta).map_err(invalid)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| AppError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

pub fn save_checkpoint(path: &Path, net: &Network) -> Result<()> {
    write_file(path, &encode_checkpoint(net))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    decode_checkpoint(&read(path)?).map_err(|source| AppError::Format {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_file(path, &encode_dataset(ds))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&read(path)?).map_err(|source| AppError::Format {
        path: path.to_path_buf(),
        source,
    })
}

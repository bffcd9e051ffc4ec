//! Versioned binary model files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "MFMK" | version u32 | kind u8 | use_weight u8 | pad u16
//! k u32 | layers u32 | n u64
//! w0 f64 | w[n] f64 | V[n*k] f64 row-major | h[k] f64 | L[k*k] f64 row-major
//! per layer: W[k*k] f64, b[k] f64
//! crc32 u32 over every preceding byte
//! ```
//!
//! Values are stored as f64 regardless of the in-memory scalar type. A
//! human-readable `<path>.meta` sidecar echoes the training configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::util::crc32;

use super::params::{MlpLayer, ModelParams};
use super::spec::{DistanceKind, DistanceSpec};

const MAGIC: &[u8; 4] = b"MFMK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model file truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("checksum mismatch: expected {expected:#010x}, found {found:#010x}")]
    Checksum { expected: u32, found: u32 },
    #[error("invalid distance kind code {0}")]
    BadKind(u8),
    #[error("invalid header: {0}")]
    Header(String),
}

/// Writes the model binary plus its `<path>.meta` sidecar.
pub fn save_model<F: Scalar>(
    path: &Path,
    params: &ModelParams<F>,
    spec: &DistanceSpec,
    meta: &[(String, String)],
) -> Result<(), PersistError> {
    let mut buf = Vec::with_capacity(64 + 8 * (params.n() * (params.k() + 1)));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(spec.kind.code());
    buf.push(spec.use_weight as u8);
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(params.k() as u32).to_le_bytes());
    buf.extend_from_slice(&(spec.layers as u32).to_le_bytes());
    buf.extend_from_slice(&(params.n() as u64).to_le_bytes());

    let put = |xs: &[F], buf: &mut Vec<u8>| {
        for &x in xs {
            buf.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    };
    put(&[params.w0], &mut buf);
    put(&params.w, &mut buf);
    put(params.v.data(), &mut buf);
    put(&params.h, &mut buf);
    put(params.l.data(), &mut buf);
    for layer in &params.mlp {
        put(layer.w.data(), &mut buf);
        put(&layer.b, &mut buf);
    }

    let checksum = crc32(&buf);
    buf.extend_from_slice(&checksum.to_le_bytes());

    write_bytes(path, &buf)?;

    let mut sidecar = String::new();
    sidecar.push_str("# metricfm model metadata\n");
    for (key, value) in meta {
        sidecar.push_str(key);
        sidecar.push_str(" = ");
        sidecar.push_str(value);
        sidecar.push('\n');
    }
    write_bytes(&meta_path(path), sidecar.as_bytes())?;
    Ok(())
}

/// Sidecar path for a model file.
pub fn meta_path(model: &Path) -> PathBuf {
    let mut os = model.as_os_str().to_os_string();
    os.push(".meta");
    PathBuf::from(os)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PersistError> {
    let mut file = fs::File::create(path).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(bytes).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], PersistError> {
        if self.pos + len > self.bytes.len() {
            return Err(PersistError::Truncated {
                needed: self.pos + len,
                found: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, PersistError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn floats<F: Scalar>(&mut self, count: usize) -> Result<Vec<F>, PersistError> {
        let raw = self.take(count * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| F::from_f64(f64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}

/// Reads a model binary, verifying magic, version and checksum.
pub fn load_model<F: Scalar>(path: &Path) -> Result<(ModelParams<F>, DistanceSpec), PersistError> {
    let bytes = fs::read(path).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < MAGIC.len() + 4 {
        return Err(PersistError::Truncated {
            needed: MAGIC.len() + 4,
            found: bytes.len(),
        });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let expected = u32::from_le_bytes(trailer.try_into().unwrap());
    let found = crc32(body);
    if expected != found {
        return Err(PersistError::Checksum { expected, found });
    }

    let mut cur = Cursor {
        bytes: body,
        pos: 0,
    };
    if cur.take(4)? != MAGIC {
        return Err(PersistError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(PersistError::UnsupportedVersion(version));
    }
    let kind_code = cur.u8()?;
    let kind = DistanceKind::from_code(kind_code).ok_or(PersistError::BadKind(kind_code))?;
    let use_weight = cur.u8()? != 0;
    let _pad = cur.u16()?;
    let k = cur.u32()? as usize;
    let layers = cur.u32()? as usize;
    let n = cur.u64()? as usize;
    if k == 0 {
        return Err(PersistError::Header("k must be >= 1".into()));
    }

    let spec = DistanceSpec::new(kind, use_weight, layers)
        .map_err(|e| PersistError::Header(e.to_string()))?;

    let w0 = cur.floats::<F>(1)?[0];
    let w = cur.floats::<F>(n)?;
    let v = Matrix::from_vec(n, k, cur.floats(n * k)?);
    let h = cur.floats::<F>(k)?;
    let l = Matrix::from_vec(k, k, cur.floats(k * k)?);
    let mut mlp = Vec::with_capacity(layers);
    for _ in 0..layers {
        let lw = Matrix::from_vec(k, k, cur.floats(k * k)?);
        let lb = cur.floats::<F>(k)?;
        mlp.push(MlpLayer { w: lw, b: lb });
    }
    if cur.pos != body.len() {
        return Err(PersistError::Header(format!(
            "{} trailing bytes after parameters",
            body.len() - cur.pos
        )));
    }

    Ok((
        ModelParams {
            w0,
            w,
            v,
            h,
            l,
            mlp,
        },
        spec,
    ))
}

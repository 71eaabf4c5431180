//! Binary structure files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "ADES" | version: u16
//! p, epsilon, delta, c_m, c_l, c_r: f64
//! master_seed, d, n, m, l: u64
//! med_p: f64
//! l matrices, row-major f64 (m * d each)
//! n * l sketched vectors, f64, ordered by matrix then point (m each)
//! checksum: u64 over every preceding byte
//! ```
//!
//! The checksum is the first 8 bytes of SHA-256, read as a little-endian u64.
//! `r` is not stored; it is re-derived from the parameters on load.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::ade::{derive_sizes, AdeParams, AdeStructure};
use crate::error::{Error, Result};
use crate::sketch::{SketchBatch, SketchMatrix};

pub const MAGIC: &[u8; 4] = b"ADES";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 6 * 8 + 5 * 8 + 8;

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(values.len().min(1 << 16) * 8);
    for chunk in values.chunks(1 << 16) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

impl AdeStructure {
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = HashingWriter {
            inner: w,
            hasher: Sha256::new(),
        };
        let p = self.params();
        let sizes = self.sizes();
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for x in [p.p, p.epsilon, p.delta, p.c_m, p.c_l, p.c_r] {
            w.write_all(&x.to_le_bytes())?;
        }
        for x in [
            p.master_seed,
            self.d() as u64,
            self.n() as u64,
            sizes.m as u64,
            sizes.l as u64,
        ] {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&self.med_p().to_le_bytes())?;
        for mat in self.matrices() {
            write_f64s(&mut w, mat.entries())?;
        }
        write_f64s(&mut w, self.sketched().as_slice())?;
        let sum = w.hasher.finalize_reset();
        let mut inner = w.inner;
        inner.write_all(&sum[..8])?;
        inner.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    /// Writes atomically: a temporary sibling file is renamed over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
        tmp_name.push(".tmp");
        let tmp = path.with_file_name(tmp_name);
        {
            let file = File::create(&tmp)?;
            self.write_to(BufWriter::new(file))?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < 6 {
            return Err(Error::Checksum);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < HEADER_LEN + 8 {
            return Err(Error::Checksum);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if checksum(body) != u64::from_le_bytes(tail.try_into().expect("8 bytes")) {
            return Err(Error::Checksum);
        }

        let mut cur = Cursor {
            bytes: body,
            pos: 6,
        };
        let [p, epsilon, delta, c_m, c_l, c_r] = [(); 6].map(|_| cur.f64());
        let [master_seed, d, n, m, l] = [(); 5].map(|_| cur.u64());
        let med_p = cur.f64();
        let (d, n, m, l) = (d as usize, n as usize, m as usize, l as usize);

        let expected = (l as u128 * m as u128 * d as u128 + n as u128 * l as u128 * m as u128) * 8;
        if expected != (body.len() - HEADER_LEN) as u128 {
            return Err(Error::Corrupt(format!(
                "payload is {} bytes, header implies {expected}",
                body.len() - HEADER_LEN
            )));
        }

        let mut params = AdeParams {
            p,
            epsilon,
            delta,
            c_m,
            c_l,
            c_r,
            master_seed,
            max_sketches: None,
        };
        params
            .validate()
            .map_err(|e| Error::Corrupt(e.to_string()))?;
        let derived = derive_sizes(&params, d, n);
        if derived.m != m {
            return Err(Error::Corrupt(format!(
                "m = {m} does not match parameters (m = {})",
                derived.m
            )));
        }
        if derived.l != l {
            params.max_sketches = Some(l);
        }
        let kind = params.sketch_kind()?;
        let matrices = (0..l)
            .map(|j| SketchMatrix::from_entries(kind, m, d, cur.f64s(m * d), j as u64))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Corrupt(e.to_string()))?;
        let data = cur.f64s(n * l * m);
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Corrupt("non-finite sketch value".into()));
        }
        let sketched = SketchBatch::from_raw(n, l, m, data);
        AdeStructure::from_parts(params, derived.r, med_p, matrices, sketched)
            .map_err(|e| Error::Corrupt(e.to_string()))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take8(&mut self) -> [u8; 8] {
        let out = self.bytes[self.pos..self.pos + 8]
            .try_into()
            .expect("8 bytes");
        self.pos += 8;
        out
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take8())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take8())
    }

    fn f64s(&mut self, count: usize) -> Vec<f64> {
        let end = self.pos + count * 8;
        let out = self.bytes[self.pos..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        self.pos = end;
        out
    }
}

//! Binary forward-record checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic      8 bytes  "TCLVCKPT"
//! version    u32      1
//! dim        u32
//! substeps   u32
//! n1, n2     u64
//! t0, dt     f64
//! name       u32 length + UTF-8 bytes
//! params     u32 count, then per entry: u32 length + UTF-8 key, f64 value
//! states     (n2 + 1) * dim f64
//! frames     (n2 + 1) * dim * dim f64, row-major Q_n
//! triangles  n2 * dim * dim f64, row-major R_n for n = 1..=n2
//! ```

use std::path::Path;

use transient_clv::ginelli::SystemInfo;
use transient_clv::{ForwardRecord, Matrix};

use crate::error::CliError;
use crate::output::write_atomic;

pub const MAGIC: &[u8; 8] = b"TCLVCKPT";
pub const VERSION: u32 = 1;

pub fn encode(rec: &ForwardRecord<f64>) -> Vec<u8> {
    let dim = rec.dim();
    let n2 = rec.n2();
    let mut buf = Vec::with_capacity(64 + (n2 + 1) * (dim + 2 * dim * dim) * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut buf, dim);
    put_u32(&mut buf, rec.substeps());
    buf.extend_from_slice(&(rec.n1() as u64).to_le_bytes());
    buf.extend_from_slice(&(n2 as u64).to_le_bytes());
    buf.extend_from_slice(&rec.t0().to_le_bytes());
    buf.extend_from_slice(&rec.dt().to_le_bytes());
    let sys = rec.system();
    put_str(&mut buf, &sys.name);
    put_u32(&mut buf, sys.params.len());
    for (k, v) in &sys.params {
        put_str(&mut buf, k);
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for u in rec.states() {
        put_f64s(&mut buf, u);
    }
    for n in 0..=n2 {
        put_f64s(&mut buf, rec.q(n).matrix().as_slice());
    }
    for n in 1..=n2 {
        put_f64s(&mut buf, rec.r(n).matrix().as_slice());
    }
    buf
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("header field fits in u32");
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len());
    buf.extend_from_slice(s.as_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format!("truncated while reading {what} at byte {}", self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String, String> {
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| format!("{what} is not valid UTF-8"))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("size overflow")?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<ForwardRecord<f64>, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err("not a checkpoint file (bad magic)".into());
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        ));
    }
    let dim = r.u32("dim")? as usize;
    let substeps = r.u32("substeps")? as usize;
    let n1 = r.u64("n1")? as usize;
    let n2 = r.u64("n2")? as usize;
    let t0 = r.f64("t0")?;
    let dt = r.f64("dt")?;
    let name = r.string("system name")?;
    let count = r.u32("parameter count")?;
    let mut params = Vec::new();
    for _ in 0..count {
        let key = r.string("parameter name")?;
        params.push((key, r.f64("parameter value")?));
    }
    if dim == 0 {
        return Err("dimension is zero".into());
    }
    let body = bytes.len() - r.pos;
    let expected = dim
        .checked_mul(dim)
        .and_then(|d2| d2.checked_mul(n2.checked_mul(2)?.checked_add(1)?))
        .and_then(|m| m.checked_add(n2.checked_add(1)?.checked_mul(dim)?))
        .and_then(|f| f.checked_mul(8));
    if expected != Some(body) {
        return Err(format!(
            "body has {body} bytes, which does not match dim={dim}, N2={n2}"
        ));
    }
    let mut states = Vec::with_capacity(n2 + 1);
    for _ in 0..=n2 {
        states.push(r.f64s(dim, "states")?);
    }
    let mut matrices = |count: usize, what: &str| -> Result<Vec<Matrix>, String> {
        (0..count)
            .map(|_| {
                Matrix::from_row_major(dim, r.f64s(dim * dim, what)?).map_err(|e| e.to_string())
            })
            .collect()
    };
    let frames = matrices(n2 + 1, "frames")?;
    let triangles = matrices(n2, "triangles")?;
    ForwardRecord::from_parts(
        SystemInfo { name, params },
        t0,
        dt,
        substeps,
        n1,
        n2,
        states,
        frames,
        triangles,
    )
    .map_err(|e| e.to_string())
}

pub fn write(path: &Path, rec: &ForwardRecord<f64>) -> Result<(), CliError> {
    write_atomic(path, &encode(rec))
}

pub fn read(path: &Path) -> Result<ForwardRecord<f64>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|d| CliError::checkpoint(path, d))
}

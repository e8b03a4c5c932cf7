//! Atomic file writes and CSV/JSON serialization.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use transient_clv::{Orbit, Vectors};

use crate::error::CliError;

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| CliError::artifact(path, "not a file path"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

/// 17 significant digits, round-trip exact for `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let mut first = true;
    for c in cells {
        if !first {
            out.push(',');
        }
        out.push_str(&c);
        first = false;
    }
    out.push('\n');
}

pub fn state_header(dim: usize) -> impl Iterator<Item = String> {
    (1..=dim).map(|i| format!("x{i}"))
}

/// Header `t,x1..xn`, one row per state.
pub fn orbit_csv(traj: &Orbit) -> String {
    let dim = traj.states.first().map_or(0, |u| u.len());
    let mut out = String::new();
    push_row(
        &mut out,
        std::iter::once("t".to_string()).chain(state_header(dim)),
    );
    for (k, u) in traj.states.iter().enumerate() {
        push_row(
            &mut out,
            std::iter::once(num(traj.time(k))).chain(u.iter().map(|&x| num(x))),
        );
    }
    out
}

/// Header `n,t,x1..xn,v1_1..v1_n,...,vn_1..vn_n`; `vj_i` is component `i` of
/// vector `j`.
pub fn vectors_csv(vf: &Vectors) -> String {
    let dim = vf.entries.first().map_or(0, |e| e.state.len());
    let mut out = String::new();
    let mut header: Vec<String> = vec!["n".into(), "t".into()];
    header.extend(state_header(dim));
    for j in 1..=dim {
        header.extend((1..=dim).map(|i| format!("v{j}_{i}")));
    }
    push_row(&mut out, header);
    for e in &vf.entries {
        let mut row = vec![e.step.to_string(), num(e.time)];
        row.extend(e.state.iter().map(|&x| num(x)));
        for j in 0..dim {
            row.extend(e.column(j).into_iter().map(num));
        }
        push_row(&mut out, row);
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::artifact(path, e.to_string()))?;
    let _ = writeln!(text);
    write_atomic(path, text.as_bytes())
}

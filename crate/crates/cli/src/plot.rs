//! Gnuplot scripts for orbit/vector CSVs. Scripts sit next to the CSV they
//! plot and refer to it by file name.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    /// `t,x1..xn`
    Trajectory,
    /// `n,t,x1..xn,v1_1..vn_n`
    Vectors,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSummary {
    pub path: PathBuf,
    pub kind: CsvKind,
    pub dim: usize,
    pub rows: usize,
}

/// Reads the header, checks the layout, counts data rows.
pub fn inspect(path: &Path) -> Result<CsvSummary, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::artifact(path, "missing artifact"))
        }
        Err(e) => return Err(CliError::io(path, e)),
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| CliError::artifact(path, "empty CSV"))?
        .split(',')
        .collect();
    let dim = header.iter().filter(|h| is_state_col(h)).count();
    let kind = match header.first() {
        Some(&"t") if header.len() == dim + 1 => CsvKind::Trajectory,
        Some(&"n") if header.get(1) == Some(&"t") && header.len() == 2 + dim + dim * dim => {
            CsvKind::Vectors
        }
        _ => return Err(CliError::artifact(path, "unrecognized CSV header")),
    };
    let width = header.len();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        if line.split(',').count() != width {
            return Err(CliError::artifact(
                path,
                format!("row {} has the wrong number of columns", i + 1),
            ));
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::artifact(path, "CSV has no data rows"));
    }
    if !(2..=3).contains(&dim) {
        return Err(CliError::artifact(
            path,
            format!("plots need 2 or 3 state columns, found {dim}"),
        ));
    }
    Ok(CsvSummary {
        path: path.to_path_buf(),
        kind,
        dim,
        rows,
    })
}

fn is_state_col(h: &str) -> bool {
    h.strip_prefix('x')
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn script_path(csv: &Path) -> PathBuf {
    csv.with_extension("gp")
}

fn preamble(out: &mut String, csv: &str, png: &str, size: (u32, u32)) {
    let _ = writeln!(out, "# plots {csv}");
    let _ = writeln!(out, "set datafile separator ','");
    let _ = writeln!(
        out,
        "set terminal pngcairo noenhanced size {},{}",
        size.0, size.1
    );
    let _ = writeln!(out, "set output '{png}'");
    let _ = writeln!(out, "set key top right");
}

/// Orbit line plus arrows for each vector, one panel per vector, glyphs
/// every `stride` rows.
pub fn vectors_script(s: &CsvSummary, stride: usize, arrow_length: f64) -> String {
    let csv = file_name(&s.path);
    let png = Path::new(&csv).with_extension("png").display().to_string();
    let d = s.dim;
    let mut out = String::new();
    preamble(&mut out, &csv, &png, (600 * d as u32, 600));
    let _ = writeln!(out, "L = {arrow_length:?}");
    let _ = writeln!(
        out,
        "set multiplot layout 1,{d} title 'Tangent vectors along the orbit'"
    );
    let x = |i: usize| 2 + i;
    let v = |j: usize, i: usize| 2 + d + (j - 1) * d + i;
    for j in 1..=d {
        let _ = writeln!(out, "set title 'v{j}'");
        let _ = writeln!(out, "set xlabel 'x'\nset ylabel 'y'");
        if d == 3 {
            let _ = writeln!(out, "set zlabel 'z'");
            let _ = writeln!(out, "set xrange [-1.5*L:1.5*L]\nset yrange [-1.5*L:1.5*L]");
            let _ = writeln!(out, "set view 60,30");
            let _ = writeln!(
                out,
                "splot '{csv}' skip 1 using {}:{}:{} with lines lc rgb 'gray40' title 'orbit', \\\n  \
                 '{csv}' skip 1 every {stride} using {}:{}:{}:(L*${}):(L*${}):(L*${}) \
                 with vectors head filled lc rgb 'red' title 'v{j}'",
                x(1),
                x(2),
                x(3),
                x(1),
                x(2),
                x(3),
                v(j, 1),
                v(j, 2),
                v(j, 3)
            );
        } else {
            let _ = writeln!(
                out,
                "plot '{csv}' skip 1 using {}:{} with lines lc rgb 'gray40' title 'orbit', \\\n  \
                 '{csv}' skip 1 every {stride} using {}:{}:(L*${}):(L*${}) \
                 with vectors head filled lc rgb 'red' title 'v{j}'",
                x(1),
                x(2),
                x(1),
                x(2),
                v(j, 1),
                v(j, 2)
            );
        }
    }
    let _ = writeln!(out, "unset multiplot");
    out
}

/// Two panels: the orbit in state space and its `(x, y)` projection.
pub fn trajectory_script(s: &CsvSummary) -> String {
    let csv = file_name(&s.path);
    let png = Path::new(&csv).with_extension("png").display().to_string();
    let mut out = String::new();
    preamble(&mut out, &csv, &png, (1200, 600));
    let _ = writeln!(out, "set multiplot layout 1,2 title '{csv}'");
    if s.dim == 3 {
        let _ = writeln!(out, "set title 'orbit'");
        let _ = writeln!(out, "set xlabel 'x'\nset ylabel 'y'\nset zlabel 'z'");
        let _ = writeln!(out, "set view 60,30");
        let _ = writeln!(
            out,
            "splot '{csv}' skip 1 using 2:3:4 with lines lc rgb 'blue' notitle"
        );
    } else {
        let _ = writeln!(out, "set title 'components'");
        let _ = writeln!(out, "set xlabel 't'\nset ylabel 'x'");
        let _ = writeln!(
            out,
            "plot '{csv}' skip 1 using 1:2 with lines title 'x1', \\\n  \
             '{csv}' skip 1 using 1:3 with lines title 'x2'"
        );
    }
    let _ = writeln!(out, "set title 'xy projection'");
    let _ = writeln!(out, "set xlabel 'x'\nset ylabel 'y'\nset size ratio -1");
    let _ = writeln!(
        out,
        "plot '{csv}' skip 1 using 2:3 with lines lc rgb 'blue' notitle"
    );
    let _ = writeln!(out, "unset multiplot");
    out
}

pub fn script_for(s: &CsvSummary, stride: usize, arrow_length: f64) -> String {
    match s.kind {
        CsvKind::Vectors => vectors_script(s, stride, arrow_length),
        CsvKind::Trajectory => trajectory_script(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn recognizes_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let tr = write(dir.path(), "a.csv", "t,x1,x2,x3\n0,0,0,1\n0.1,0,0,0.9\n");
        let s = inspect(&tr).unwrap();
        assert_eq!((s.kind, s.dim, s.rows), (CsvKind::Trajectory, 3, 2));

        let head = "n,t,x1,x2,v1_1,v1_2,v2_1,v2_2";
        let vf = write(dir.path(), "v.csv", &format!("{head}\n0,0,1,1,1,0,0,1\n"));
        let s = inspect(&vf).unwrap();
        assert_eq!((s.kind, s.dim, s.rows), (CsvKind::Vectors, 2, 1));
    }

    #[test]
    fn rejects_empty_missing_and_ragged() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write(dir.path(), "e.csv", "t,x1,x2\n");
        assert!(inspect(&empty)
            .unwrap_err()
            .to_string()
            .contains("no data rows"));
        let blank = write(dir.path(), "b.csv", "");
        assert!(inspect(&blank).is_err());
        let missing = dir.path().join("nope.csv");
        let err = inspect(&missing).unwrap_err();
        assert!(err.to_string().contains("nope.csv"));
        let ragged = write(dir.path(), "r.csv", "t,x1,x2\n0,1\n");
        assert!(inspect(&ragged).is_err());
    }

    #[test]
    fn vectors_script_draws_arrows() {
        let s = CsvSummary {
            path: PathBuf::from("out/vectors.csv"),
            kind: CsvKind::Vectors,
            dim: 3,
            rows: 10,
        };
        let text = vectors_script(&s, 100, 20.0);
        assert!(text.contains("'vectors.csv'"));
        assert!(!text.contains("out/"));
        assert_eq!(text.matches("with vectors").count(), 3);
        assert!(text.contains("every 100"));
        // third vector, third component: column 2 + 3 + 6 + 3
        assert!(text.contains("(L*$14)"));
    }

    #[test]
    fn trajectory_script_has_two_panels() {
        let s = CsvSummary {
            path: PathBuf::from("perturbed_1.csv"),
            kind: CsvKind::Trajectory,
            dim: 3,
            rows: 10,
        };
        let text = trajectory_script(&s);
        assert!(text.contains("layout 1,2"));
        assert!(text.contains("splot 'perturbed_1.csv'"));
        assert!(text.contains("using 2:3 with lines"));
        assert_eq!(
            script_path(Path::new("o/perturbed_1.csv")),
            Path::new("o/perturbed_1.gp")
        );
    }
}

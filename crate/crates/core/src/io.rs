//! Plain-text persistence: CSV for profiles, fields, boundary paths and
//! tails, JSON for everything else, and SHA-256 checksums for manifests.
//!
//! Numbers are written as `{:.16e}` (17 significant digits), which
//! round-trips every `f64` exactly.

use crate::error::{FbpError, Result};
use crate::grid::{BoundaryPath, Grid1D, Profile, SolutionField};
use crate::nbbm::EmpiricalTail;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_num(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| FbpError::Parse(format!("line {line}: {s:?}: {e}")))
}

/// Rows of a CSV file with the header checked by `expect` (which receives
/// the header's fields).
fn read_rows(path: &Path, expect: impl Fn(&[&str]) -> Result<()>) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| FbpError::Parse(format!("{} is empty", path.display())))?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    expect(&fields)?;
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row = line
            .split(',')
            .map(|s| parse_num(s, i + 1))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != fields.len() {
            return Err(FbpError::Parse(format!(
                "line {}: {} fields, header has {}",
                i + 1,
                row.len(),
                fields.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn header_is(want: &'static [&'static str]) -> impl Fn(&[&str]) -> Result<()> {
    move |got: &[&str]| {
        if got == want {
            Ok(())
        } else {
            Err(FbpError::Parse(format!("header {got:?}, expected {want:?}")))
        }
    }
}

/// Recovers a uniform grid from its written nodes.
fn grid_from_nodes(xs: &[f64]) -> Result<Grid1D> {
    if xs.len() < 2 {
        return Err(FbpError::Parse("need at least two grid points".into()));
    }
    let m = xs.len();
    let g = Grid1D::new(xs[0], xs[m - 1], m)?;
    let tol = 1e-9 * g.dx();
    if let Some(i) = xs.iter().enumerate().position(|(i, &x)| (x - g.x(i)).abs() > tol) {
        return Err(FbpError::Parse(format!("grid is not uniform at row {}", i + 1)));
    }
    Ok(g)
}

pub fn profile_to_csv(p: &Profile) -> String {
    let mut s = String::from("x,u\n");
    for (x, u) in p.grid.points().zip(&p.values) {
        let _ = writeln!(s, "{},{}", num(x), num(*u));
    }
    s
}

pub fn write_profile_csv(path: &Path, p: &Profile) -> Result<()> {
    Ok(fs::write(path, profile_to_csv(p))?)
}

/// Reads a profile CSV. The file carries no tails, so they are taken to be
/// the first and last values.
pub fn read_profile_csv(path: &Path) -> Result<Profile> {
    let rows = read_rows(path, header_is(&["x", "u"]))?;
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let us: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let g = grid_from_nodes(&xs)?;
    let (lt, rt) = (us[0], us[us.len() - 1]);
    Profile::new(g, us, lt, rt)
}

pub fn write_boundary_csv(path: &Path, b: &BoundaryPath) -> Result<()> {
    let mut s = String::from("t,mu,lo,hi\n");
    for i in 0..b.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            num(b.times[i]),
            num(b.mu[i]),
            num(b.lo[i]),
            num(b.hi[i])
        );
    }
    Ok(fs::write(path, s)?)
}

/// Reads a boundary CSV; the grid spacing is taken as half the widest
/// bracket.
pub fn read_boundary_csv(path: &Path) -> Result<BoundaryPath> {
    let rows = read_rows(path, header_is(&["t", "mu", "lo", "hi"]))?;
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    let (lo, hi) = (col(2), col(3));
    let dx = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (b - a)).fold(0.0, f64::max);
    BoundaryPath::new(col(0), col(1), lo, hi, dx.max(f64::MIN_POSITIVE))
}

pub fn write_field_csv(path: &Path, f: &SolutionField) -> Result<()> {
    let first = f
        .profiles
        .first()
        .ok_or_else(|| FbpError::Precondition("empty field".into()))?;
    let mut s = String::from("x");
    for t in &f.times {
        let _ = write!(s, ",u({t})");
    }
    s.push('\n');
    for (i, x) in first.grid.points().enumerate() {
        s.push_str(&num(x));
        for p in &f.profiles {
            s.push(',');
            s.push_str(&num(p.values[i]));
        }
        s.push('\n');
    }
    Ok(fs::write(path, s)?)
}

pub fn read_field_csv(path: &Path) -> Result<SolutionField> {
    let times = std::cell::RefCell::new(Vec::new());
    let rows = read_rows(path, |h: &[&str]| {
        if h.first() != Some(&"x") || h.len() < 2 {
            return Err(FbpError::Parse(format!("header {h:?} is not x,u(t1),...")));
        }
        for col in &h[1..] {
            let t = col
                .strip_prefix("u(")
                .and_then(|c| c.strip_suffix(')'))
                .ok_or_else(|| FbpError::Parse(format!("column {col:?} is not u(t)")))?;
            times.borrow_mut().push(parse_num(t, 1)?);
        }
        Ok(())
    })?;
    let times = times.into_inner();
    let g = grid_from_nodes(&rows.iter().map(|r| r[0]).collect::<Vec<_>>())?;
    let profiles = (0..times.len())
        .map(|j| {
            let us: Vec<f64> = rows.iter().map(|r| r[j + 1]).collect();
            let (lt, rt) = (us[0], us[us.len() - 1]);
            Profile::new(g, us, lt, rt)
        })
        .collect::<Result<Vec<_>>>()?;
    SolutionField::new(times, profiles)
}

pub fn write_tail_csv(path: &Path, tail: &EmpiricalTail) -> Result<()> {
    let mut s = String::from("a,pi_N\n");
    for (a, p) in tail.a_grid.iter().zip(&tail.values) {
        let _ = writeln!(s, "{},{}", num(*a), num(*p));
    }
    Ok(fs::write(path, s)?)
}

pub fn read_tail_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = read_rows(path, header_is(&["a", "pi_N"]))?;
    Ok((rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| r[1]).collect()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(fs::write(path, s)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Written to every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Input file path to its SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds: Vec::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let sum = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), sum);
        Ok(())
    }

    /// Checksums every regular file in `dir` except the manifest itself and
    /// writes `dir/manifest.json`.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        let mut names: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n != "manifest.json")
            .collect();
        names.sort();
        for n in names {
            self.outputs.insert(n.clone(), sha256_file(&dir.join(&n))?);
        }
        write_json(&dir.join("manifest.json"), &self)
    }
}

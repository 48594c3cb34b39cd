//! Text format for [`SigmaGrid`].
//!
//! ```text
//! branchfit-sigma-grid v1
//! mesh=0.1
//! ...key=value metadata...
//! columns=k sigma2 sigma2_x sigma2_y se se_x se_y x_max
//! 1.0 2.0 ...
//! sha256=<hex digest of every preceding byte>
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a saved grid
//! loads back bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use branchfit_core::sigma::{GridBudgets, SigmaGrid, SigmaValue};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

pub const MAGIC: &str = "branchfit-sigma-grid";
pub const VERSION: &str = "v1";
const COLUMNS: &str = "k sigma2 sigma2_x sigma2_y se se_x se_y x_max";

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn to_string(grid: &SigmaGrid) -> String {
    let mut s = format!("{MAGIC} {VERSION}\n");
    let b = &grid.budgets;
    let meta = [
        ("mesh", format!("{:?}", grid.mesh)),
        ("alpha", format!("{:?}", grid.alpha)),
        ("delta_factor", format!("{:?}", grid.delta_factor)),
        ("delta_convention", "delta = delta_factor * ln 2 / alpha".to_string()),
        ("seed", grid.seed.to_string()),
        ("mc_per_node", b.mc_per_node.to_string()),
        ("mc_zeta", b.mc_zeta.to_string()),
        ("age_nodes", b.age_nodes.to_string()),
        ("x_horizon", format!("{:?}", b.x_horizon)),
        ("quadrature", grid.quadrature.clone()),
        ("nodes", grid.k_values.len().to_string()),
        ("columns", COLUMNS.to_string()),
    ];
    for (k, v) in meta {
        let _ = writeln!(s, "{k}={v}");
    }
    for (k, n) in grid.k_values.iter().zip(&grid.nodes) {
        let _ = writeln!(
            s,
            "{k:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
            n.sigma2, n.sigma2_x, n.sigma2_y, n.se, n.se_x, n.se_y, n.x_max
        );
    }
    let sum = digest(s.as_bytes());
    let _ = writeln!(s, "sha256={sum}");
    s
}

pub fn save(grid: &SigmaGrid, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, to_string(grid)).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> Result<SigmaGrid> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    from_str(&text, path)
}

pub fn from_str(text: &str, path: &Path) -> Result<SigmaGrid> {
    let corrupt = |msg: String| AppError::Corrupt {
        path: path.to_path_buf(),
        msg,
    };
    let header = text.lines().next().unwrap_or("");
    match header.split_once(' ') {
        Some((MAGIC, VERSION)) => {}
        Some((MAGIC, v)) => {
            return Err(AppError::Version {
                path: path.to_path_buf(),
                found: v.to_string(),
                expected: VERSION,
            })
        }
        _ => return Err(corrupt("missing grid header".into())),
    }
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .ok_or_else(|| corrupt("missing checksum".into()))?;
    let (body, tail) = text.split_at(body_end);
    let sum = tail
        .trim_end()
        .strip_prefix("sha256=")
        .ok_or_else(|| corrupt("missing checksum line".into()))?;
    if sum != digest(body.as_bytes()) {
        return Err(corrupt("checksum mismatch".into()));
    }

    let mut meta = BTreeMap::new();
    let mut rows = Vec::new();
    for line in body.lines().skip(1) {
        match line.split_once('=') {
            Some((k, v)) if !k.contains(' ') => {
                meta.insert(k, v);
            }
            _ => rows.push(line),
        }
    }
    let get = |k: &str| meta.get(k).copied().ok_or_else(|| corrupt(format!("missing key {k}")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| corrupt(format!("bad value for {k}"))) };
    let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| corrupt(format!("bad value for {k}"))) };
    if get("columns")? != COLUMNS {
        return Err(corrupt("unexpected column layout".into()));
    }
    let n = int("nodes")?;
    if rows.len() != n {
        return Err(corrupt(format!("expected {n} nodes, found {}", rows.len())));
    }
    let mut k_values = Vec::with_capacity(n);
    let mut nodes = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        let v: Vec<f64> = row
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| corrupt(format!("unparsable node row {i}")))?;
        if v.len() != 8 {
            return Err(corrupt(format!("node row {i} has {} fields", v.len())));
        }
        k_values.push(v[0]);
        nodes.push(SigmaValue {
            sigma2: v[1],
            sigma2_x: v[2],
            sigma2_y: v[3],
            se: v[4],
            se_x: v[5],
            se_y: v[6],
            x_max: v[7],
        });
    }
    let grid = SigmaGrid {
        mesh: num("mesh")?,
        alpha: num("alpha")?,
        delta_factor: num("delta_factor")?,
        budgets: GridBudgets {
            mc_per_node: int("mc_per_node")?,
            mc_zeta: int("mc_zeta")?,
            age_nodes: int("age_nodes")?,
            x_horizon: num("x_horizon")?,
        },
        seed: get("seed")?.parse().map_err(|_| corrupt("bad seed".into()))?,
        quadrature: get("quadrature")?.to_string(),
        k_values,
        nodes,
    };
    grid.validate()?;
    Ok(grid)
}

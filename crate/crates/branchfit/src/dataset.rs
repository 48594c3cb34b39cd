//! Delimited-text dataset files.
//!
//! ```text
//! # branchfit-dataset v1
//! # grid_step=0.5
//! # t0=0
//! # units=cells
//! # count_mode=absolute
//! 1,2,2,4,NA
//! 1,1,2,3,5
//! ```
//!
//! One row per trajectory, one column per grid time. `NA` marks a masked
//! entry. Extra `# key=value` lines are preserved as metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use branchfit_core::inference::{CountMode, Dataset};

use crate::error::{AppError, Result};

pub const HEADER: &str = "# branchfit-dataset v1";
pub const MISSING: &str = "NA";
const RESERVED: [&str; 4] = ["grid_step", "t0", "units", "count_mode"];

pub fn mode_name(m: CountMode) -> &'static str {
    match m {
        CountMode::Absolute => "absolute",
        CountMode::Proportional => "proportional",
    }
}

pub fn parse_mode(s: &str) -> Option<CountMode> {
    match s {
        "absolute" => Some(CountMode::Absolute),
        "proportional" => Some(CountMode::Proportional),
        _ => None,
    }
}

pub fn to_string(ds: &Dataset, meta: &BTreeMap<String, String>) -> String {
    let mut s = format!("{HEADER}\n");
    let _ = writeln!(s, "# grid_step={}", ds.grid_step);
    let _ = writeln!(s, "# t0={}", ds.t0);
    let _ = writeln!(s, "# units={}", ds.units);
    let _ = writeln!(s, "# count_mode={}", mode_name(ds.count_mode));
    for (k, v) in meta.iter().filter(|(k, _)| !RESERVED.contains(&k.as_str())) {
        let _ = writeln!(s, "# {k}={v}");
    }
    for (c, v) in ds.counts.iter().zip(&ds.valid) {
        let row: Vec<String> = c
            .iter()
            .zip(v)
            .map(|(x, &ok)| if ok { x.to_string() } else { MISSING.to_string() })
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn write(ds: &Dataset, meta: &BTreeMap<String, String>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, to_string(ds, meta)).map_err(|e| AppError::io(path, e))
}

pub fn read(path: &Path) -> Result<(Dataset, BTreeMap<String, String>)> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    from_str(&text, path)
}

pub fn from_str(text: &str, path: &Path) -> Result<(Dataset, BTreeMap<String, String>)> {
    let bad = |msg: String| AppError::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == HEADER => {}
        _ => return Err(bad(format!("first line must be {HEADER:?}"))),
    }
    let mut meta = BTreeMap::new();
    let mut counts = Vec::new();
    let mut valid = Vec::new();
    for (n, line) in lines {
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: metadata must be key=value", n + 1)))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
            continue;
        }
        let mut c = Vec::new();
        let mut v = Vec::new();
        for field in line.split(',').map(str::trim) {
            if field == MISSING {
                c.push(0.0);
                v.push(false);
            } else {
                let x: f64 = field
                    .parse()
                    .map_err(|_| bad(format!("line {}: bad count {field:?}", n + 1)))?;
                c.push(x);
                v.push(true);
            }
        }
        counts.push(c);
        valid.push(v);
    }
    let get = |k: &str| meta.get(k).ok_or_else(|| bad(format!("missing metadata {k}")));
    let grid_step: f64 = get("grid_step")?.parse().map_err(|_| bad("bad grid_step".into()))?;
    let t0: f64 = meta.get("t0").map_or(Ok(0.0), |v| v.parse()).map_err(|_| bad("bad t0".into()))?;
    let count_mode = parse_mode(get("count_mode")?).ok_or_else(|| bad("count_mode must be absolute or proportional".into()))?;
    let units = meta.get("units").cloned().unwrap_or_default();
    let ds = Dataset::with_mask(grid_step, t0, counts, valid, units, count_mode).map_err(|e| bad(e.to_string()))?;
    let extra = meta.into_iter().filter(|(k, _)| !RESERVED.contains(&k.as_str())).collect();
    Ok((ds, extra))
}

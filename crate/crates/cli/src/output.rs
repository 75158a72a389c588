use std::path::Path;

use serde::Serialize;

use fluxtorsion::torsion::{Conventions, Metadata};

use crate::config::CliResult;

pub enum Outcome {
    Pass,
    Fail(String),
}

pub fn json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| format!("cannot serialise report: {e}"))?;
    s.push('\n');
    Ok(s)
}

/// Convention flags as `# key: value` lines.
pub fn conventions_header() -> String {
    let c = Conventions::default();
    let v = serde_json::to_value(c).unwrap_or_default();
    let mut out = String::new();
    if let Some(map) = v.as_object() {
        for (k, val) in map {
            let text = val.as_str().map_or_else(|| val.to_string(), str::to_string);
            out.push_str(&format!("# {k}: {text}\n"));
        }
    }
    out
}

pub fn csv_header(m: &Metadata) -> String {
    let mut out = conventions_header();
    out.push_str(&format!("# model: {}\n# flux: {}\n", m.model, m.flux));
    if let Some(s) = m.seed {
        out.push_str(&format!("# seed: {s}\n"));
    }
    out.push_str(&format!("# t_grid: geom:{:e}:{:e}:{}\n", m.t_grid.0, m.t_grid.1, m.t_grid.2));
    out
}

pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

//! Text summary of a finished run directory.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ExpError, ExpResult};
use crate::output::SCHEMA_VERSION;

fn read_table(path: &Path) -> ExpResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

fn markdown_table(out: &mut String, header: &[String], rows: &[Vec<String>], skip: &[&str]) {
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !skip.contains(&header[i].as_str())).collect();
    let line = |cells: Vec<&str>| format!("| {} |\n", cells.join(" | "));
    out.push_str(&line(keep.iter().map(|&i| header[i].as_str()).collect()));
    out.push_str(&line(keep.iter().map(|_| "---").collect()));
    for r in rows {
        out.push_str(&line(keep.iter().map(|&i| r.get(i).map_or("", String::as_str)).collect()));
    }
}

/// Builds the report text and writes it to `dir/report.md`.
pub fn report(dir: &Path) -> ExpResult<String> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| ExpError::Config(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)?;
    let version = manifest["schema_version"].as_u64();
    if version != Some(SCHEMA_VERSION as u64) {
        return Err(ExpError::Config(format!(
            "schema version {version:?} does not match this build ({SCHEMA_VERSION})"
        )));
    }
    let mut out = String::new();
    let s = |k: &str| manifest[k].as_str().unwrap_or("?").to_string();
    writeln!(out, "# {}\n", s("scenario")).ok();
    writeln!(out, "- limit: {}", s("limit_label")).ok();
    writeln!(out, "- config hash: {}", s("config_hash")).ok();
    writeln!(out, "- code version: {}", s("code_version")).ok();
    writeln!(out, "- wall time: {:.1} s", manifest["wall_time_s"].as_f64().unwrap_or(f64::NAN)).ok();
    if let Some(w) = manifest["warnings"].as_array() {
        for w in w {
            writeln!(out, "- warning: {}", w.as_str().unwrap_or("")).ok();
        }
    }
    let skip = ["config_hash"];
    for (title, file) in [("Points", "points.csv"), ("Rate fits", "fits.csv"), ("N-body", "nbody.csv")] {
        let path = dir.join(file);
        if !path.exists() {
            continue;
        }
        let (header, rows) = read_table(&path)?;
        if rows.is_empty() {
            continue;
        }
        writeln!(out, "\n## {title}\n").ok();
        markdown_table(&mut out, &header, &rows, &skip);
    }
    std::fs::write(dir.join("report.md"), &out)?;
    Ok(out)
}

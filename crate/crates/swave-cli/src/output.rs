//! `result.csv`, `report.txt` and field tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;

use crate::experiments::Outcome;

/// One header row and one data row: experiment, verdict, parameters, metrics.
pub fn result_csv(outcome: &Outcome) -> anyhow::Result<Vec<u8>> {
    let r = &outcome.result;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["experiment".to_string(), "verdict".to_string()];
    header.extend(r.parameters.iter().map(|(k, _)| k.clone()));
    header.extend(r.metrics.iter().map(|(k, _)| k.clone()));
    w.write_record(&header)?;
    let mut row = vec![r.id.clone(), verdict(r.verdict).to_string()];
    row.extend(r.parameters.iter().map(|(_, v)| v.clone()));
    row.extend(r.metrics.iter().map(|(_, v)| v.to_string()));
    w.write_record(&row)?;
    Ok(w.into_inner()?)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn report(outcome: &Outcome) -> String {
    let r = &outcome.result;
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {}", r.id);
    let _ = writeln!(s, "verdict: {}", verdict(r.verdict));
    let _ = writeln!(s, "\nparameters:");
    for (k, v) in &r.parameters {
        let _ = writeln!(s, "  {k} = {v}");
    }
    let _ = writeln!(s, "\nmetrics:");
    for (k, v) in &r.metrics {
        let _ = writeln!(s, "  {k} = {v:e}");
    }
    if !outcome.notes.is_empty() {
        let _ = writeln!(s, "\nnotes:");
        for n in &outcome.notes {
            let _ = writeln!(s, "  {n}");
        }
    }
    if !outcome.tables.is_empty() {
        let files: Vec<_> = outcome.tables.iter().map(|t| t.file).collect();
        let _ = writeln!(s, "\nfield tables: {}", files.join(", "));
    }
    s
}

pub fn write_all(dir: &Path, outcome: &Outcome) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("result.csv"), result_csv(outcome)?)?;
    fs::write(dir.join("report.txt"), report(outcome))?;
    for t in &outcome.tables {
        let path = dir.join(t.file);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(&t.header)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    Ok(())
}

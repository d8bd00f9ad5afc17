//! CSV ingestion and export, and result persistence.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dgp::DgpSample;
use crate::error::{MpeError, Result};
use crate::estimators::{Dataset, MIN_OBSERVATIONS};

use super::run::ResultRecord;

/// A loaded dataset and the number of rows dropped for non-numeric or
/// missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub data: Dataset,
    pub dropped_rows: usize,
}

/// Read `y`, `d`, optional `x1..xk` and optional `z` from a headed CSV file.
/// Other columns are ignored.
pub fn load_csv(path: &Path) -> Result<Loaded> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| MpeError::Ingestion(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| MpeError::Ingestion(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let missing: Vec<&str> = ["y", "d"].into_iter().filter(|c| find(c).is_none()).collect();
    if !missing.is_empty() {
        return Err(MpeError::Ingestion(format!(
            "missing required column(s) {}; header has [{}]",
            missing.iter().map(|c| format!("`{c}`")).collect::<Vec<_>>().join(", "),
            header.join(", ")
        )));
    }
    let mut xs: Vec<(usize, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            let idx = h.strip_prefix('x')?.parse::<usize>().ok()?;
            Some((idx, i))
        })
        .collect();
    xs.sort_unstable();
    let (iy, id, iz) = (find("y").unwrap(), find("d").unwrap(), find("z"));
    let cols: Vec<usize> = [iy, id].into_iter().chain(xs.iter().map(|(_, i)| *i)).chain(iz).collect();

    let k = xs.len();
    let (mut y, mut d, mut x, mut z) = (Vec::new(), Vec::new(), vec![Vec::new(); k], Vec::new());
    let mut dropped = 0;
    for record in reader.records() {
        let record = record.map_err(|e| MpeError::Ingestion(format!("{}: {e}", path.display())))?;
        let parsed: Option<Vec<f64>> = cols
            .iter()
            .map(|c| record.get(*c).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite()))
            .collect();
        let Some(row) = parsed else {
            dropped += 1;
            continue;
        };
        y.push(row[0]);
        d.push(row[1]);
        for j in 0..k {
            x[j].push(row[2 + j]);
        }
        if iz.is_some() {
            z.push(row[2 + k]);
        }
    }
    if y.len() < MIN_OBSERVATIONS {
        return Err(MpeError::Ingestion(format!(
            "{} valid rows after dropping {dropped}; at least {MIN_OBSERVATIONS} are required",
            y.len()
        )));
    }
    let data = Dataset::new(y, d, x, iz.map(|_| z)).map_err(|e| MpeError::Ingestion(e.to_string()))?;
    Ok(Loaded { data, dropped_rows: dropped })
}

/// Write a simulated sample in the ingestion schema. Latent disturbances are
/// appended as `e` (and `eta`) only when `with_latents` is set. Values use
/// shortest round-trip formatting, so reloading is exact.
pub fn write_sample_csv(sample: &DgpSample, path: &Path, with_latents: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = sample.x.len();
    let mut header: Vec<String> = vec!["y".into(), "d".into()];
    header.extend((1..=k).map(|j| format!("x{j}")));
    if sample.z.is_some() {
        header.push("z".into());
    }
    if with_latents {
        header.push("e".into());
        if sample.eta.is_some() {
            header.push("eta".into());
        }
    }
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..sample.len() {
        row.clear();
        row.push(sample.y[i].to_string());
        row.push(sample.d[i].to_string());
        row.extend(sample.x.iter().map(|c| c[i].to_string()));
        if let Some(z) = &sample.z {
            row.push(z[i].to_string());
        }
        if with_latents {
            row.push(sample.e[i].to_string());
            if let Some(eta) = &sample.eta {
                row.push(eta[i].to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl Format {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(MpeError::config(format!("unknown output format `{other}`"))),
        }
    }
}

/// One CSV row of an emitted record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CsvRow {
    pub kind: String,
    pub config_hash: String,
    pub mode: String,
    pub label: String,
    pub index: Option<usize>,
    pub value: Option<f64>,
    pub se: Option<f64>,
    pub oracle: Option<f64>,
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    pub n_used: Option<usize>,
    pub n_trimmed: Option<usize>,
    pub passed: Option<bool>,
}

/// Flatten a record into CSV rows: one per replication (or estimate, oracle
/// value, check) followed by a `summary` row.
pub fn csv_rows(record: &ResultRecord) -> Vec<CsvRow> {
    let base = CsvRow {
        config_hash: record.config_hash.clone(),
        mode: record.config.experiment.mode.to_string(),
        ..Default::default()
    };
    let functional = record.config.functional.spec.to_string();
    let mut rows = Vec::new();
    for r in &record.replications {
        rows.push(CsvRow {
            kind: "replication".into(),
            label: functional.clone(),
            index: Some(r.index),
            value: Some(r.value),
            n_used: Some(r.n_used),
            n_trimmed: Some(r.n_trimmed),
            ..base.clone()
        });
    }
    if let Some(e) = &record.estimate {
        rows.push(CsvRow {
            kind: "estimate".into(),
            label: format!("{} {}", e.functional, e.method),
            value: Some(e.value),
            se: record.bootstrap.as_ref().map(|b| b.sd),
            n_used: Some(e.n_used),
            n_trimmed: Some(e.n_trimmed),
            ..base.clone()
        });
    }
    for c in &record.checks {
        rows.push(CsvRow {
            kind: "check".into(),
            label: format!("{}: {}", c.group, c.name),
            value: Some(c.value),
            passed: Some(c.passed),
            ..base.clone()
        });
    }
    let mut summary = CsvRow {
        kind: "summary".into(),
        label: functional,
        ..base
    };
    if let Some(s) = &record.summary {
        summary.value = Some(s.mean);
        summary.se = Some(s.mc_se);
        summary.oracle = Some(s.oracle);
        summary.bias = Some(s.bias);
        summary.rmse = Some(s.rmse);
    } else if let Some(o) = &record.oracle {
        summary.value = Some(o.value);
        summary.se = o.se;
        summary.oracle = Some(o.value);
    } else if let Some(e) = &record.estimate {
        summary.value = Some(e.value);
        summary.se = record.bootstrap.as_ref().map(|b| b.sd);
    }
    if !record.checks.is_empty() {
        summary.passed = Some(record.checks.iter().all(|c| c.passed));
        summary.value = Some(record.checks.iter().filter(|c| c.passed).count() as f64);
    }
    rows.push(summary);
    rows
}

/// Write the record as one pretty JSON object or as CSV rows.
pub fn emit(record: &ResultRecord, path: &Path, format: Format) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    emit_to(record, &mut w, format)?;
    w.flush()?;
    Ok(())
}

/// [`emit`] into any writer.
pub fn emit_to<W: Write>(record: &ResultRecord, mut w: W, format: Format) -> Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, record)?;
            w.write_all(b"\n")?;
        }
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(&mut w);
            for row in csv_rows(record) {
                csv.serialize(row)?;
            }
            csv.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, text: &str) {
        std::fs::write(path, text).unwrap();
    }

    #[test]
    fn loads_required_and_optional_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let mut text = String::from("y,d\n");
        for i in 0..100 {
            text.push_str(&format!("{},{}\n", i, 2 * i));
        }
        write(&p, &text);
        let l = load_csv(&p).unwrap();
        assert_eq!((l.data.n(), l.data.k(), l.dropped_rows), (100, 0, 0));
        assert!(l.data.z().is_none());

        let mut text = String::from("y,d,x2,x1,z,note\n");
        for i in 0..60 {
            text.push_str(&format!("{i},{i},{},{},{i},hello\n", 2 * i, 3 * i));
        }
        text.push_str("1,NA,1,1,1,x\n2,,1,1,1,x\n");
        write(&p, &text);
        let l = load_csv(&p).unwrap();
        assert_eq!((l.data.n(), l.data.k(), l.dropped_rows), (60, 2, 2));
        assert_eq!(l.data.x()[0][5], 15.0);
        assert_eq!(l.data.x()[1][5], 10.0);
        assert!(l.data.z().is_some());
    }

    #[test]
    fn reports_missing_columns_and_short_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        write(&p, "y\n1\n2\n");
        match load_csv(&p) {
            Err(MpeError::Ingestion(msg)) => assert!(msg.contains("`d`"), "{msg}"),
            other => panic!("{other:?}"),
        }
        write(&p, "y,d\n1,2\n");
        assert!(matches!(load_csv(&p), Err(MpeError::Ingestion(_))));
        assert!(matches!(load_csv(&dir.path().join("none.csv")), Err(MpeError::Ingestion(_))));
    }

    #[test]
    fn export_round_trips_exactly() {
        let dgp = crate::dgp::preset("triangular_normal", &Default::default()).unwrap();
        let sample = dgp.simulate(80, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_sample_csv(&sample, &p, false).unwrap();
        let loaded = load_csv(&p).unwrap();
        assert_eq!(loaded.data, sample.to_dataset().unwrap());
        write_sample_csv(&sample, &p, true).unwrap();
        let header = std::fs::read_to_string(&p).unwrap().lines().next().unwrap().to_string();
        assert!(header.ends_with(",e,eta"), "{header}");
    }
}

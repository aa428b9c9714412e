//! CSV and JSON emitters. Numbers use Rust's shortest round-trip formatting,
//! so output is locale-independent and byte-stable.

use std::io::Write;
use std::path::Path;

use hdlda_core::shrinkage::MeanMethod;
use hdlda_core::simlab::ExperimentTable;
use hdlda_core::theory::{RegionReport, VScanRow};
use serde::Serialize;

pub type IoResult = std::io::Result<()>;

fn writer(path: &Path) -> std::io::Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_writer(std::fs::File::create(path)?))
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

/// One row per cell: `mean_method,precision_method,variant,mean_error,sd_error,reps`.
pub fn write_table_long(path: &Path, table: &ExperimentTable) -> IoResult {
    let mut w = writer(path)?;
    w.write_record(["mean_method", "precision_method", "variant", "mean_error", "sd_error", "reps"])?;
    let (rows, cols) = table.layout();
    for rule in &rows {
        for &prec in &cols {
            if let Some(c) = table.get(prec, *rule) {
                w.write_record([
                    rule.mean_method.tag(),
                    prec.label(),
                    rule.variant.tag(),
                    &num(c.mean),
                    &num(c.sd),
                    &c.reps.to_string(),
                ])?;
            }
        }
    }
    w.flush()
}

/// Rules as rows, precision estimators as columns, cells `mean (sd)`.
pub fn write_table_wide(path: &Path, table: &ExperimentTable) -> IoResult {
    let mut w = writer(path)?;
    let (rows, cols) = table.layout();
    let mut header = vec!["rule".to_string()];
    header.extend(cols.iter().map(|c| c.label().to_string()));
    w.write_record(&header)?;
    for rule in &rows {
        let mut rec = vec![rule.label()];
        for &prec in &cols {
            rec.push(match table.get(prec, *rule) {
                Some(c) if c.reps > 0 => format!("{:.4} ({:.4})", c.mean, c.sd),
                _ => String::new(),
            });
        }
        w.write_record(&rec)?;
    }
    w.flush()
}

#[derive(Serialize)]
struct JsonCell<'a> {
    rule: String,
    precision_method: &'a str,
    mean_error: Option<f64>,
    sd_error: Option<f64>,
    reps: usize,
    failures: usize,
}

#[derive(Serialize)]
struct JsonTable<'a> {
    setting: &'a str,
    replications: usize,
    cells: Vec<JsonCell<'a>>,
}

pub fn write_table_json(path: &Path, table: &ExperimentTable, replications: usize) -> IoResult {
    let finite = |x: f64| x.is_finite().then_some(x);
    let cells = table
        .cells
        .iter()
        .map(|(k, c)| JsonCell {
            rule: k.rule.label(),
            precision_method: k.precision.label(),
            mean_error: finite(c.mean),
            sd_error: finite(c.sd),
            reps: c.reps,
            failures: c.failures,
        })
        .collect();
    write_json(path, &JsonTable { setting: &table.setting, replications, cells })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> IoResult {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")
}

pub fn write_regions(path: &Path, reports: &[RegionReport]) -> IoResult {
    let mut w = writer(path)?;
    let mut header = vec!["a", "b", "in_A", "in_B", "in_C", "in_D", "in_T1", "in_T2"];
    header.extend(MeanMethod::ALL.map(MeanMethod::tag));
    w.write_record(&header)?;
    for r in reports {
        let flag = |b: bool| if b { "1" } else { "0" };
        let mut rec = vec![num(r.a), num(r.b)];
        rec.extend([r.in_a, r.in_b, r.in_c, r.in_d, r.in_t1, r.in_t2].map(|b| flag(b).to_string()));
        rec.extend(MeanMethod::ALL.map(|m| r.coverage_of(m).tag().to_string()));
        w.write_record(&rec)?;
    }
    w.flush()
}

pub fn write_vscan(path: &Path, rows: &[([f64; 2], VScanRow)]) -> IoResult {
    let mut w = writer(path)?;
    w.write_record(["a", "b", "method", "p", "median", "q10", "q90", "draws", "zero_estimates"])?;
    for ([a, b], r) in rows {
        w.write_record([
            num(*a),
            num(*b),
            r.method.tag().to_string(),
            r.p.to_string(),
            num(r.median),
            num(r.q10),
            num(r.q90),
            r.draws.to_string(),
            r.zero_estimates.to_string(),
        ])?;
    }
    w.flush()
}

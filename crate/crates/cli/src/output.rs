//! Report files: one JSON document and one CSV table per subcommand.

use std::path::{Path, PathBuf};

use serde::Serialize;
use witten_core::eigen::RateFit;

/// 17 significant digits, enough to round-trip an `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
    }
}

/// Everything a subcommand produces, before it is written out.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub name: &'static str,
    pub json: serde_json::Value,
    /// `(file stem, table)`; the first one is the main table.
    pub tables: Vec<(String, Table)>,
    /// Extra text files such as operator dumps.
    pub extra: Vec<(String, String)>,
    pub summary: String,
}

impl RunOutput {
    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let json = dir.join(format!("{}.json", self.name));
        std::fs::write(&json, serde_json::to_string_pretty(&self.json)? + "\n")?;
        written.push(json);
        for (stem, t) in &self.tables {
            let p = dir.join(format!("{stem}.csv"));
            std::fs::write(&p, t.to_csv())?;
            written.push(p);
        }
        for (name, body) in &self.extra {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            written.push(p);
        }
        Ok(written)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub n_small: usize,
    pub ek_e: f64,
    pub ek_a: f64,
    pub predicted: f64,
    pub ratio: f64,
    pub quasimode_rayleigh: f64,
    pub lower_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    /// Sorted by decreasing `eps`.
    pub rows: Vec<SweepRow>,
    pub fit: Option<RateFit>,
    /// Why the fit is missing, if it is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
}

pub const CONVERGENCE_HEADER: [&str; 5] = ["eps", "lambda2", "predicted", "ratio", "(ratio-1)/sqrt(eps)"];

/// Plot-ready convergence table of a sweep.
pub fn emit_convergence_table(report: &SweepReport) -> String {
    let mut t = Table::new(&CONVERGENCE_HEADER);
    for r in &report.rows {
        t.push(vec![num(r.eps), num(r.lambda2), num(r.predicted), num(r.ratio), num((r.ratio - 1.0) / r.eps.sqrt())]);
    }
    t.to_csv()
}

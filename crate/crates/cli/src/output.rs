//! Artifact writing: tables, plot scripts and the run manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Numeric table with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().cloned().zip(r.iter().map(|&v| json!(v))).collect()))
            .collect();
        Value::Array(rows)
    }
}

/// Output directory of one run; records every file written for the manifest.
pub struct Artifacts {
    root: PathBuf,
    format: Format,
    files: Vec<String>,
}

impl Artifacts {
    pub fn create(root: &Path, format: Format) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), format, files: Vec::new() })
    }

    /// Writes `rel` with `f`, creating parent directories.
    pub fn write_with(&mut self, rel: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(p) = path.parent() {
            fs::create_dir_all(p)?;
        }
        let mut w = BufWriter::new(fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(rel.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.write_with(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    /// Writes `stem.csv` or `stem.json` according to the selected format and
    /// returns the file name.
    pub fn write_table(&mut self, stem: &str, table: &Table) -> Result<String> {
        let rel = format!("{stem}.{}", self.format.ext());
        match self.format {
            Format::Csv => self.write_with(&rel, |w| Ok(table.write_csv(w)?))?,
            Format::Json => self.write_json(&rel, &table.to_json())?,
        }
        Ok(rel)
    }

    /// Table plus a gnuplot script plotting `y` columns against `x`.
    /// The script always reads the CSV copy, which is written when the
    /// selected format is JSON.
    pub fn write_plot(&mut self, stem: &str, table: &Table, x: &str, ys: &[&str], logscale: bool) -> Result<()> {
        self.write_table(stem, table)?;
        let csv = format!("{stem}.csv");
        if self.format != Format::Csv {
            self.write_with(&csv, |w| Ok(table.write_csv(w)?))?;
        }
        let col = |name: &str| self.columns_index(table, name);
        let xi = col(x)?;
        let mut plots = Vec::new();
        for y in ys {
            plots.push(format!("'{csv}' using {}:{} with linespoints title '{y}'", xi + 1, col(y)? + 1));
        }
        let script = format!(
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel '{x}'\n{}set terminal pngcairo size 900,600\nset output '{stem}.png'\nplot {}\n",
            if logscale { "set logscale y\n" } else { "" },
            plots.join(", \\\n     ")
        );
        self.write_with(&format!("{stem}.gp"), |w| Ok(w.write_all(script.as_bytes())?))
    }

    fn columns_index(&self, table: &Table, name: &str) -> Result<usize> {
        table.columns.iter().position(|c| c == name).with_context(|| format!("no column {name}"))
    }

    /// `manifest.json`: command, inputs hash, version, wall time and files.
    pub fn finish(mut self, command: &str, inputs_hash: &str, seed: u64, wall_time: f64, summary: Value) -> Result<()> {
        self.files.sort();
        let manifest = json!({
            "command": command,
            "inputs_sha256": inputs_hash,
            "seed": seed,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_time_s": wall_time,
            "files": self.files,
            "summary": summary,
        });
        let path = self.root.join("manifest.json");
        let mut f = fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        writeln!(f)?;
        Ok(())
    }
}

/// SHA-256 over the command, config bytes and seed.
pub fn inputs_hash(command: &str, config: &[u8], seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(config);
    h.update(seed.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

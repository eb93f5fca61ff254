// SPDX-License-Identifier: MIT OR Apache-2.0

//! Report bundles and their on-disk form.
//!
//! ```text
//! <outdir>/records.jsonl     one GenerationRecord per line
//! <outdir>/report.json       the ReportBundle
//! <outdir>/tables/<name>.csv one file per table and per grid
//! <outdir>/grid.svg          heatmap of the `grid` grid, scans only
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use patchlab_core::GenerationRecord;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentKind;
use crate::error::{HarnessError, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(cell_text)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// A finite number, or null.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

// ---------------------------------------------------------------------------
// Rewrite grids
// ---------------------------------------------------------------------------

/// Scores indexed `[layer][token]`; `None` marks a cell that could not be
/// scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteGrid {
    pub n_layers: usize,
    pub n_tokens: usize,
    /// Column labels, one per token position.
    pub tokens: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    /// Column of the condition's last subtoken.
    pub anchor: Option<usize>,
}

impl RewriteGrid {
    pub fn new(n_layers: usize, tokens: Vec<String>, anchor: Option<usize>) -> Self {
        let n_tokens = tokens.len();
        Self {
            n_layers,
            n_tokens,
            tokens,
            values: vec![vec![None; n_tokens]; n_layers],
            anchor,
        }
    }

    /// Largest scored cell as `(layer, token, score)`; the first in
    /// layer-major order wins ties.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (l, row) in self.values.iter().enumerate() {
            for (t, v) in row.iter().enumerate() {
                if let Some(v) = *v {
                    if best.map_or(true, |(_, _, b)| v > b) {
                        best = Some((l, t, v));
                    }
                }
            }
        }
        best
    }

    pub fn missing(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Columns `layer,token_index,score`, layer-major.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["layer", "token_index", "score"]);
        for (l, row) in self.values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                t.push(vec![l.into(), i.into(), v.map_or(Value::Null, num)]);
            }
        }
        t
    }

    pub fn to_svg(&self) -> String {
        const CELL: usize = 14;
        const LEFT: usize = 40;
        const TOP: usize = 20;
        let width = LEFT + CELL * self.n_tokens + 10;
        let height = TOP + CELL * self.n_layers + 30;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="9">"#
        );
        let _ = writeln!(s, r#"<text x="2" y="12">rewrite score (layer x token)</text>"#);
        for (l, row) in self.values.iter().enumerate() {
            // layer 0 at the bottom
            let y = TOP + CELL * (self.n_layers - 1 - l);
            let _ = writeln!(s, r#"<text x="2" y="{}">{l}</text>"#, y + CELL - 3);
            for (t, v) in row.iter().enumerate() {
                let x = LEFT + CELL * t;
                let (fill, label) = match v {
                    Some(v) => (color(*v), format!("{v:.4}")),
                    None => ("#999999".to_string(), "missing".to_string()),
                };
                let tok = escape(self.tokens.get(t).map(String::as_str).unwrap_or(""));
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}"><title>layer {l}, token {t} {tok}: {label}</title></rect>"#
                );
            }
        }
        if let Some(a) = self.anchor {
            let x = LEFT + CELL * a;
            let y = TOP + CELL * self.n_layers;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{TOP}" width="{CELL}" height="{}" fill="none" stroke="black"/>"#,
                CELL * self.n_layers
            );
            let _ = writeln!(s, r#"<text x="{x}" y="{}">^</text>"#, y + 12);
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Blue for negative, white at zero, red at one.
fn color(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let fade = |x: f64| (255.0 * (1.0 - x)).round() as u8;
    let (r, g, b) = if v >= 0.0 {
        (255, fade(v), fade(v))
    } else {
        (fade(-v), fade(-v), 255)
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

// ---------------------------------------------------------------------------
// Bundles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine_version: String,
    pub harness_version: String,
    pub seed: u64,
    pub model_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    /// The experiment config as given, without its output directory.
    pub config: Value,
    pub provenance: Provenance,
    pub summary: BTreeMap<String, Value>,
    pub tables: BTreeMap<String, Table>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub grids: BTreeMap<String, RewriteGrid>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ReportBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Report {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| HarnessError::Report {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// A finished run: the bundle plus every sampled completion.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub bundle: ReportBundle,
    pub records: Vec<GenerationRecord>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

/// Records as JSON lines.
pub fn records_jsonl(records: &[GenerationRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

/// Write every artifact of `out` under `dir`; returns the written paths.
pub fn emit(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let tables_dir = dir.join("tables");
    std::fs::create_dir_all(&tables_dir).map_err(|source| HarnessError::Io {
        path: tables_dir.clone(),
        source,
    })?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, bytes: &[u8]| -> Result<()> {
        write_atomic(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    put(dir.join("records.jsonl"), records_jsonl(&out.records).as_bytes())?;
    for (name, table) in &out.bundle.tables {
        put(tables_dir.join(format!("{name}.csv")), table.to_csv().as_bytes())?;
    }
    for (name, grid) in &out.bundle.grids {
        put(tables_dir.join(format!("{name}.csv")), grid.to_table().to_csv().as_bytes())?;
    }
    if let Some(grid) = out.bundle.grids.get("grid") {
        put(dir.join("grid.svg"), grid.to_svg().as_bytes())?;
    }
    put(dir.join("report.json"), out.bundle.to_json().as_bytes())?;
    Ok(written)
}

/// Run facts that legitimately differ between otherwise identical runs,
/// kept out of the report files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_threads: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_seed: Option<String>,
}

pub fn emit_run_info(info: &RunInfo, dir: &Path) -> Result<PathBuf> {
    let path = dir.join("run.json");
    let mut s = serde_json::to_string_pretty(info).expect("run info serializes");
    s.push('\n');
    write_atomic(&path, s.as_bytes())?;
    Ok(path)
}

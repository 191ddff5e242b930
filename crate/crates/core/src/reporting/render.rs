use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::{fmt2, CellResult, Column, DeltaTable, FeetTable, RESULTS_SCHEMA};
use crate::deltas::DeltaResult;
use crate::metrics::{MetricEstimate, MetricKind};
use crate::{Error, Regime, Result};

const MISSING_MD: &str = "—";
const MISSING_TEX: &str = "---";
const FROZEN_DELTA: &str = "------";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Latex,
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Markdown => "md",
            Format::Latex => "tex",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "markdown" | "md" => Ok(Format::Markdown),
            "latex" | "tex" => Ok(Format::Latex),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

fn tex_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\textbackslash{}"),
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            '~' => out.push_str("\\textasciitilde{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            _ => out.push(c),
        }
    }
    out
}

fn value_text(point: f64, half_width: Option<f64>) -> String {
    match half_width {
        Some(h) => format!("{} ({})", fmt2(point), fmt2(h)),
        None => fmt2(point),
    }
}

fn signed(delta: f64) -> String {
    let s = fmt2(delta);
    if s.starts_with('-') || s == "0.00" {
        s
    } else {
        format!("+{s}")
    }
}

fn opt_num(x: Option<f64>, digits: usize) -> String {
    x.map(|v| {
        let s = format!("{v:.digits$}");
        if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
            s[1..].to_string()
        } else {
            s
        }
    })
    .unwrap_or_default()
}

fn md_header(out: &mut String, columns: &[Column]) {
    out.push_str("| Model |");
    for c in columns {
        let _ = write!(out, " {} |", c.label());
    }
    out.push_str("\n|:--|");
    for _ in columns {
        out.push_str("--:|");
    }
    out.push('\n');
}

fn tex_begin(out: &mut String, caption: &str, columns: &[Column]) {
    let _ = writeln!(out, "% {caption}");
    let _ = writeln!(out, "\\begin{{tabular}}{{l{}}}", "c".repeat(columns.len()));
    out.push_str("\\toprule\n\\textbf{Models}");
    for c in columns {
        let _ = write!(out, " & \\textbf{{{}}}", c.label());
    }
    out.push_str(" \\\\\n\\midrule\n");
}

fn tex_end(out: &mut String) {
    out.push_str("\\bottomrule\n\\end{tabular}\n");
}

#[derive(Serialize)]
struct JsonTables<'a, T> {
    schema: &'static str,
    kind: &'static str,
    tables: &'a [T],
}

fn to_json<T: Serialize>(kind: &'static str, tables: &[T]) -> String {
    let doc = JsonTables {
        schema: RESULTS_SCHEMA,
        kind,
        tables,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("tables serialize");
    s.push('\n');
    s
}

fn csv_bytes_to_string(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory csv writer");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

/// Renders FEET tables. Markdown and LaTeX tables are separated by a blank
/// line; CSV is one long-format sheet with a single header.
pub fn render_feet(tables: &[FeetTable], format: Format) -> String {
    match format {
        Format::Markdown => {
            let mut out = String::new();
            for (i, t) in tables.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                let _ = writeln!(out, "### {} ({})\n", t.metric.title(), t.task_id);
                md_header(&mut out, &t.columns);
                for row in &t.rows {
                    let _ = write!(out, "| {} |", row.model_id);
                    for cell in &row.cells {
                        match cell {
                            Some(c) if c.bold => {
                                let _ = write!(out, " **{}** |", value_text(c.point, c.half_width));
                            }
                            Some(c) => {
                                let _ = write!(out, " {} |", value_text(c.point, c.half_width));
                            }
                            None => {
                                let _ = write!(out, " {MISSING_MD} |");
                            }
                        }
                    }
                    out.push('\n');
                }
            }
            out
        }
        Format::Latex => {
            let mut out = String::new();
            for (i, t) in tables.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                tex_begin(&mut out, &format!("{} ({})", t.metric.title(), t.task_id), &t.columns);
                for row in &t.rows {
                    out.push_str(&tex_escape(&row.model_id));
                    for cell in &row.cells {
                        match cell {
                            Some(c) if c.bold => {
                                let _ = write!(out, " & \\textbf{{{}}}", value_text(c.point, c.half_width));
                            }
                            Some(c) => {
                                let _ = write!(out, " & {}", value_text(c.point, c.half_width));
                            }
                            None => {
                                let _ = write!(out, " & {MISSING_TEX}");
                            }
                        }
                    }
                    out.push_str(" \\\\\n");
                }
                tex_end(&mut out);
            }
            out
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "metric", "task", "model", "column", "regime", "shot", "point", "half_width", "bold",
            ])
            .expect("in-memory csv writer");
            for t in tables {
                for row in &t.rows {
                    for (col, cell) in t.columns.iter().zip(&row.cells) {
                        let shot = col.shot().map(|k| k.to_string()).unwrap_or_default();
                        let (point, hw, bold) = match cell {
                            Some(c) => (fmt2(c.point), opt_num(c.half_width, 2), c.bold),
                            None => (String::new(), String::new(), false),
                        };
                        w.write_record([
                            t.metric.as_str(),
                            &t.task_id,
                            &row.model_id,
                            &col.label(),
                            col.regime().as_str(),
                            &shot,
                            &point,
                            &hw,
                            if bold { "true" } else { "false" },
                        ])
                        .expect("in-memory csv writer");
                    }
                }
            }
            csv_bytes_to_string(w)
        }
        Format::Json => to_json("feet", tables),
    }
}

/// Renders delta tables; cells are signed percentage-point differences,
/// marked with a dagger when significant.
pub fn render_delta(tables: &[DeltaTable], format: Format) -> String {
    match format {
        Format::Markdown => {
            let mut out = String::new();
            for (i, t) in tables.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                let _ = writeln!(out, "### Δ{} ({})\n", t.metric.title(), t.task_id);
                md_header(&mut out, &t.columns);
                for row in &t.rows {
                    let _ = write!(out, "| {} |", row.model_id);
                    for (col, cell) in t.columns.iter().zip(&row.cells) {
                        let text = match (col, cell) {
                            (Column::Frozen, _) => FROZEN_DELTA.to_string(),
                            (_, Some(c)) => {
                                format!("{}%{}", signed(c.delta), if c.significant { "†" } else { "" })
                            }
                            (_, None) => MISSING_MD.to_string(),
                        };
                        let _ = write!(out, " {text} |");
                    }
                    out.push('\n');
                }
            }
            out
        }
        Format::Latex => {
            let mut out = String::new();
            for (i, t) in tables.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                tex_begin(
                    &mut out,
                    &format!("Delta {} ({})", t.metric.title(), t.task_id),
                    &t.columns,
                );
                for row in &t.rows {
                    out.push_str(&tex_escape(&row.model_id));
                    for (col, cell) in t.columns.iter().zip(&row.cells) {
                        let text = match (col, cell) {
                            (Column::Frozen, _) => FROZEN_DELTA.to_string(),
                            (_, Some(c)) => format!(
                                "{}\\%{}",
                                signed(c.delta),
                                if c.significant { "$^\\dagger$" } else { "" }
                            ),
                            (_, None) => MISSING_TEX.to_string(),
                        };
                        let _ = write!(out, " & {text}");
                    }
                    out.push_str(" \\\\\n");
                }
                tex_end(&mut out);
            }
            out
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "metric",
                "task",
                "model",
                "column",
                "regime",
                "shot",
                "delta",
                "ci_low",
                "ci_high",
                "p_value",
                "significant",
            ])
            .expect("in-memory csv writer");
            for t in tables {
                for row in &t.rows {
                    for (col, cell) in t.columns.iter().zip(&row.cells) {
                        let shot = col.shot().map(|k| k.to_string()).unwrap_or_default();
                        let (delta, lo, hi, p, sig) = match cell {
                            Some(c) => (
                                fmt2(c.delta),
                                opt_num(c.ci_low, 2),
                                opt_num(c.ci_high, 2),
                                opt_num(c.p_value, 4),
                                c.significant,
                            ),
                            None => Default::default(),
                        };
                        w.write_record([
                            t.metric.as_str(),
                            &t.task_id,
                            &row.model_id,
                            &col.label(),
                            col.regime().as_str(),
                            &shot,
                            &delta,
                            &lo,
                            &hi,
                            &p,
                            if sig { "true" } else { "false" },
                        ])
                        .expect("in-memory csv writer");
                    }
                }
            }
            csv_bytes_to_string(w)
        }
        Format::Json => to_json("delta", tables),
    }
}

struct CsvRow {
    metric: MetricKind,
    task: String,
    model: String,
    regime: Regime,
    shot: Option<u32>,
    rest: Vec<String>,
}

fn read_csv(text: &str, expected_header: &[&str]) -> Result<Vec<CsvRow>> {
    let bad = |msg: String| Error::MalformedRecord {
        path: "<csv>".into(),
        line: 0,
        reason: msg,
    };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(expected_header.iter().copied()) {
        return Err(bad(format!("unexpected csv header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let regime: Regime = field(4).parse().map_err(bad)?;
        let shot = match field(5).as_str() {
            "" => None,
            s => Some(s.parse().map_err(|_| bad(format!("bad shot `{s}`")))?),
        };
        rows.push(CsvRow {
            metric: field(0).parse()?,
            task: field(1),
            model: field(2),
            regime,
            shot,
            rest: (6..rec.len()).map(field).collect(),
        });
    }
    Ok(rows)
}

fn parse_num(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::MalformedRecord {
        path: "<csv>".into(),
        line: 0,
        reason: format!("bad number `{s}`"),
    })
}

fn cell_for<'a>(cells: &'a mut Vec<CellResult>, row: &CsvRow) -> &'a mut CellResult {
    let pos = cells.iter().position(|c| {
        c.model_id == row.model && c.task_id == row.task && c.regime == row.regime && c.shot == row.shot
    });
    let pos = pos.unwrap_or_else(|| {
        cells.push(CellResult {
            model_id: row.model.clone(),
            task_id: row.task.clone(),
            regime: row.regime,
            shot: row.shot,
            replicate: 0,
            metrics: Vec::new(),
            deltas: Vec::new(),
            findings: Vec::new(),
        });
        cells.len() - 1
    });
    &mut cells[pos]
}

/// Reads a FEET CSV sheet back into cell results (values rescaled to
/// `[0, 1]`), so tables can be rebuilt from it.
pub fn parse_feet_csv(text: &str) -> Result<Vec<CellResult>> {
    let rows = read_csv(
        text,
        &["metric", "task", "model", "column", "regime", "shot", "point", "half_width", "bold"],
    )?;
    let mut cells = Vec::new();
    for row in rows {
        let point = parse_num(&row.rest[0])?.map(|v| v / 100.0);
        let half_width = parse_num(&row.rest[1])?.map(|v| v / 100.0);
        let cell = cell_for(&mut cells, &row);
        cell.metrics.push(MetricEstimate {
            name: row.metric,
            point,
            ci_low: None,
            ci_high: None,
            half_width,
            n: 0,
            replicates: 0,
            seed: 0,
            dropped: 0,
        });
    }
    Ok(cells)
}

/// Reads a delta CSV sheet back into cell results carrying only deltas.
pub fn parse_delta_csv(text: &str) -> Result<Vec<CellResult>> {
    let rows = read_csv(
        text,
        &[
            "metric",
            "task",
            "model",
            "column",
            "regime",
            "shot",
            "delta",
            "ci_low",
            "ci_high",
            "p_value",
            "significant",
        ],
    )?;
    let mut cells = Vec::new();
    for row in rows {
        let delta = parse_num(&row.rest[0])?;
        let ci_low = parse_num(&row.rest[1])?;
        let ci_high = parse_num(&row.rest[2])?;
        let p_value = parse_num(&row.rest[3])?;
        let significant = row.rest[4] == "true";
        let (metric, regime, shot) = (row.metric, row.regime, row.shot);
        let cell = cell_for(&mut cells, &row);
        if regime != Regime::Frozen && delta.is_some() {
            cell.deltas.push(DeltaResult {
                metric,
                regime,
                shot,
                delta,
                ci_low,
                ci_high,
                p_value,
                significant,
            });
        }
    }
    Ok(cells)
}

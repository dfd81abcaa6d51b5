use std::fs;
use std::io::{self, Write};
use std::path::Path;

use lossrate_core::extended::render_f64;
use lossrate_core::{
    CumulantCurve, Extended, InverseRateEvaluation, RateEvaluation, SCHEMA_VERSION,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::OutputFormat;

/// Rows of a CSV document, preceded by a `#` line describing the columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub comment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        let body =
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input");
        format!("# {}\n{body}", self.comment)
    }

    /// Parses a document written by [`Table::to_csv`].
    pub fn from_csv(text: &str) -> io::Result<Self> {
        let (comment, body) = match text.strip_prefix("# ") {
            Some(rest) => rest.split_once('\n').unwrap_or((rest, "")),
            None => ("", text),
        };
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let columns = r
            .headers()
            .map_err(io::Error::other)?
            .iter()
            .map(String::from)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()
            .map_err(io::Error::other)?;
        Ok(Table {
            comment: comment.to_string(),
            columns,
            rows,
        })
    }
}

/// Renders a JSON scalar for a CSV cell: floats at 17 significant digits.
pub fn render_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) if n.is_f64() => render_f64(n.as_f64().expect("f64 number")),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Flattens a JSON object into one CSV row, joining nested keys with `.`.
pub fn flatten_row(value: &Value, comment: &str) -> Table {
    fn walk(prefix: &str, v: &Value, columns: &mut Vec<String>, cells: &mut Vec<String>) {
        let key = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match v {
            Value::Object(map) => {
                for (k, v) in map {
                    walk(&key(k), v, columns, cells);
                }
            }
            Value::Array(items) => {
                for (i, v) in items.iter().enumerate() {
                    walk(&key(&i.to_string()), v, columns, cells);
                }
            }
            scalar => {
                columns.push(prefix.to_string());
                cells.push(render_cell(scalar));
            }
        }
    }
    let (mut columns, mut cells) = (Vec::new(), Vec::new());
    walk("", value, &mut columns, &mut cells);
    Table {
        comment: comment.to_string(),
        columns,
        rows: vec![cells],
    }
}

/// Builds a table from a list of flat JSON objects sharing their keys.
pub fn records_table(records: &[Value], comment: &str) -> Table {
    let columns: Vec<String> = match records.first() {
        Some(Value::Object(map)) => map.keys().cloned().collect(),
        _ => Vec::new(),
    };
    let rows = records
        .iter()
        .map(|r| columns.iter().map(|c| render_cell(&r[c])).collect())
        .collect();
    Table {
        comment: comment.to_string(),
        columns,
        rows,
    }
}

/// Writes `contents` to a temporary file next to `path`, then renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantPoint {
    pub lambda: f64,
    pub j: f64,
    pub dj: f64,
}

/// A tabulated curve as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "points", rename_all = "snake_case")]
pub enum Curve {
    Cumulant(Vec<CumulantPoint>),
    Rate(Vec<RateEvaluation>),
    InverseRate(Vec<InverseRateEvaluation>),
}

impl From<&CumulantCurve> for Curve {
    fn from(c: &CumulantCurve) -> Self {
        Curve::Cumulant(
            c.grid
                .values()
                .iter()
                .zip(&c.j_values)
                .zip(&c.j_derivs)
                .map(|((&lambda, &j), &dj)| CumulantPoint { lambda, j, dj })
                .collect(),
        )
    }
}

const CUMULANT_COLUMNS: [&str; 3] = ["lambda", "j", "dj"];
const RATE_COLUMNS: [&str; 5] = ["a", "value", "lambda_star", "saturated", "b_max"];
const INVERSE_RATE_COLUMNS: [&str; 5] = ["s", "value", "lambda_star", "saturated", "b_max"];

#[derive(Serialize, Deserialize)]
struct CurveDocument {
    schema_version: u32,
    #[serde(flatten)]
    curve: Curve,
}

impl Curve {
    pub fn len(&self) -> usize {
        match self {
            Curve::Cumulant(p) => p.len(),
            Curve::Rate(p) => p.len(),
            Curve::InverseRate(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn table(&self) -> Table {
        let r = render_f64;
        let (comment, columns, rows): (&str, &[&str], Vec<Vec<String>>) = match self {
            Curve::Cumulant(points) => (
                "cumulant curve; lambda: tilt, j: cumulant estimate, dj: its derivative in lambda",
                &CUMULANT_COLUMNS,
                points.iter().map(|p| vec![r(p.lambda), r(p.j), r(p.dj)]).collect(),
            ),
            Curve::Rate(points) => (
                "rate curve; a: deviation, value: rate (inf when saturated), lambda_star: maximizing lambda, \
                 b_max: rate at the domain boundary",
                &RATE_COLUMNS,
                points
                    .iter()
                    .map(|p| {
                        vec![r(p.a), p.value.render(), p.lambda_star.render(), p.saturated.to_string(), r(p.b_max)]
                    })
                    .collect(),
            ),
            Curve::InverseRate(points) => (
                "inverse rate curve; s: budget, value: inverse rate, lambda_star: minimizing lambda, \
                 b_max: budget at which the value saturates",
                &INVERSE_RATE_COLUMNS,
                points
                    .iter()
                    .map(|p| {
                        vec![r(p.s), r(p.value), p.lambda_star.render(), p.saturated.to_string(), r(p.b_max)]
                    })
                    .collect(),
            ),
        };
        Table {
            comment: comment.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
        }
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.table().to_csv(),
            OutputFormat::Json => {
                let doc = CurveDocument {
                    schema_version: SCHEMA_VERSION,
                    curve: self.clone(),
                };
                serde_json::to_string_pretty(&doc).expect("curves serialize") + "\n"
            }
        }
    }

    pub fn parse(text: &str, format: OutputFormat) -> io::Result<Self> {
        match format {
            OutputFormat::Json => {
                let doc: CurveDocument = serde_json::from_str(text)?;
                Ok(doc.curve)
            }
            OutputFormat::Csv => Self::from_table(&Table::from_csv(text)?),
        }
    }

    fn from_table(t: &Table) -> io::Result<Self> {
        let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let ext = |s: &str| {
            Extended::parse(s).ok_or_else(|| bad(format!("{s:?} is not a number or inf")))
        };
        let flag = |s: &str| s.parse::<bool>().map_err(|e| bad(format!("{s:?}: {e}")));
        let cols: Vec<&str> = t.columns.iter().map(String::as_str).collect();
        if cols == CUMULANT_COLUMNS {
            let points = t
                .rows
                .iter()
                .map(|row| {
                    Ok(CumulantPoint {
                        lambda: num(&row[0])?,
                        j: num(&row[1])?,
                        dj: num(&row[2])?,
                    })
                })
                .collect::<io::Result<_>>()?;
            Ok(Curve::Cumulant(points))
        } else if cols == RATE_COLUMNS {
            let points = t
                .rows
                .iter()
                .map(|row| {
                    Ok(RateEvaluation {
                        a: num(&row[0])?,
                        value: ext(&row[1])?,
                        lambda_star: ext(&row[2])?,
                        saturated: flag(&row[3])?,
                        b_max: num(&row[4])?,
                    })
                })
                .collect::<io::Result<_>>()?;
            Ok(Curve::Rate(points))
        } else if cols == INVERSE_RATE_COLUMNS {
            let points = t
                .rows
                .iter()
                .map(|row| {
                    Ok(InverseRateEvaluation {
                        s: num(&row[0])?,
                        value: num(&row[1])?,
                        lambda_star: ext(&row[2])?,
                        saturated: flag(&row[3])?,
                        b_max: num(&row[4])?,
                    })
                })
                .collect::<io::Result<_>>()?;
            Ok(Curve::InverseRate(points))
        } else {
            Err(bad(format!("unrecognised curve columns {cols:?}")))
        }
    }
}

/// Writes a curve file atomically.
pub fn emit_curves(curve: &Curve, path: &Path, format: OutputFormat) -> io::Result<()> {
    write_atomic(path, curve.render(format).as_bytes())
}

pub fn load_curve(path: &Path, format: OutputFormat) -> io::Result<Curve> {
    Curve::parse(&fs::read_to_string(path)?, format)
}

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::{LossDataset, LossRecord};
use crate::error::{Error, Result};

/// On-disk layout of a loss file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// Header row; columns `sample_id,loss[,group_id][,grad_norm_sq]`.
    Csv,
    /// One JSON object per line.
    Jsonl,
}

impl DataFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(DataFormat::Csv),
            "jsonl" | "ndjson" => Some(DataFormat::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "jsonl" => Ok(DataFormat::Jsonl),
            other => Err(format!(
                "unknown data format {other:?} (expected csv or jsonl)"
            )),
        }
    }
}

/// Reads and validates a loss file. The model id is the file stem.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<LossDataset> {
    let model_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model")
        .to_string();
    let file = File::open(path)?;
    let records = match format {
        DataFormat::Csv => read_csv(BufReader::new(file))?,
        DataFormat::Jsonl => read_jsonl(BufReader::new(file))?,
    };
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    LossDataset::new(model_id, records)
}

fn parse_number(field: &str, column: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("column {column}: {field:?} is not a number"),
    })
}

fn check_loss(sample_id: &str, loss: f64, line: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Validation {
            line,
            message: format!("loss of {sample_id:?} is not finite"),
        });
    }
    if loss < 0.0 {
        return Err(Error::Validation {
            line,
            message: format!("loss of {sample_id:?} is negative ({loss})"),
        });
    }
    Ok(())
}

fn check_grad_norm(sample_id: &str, value: f64, line: usize) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::Validation {
            line,
            message: format!("grad_norm_sq of {sample_id:?} must be finite and >= 0, got {value}"),
        });
    }
    Ok(())
}

fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<LossRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |e: csv::Error| Error::Parse {
        line: e.position().map_or(1, |p| p.line() as usize),
        message: e.to_string(),
    };

    let headers = rdr.headers().map_err(csv_err)?.clone();
    let mut sample_col = None;
    let mut loss_col = None;
    let mut group_col = None;
    let mut grad_col = None;
    for (i, name) in headers.iter().enumerate() {
        let slot = match name {
            "sample_id" => &mut sample_col,
            "loss" => &mut loss_col,
            "group_id" => &mut group_col,
            "grad_norm_sq" => &mut grad_col,
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unexpected column {other:?}"),
                })
            }
        };
        if slot.replace(i).is_some() {
            return Err(Error::Parse {
                line: 1,
                message: format!("duplicate column {name:?}"),
            });
        }
    }
    let (sample_col, loss_col) = match (sample_col, loss_col) {
        (Some(s), Some(l)) => (s, l),
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "header must contain sample_id and loss".into(),
            })
        }
    };

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |col: usize| row.get(col).unwrap_or("");
        let sample_id = field(sample_col).to_string();
        if sample_id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty sample_id".into(),
            });
        }
        let loss = parse_number(field(loss_col), "loss", line)?;
        check_loss(&sample_id, loss, line)?;
        let mut record = LossRecord::new(sample_id, loss);
        if let Some(col) = group_col {
            let g = field(col);
            if !g.is_empty() {
                record.group_id = Some(g.to_string());
            }
        }
        if let Some(col) = grad_col {
            let g = field(col);
            if !g.is_empty() {
                let value = parse_number(g, "grad_norm_sq", line)?;
                check_grad_norm(&record.sample_id, value, line)?;
                record.grad_norm_sq = Some(value);
            }
        }
        records.push(record);
    }
    Ok(records)
}

#[derive(Deserialize)]
struct JsonRecord {
    sample_id: String,
    loss: f64,
    #[serde(default)]
    group_id: Option<String>,
    #[serde(default)]
    grad_norm_sq: Option<f64>,
    #[serde(default)]
    grad_theta: Option<Vec<f64>>,
}

fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<LossRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        check_loss(&raw.sample_id, raw.loss, line_no)?;
        if let Some(g) = raw.grad_norm_sq {
            check_grad_norm(&raw.sample_id, g, line_no)?;
        }
        records.push(LossRecord {
            sample_id: raw.sample_id,
            loss: raw.loss,
            group_id: raw.group_id,
            grad_norm_sq: raw.grad_norm_sq,
            grad_theta: raw.grad_theta,
        });
    }
    Ok(records)
}

/// Writes a dataset in the same layout [`load_dataset`] reads.
///
/// CSV cannot hold `grad_theta`; datasets carrying it must use JSONL.
pub fn save_dataset(ds: &LossDataset, path: &Path, format: DataFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_dataset(ds, &mut out, format)?;
    out.flush()?;
    Ok(())
}

pub(crate) fn write_dataset<W: Write>(
    ds: &LossDataset,
    out: &mut W,
    format: DataFormat,
) -> Result<()> {
    match format {
        DataFormat::Jsonl => {
            for record in ds.records() {
                serde_json::to_writer(&mut *out, record)?;
                out.write_all(b"\n")?;
            }
        }
        DataFormat::Csv => {
            if ds.records().iter().any(|r| r.grad_theta.is_some()) {
                return Err(Error::InvalidArgument(
                    "grad_theta cannot be written as CSV; use jsonl".into(),
                ));
            }
            let has_group = ds.records().iter().any(|r| r.group_id.is_some());
            let has_grad = ds.records().iter().any(|r| r.grad_norm_sq.is_some());
            let mut header = vec!["sample_id", "loss"];
            if has_group {
                header.push("group_id");
            }
            if has_grad {
                header.push("grad_norm_sq");
            }
            let mut wtr = csv::Writer::from_writer(&mut *out);
            let to_io = |e: csv::Error| Error::Io(e.into());
            wtr.write_record(&header).map_err(to_io)?;
            for r in ds.records() {
                let mut row = vec![r.sample_id.clone(), crate::extended::render_f64(r.loss)];
                if has_group {
                    row.push(r.group_id.clone().unwrap_or_default());
                }
                if has_grad {
                    row.push(
                        r.grad_norm_sq
                            .map(crate::extended::render_f64)
                            .unwrap_or_default(),
                    );
                }
                wtr.write_record(&row).map_err(to_io)?;
            }
            wtr.flush()?;
        }
    }
    Ok(())
}

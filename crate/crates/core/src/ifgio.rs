//! Interferogram serialization: a line-oriented CSV dialect with `#`
//! key=value metadata before the header, and a JSON mirror of the in-memory
//! struct. Floats are written in shortest round-trip form, so write, read,
//! and write again is byte-identical and carries no timestamps.

use std::fs;
use std::path::Path as FsPath;

use thiserror::Error;

use crate::synth::{IfgMeta, Interferogram, ValueKind};

const HEADER: &str = "chi_rad,counts,sigma";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: expected header {HEADER:?}, found {found:?}")]
    BadHeader { line: usize, found: String },
    #[error("line {line}: {detail}")]
    BadLine { line: usize, detail: String },
    #[error("line {line}: chi values must increase strictly")]
    NotIncreasing { line: usize },
    #[error("file holds no data rows")]
    Empty,
    #[error("cannot infer format from {path:?}; use a .csv or .json extension")]
    UnknownExtension { path: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Renders the interferogram as CSV with metadata comments. The value
/// column is named `counts` for both kinds; the `kind` line says whether it
/// holds drawn counts or expected intensities.
pub fn to_csv(ifg: &Interferogram) -> String {
    let mut out = String::new();
    out.push_str(&format!("# scenario={}\n", ifg.meta.scenario));
    out.push_str(&format!("# sweep={}\n", ifg.meta.sweep));
    let kind = match ifg.meta.kind {
        ValueKind::Expected => "expected",
        ValueKind::Counts => "counts",
    };
    out.push_str(&format!("# kind={kind}\n"));
    if let Some(seed) = ifg.meta.seed {
        out.push_str(&format!("# seed={seed}\n"));
    }
    if !ifg.meta.config_hash.is_empty() {
        out.push_str(&format!("# config={}\n", ifg.meta.config_hash));
    }
    out.push_str(HEADER);
    out.push('\n');
    for ((chi, value), sigma) in ifg.chi.iter().zip(&ifg.value).zip(&ifg.sigma) {
        out.push_str(&format!("{chi},{value},{sigma}\n"));
    }
    out
}

fn parse_field(line: usize, name: &str, text: &str) -> Result<f64, DataError> {
    let v: f64 = text.trim().parse().map_err(|_| DataError::BadLine {
        line,
        detail: format!("cannot parse {name} from {text:?}"),
    })?;
    if !v.is_finite() {
        return Err(DataError::BadLine { line, detail: format!("{name} must be finite") });
    }
    Ok(v)
}

/// Parses the CSV dialect. Unknown metadata keys are ignored; a missing
/// `kind` defaults to counts, the measurement-file case.
pub fn from_csv(text: &str) -> Result<Interferogram, DataError> {
    let mut meta = IfgMeta {
        scenario: String::new(),
        sweep: String::new(),
        kind: ValueKind::Counts,
        seed: None,
        config_hash: String::new(),
    };
    let mut chi = Vec::new();
    let mut value = Vec::new();
    let mut sigma = Vec::new();
    let mut seen_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            if let Some((key, val)) = comment.split_once('=') {
                match key.trim() {
                    "scenario" => meta.scenario = val.trim().to_string(),
                    "sweep" => meta.sweep = val.trim().to_string(),
                    "kind" => {
                        meta.kind = match val.trim() {
                            "expected" => ValueKind::Expected,
                            "counts" => ValueKind::Counts,
                            other => {
                                return Err(DataError::BadLine {
                                    line,
                                    detail: format!("unknown kind {other:?}"),
                                })
                            }
                        }
                    }
                    "seed" => {
                        meta.seed = Some(val.trim().parse().map_err(|_| DataError::BadLine {
                            line,
                            detail: format!("cannot parse seed from {val:?}"),
                        })?)
                    }
                    "config" => meta.config_hash = val.trim().to_string(),
                    _ => {}
                }
            }
            continue;
        }
        if !seen_header {
            if trimmed != HEADER {
                return Err(DataError::BadHeader { line, found: trimmed.to_string() });
            }
            seen_header = true;
            continue;
        }
        let mut fields = trimmed.split(',');
        let (c, v, s) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(c), Some(v), Some(s), None) => (c, v, s),
            _ => {
                return Err(DataError::BadLine {
                    line,
                    detail: format!("expected 3 comma-separated fields, found {trimmed:?}"),
                })
            }
        };
        let c = parse_field(line, "chi_rad", c)?;
        if let Some(&last) = chi.last() {
            if c <= last {
                return Err(DataError::NotIncreasing { line });
            }
        }
        let v = parse_field(line, "counts", v)?;
        let s = parse_field(line, "sigma", s)?;
        if s <= 0.0 {
            return Err(DataError::BadLine { line, detail: format!("sigma {s} must be positive") });
        }
        chi.push(c);
        value.push(v);
        sigma.push(s);
    }
    if !seen_header {
        return Err(DataError::BadHeader { line: text.lines().count().max(1), found: String::new() });
    }
    if chi.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(Interferogram { chi, value, sigma, meta })
}

pub fn to_json(ifg: &Interferogram) -> String {
    let mut s = serde_json::to_string_pretty(ifg).expect("interferograms always serialize");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<Interferogram, DataError> {
    let ifg: Interferogram = serde_json::from_str(text)?;
    if ifg.chi.len() != ifg.value.len() || ifg.chi.len() != ifg.sigma.len() {
        return Err(DataError::BadLine {
            line: 0,
            detail: "chi, value, and sigma arrays must share one length".to_string(),
        });
    }
    if ifg.chi.is_empty() {
        return Err(DataError::Empty);
    }
    for k in 1..ifg.chi.len() {
        if ifg.chi[k] <= ifg.chi[k - 1] {
            return Err(DataError::NotIncreasing { line: k + 1 });
        }
    }
    Ok(ifg)
}

/// Writes in the format matching the path extension.
pub fn save(ifg: &Interferogram, path: &FsPath) -> Result<(), DataError> {
    let text = match extension_of(path)? {
        Format::Csv => to_csv(ifg),
        Format::Json => to_json(ifg),
    };
    fs::write(path, text)?;
    Ok(())
}

/// Reads in the format matching the path extension.
pub fn load(path: &FsPath) -> Result<Interferogram, DataError> {
    let text = fs::read_to_string(path)?;
    match extension_of(path)? {
        Format::Csv => from_csv(&text),
        Format::Json => from_json(&text),
    }
}

enum Format {
    Csv,
    Json,
}

fn extension_of(path: &FsPath) -> Result<Format, DataError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(Format::Csv),
        Some("json") => Ok(Format::Json),
        _ => Err(DataError::UnknownExtension { path: path.display().to_string() }),
    }
}

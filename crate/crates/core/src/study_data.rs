//! Dataset ingestion and the logit transform of 2×2 tables.
//!
//! Two CSV layouts are accepted:
//!
//! - diagnostic accuracy: `study_id,tp,fp,fn,tn`
//! - univariate effects: `study_id,y,se`
//!
//! Counts are held as `f64` so that continuity-corrected half counts fit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DTA_HEADER: [&str; 5] = ["study_id", "tp", "fp", "fn", "tn"];
pub const UNIVARIATE_HEADER: [&str; 3] = ["study_id", "y", "se"];

/// One study's 2×2 confusion table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticStudy {
    pub study_id: String,
    pub true_pos: f64,
    pub false_pos: f64,
    pub false_neg: f64,
    pub true_neg: f64,
}

impl DiagnosticStudy {
    pub fn new(id: impl Into<String>, tp: f64, fp: f64, fn_: f64, tn: f64) -> Self {
        DiagnosticStudy {
            study_id: id.into(),
            true_pos: tp,
            false_pos: fp,
            false_neg: fn_,
            true_neg: tn,
        }
    }

    pub fn cells(&self) -> [f64; 4] {
        [self.true_pos, self.false_pos, self.false_neg, self.true_neg]
    }

    pub fn has_zero_cell(&self) -> bool {
        self.cells().contains(&0.0)
    }

    /// Number of diseased subjects (tp + fn).
    pub fn diseased(&self) -> f64 {
        self.true_pos + self.false_neg
    }

    /// Number of non-diseased subjects (tn + fp).
    pub fn non_diseased(&self) -> f64 {
        self.true_neg + self.false_pos
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateObservation {
    pub study_id: String,
    pub y: f64,
    /// Within-study standard error.
    pub se: f64,
}

/// Logit sensitivity / specificity with their within-study variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateObservation {
    pub study_id: String,
    pub y1: f64,
    pub y2: f64,
    pub var1: f64,
    pub var2: f64,
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

/// Parses CSV text against a fixed header, returning raw string rows.
fn parse_rows(text: &str, header: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let head = match records.next() {
        Some(r) => r?,
        None => {
            return Err(Error::Schema {
                row: 0,
                column: header[0].into(),
                message: "missing header".into(),
            })
        }
    };
    for (idx, expected) in header.iter().enumerate() {
        match head.get(idx) {
            Some(got) if got.eq_ignore_ascii_case(expected) => {}
            Some(got) => {
                return Err(Error::Schema {
                    row: 0,
                    column: (*expected).into(),
                    message: format!("expected header `{expected}`, found `{got}`"),
                })
            }
            None => {
                return Err(Error::Schema {
                    row: 0,
                    column: (*expected).into(),
                    message: "missing column".into(),
                })
            }
        }
    }
    if head.len() > header.len() {
        return Err(Error::Schema {
            row: 0,
            column: head[header.len()].to_string(),
            message: "unexpected extra column".into(),
        });
    }

    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() < header.len() {
            return Err(Error::Schema {
                row,
                column: header[rec.len()].into(),
                message: "missing column".into(),
            });
        }
        if rec.len() > header.len() {
            return Err(Error::Schema {
                row,
                column: format!("#{}", header.len() + 1),
                message: "unexpected extra column".into(),
            });
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| Error::Schema {
        row,
        column: column.into(),
        message: format!("non-numeric value `{cell}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Schema {
            row,
            column: column.into(),
            message: format!("non-finite value `{cell}`"),
        });
    }
    Ok(v)
}

/// Parses diagnostic-accuracy CSV text (header `study_id,tp,fp,fn,tn`).
pub fn parse_dta_csv(text: &str) -> Result<Vec<DiagnosticStudy>> {
    parse_rows(text, &DTA_HEADER)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let row = i + 1;
            let mut counts = [0.0; 4];
            for (j, c) in counts.iter_mut().enumerate() {
                let col = DTA_HEADER[j + 1];
                *c = parse_number(&r[j + 1], row, col)?;
                if *c < 0.0 {
                    return Err(Error::Schema {
                        row,
                        column: col.into(),
                        message: format!("negative count `{}`", r[j + 1]),
                    });
                }
            }
            Ok(DiagnosticStudy::new(
                r[0].clone(),
                counts[0],
                counts[1],
                counts[2],
                counts[3],
            ))
        })
        .collect()
}

pub fn ingest_dta_csv(path: impl AsRef<Path>) -> Result<Vec<DiagnosticStudy>> {
    parse_dta_csv(&read_to_string(path.as_ref())?)
}

/// Parses univariate CSV text (header `study_id,y,se`); `se` must be > 0.
pub fn parse_univariate_csv(text: &str) -> Result<Vec<UnivariateObservation>> {
    parse_rows(text, &UNIVARIATE_HEADER)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let row = i + 1;
            let y = parse_number(&r[1], row, "y")?;
            let se = parse_number(&r[2], row, "se")?;
            if se <= 0.0 {
                return Err(Error::Schema {
                    row,
                    column: "se".into(),
                    message: format!("non-positive standard error `{}`", r[2]),
                });
            }
            Ok(UnivariateObservation {
                study_id: r[0].clone(),
                y,
                se,
            })
        })
        .collect()
}

pub fn ingest_univariate_csv(path: impl AsRef<Path>) -> Result<Vec<UnivariateObservation>> {
    parse_univariate_csv(&read_to_string(path.as_ref())?)
}

pub fn write_dta_csv<W: Write>(studies: &[DiagnosticStudy], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DTA_HEADER)?;
    for s in studies {
        w.write_record([
            s.study_id.clone(),
            s.true_pos.to_string(),
            s.false_pos.to_string(),
            s.false_neg.to_string(),
            s.true_neg.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_univariate_csv<W: Write>(obs: &[UnivariateObservation], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(UNIVARIATE_HEADER)?;
    for o in obs {
        w.write_record([o.study_id.clone(), o.y.to_string(), o.se.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Adds 0.5 to all four cells of every study that has a zero cell.
/// Studies without zeros are returned unchanged.
pub fn apply_continuity_correction(studies: &[DiagnosticStudy]) -> Vec<DiagnosticStudy> {
    studies
        .iter()
        .map(|s| {
            if s.has_zero_cell() {
                DiagnosticStudy::new(
                    s.study_id.clone(),
                    s.true_pos + 0.5,
                    s.false_pos + 0.5,
                    s.false_neg + 0.5,
                    s.true_neg + 0.5,
                )
            } else {
                s.clone()
            }
        })
        .collect()
}

/// Logit sensitivity and specificity with variances
/// `1/tp + 1/fn` and `1/fp + 1/tn`.
pub fn to_bivariate(study: &DiagnosticStudy) -> Result<BivariateObservation> {
    if study.cells().iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Precondition(format!(
            "study {} has a zero cell; apply the continuity correction first",
            study.study_id
        )));
    }
    let (tp, fp, fn_, tn) = (
        study.true_pos,
        study.false_pos,
        study.false_neg,
        study.true_neg,
    );
    Ok(BivariateObservation {
        study_id: study.study_id.clone(),
        y1: (tp / fn_).ln(),
        y2: (tn / fp).ln(),
        var1: 1.0 / tp + 1.0 / fn_,
        var2: 1.0 / fp + 1.0 / tn,
    })
}

/// Correction followed by [`to_bivariate`] for every study.
pub fn prepare_bivariate(studies: &[DiagnosticStudy]) -> Result<Vec<BivariateObservation>> {
    apply_continuity_correction(studies)
        .iter()
        .map(to_bivariate)
        .collect()
}

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{SubjectRecord, SurvivalDataset, TiePolicy, TieReport};
use crate::error::{Error, Result};

/// How a survival CSV maps onto a dataset.
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Covariate columns in model order; `None` takes every column other
    /// than `time`, `event` and the weight column, in file order.
    pub covariates: Option<Vec<String>>,
    pub weight_column: Option<String>,
    pub tie_policy: TiePolicy,
}

#[derive(Debug, Clone)]
pub struct ParsedDataset {
    pub data: SurvivalDataset,
    pub covariate_names: Vec<String>,
    pub ties: TieReport,
}

pub fn parse_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<ParsedDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, options)
}

/// Parses a survival table. Row numbers in errors are file line numbers.
pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<ParsedDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let time_col = find("time")?;
    let event_col = find("event")?;
    let weight_col = options.weight_column.as_deref().map(find).transpose()?;
    let covariate_names: Vec<String> = match &options.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != time_col && i != event_col && Some(i) != weight_col)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let covariate_cols = covariate_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut subjects = Vec::new();
    let mut max_code = 0;
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(subjects.len() + 2, |p| p.line() as usize);
        let cell = |col: usize| record.get(col).unwrap_or("");
        let number = |col: usize| -> Result<f64> {
            let raw = cell(col);
            raw.parse::<f64>().map_err(|_| Error::NonnumericCell {
                row,
                column: headers[col].clone(),
                value: raw.to_string(),
            })
        };

        let time = number(time_col)?;
        if !(time > 0.0 && time.is_finite()) {
            return Err(Error::NonpositiveTime { row, value: time });
        }
        let raw_event = cell(event_col);
        let event = parse_event_code(raw_event).ok_or_else(|| Error::UnknownEventCode {
            row,
            value: raw_event.to_string(),
        })?;
        max_code = max_code.max(event);
        let covariates = covariate_cols
            .iter()
            .map(|&c| {
                let v = number(c)?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonnumericCell {
                        row,
                        column: headers[c].clone(),
                        value: cell(c).to_string(),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let weight = match weight_col {
            Some(c) => {
                let w = number(c)?;
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::InvalidInput(format!("row {row}: weight must be positive, got {w}")));
                }
                w
            }
            None => 1.0,
        };
        subjects.push(SubjectRecord {
            time,
            event,
            covariates,
            weight,
        });
    }
    if subjects.is_empty() {
        return Err(Error::InvalidInput("no data rows".into()));
    }

    let mut data = SurvivalDataset::new(subjects, max_code.max(1), covariate_names.len())?;
    let ties = data.resolve_ties(options.tie_policy)?;
    Ok(ParsedDataset {
        data,
        covariate_names,
        ties,
    })
}

fn parse_event_code(raw: &str) -> Option<u32> {
    if let Ok(code) = raw.parse::<u32>() {
        return Some(code);
    }
    // Accept integral floats such as "1.0" written by spreadsheet tools.
    let v = raw.parse::<f64>().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as u32)
}

/// Writes `data` in the layout [`read_csv`] accepts. Values use the
/// shortest round-tripping decimal form, so re-parsing is exact.
pub fn write_csv<W: Write>(data: &SurvivalDataset, covariate_names: &[String], writer: W) -> Result<()> {
    if covariate_names.len() != data.covariate_dim() {
        return Err(Error::InvalidInput(format!(
            "{} covariate names for dimension {}",
            covariate_names.len(),
            data.covariate_dim()
        )));
    }
    let weighted = data.subjects().iter().any(|s| s.weight != 1.0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "event".to_string()];
    header.extend(covariate_names.iter().cloned());
    if weighted {
        header.push("weight".into());
    }
    w.write_record(&header)?;
    for s in data.subjects() {
        let mut row = vec![s.time.to_string(), s.event.to_string()];
        row.extend(s.covariates.iter().map(f64::to_string));
        if weighted {
            row.push(s.weight.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

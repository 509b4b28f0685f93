//! Two-column CSV ingestion. The first line is a header exactly when one of
//! its cells is not a number.

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use taustar::PairedSample;

use crate::error::{CliError, CliResult};

pub fn read_sample(path: &Path) -> CliResult<PairedSample> {
    let reader: Box<dyn Read> = if path.as_os_str() == "-" {
        Box::new(io::stdin())
    } else {
        Box::new(File::open(path).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?)
    };
    parse_sample(reader)
}

pub fn parse_sample<R: Read>(reader: R) -> CliResult<PairedSample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 2 {
            return Err(CliError::Data(format!("line {line}: expected 2 columns, found {}", record.len())));
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|c| c.parse::<f64>().ok()).collect();
        match (parsed[0], parsed[1]) {
            (Some(x), Some(y)) if x.is_finite() && y.is_finite() => {
                xs.push(x);
                ys.push(y);
            }
            (Some(_), Some(_)) => return Err(CliError::Data(format!("line {line}: non-finite value"))),
            _ if line == 1 => continue,
            _ => {
                return Err(CliError::Data(format!(
                    "line {line}: expected two numbers, found {:?}",
                    record.iter().collect::<Vec<_>>()
                )))
            }
        }
    }
    PairedSample::new(xs, ys).map_err(CliError::data)
}

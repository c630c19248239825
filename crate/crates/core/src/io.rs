//! CSV ingestion and numeric formatting shared by the command-line tools.

use std::io::Read;

use crate::error::{Error, Result};
use crate::model::{validate_dataset, Dataset, RawRecord};

/// A dataset read from CSV together with its covariate column names.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvDataset {
    pub dataset: Dataset,
    pub covariates: Vec<String>,
}

/// Read `time,status,<covariates...>` rows. `status` is the integer event code.
pub fn read_dataset_csv<R: Read>(input: R, declared_k: Option<u32>) -> Result<CsvDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 2 || names[0] != "time" || names[1] != "status" {
        return Err(Error::Parse(format!(
            "expected header `time,status,<covariates...>`, found `{}`",
            names.join(",")
        )));
    }
    let covariates: Vec<String> = names[2..].iter().map(|s| s.to_string()).collect();

    let mut raw = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |j: usize| row.get(j).unwrap_or("");
        let num = |j: usize| -> Result<f64> {
            field(j)
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {line}: column {}: not a number: {:?}", names[j], field(j))))
        };
        let y = num(0)?;
        let event = field(1)
            .parse::<i64>()
            .map_err(|_| Error::Parse(format!("line {line}: status must be an integer, got {:?}", field(1))))?;
        let z = (2..row.len()).map(num).collect::<Result<Vec<_>>>()?;
        raw.push(RawRecord { y, event, z });
    }
    let dataset = validate_dataset(raw, declared_k)?;
    Ok(CsvDataset { dataset, covariates })
}

/// Format with six significant digits in the style of C's `%g`.
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 6;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let m = trim_zeros(mantissa.to_string());
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

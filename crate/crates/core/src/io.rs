//! CSV formats for sample dumps and histograms.

use std::fmt::Write as _;

use thiserror::Error;

use crate::montecarlo::McSamples;
use crate::stats::Histogram;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("empty sample file")]
    Empty,
    #[error("unexpected header {0:?}")]
    Header(String),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

/// Samples read back from a dump; `mse` is empty when the column is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub snr: Vec<f64>,
    pub mse: Vec<f64>,
}

/// `rep,a,b,snr,mse` with 17 significant digits.
pub fn samples_csv(samples: &McSamples) -> String {
    let mut out = String::with_capacity(samples.len() * 100 + 32);
    out.push_str("rep,a,b,snr,mse\n");
    for i in 0..samples.len() {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            i, samples.a[i], samples.b[i], samples.snr[i], samples.mse[i]
        )
        .expect("writing to a String");
    }
    out
}

pub fn parse_samples_csv(text: &str) -> Result<SampleTable, CsvError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(CsvError::Empty)?;
    let with_mse = match header.trim() {
        "rep,a,b,snr" => false,
        "rep,a,b,snr,mse" => true,
        other => return Err(CsvError::Header(other.to_string())),
    };
    let width = if with_mse { 5 } else { 4 };
    let mut table = SampleTable {
        a: Vec::new(),
        b: Vec::new(),
        snr: Vec::new(),
        mse: Vec::new(),
    };
    for (idx, line) in lines {
        let row = |message: String| CsvError::Row {
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != width {
            return Err(row(format!(
                "expected {width} fields, found {}",
                fields.len()
            )));
        }
        let mut values = [0.0f64; 4];
        for (v, f) in values.iter_mut().zip(&fields[1..]) {
            *v = f.parse().map_err(|e| row(format!("{f:?}: {e}")))?;
            if !v.is_finite() {
                return Err(row(format!("non-finite value {f:?}")));
            }
        }
        table.a.push(values[0]);
        table.b.push(values[1]);
        table.snr.push(values[2]);
        if with_mse {
            table.mse.push(values[3]);
        }
    }
    if table.a.is_empty() {
        return Err(CsvError::Empty);
    }
    Ok(table)
}

/// `bin_left,bin_right,count,density,reference_pdf`; the reference density is
/// evaluated at each bin midpoint.
pub fn histogram_csv(h: &Histogram, reference_pdf: impl Fn(f64) -> f64) -> String {
    let mut out = String::from("bin_left,bin_right,count,density,reference_pdf\n");
    for (i, mid) in h.midpoints().enumerate() {
        writeln!(
            out,
            "{:.16e},{:.16e},{},{:.16e},{:.16e}",
            h.edges[i],
            h.edges[i + 1],
            h.counts[i],
            h.density[i],
            reference_pdf(mid)
        )
        .expect("writing to a String");
    }
    out
}

//! Signal-matrix files: CSV with header `family,tau_s,signal,stderr`, one row
//! per (family, τ) cell.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::config::OutputFormat;
use super::output::Table;
use crate::error::{GyroError, Result};
use crate::threeaxis::{FamilyId, SignalMatrix};

pub const SIGNAL_HEADER: [&str; 4] = ["family", "tau_s", "signal", "stderr"];

pub fn signal_table(m: &SignalMatrix) -> Table {
    let mut t = Table::new(&SIGNAL_HEADER);
    for (i, f) in m.families.iter().enumerate() {
        for (j, &tau) in m.taus.iter().enumerate() {
            t.push(vec![
                f.to_string().into(),
                tau.into(),
                m.signal[i][j].into(),
                m.stderr[i][j].into(),
            ]);
        }
    }
    t
}

pub fn write_signal_matrix<W: Write>(m: &SignalMatrix, out: W) -> Result<()> {
    signal_table(m).write(OutputFormat::Csv, out)
}

fn schema(line: u64, message: impl Into<String>) -> GyroError {
    GyroError::Schema {
        line: line as usize,
        message: message.into(),
    }
}

/// Parses a signal-matrix file. Every family must list the same τ values.
pub fn read_signal_matrix<R: Read>(input: R) -> Result<SignalMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers().map_err(|e| schema(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != SIGNAL_HEADER {
        return Err(schema(1, format!("expected header '{}'", SIGNAL_HEADER.join(","))));
    }
    let mut families: Vec<FamilyId> = Vec::new();
    let mut taus: Vec<f64> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    let mut last_line = 1;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(last_line + 1, |p| p.line());
            schema(line, e.to_string())
        })?;
        let line = rec.position().map_or(last_line + 1, |p| p.line());
        last_line = line;
        let family: FamilyId = rec[0]
            .parse()
            .map_err(|e: String| schema(line, format!("column 'family': {e}")))?;
        let num = |col: usize| -> Result<f64> {
            let v: f64 = rec[col].parse().map_err(|_| {
                schema(
                    line,
                    format!("column '{}': '{}' is not a number", SIGNAL_HEADER[col], &rec[col]),
                )
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(schema(
                    line,
                    format!("column '{}': value must be finite", SIGNAL_HEADER[col]),
                ))
            }
        };
        let (tau, signal, stderr) = (num(1)?, num(2)?, num(3)?);
        if tau < 0.0 {
            return Err(schema(line, "column 'tau_s': must be >= 0"));
        }
        if stderr < 0.0 {
            return Err(schema(line, "column 'stderr': must be >= 0"));
        }
        let fi = families.iter().position(|&f| f == family).unwrap_or_else(|| {
            families.push(family);
            families.len() - 1
        });
        let ti = taus.iter().position(|&t| t == tau).unwrap_or_else(|| {
            taus.push(tau);
            taus.len() - 1
        });
        if cells.insert((fi, ti), (signal, stderr)).is_some() {
            return Err(schema(line, format!("duplicate entry for {family} at tau_s = {tau}")));
        }
    }
    if families.is_empty() {
        return Err(schema(1, "no data rows"));
    }
    let mut signal = vec![Vec::with_capacity(taus.len()); families.len()];
    let mut stderr = vec![Vec::with_capacity(taus.len()); families.len()];
    for (fi, f) in families.iter().enumerate() {
        for (ti, tau) in taus.iter().enumerate() {
            let &(s, e) = cells
                .get(&(fi, ti))
                .ok_or_else(|| schema(last_line, format!("family {f} has no row for tau_s = {tau}")))?;
            signal[fi].push(s);
            stderr[fi].push(e);
        }
    }
    Ok(SignalMatrix {
        families,
        taus,
        signal,
        stderr,
    })
}

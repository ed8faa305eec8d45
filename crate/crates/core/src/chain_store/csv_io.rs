use super::ChainSet;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

/// Column layout of a draws file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CsvLayout {
    /// One file holding every chain, identified by an integer column.
    /// An `iteration` column, if present, is skipped; row order is
    /// iteration order.
    Long { chain_column: String },
    /// One file per chain; every column except `iteration` is a parameter.
    PerChain,
}

impl Default for CsvLayout {
    fn default() -> Self {
        CsvLayout::Long {
            chain_column: "chain".into(),
        }
    }
}

const ITERATION_COLUMN: &str = "iteration";

/// Reads a long-format draws file.
pub fn load_csv(path: impl AsRef<Path>, layout: &CsvLayout) -> Result<ChainSet> {
    let path = path.as_ref();
    match layout {
        CsvLayout::Long { chain_column } => {
            let file = std::fs::File::open(path)?;
            read_long(file, chain_column).map(|cs| cs.with_meta(path.display().to_string()))
        }
        CsvLayout::PerChain => load_csv_files(&[path]),
    }
}

/// Reads one file per chain; chains are numbered in argument order.
pub fn load_csv_files<P: AsRef<Path>>(paths: &[P]) -> Result<ChainSet> {
    let mut chains = Vec::with_capacity(paths.len());
    let mut names: Option<Vec<String>> = None;
    for path in paths {
        let (header, rows) = read_table(std::fs::File::open(path.as_ref())?, None)?;
        let params: Vec<usize> = (0..header.len())
            .filter(|&j| header[j] != ITERATION_COLUMN)
            .collect();
        let these: Vec<String> = params.iter().map(|&j| header[j].clone()).collect();
        match &names {
            Some(n) if *n != these => {
                return Err(Error::InvalidChains(format!(
                    "{} has columns {these:?}, expected {n:?}",
                    path.as_ref().display()
                )))
            }
            Some(_) => {}
            None => names = Some(these),
        }
        chains.push(
            rows.into_iter()
                .map(|(_, row)| params.iter().map(|&j| row[j]).collect())
                .collect::<Vec<Vec<f64>>>(),
        );
    }
    check_ragged(&chains.iter().map(Vec::len).enumerate().map(|(c, n)| (c as i64 + 1, n)).collect::<Vec<_>>())?;
    let meta = paths
        .iter()
        .map(|p| p.as_ref().display().to_string())
        .collect::<Vec<_>>()
        .join(",");
    ChainSet::new(chains, names).map(|cs| cs.with_meta(meta))
}

/// Parses a long-format table from any reader.
pub(crate) fn read_long<R: Read>(reader: R, chain_column: &str) -> Result<ChainSet> {
    let (header, rows) = read_table(reader, Some(chain_column))?;
    let chain_idx = header
        .iter()
        .position(|h| h == chain_column)
        .ok_or_else(|| Error::InvalidChains(format!("missing chain column {chain_column:?}")))?;
    let params: Vec<usize> = (0..header.len())
        .filter(|&j| j != chain_idx && header[j] != ITERATION_COLUMN)
        .collect();
    if params.is_empty() {
        return Err(Error::InvalidChains("no parameter columns".into()));
    }
    let mut by_chain: BTreeMap<i64, Vec<Vec<f64>>> = BTreeMap::new();
    for (line, row) in rows {
        let id = row[chain_idx];
        if id.fract() != 0.0 {
            return Err(Error::NonNumeric {
                row: line,
                column: chain_column.to_string(),
                value: id.to_string(),
            });
        }
        by_chain
            .entry(id as i64)
            .or_default()
            .push(params.iter().map(|&j| row[j]).collect());
    }
    if by_chain.len() < 2 {
        return Err(Error::InvalidChains(format!(
            "need at least 2 chains, found {}",
            by_chain.len()
        )));
    }
    check_ragged(&by_chain.iter().map(|(&id, v)| (id, v.len())).collect::<Vec<_>>())?;
    let names = params.iter().map(|&j| header[j].clone()).collect();
    ChainSet::new(by_chain.into_values().collect(), Some(names))
}

fn check_ragged(lengths: &[(i64, usize)]) -> Result<()> {
    // the most common length is taken as the expected one
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &(_, n) in lengths {
        *counts.entry(n).or_default() += 1;
    }
    let expected = counts
        .iter()
        .max_by_key(|&(&n, &c)| (c, n))
        .map_or(0, |(&n, _)| n);
    match lengths.iter().find(|&&(_, n)| n != expected) {
        Some(&(chain, found)) => Err(Error::RaggedChains {
            chain,
            expected,
            found,
        }),
        None => Ok(()),
    }
}

type Rows = Vec<(usize, Vec<f64>)>;

/// Header plus numeric rows tagged with their 1-based file line.
fn read_table<R: Read>(reader: R, _chain_column: Option<&str>) -> Result<(Vec<String>, Rows)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let mut values = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let column = header.get(j).cloned().unwrap_or_default();
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row: line,
                column: column.clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: line, column });
            }
            values.push(v);
        }
        rows.push((line, values));
    }
    Ok((header, rows))
}

/// Writes `cs` in long format: `chain,iteration,<params…>`, 1-based ids.
///
/// Values use the shortest representation that parses back to the same
/// `f64`, so a write/read cycle is bit-exact.
pub fn write_csv<W: Write>(cs: &ChainSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["chain".to_string(), ITERATION_COLUMN.to_string()];
    header.extend(cs.param_names().iter().cloned());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for c in 0..cs.n_chains() {
        for s in 0..cs.n_iter() {
            record.clear();
            record.push((c + 1).to_string());
            record.push((s + 1).to_string());
            record.extend(cs.draw(c, s).iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

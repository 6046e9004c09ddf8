//! Delimited text in and out.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CountMatrix;

/// Layout of a count file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// One sample per row, one variable per column.
    #[default]
    SamplesAsRows,
    VariablesAsRows,
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "samples_as_rows" | "samples" => Ok(Orientation::SamplesAsRows),
            "variables_as_rows" | "variables" => Ok(Orientation::VariablesAsRows),
            other => Err(Error::Config(format!("unknown orientation `{other}`"))),
        }
    }
}

/// Tab if the header line has one, comma otherwise.
pub fn detect_delimiter(text: &str) -> u8 {
    match text.lines().next() {
        Some(line) if line.contains('\t') => b'\t',
        _ => b',',
    }
}

struct Table {
    header: Vec<String>,
    row_names: Vec<String>,
    cells: Vec<Vec<String>>,
    /// 1-based file line of each data row.
    lines: Vec<u64>,
}

fn read_table(text: &str, source: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(text))
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let parse_err = |line: u64, message: String| Error::Parse {
        location: format!("{source}:{line}"),
        message,
    };
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "empty file".into())),
    };
    let header: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if header.len() < 2 {
        return Err(parse_err(1, "header needs a label column and at least one name".into()));
    }
    check_unique(&header[1..], "column").map_err(|m| parse_err(1, m))?;
    let mut table = Table {
        header: header[1..].to_vec(),
        row_names: Vec::new(),
        cells: Vec::new(),
        lines: Vec::new(),
    };
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                format!("row has {} fields, header has {}", rec.len(), header.len()),
            ));
        }
        table.row_names.push(rec[0].trim().to_string());
        table.cells.push(rec.iter().skip(1).map(|c| c.trim().to_string()).collect());
        table.lines.push(line);
    }
    check_unique(&table.row_names, "row").map_err(|m| parse_err(0, m))?;
    Ok(table)
}

fn check_unique(names: &[String], what: &str) -> std::result::Result<(), String> {
    let mut seen = HashSet::new();
    for name in names {
        if name.is_empty() {
            return Err(format!("empty {what} name"));
        }
        if !seen.insert(name) {
            return Err(format!("duplicate {what} name `{name}`"));
        }
    }
    Ok(())
}

fn parse_count(cell: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = cell.parse::<u64>() {
        return Ok(v);
    }
    match cell.parse::<f64>() {
        Ok(v) if v < 0.0 => Err(format!("negative count `{cell}`")),
        Ok(v) if v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        Ok(_) => Err(format!("non-integer count `{cell}`")),
        Err(_) => Err(format!("not a count: `{cell}`")),
    }
}

/// Parse a delimited count table. `source` names the input in error messages.
pub fn parse_counts(text: &str, orientation: Orientation, source: &str) -> Result<CountMatrix> {
    let t = read_table(text, source)?;
    let (rows, cols) = (t.row_names.len(), t.header.len());
    let mut values = DMatrix::<u64>::zeros(rows, cols);
    for (r, row) in t.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            values[(r, c)] = parse_count(cell).map_err(|message| Error::Parse {
                location: format!(
                    "{source}:{} (row `{}`, column `{}`)",
                    t.lines[r], t.row_names[r], t.header[c]
                ),
                message,
            })?;
        }
    }
    match orientation {
        Orientation::SamplesAsRows => CountMatrix::new(values, t.header, t.row_names),
        Orientation::VariablesAsRows => CountMatrix::new(values.transpose(), t.row_names, t.header),
    }
}

pub fn ingest(path: &Path, orientation: Orientation) -> Result<CountMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_counts(&text, orientation, &path.display().to_string())
}

/// Samples-as-rows CSV that [`ingest`] reads back unchanged.
pub fn write_counts<W: Write>(data: &CountMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InvalidInput(format!("writing counts: {e}"));
    let mut header = vec!["sample".to_string()];
    header.extend(data.variable_names().iter().cloned());
    w.write_record(&header).map_err(err)?;
    for (j, id) in data.sample_ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend((0..data.n_variables()).map(|i| data.get(j, i).to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("writing counts: {e}")))?;
    Ok(())
}

/// A real-valued samples x variables table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub row_ids: Vec<String>,
    pub col_names: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn parse_real_matrix(text: &str, source: &str) -> Result<LabeledMatrix> {
    let t = read_table(text, source)?;
    let mut values = DMatrix::<f64>::zeros(t.row_names.len(), t.header.len());
    for (r, row) in t.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            values[(r, c)] = cell.parse().map_err(|_| Error::Parse {
                location: format!("{source}:{} column `{}`", t.lines[r], t.header[c]),
                message: format!("not a number: `{cell}`"),
            })?;
        }
    }
    Ok(LabeledMatrix {
        row_ids: t.row_names,
        col_names: t.header,
        values,
    })
}

pub fn read_real_matrix(path: &Path) -> Result<LabeledMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_real_matrix(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_file_with_header() {
        let m = parse_counts("id,a,b\ns1,1,2\ns2,3,4\n", Orientation::SamplesAsRows, "t").unwrap();
        assert_eq!(m.variable_names(), ["a", "b"]);
        assert_eq!(m.sample_ids(), ["s1", "s2"]);
        assert_eq!(m.get(1, 0), 3);
    }

    #[test]
    fn tabs_and_transposed_layout() {
        let m = parse_counts("gene\tx\ty\tz\ng1\t1\t2\t3\ng2\t4\t5\t6\n", Orientation::VariablesAsRows, "t").unwrap();
        assert_eq!(m.variable_names(), ["g1", "g2"]);
        assert_eq!(m.n_samples(), 3);
        assert_eq!(m.get(2, 1), 6);
    }

    #[test]
    fn bad_cells_are_located() {
        let e = parse_counts("id,a,b\ns1,1,2\ns2,-3,4\n", Orientation::SamplesAsRows, "t").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("t:3") && msg.contains("`s2`") && msg.contains("`a`") && msg.contains("negative"), "{msg}");
        let e = parse_counts("id,a,b\ns1,1,2.5\ns2,3,4\n", Orientation::SamplesAsRows, "t").unwrap_err();
        assert!(e.to_string().contains("non-integer"));
        assert_eq!(e.exit_code(), 2);
        assert_eq!(parse_counts("id,a\ns1,7.0\ns2,1\n", Orientation::SamplesAsRows, "t").unwrap().get(0, 0), 7);
    }

    #[test]
    fn structural_errors() {
        assert!(parse_counts("id,a,b\ns1,1\ns2,3,4\n", Orientation::SamplesAsRows, "t").unwrap_err().to_string().contains("fields"));
        assert!(parse_counts("id,a,a\ns1,1,1\ns2,3,4\n", Orientation::SamplesAsRows, "t").unwrap_err().to_string().contains("duplicate"));
        assert!(parse_counts("id,a\ns1,1\ns1,3\n", Orientation::SamplesAsRows, "t").unwrap_err().to_string().contains("duplicate"));
        assert!(parse_counts("", Orientation::SamplesAsRows, "t").is_err());
    }

    #[test]
    fn write_then_read_is_identity() {
        let m = CountMatrix::from_values(DMatrix::from_row_slice(3, 2, &[0, 1_000_000, 5, 7, 9, 0])).unwrap();
        let mut buf = Vec::new();
        write_counts(&m, &mut buf).unwrap();
        let back = parse_counts(std::str::from_utf8(&buf).unwrap(), Orientation::SamplesAsRows, "t").unwrap();
        assert_eq!(back, m);
    }
}

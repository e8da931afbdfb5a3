//! Comma-separated numeric tables with an optional header row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Last,
}

/// Loads a rectangular numeric CSV. A first row containing any non-numeric
/// cell is taken as a header. Labels must be non-negative integers; the class
/// count is `max label + 1`.
pub fn load_csv(path: impl AsRef<Path>, label_column: LabelColumn) -> Result<Dataset> {
    let mut text = String::new();
    File::open(path.as_ref())?.read_to_string(&mut text)?;
    parse_csv(
        &text,
        label_column,
        &format!("csv:{}", path.as_ref().display()),
    )
}

pub(crate) fn parse_csv(
    text: &str,
    label_column: LabelColumn,
    provenance: &str,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows.push(rec);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("csv has no rows".into()));
    }
    let header = rows[0].iter().any(|c| c.parse::<f64>().is_err());
    let body = if header { &rows[1..] } else { &rows[..] };
    if body.is_empty() {
        return Err(Error::EmptyInput("csv has a header but no data".into()));
    }
    let width = rows[0].len();
    if width < 2 {
        return Err(Error::Format(
            "csv needs at least one feature and a label".into(),
        ));
    }
    let label_idx = match label_column {
        LabelColumn::Index(i) if i < width => i,
        LabelColumn::Index(i) => {
            return Err(Error::Format(format!(
                "label column {i} out of {width} columns"
            )))
        }
        LabelColumn::Last => width - 1,
    };
    let first_line = usize::from(header) + 1;
    let mut values = Vec::with_capacity(body.len() * (width - 1));
    let mut labels = Vec::with_capacity(body.len());
    for (r, rec) in body.iter().enumerate() {
        let line = r + first_line;
        if rec.len() != width {
            return Err(Error::RaggedRow {
                row: line,
                expected: width,
                found: rec.len(),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row: line,
                column: c,
                value: cell.to_string(),
            })?;
            if c == label_idx {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::NonNumeric {
                        row: line,
                        column: c,
                        value: cell.to_string(),
                    });
                }
                labels.push(v as usize);
            } else {
                values.push(v);
            }
        }
    }
    let class_count = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(width - 1, values, labels, class_count.max(2), provenance)
}

/// Writes features then the label as the last column, with a header.
pub fn write_csv(ds: &Dataset, mut out: impl Write) -> Result<()> {
    let mut header: Vec<String> = (0..ds.dim()).map(|i| format!("x{i}")).collect();
    header.push("label".to_string());
    writeln!(out, "{}", header.join(","))?;
    for (x, y) in ds.iter() {
        let mut cells: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
        cells.push(y.to_string());
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_skipped() {
        let ds = parse_csv("a,b,label\n1,2,0\n3,4,1\n", LabelColumn::Last, "t").unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.class_count()), (2, 2, 2));
        assert_eq!(ds.sample(1), &[3.0, 4.0]);
    }

    #[test]
    fn label_column_in_the_middle() {
        let ds = parse_csv("1,0,2\n3,1,4\n", LabelColumn::Index(1), "t").unwrap();
        assert_eq!(ds.sample(0), &[1.0, 2.0]);
        assert_eq!(ds.labels(), &[0, 1]);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            parse_csv("", LabelColumn::Last, "t"),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            parse_csv("\n\n", LabelColumn::Last, "t"),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn ragged_row() {
        let err = parse_csv("1,2,3,0\n1,2,0\n", LabelColumn::Last, "t").unwrap_err();
        assert!(matches!(
            err,
            Error::RaggedRow {
                row: 2,
                expected: 4,
                found: 3
            }
        ));
    }

    #[test]
    fn non_numeric_cell() {
        let err = parse_csv("1,2,0\n1,x,1\n", LabelColumn::Last, "t").unwrap_err();
        assert!(matches!(
            err,
            Error::NonNumeric {
                row: 2,
                column: 1,
                ..
            }
        ));
    }

    #[test]
    fn write_then_read() {
        let ds = Dataset::new(2, vec![0.5, -1.25, 3.0, 4.0], vec![1, 0], 2, "w").unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = parse_csv(std::str::from_utf8(&buf).unwrap(), LabelColumn::Last, "w").unwrap();
        assert_eq!(back.values(), ds.values());
        assert_eq!(back.labels(), ds.labels());
    }
}

//! Line-delimited numeric record format shared by codebooks, key memories and
//! memory matrices.
//!
//! ```text
//! # dim 3
//! The grass is green.<TAB>0.1 -0.25 0.9682458365518543
//! ```
//!
//! Each record is a label, one tab, then the vector entries separated by single
//! spaces. Entries are written with Rust's shortest round-trip float formatting,
//! so reading a file back reproduces every vector bit for bit. Labels must not
//! contain tabs or newlines.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub fn write_records<'a, W, I>(out: &mut W, dim: usize, records: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    writeln!(out, "# dim {dim}")?;
    for (label, values) in records {
        if label.contains(['\t', '\n', '\r']) {
            return Err(Error::input(format!("label {label:?} contains a tab or newline")));
        }
        if values.len() != dim {
            return Err(Error::input(format!(
                "record {label:?} has {} entries, expected {dim}",
                values.len()
            )));
        }
        out.write_all(label.as_bytes())?;
        out.write_all(b"\t")?;
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                out.write_all(b" ")?;
            }
            write!(out, "{v}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub type Record = (String, Vec<f64>);

/// Parses a record file, returning the declared dimension and the records in file order.
pub fn read_records<R: BufRead>(input: R) -> Result<(usize, Vec<Record>)> {
    let mut lines = input.lines().enumerate();
    let dim = match lines.next() {
        Some((_, header)) => {
            let header = header?;
            header
                .strip_prefix("# dim ")
                .and_then(|d| d.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    reason: format!("expected `# dim <n>` header, found {header:?}"),
                })?
        }
        None => return Err(Error::Parse { line: 1, reason: "empty file".into() }),
    };

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let (label, rest) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: lineno,
            reason: "missing tab separator".into(),
        })?;
        let values = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(' ')
                .map(|tok| {
                    tok.parse::<f64>().map_err(|e| Error::Parse {
                        line: lineno,
                        reason: format!("bad number {tok:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        if values.len() != dim {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("{} entries, expected {dim}", values.len()),
            });
        }
        records.push((label.to_string(), values));
    }
    Ok((dim, records))
}

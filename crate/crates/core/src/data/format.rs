//! Line-oriented dataset format.
//!
//! ```text
//! >id
//! RESIDUES
//! #pssm
//! <T lines of 20 whitespace-separated floats>
//! #label dssp
//! HHHEEL...
//! ```
//!
//! Records are separated by blank lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{SequenceRecord, PSSM_WIDTH};

struct Lines<'a> {
    inner: Box<dyn Iterator<Item = std::io::Result<String>> + 'a>,
    peeked: Option<String>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Option<String>> {
        if let Some(l) = self.peeked.take() {
            self.line_no += 1;
            return Ok(Some(l));
        }
        match self.inner.next() {
            None => Ok(None),
            Some(Ok(l)) => {
                self.line_no += 1;
                Ok(Some(l.trim_end_matches('\r').to_string()))
            }
            Some(Err(e)) => Err(Error::Data(format!(
                "line {}: read failed: {e}",
                self.line_no + 1
            ))),
        }
    }

    fn peek(&mut self) -> Result<Option<&str>> {
        if self.peeked.is_none() {
            match self.inner.next() {
                None => return Ok(None),
                Some(Ok(l)) => self.peeked = Some(l.trim_end_matches('\r').to_string()),
                Some(Err(e)) => {
                    return Err(Error::Data(format!(
                        "line {}: read failed: {e}",
                        self.line_no + 1
                    )))
                }
            }
        }
        Ok(self.peeked.as_deref())
    }

    fn expect(&mut self, what: &str, id: &str) -> Result<String> {
        self.next()?.ok_or_else(|| {
            Error::Data(format!(
                "line {}: record {id}: unexpected end of input, expected {what}",
                self.line_no + 1
            ))
        })
    }

    fn err(&self, id: &str, msg: impl std::fmt::Display) -> Error {
        Error::Data(format!("line {}: record {id}: {msg}", self.line_no))
    }
}

/// Parses every record in the stream.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Vec<SequenceRecord>> {
    let mut lines = Lines {
        inner: Box::new(reader.lines()),
        peeked: None,
        line_no: 0,
    };
    let mut records = Vec::new();
    loop {
        let Some(header) = lines.next()? else { break };
        if header.trim().is_empty() {
            continue;
        }
        let id = header
            .strip_prefix('>')
            .ok_or_else(|| {
                Error::Data(format!(
                    "line {}: expected '>' record header, found '{}'",
                    lines.line_no,
                    truncate(&header)
                ))
            })?
            .trim()
            .to_string();
        if id.is_empty() {
            return Err(Error::Data(format!("line {}: empty record id", lines.line_no)));
        }
        let residues = lines.expect("residue line", &id)?.trim().to_string();
        let tag = lines.expect("#pssm", &id)?;
        if tag.trim() != "#pssm" {
            return Err(lines.err(&id, format!("expected '#pssm', found '{}'", truncate(&tag))));
        }
        let len = residues.chars().count();
        let mut values = Vec::with_capacity(len * PSSM_WIDTH);
        for row in 0..len {
            let line = lines.expect("PSSM row", &id)?;
            if line.starts_with('#') || line.trim().is_empty() {
                return Err(lines.err(
                    &id,
                    format!("{len} residues but only {row} PSSM rows"),
                ));
            }
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| lines.err(&id, format!("non-numeric PSSM entry '{tok}'")))?;
                values.push(v);
            }
            if values.len() - before != PSSM_WIDTH {
                return Err(lines.err(
                    &id,
                    format!(
                        "PSSM row {} has {} entries, expected {PSSM_WIDTH}",
                        row + 1,
                        values.len() - before
                    ),
                ));
            }
        }
        let mut labels = BTreeMap::new();
        loop {
            match lines.peek()? {
                None => break,
                Some(l) if l.trim().is_empty() || l.starts_with('>') => break,
                Some(_) => {}
            }
            let line = lines.next()?.expect("peeked");
            let Some(task) = line.strip_prefix("#label") else {
                if !line.starts_with('#') && len > 0 {
                    return Err(lines.err(
                        &id,
                        format!("more PSSM rows than the {len} residues"),
                    ));
                }
                return Err(lines.err(&id, format!("unexpected line '{}'", truncate(&line))));
            };
            let task = task.trim().to_string();
            let label = lines.expect("label string", &id)?.trim().to_string();
            if labels.insert(task.clone(), label).is_some() {
                return Err(lines.err(&id, format!("duplicate labels for task {task}")));
            }
        }
        let pssm = if len == 0 {
            return Err(lines.err(&id, "empty residue string"));
        } else {
            Tensor::from_vec(&[len, PSSM_WIDTH], values)?
        };
        let rec = SequenceRecord::new(id.clone(), &residues, pssm, labels)
            .map_err(|e| lines.err(&id, e))?;
        records.push(rec);
    }
    Ok(records)
}

fn truncate(s: &str) -> String {
    s.chars().take(40).collect()
}

pub fn read_dataset(path: &Path) -> Result<Vec<SequenceRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display(), e))?;
    parse_dataset(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Serialises records; floats are written with 17 significant digits.
pub fn write_dataset<W: Write>(mut out: W, records: &[SequenceRecord]) -> std::io::Result<()> {
    let mut buf = String::new();
    for (n, r) in records.iter().enumerate() {
        buf.clear();
        if n > 0 {
            buf.push('\n');
        }
        let _ = writeln!(buf, ">{}", r.id);
        let _ = writeln!(buf, "{}", r.residues);
        buf.push_str("#pssm\n");
        for row in r.pssm.data().chunks_exact(PSSM_WIDTH) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    buf.push(' ');
                }
                let _ = write!(buf, "{v:.16e}");
            }
            buf.push('\n');
        }
        for (task, label) in &r.labels {
            let _ = writeln!(buf, "#label {task}");
            let _ = writeln!(buf, "{label}");
        }
        out.write_all(buf.as_bytes())?;
    }
    out.flush()
}

pub fn write_dataset_file(path: &Path, records: &[SequenceRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
    write_dataset(std::io::BufWriter::new(file), records).map_err(|e| Error::io(path.display(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_rows(n: usize) -> String {
        let row = vec!["0"; PSSM_WIDTH].join(" ");
        (0..n).map(|_| format!("{row}\n")).collect()
    }

    #[test]
    fn minimal_record() {
        let text = format!(">t1\nACD\n#pssm\n{}#label dssp\nHHH\n", zero_rows(3));
        let recs = parse_dataset(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].id, "t1");
        assert_eq!(recs[0].seq_len(), 3);
        assert_eq!(recs[0].label("dssp"), Some("HHH"));
    }

    #[test]
    fn short_pssm_names_record() {
        let text = format!(">prot7\nACD\n#pssm\n{}#label dssp\nHHH\n", zero_rows(2));
        let err = parse_dataset(text.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Data(_)));
        assert!(msg.contains("prot7") && msg.contains("line 6"), "{msg}");
    }

    #[test]
    fn located_errors() {
        let bad_num = format!(">a\nA\n#pssm\n{} x\n", vec!["1"; 19].join(" "));
        let e = parse_dataset(bad_num.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("line 4") && e.contains("non-numeric"), "{e}");
        let bad_task = format!(">a\nA\n#pssm\n{}#label foo\nH\n", zero_rows(1));
        let e = parse_dataset(bad_task.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("unknown task"), "{e}");
        let bad_len = format!(">a\nAC\n#pssm\n{}#label ssp\nH\n", zero_rows(2));
        assert!(parse_dataset(bad_len.as_bytes()).is_err());
    }

    #[test]
    fn two_records_round_trip() {
        let text = format!(
            ">a\nAC\n#pssm\n{}#label ssp\nH.\n\n>b\nW\n#pssm\n{}",
            zero_rows(2),
            zero_rows(1)
        );
        let recs = parse_dataset(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        let mut out = Vec::new();
        write_dataset(&mut out, &recs).unwrap();
        assert_eq!(parse_dataset(out.as_slice()).unwrap(), recs);
    }
}

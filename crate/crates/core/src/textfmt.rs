//! Line-oriented text helpers shared by the model and checkpoint formats.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub(crate) fn write_labeled<W: Write, T: fmt::Display>(
    out: &mut W,
    label: &str,
    values: impl Iterator<Item = T>,
) -> Result<()> {
    write!(out, "{label}")?;
    for v in values {
        write!(out, " {v}")?;
    }
    writeln!(out)?;
    Ok(())
}

pub(crate) fn write_matrix<W: Write>(out: &mut W, label: &str, m: &DMatrix<f64>) -> Result<()> {
    writeln!(out, "{label} {} {}", m.nrows(), m.ncols())?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub(crate) struct LineReader<R> {
    inner: std::io::Lines<R>,
    pub(crate) lineno: usize,
}

impl<R: BufRead> LineReader<R> {
    pub(crate) fn new(reader: R) -> Self {
        LineReader {
            inner: reader.lines(),
            lineno: 0,
        }
    }

    pub(crate) fn next_line(&mut self) -> Result<String> {
        self.lineno += 1;
        match self.inner.next() {
            Some(line) => Ok(line?),
            None => Err(Error::parse(self.lineno, "unexpected end of file")),
        }
    }

    pub(crate) fn labeled<T: FromStr>(&mut self, label: &str) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let line = self.next_line()?;
        let mut fields = line.split_whitespace();
        if fields.next() != Some(label) {
            return Err(Error::parse(self.lineno, format!("expected {label:?}")));
        }
        fields
            .map(|f| {
                f.parse::<T>()
                    .map_err(|e| Error::parse(self.lineno, e.to_string()))
            })
            .collect()
    }

    pub(crate) fn scalar(&mut self, label: &str) -> Result<f64> {
        let v: Vec<f64> = self.labeled(label)?;
        match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(Error::parse(
                self.lineno,
                format!("{label} needs one value"),
            )),
        }
    }

    pub(crate) fn vector(&mut self, label: &str, len: usize) -> Result<Vec<f64>> {
        let v: Vec<f64> = self.labeled(label)?;
        if v.len() != len {
            return Err(Error::parse(
                self.lineno,
                format!("{label} has {} values, expected {len}", v.len()),
            ));
        }
        Ok(v)
    }

    pub(crate) fn matrix(&mut self, label: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let dims: Vec<usize> = self.labeled(label)?;
        if dims != [rows, cols] {
            return Err(Error::parse(
                self.lineno,
                format!("{label} should be {rows}x{cols}, header says {dims:?}"),
            ));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.next_line()?;
            let row = line
                .split_whitespace()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::parse(self.lineno, e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != cols {
                return Err(Error::parse(
                    self.lineno,
                    format!("row has {} values, expected {cols}", row.len()),
                ));
            }
            values.extend(row);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    }
}

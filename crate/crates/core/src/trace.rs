//! Row-major storage for the iterates `w_0 … w_n` of one run.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;

use crate::error::{GeoAvgError, Result};
use crate::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct Iterates {
    dim: usize,
    data: Vec<f64>,
}

impl Iterates {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, count: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * count),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(GeoAvgError::EmptyTrace)?;
        let mut out = Self::with_capacity(first.as_ref().len(), rows.len());
        for r in rows {
            out.push(r.as_ref())?;
        }
        Ok(out)
    }

    pub fn from_vectors(rows: &[Vector]) -> Result<Self> {
        let slices: Vec<&[f64]> = rows.iter().map(|v| v.as_slice()).collect();
        Self::from_rows(&slices)
    }

    pub fn push(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim {
            return Err(GeoAvgError::DimensionMismatch {
                expected: self.dim,
                found: w.len(),
            });
        }
        self.data.extend_from_slice(w);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored iterates (`n + 1` for a run of `n` steps).
    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the final iterate, `n`.
    pub fn last_index(&self) -> Result<usize> {
        self.len().checked_sub(1).ok_or(GeoAvgError::EmptyTrace)
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn vector(&self, t: usize) -> Vector {
        Vector::from_column_slice(self.row(t))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Copy of the iterates with indices in `range`.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start > range.end {
            return Err(GeoAvgError::IndexOutOfRange {
                index: range.end.saturating_sub(1),
                last: self.len().saturating_sub(1),
            });
        }
        Ok(Self {
            dim: self.dim,
            data: self.data[range.start * self.dim..range.end * self.dim].to_vec(),
        })
    }

    /// One iterate per line, comma-separated, shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut out: Option<Self> = None;
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|_| GeoAvgError::Parse {
                        row: idx + 1,
                        message: format!("not a number: {c:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let it = out.get_or_insert_with(|| Self::new(row.len()));
            it.push(&row).map_err(|_| GeoAvgError::Parse {
                row: idx + 1,
                message: format!("expected {} columns, found {}", it.dim, row.len()),
            })?;
        }
        out.ok_or(GeoAvgError::EmptyTrace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_slices() {
        let it = Iterates::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!(it.len(), 3);
        assert_eq!(it.last_index().unwrap(), 2);
        assert_eq!(it.row(1), &[3.0, 4.0]);
        let s = it.slice(1..3).unwrap();
        assert_eq!(s.row(0), &[3.0, 4.0]);
        assert!(it.slice(2..4).is_err());
    }

    #[test]
    fn ragged_push_fails() {
        let mut it = Iterates::new(2);
        assert!(it.push(&[1.0]).is_err());
        assert!(Iterates::new(2).last_index().is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let it = Iterates::from_rows(&[[0.1, 1.0 / 3.0], [-2.5e-300, 7.0]]).unwrap();
        let mut buf = Vec::new();
        it.write_csv(&mut buf).unwrap();
        assert_eq!(Iterates::read_csv(buf.as_slice()).unwrap(), it);
    }
}

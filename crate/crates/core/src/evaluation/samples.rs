use std::io::Write;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// `n x d` draws with a label recording where they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    data: Vec<f64>,
    n: usize,
    dim: usize,
    pub label: String,
}

impl SampleSet {
    pub fn new(label: impl Into<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidTensor(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!("non-finite sample value at flat index {i}")));
        }
        Ok(Self {
            n: data.len() / dim,
            data,
            dim,
            label: label.into(),
        })
    }

    pub fn from_rows(label: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidTensor("ragged sample rows".into()));
        }
        Self::new(label, dim, rows.concat())
    }

    pub fn from_tensor(label: impl Into<String>, t: &Tensor) -> Result<Self> {
        Self::new(label, t.cols(), t.data().to_vec())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= self.n as f64);
        m
    }

    /// Unbiased per-coordinate variance.
    pub fn variance(&self) -> Vec<f64> {
        let m = self.mean();
        let mut v = vec![0.0; self.dim];
        for r in self.rows() {
            for ((a, x), mu) in v.iter_mut().zip(r).zip(&m) {
                *a += (x - mu) * (x - mu);
            }
        }
        v.iter_mut().for_each(|a| *a /= (self.n - 1) as f64);
        v
    }

    /// CSV with a header of column names (`z0, z1, ...` when `names` is `None`).
    pub fn write_csv<W: Write>(&self, out: &mut W, names: Option<&[&str]>) -> Result<()> {
        let header: Vec<String> = match names {
            Some(n) if n.len() == self.dim => n.iter().map(|s| s.to_string()).collect(),
            Some(n) => {
                return Err(Error::DimensionMismatch {
                    context: "csv column names",
                    expected: self.dim,
                    actual: n.len(),
                })
            }
            None => (0..self.dim).map(|k| format!("z{k}")).collect(),
        };
        writeln!(out, "{}", header.join(","))?;
        for r in self.rows() {
            let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, names: Option<&[&str]>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f, names)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_csv(label: impl Into<String>, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse {
            context: "sample csv".into(),
            message: "missing header".into(),
        })?;
        let dim = header.split(',').count();
        let mut data = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    context: format!("sample csv line {}", i + 2),
                    message: e.to_string(),
                })?;
            if row.len() != dim {
                return Err(Error::Parse {
                    context: format!("sample csv line {}", i + 2),
                    message: format!("expected {dim} fields, found {}", row.len()),
                });
            }
            data.extend(row);
        }
        Self::new(label, dim, data)
    }
}

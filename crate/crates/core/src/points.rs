use crate::error::{Error, Result};

/// A row-major `n x d` set of finite points.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    d: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: (data.len() / d + 1) * d,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(Self { d, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or(Error::EmptyDataset)?;
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(d, data)
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Every coordinate multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            d: self.d,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }
}

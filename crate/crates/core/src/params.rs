//! Flat parameter/gradient storage with named segments.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// A named contiguous slice of a [`ParamVector`], typically one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Flat real-valued container for policy parameters and their gradients.
///
/// Segments always partition `0..len()` in order, with no overlap and no gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamVector {
    /// Builds a vector from values and `(name, len)` pairs laid out back to back.
    pub fn new(values: Vec<f64>, layout: &[(&str, usize)]) -> Result<Self> {
        let mut segments = Vec::with_capacity(layout.len());
        let mut offset = 0;
        for &(name, len) in layout {
            if segments.iter().any(|s: &Segment| s.name == name) {
                return Err(Error::config(format!("duplicate segment name `{name}`")));
            }
            segments.push(Segment {
                name: name.to_string(),
                offset,
                len,
            });
            offset += len;
        }
        check_len("segment layout", offset, values.len())?;
        let pv = ParamVector { values, segments };
        pv.ensure_finite()?;
        Ok(pv)
    }

    /// A single-segment vector, handy for synthetic gradients.
    pub fn from_vec(values: Vec<f64>) -> Self {
        let len = values.len();
        ParamVector {
            values,
            segments: vec![Segment {
                name: "all".into(),
                offset: 0,
                len,
            }],
        }
    }

    pub fn zeros_like(other: &ParamVector) -> Self {
        ParamVector {
            values: vec![0.0; other.values.len()],
            segments: other.segments.clone(),
        }
    }

    /// Checks the partition invariant; used after deserializing foreign data.
    pub fn from_parts(values: Vec<f64>, segments: Vec<Segment>) -> Result<Self> {
        let mut offset = 0;
        for s in &segments {
            if s.offset != offset {
                return Err(Error::config(format!(
                    "segment `{}` starts at {} but previous segments end at {}",
                    s.name, s.offset, offset
                )));
            }
            offset += s.len;
        }
        check_len("segment layout", offset, values.len())?;
        let pv = ParamVector { values, segments };
        pv.ensure_finite()?;
        Ok(pv)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn segment_values(&self, name: &str) -> Option<&[f64]> {
        self.segment(name)
            .map(|s| &self.values[s.offset..s.offset + s.len])
    }

    pub fn last_segment(&self) -> Option<&Segment> {
        self.segments.last()
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.values.len() == other.values.len() && self.segments == other.segments
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Numeric(format!(
                "non-finite value {} at index {i}",
                self.values[i]
            ))),
        }
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        check_len("dot operand", self.len(), other.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &ParamVector) -> Result<()> {
        check_len("axpy operand", self.len(), other.len())?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.scale(factor);
        self
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        check_len("sub operand", self.len(), other.len())?;
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }
}

/// Sums vectors with a fixed pairwise tree, so the result depends only on the
/// order of `items`, never on how they were produced.
pub fn pairwise_sum(items: &[ParamVector]) -> Result<Option<ParamVector>> {
    match items.len() {
        0 => Ok(None),
        1 => Ok(Some(items[0].clone())),
        n => {
            let (left, right) = items.split_at(n / 2);
            let mut acc = pairwise_sum(left)?.expect("nonempty half");
            let r = pairwise_sum(right)?.expect("nonempty half");
            acc.axpy(1.0, &r)?;
            Ok(Some(acc))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_must_cover_values() {
        assert!(ParamVector::new(vec![0.0; 5], &[("a", 2), ("b", 2)]).is_err());
        let pv = ParamVector::new(vec![0.0; 5], &[("a", 2), ("b", 3)]).unwrap();
        assert_eq!(pv.segment("b").unwrap().offset, 2);
        assert_eq!(pv.last_segment().unwrap().name, "b");
    }

    #[test]
    fn rejects_nan_and_gaps() {
        assert!(ParamVector::new(vec![f64::NAN], &[("a", 1)]).is_err());
        let seg = |name: &str, offset, len| Segment {
            name: name.into(),
            offset,
            len,
        };
        assert!(ParamVector::from_parts(vec![0.0; 3], vec![seg("a", 0, 1), seg("b", 2, 1)]).is_err());
        assert!(ParamVector::from_parts(vec![0.0; 2], vec![seg("a", 0, 1), seg("b", 1, 1)]).is_ok());
    }

    #[test]
    fn pairwise_sum_matches_sequential() {
        let items: Vec<_> = (0..7)
            .map(|i| ParamVector::from_vec(vec![i as f64, 1.0]))
            .collect();
        let s = pairwise_sum(&items).unwrap().unwrap();
        assert_eq!(s.values(), &[21.0, 7.0]);
        assert!(pairwise_sum(&[]).unwrap().is_none());
    }
}

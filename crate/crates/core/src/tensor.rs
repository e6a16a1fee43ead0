use crate::error::{Error, Result};

/// Dense row-major binary64 tensor of arbitrary rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected =
            element_count(&shape).ok_or_else(|| Error::InvalidShape(format!("shape {shape:?} overflows")))?;
        if expected != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n =
            element_count(&shape).ok_or_else(|| Error::InvalidShape(format!("shape {shape:?} overflows")))?;
        Self::new(shape, vec![0.0; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    /// Bitwise equality, distinguishing `-0.0` and NaN payloads.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub(crate) fn element_count(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s))
}

/// `(n, d)` view of a shape: `d` is the last axis and `n` the product of the
/// leading axes.
pub fn rows_and_width(shape: &[usize]) -> Result<(usize, usize)> {
    let (&d, leading) = shape
        .split_last()
        .ok_or_else(|| Error::InvalidShape("tensor must have rank >= 1".into()))?;
    let n =
        element_count(leading).ok_or_else(|| Error::InvalidShape(format!("shape {shape:?} overflows")))?;
    if n == 0 || d == 0 {
        return Err(Error::InvalidShape(format!("shape {shape:?} has no elements")));
    }
    Ok((n, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattening_rule() {
        assert_eq!(rows_and_width(&[2, 3]).unwrap(), (2, 3));
        assert_eq!(rows_and_width(&[3]).unwrap(), (1, 3));
        assert_eq!(rows_and_width(&[2, 3, 4, 5]).unwrap(), (24, 5));
        assert!(rows_and_width(&[]).is_err());
        assert!(rows_and_width(&[4, 0]).is_err());
    }

    #[test]
    fn construction_checks_length() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![usize::MAX, 2], vec![]).is_err());
        let t = Tensor::new(vec![2, 2], vec![1.0, -0.0, 2.0, 3.0]).unwrap();
        assert!(!t.bit_eq(&Tensor::new(vec![2, 2], vec![1.0, 0.0, 2.0, 3.0]).unwrap()));
    }
}

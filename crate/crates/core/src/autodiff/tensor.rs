use serde::{Deserialize, Serialize};

use super::real::Real;
use crate::{Error, Result};

/// Dense row-major n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Plain JSON form used for fixtures and debugging dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDump {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// First element; the value of a scalar loss.
    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.shape,
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Converts to another precision.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn to_dump(&self) -> TensorDump {
        TensorDump {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn from_dump(d: &TensorDump) -> Result<Self> {
        Self::from_f64(&d.shape, &d.data)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_dump()).expect("tensor dump serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_dump(&serde_json::from_str(s)?)
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Config("concat of nothing".into()))?;
        if axis >= first.rank() {
            return Err(Error::Shape {
                op: "concat",
                lhs: first.shape.clone(),
                rhs: vec![axis],
            });
        }
        for p in parts {
            let same = p.rank() == first.rank()
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !same {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
        }
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        Ok(Self { shape, data })
    }

    /// Inverse of [`Tensor::concat`].
    pub fn split(&self, axis: usize, sizes: &[usize]) -> Result<Vec<Self>> {
        if axis >= self.rank() || sizes.iter().sum::<usize>() != self.shape[axis] {
            return Err(Error::Shape {
                op: "split",
                lhs: self.shape.clone(),
                rhs: sizes.to_vec(),
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let row = self.shape[axis] * inner;
        let mut out = Vec::with_capacity(sizes.len());
        let mut offset = 0;
        for &s in sizes {
            let mut data = Vec::with_capacity(outer * s * inner);
            for o in 0..outer {
                let start = o * row + offset * inner;
                data.extend_from_slice(&self.data[start..start + s * inner]);
            }
            let mut shape = self.shape.clone();
            shape[axis] = s;
            out.push(Self { shape, data });
            offset += s;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_is_exact() {
        let t = Tensor::<f64>::new(vec![2, 2], vec![0.1, -1.0 / 3.0, 1e-300, 7.0]).unwrap();
        assert_eq!(Tensor::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn concat_split_inverse() {
        let a = Tensor::<f64>::from_f64(&[2, 1, 3], &[1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::<f64>::from_f64(&[2, 2, 3], &(0..12).map(f64::from).collect::<Vec<_>>()).unwrap();
        let c = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3, 3]);
        assert_eq!(&c.data()[..9], &[1., 2., 3., 0., 1., 2., 3., 4., 5.]);
        let parts = c.split(1, &[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::zeros(&[2, 3]).reshape(&[4]).is_err());
    }
}

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::NnError;

/// Dense row-major `f32` array with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NnError::ShapeMismatch {
                op: "tensor",
                expected: format!("{} values for shape {:?}", expected, shape),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// Values drawn uniformly from `[-bound, bound]`.
    pub fn uniform<R: Rng>(shape: &[usize], bound: f32, rng: &mut R) -> Self {
        let len = shape.iter().product();
        let data = if bound > 0.0 {
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            (0..len).map(|_| dist.sample(rng)).collect()
        } else {
            vec![0.0; len]
        };
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Interprets the tensor as `channels × height × width`.
    pub fn dims3(&self) -> Result<(usize, usize, usize), NnError> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            other => Err(NnError::ShapeMismatch {
                op: "dims3",
                expected: "3 extents (c, h, w)".into(),
                found: format!("{:?}", other),
            }),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(NnError::ShapeMismatch {
                op: "reshape",
                expected: format!("{:?}", shape),
                found: format!("{:?}", self.shape),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Inner product accumulated in double precision.
    pub fn dot(&self, other: &Tensor) -> Result<f64, NnError> {
        self.check_same_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks two `c × h × w` tensors along the channel axis.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor, NnError> {
        let (c1, h1, w1) = self.dims3()?;
        let (c2, h2, w2) = other.dims3()?;
        if (h1, w1) != (h2, w2) {
            return Err(NnError::ShapeMismatch {
                op: "concat_channels",
                expected: format!("spatial {}x{}", h1, w1),
                found: format!("spatial {}x{}", h2, w2),
            });
        }
        let mut data = Vec::with_capacity(self.len() + other.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Tensor {
            shape: vec![c1 + c2, h1, w1],
            data,
        })
    }

    /// Channels `[start, end)` of a `c × h × w` tensor.
    pub fn channel_range(&self, start: usize, end: usize) -> Result<Tensor, NnError> {
        let (c, h, w) = self.dims3()?;
        if start > end || end > c {
            return Err(NnError::ShapeMismatch {
                op: "channel_range",
                expected: format!("range within 0..{}", c),
                found: format!("{}..{}", start, end),
            });
        }
        let plane = h * w;
        Ok(Tensor {
            shape: vec![end - start, h, w],
            data: self.data[start * plane..end * plane].to_vec(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<(), NnError> {
        self.check_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f32) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub(crate) fn check_same_shape(&self, other: &Tensor, op: &'static str) -> Result<(), NnError> {
        if self.shape != other.shape {
            return Err(NnError::ShapeMismatch {
                op,
                expected: format!("{:?}", self.shape),
                found: format!("{:?}", other.shape),
            });
        }
        Ok(())
    }
}

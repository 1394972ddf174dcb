//! Dense numeric arrays and the matrix kernels all model math runs on.
//!
//! A [`Tensor`] is a contiguous row-major `f64` buffer plus a shape of one,
//! two or three extents. The implementation deliberately stays small: the
//! models in this crate are fixed architectures with hand-written backward
//! passes, so a handful of kernels (matmul, transposed matmuls, elementwise
//! maps) covers everything.

use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};

/// Dense row-major array of `f64` values with a 1-, 2- or 3-dimensional shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Zero-filled tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            !shape.is_empty() && shape.len() <= 3 && shape.iter().all(|&e| e > 0),
            "tensor shape must have 1-3 positive extents, got {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Build a tensor from raw data; the data length must match the shape.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if shape.is_empty() || shape.len() > 3 || shape.iter().any(|&e| e == 0) {
            return Err(HarError::RejectedInput(format!(
                "tensor shape must have 1-3 positive extents, got {shape:?}"
            )));
        }
        if data.len() != expect {
            return Err(HarError::ShapeMismatch(format!(
                "shape {shape:?} needs {expect} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// 1-D tensor from a slice.
    pub fn vector(values: &[f64]) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    /// 2-D tensor from nested rows; all rows must have equal length.
    pub fn matrix(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(HarError::ShapeMismatch("ragged rows".into()));
        }
        Tensor::from_vec(&[r, c], rows.concat())
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    /// Number of columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[1]
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.shape[1] + j] = v;
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    /// Contiguous row `i` of a 2-D tensor.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[i * c..(i + 1) * c]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.shape[1];
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Reinterpret as a different shape with the same element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() || shape.is_empty() || shape.len() > 3 {
            return Err(HarError::ShapeMismatch(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Elementwise in-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Elementwise in-place `self *= s`.
    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Matrix product of two 2-D tensors, `[m x k] * [k x n] -> [m x n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(HarError::RejectedInput("matmul needs 2-D operands".into()));
    }
    if a.cols() != b.rows() {
        return Err(HarError::ShapeMismatch(format!(
            "matmul {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(&[m, n]);
    matmul_into(a, b, &mut out);
    let _ = k;
    Ok(out)
}

/// `out = a * b`, shapes already checked. i-k-j loop order keeps the inner
/// loop running over contiguous rows of `b` and `out`.
pub(crate) fn matmul_into(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    debug_assert_eq!(b.shape[0], k);
    debug_assert_eq!(out.shape, [m, n]);
    out.fill(0.0);
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out.data[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a^T * b` for `a [m x k]`, `b [m x n]`, `out [k x n]`.
///
/// This is the weight-gradient kernel: activations transposed against
/// upstream deltas, accumulated in place.
pub(crate) fn matmul_at_b_acc(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    debug_assert_eq!(b.shape[0], m);
    debug_assert_eq!(out.shape, [k, n]);
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let brow = &b.data[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a * b^T` for `a [m x n]`, `b [k x n]`, `out [m x k]`.
///
/// Input-gradient kernel: upstream deltas against the transposed weights.
pub(crate) fn matmul_a_bt_acc(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let (m, n, k) = (a.shape[0], a.shape[1], b.shape[0]);
    debug_assert_eq!(b.shape[1], n);
    debug_assert_eq!(out.shape, [m, k]);
    for i in 0..m {
        let arow = &a.data[i * n..(i + 1) * n];
        let orow = &mut out.data[i * k..(i + 1) * k];
        for (p, o) in orow.iter_mut().enumerate() {
            let brow = &b.data[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

/// Add a bias row to every row of a 2-D tensor.
pub(crate) fn add_bias_rows(x: &mut Tensor, bias: &Tensor) {
    let n = x.shape[1];
    debug_assert_eq!(bias.len(), n);
    for i in 0..x.shape[0] {
        for (v, &b) in x.data[i * n..(i + 1) * n].iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
}

/// Column sums of a 2-D tensor accumulated into a 1-D tensor (bias gradients).
pub(crate) fn col_sums_acc(x: &Tensor, out: &mut Tensor) {
    let n = x.shape[1];
    debug_assert_eq!(out.len(), n);
    for i in 0..x.shape[0] {
        for (o, &v) in out.data.iter_mut().zip(&x.data[i * n..(i + 1) * n]) {
            *o += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let eye = Tensor::matrix(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]).unwrap();
        let b = Tensor::matrix(&[&[2.0, -1.0], &[0.5, 3.0], &[7.0, 0.0]]).unwrap();
        assert_eq!(matmul(&eye, &b).unwrap(), b);
    }

    #[test]
    fn matmul_hand_example() {
        let a = Tensor::matrix(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = Tensor::matrix(&[&[1.0], &[1.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_zero() {
        let z = Tensor::zeros(&[2, 3]);
        let b = Tensor::matrix(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        let c = matmul(&z, &b).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_mismatch_rejected() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &b), Err(HarError::ShapeMismatch(_))));
    }

    #[test]
    fn transposed_kernels_match_explicit_transpose() {
        let a = Tensor::matrix(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let b = Tensor::matrix(&[&[1.0, -1.0], &[0.5, 2.0]]).unwrap();
        // a^T [3x2] * b [2x2]
        let at = Tensor::matrix(&[&[1.0, 4.0], &[2.0, 5.0], &[3.0, 6.0]]).unwrap();
        let want = matmul(&at, &b).unwrap();
        let mut got = Tensor::zeros(&[3, 2]);
        matmul_at_b_acc(&a, &b, &mut got);
        assert_eq!(got, want);

        // a [2x3] * c^T where c [4x3]
        let c = Tensor::matrix(&[
            &[1.0, 0.0, 2.0],
            &[0.0, 1.0, 1.0],
            &[3.0, 1.0, 0.0],
            &[1.0, 1.0, 1.0],
        ])
        .unwrap();
        let ct = Tensor::matrix(&[
            &[1.0, 0.0, 3.0, 1.0],
            &[0.0, 1.0, 1.0, 1.0],
            &[2.0, 1.0, 0.0, 1.0],
        ])
        .unwrap();
        let want = matmul(&a, &ct).unwrap();
        let mut got = Tensor::zeros(&[2, 4]);
        matmul_a_bt_acc(&a, &c, &mut got);
        assert_eq!(got, want);
    }

    #[test]
    fn from_vec_validates_length() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0]).is_err());
        assert!(Tensor::from_vec(&[2, 0], vec![]).is_err());
    }
}

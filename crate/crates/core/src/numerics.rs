//! Dense f32 kernels used by the transformer.
//!
//! Every reduction runs in a fixed left-to-right order over its inner
//! dimension, so two calls with the same inputs are bitwise identical and
//! a row computed alone matches the same row computed inside a batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A plain vector of activations or parameters.
pub type Vector = Vec<f32>;

/// Row-major 2-d matrix of `f32`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    op: "from_rows",
                    left: (rows.len(), cols),
                    right: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Appends the rows of `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                op: "vstack",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Copies columns `[start, start + width)` into a new matrix.
    pub fn columns(&self, start: usize, width: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, width);
        for i in 0..self.rows {
            out.row_mut(i)
                .copy_from_slice(&self.row(i)[start..start + width]);
        }
        out
    }
}

/// Matrix product `a × b`.
///
/// Each output element accumulates `a[i][k] * b[k][j]` for `k = 0, 1, ...`
/// into a zero-initialised sum. The loop is ordered i-k-j so the inner
/// loop runs over independent outputs, which keeps the per-element
/// summation order identical to the textbook triple loop.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Dot product with sequential accumulation.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Numerically stable softmax. `-inf` entries are masked and map to exactly 0.
pub fn softmax_row(v: &[f32]) -> Result<Vector> {
    if v.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if v.iter().any(|x| x.is_nan() || *x == f32::INFINITY) {
        return Err(Error::invalid("softmax input must be finite or -inf"));
    }
    let max = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if max == f32::NEG_INFINITY {
        return Err(Error::FullyMasked);
    }
    let mut out: Vector = v
        .iter()
        .map(|&x| {
            if x == f32::NEG_INFINITY {
                0.0
            } else {
                (x - max).exp()
            }
        })
        .collect();
    let mut sum = 0.0f32;
    for &e in &out {
        sum += e;
    }
    for e in &mut out {
        *e /= sum;
    }
    Ok(out)
}

/// RMS normalisation: `gain_i * v_i / sqrt(mean(v^2) + eps)`.
///
/// An all-zero input with `eps = 0` yields zeros rather than NaN.
pub fn rms_norm(v: &[f32], gain: &[f32], eps: f32) -> Result<Vector> {
    let mut out = vec![0.0; v.len()];
    rms_norm_into(v, gain, eps, &mut out)?;
    Ok(out)
}

pub(crate) fn rms_norm_into(v: &[f32], gain: &[f32], eps: f32, out: &mut [f32]) -> Result<()> {
    if v.len() != gain.len() || v.len() != out.len() {
        return Err(Error::ShapeMismatch {
            op: "rms_norm",
            left: (1, v.len()),
            right: (1, gain.len()),
        });
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("rms_norm eps must be >= 0, got {eps}")));
    }
    let mut ss = 0.0f32;
    for &x in v {
        ss += x * x;
    }
    let denom = (ss / v.len() as f32 + eps).sqrt();
    if denom == 0.0 {
        out.fill(0.0);
        return Ok(());
    }
    for ((o, &x), &g) in out.iter_mut().zip(v).zip(gain) {
        *o = g * (x / denom);
    }
    Ok(())
}

/// Row-wise RMS normalisation of a matrix.
pub fn rms_norm_rows(m: &Matrix, gain: &[f32], eps: f32) -> Result<Matrix> {
    let mut out = Matrix::zeros(m.rows, m.cols);
    for i in 0..m.rows {
        let (src, dst) = (m.row(i), &mut out.data[i * m.cols..(i + 1) * m.cols]);
        rms_norm_into(src, gain, eps, dst)?;
    }
    Ok(out)
}

/// Rotation angles for one position: `position * theta_base^(-2j / width)`.
fn rope_angle(position: usize, pair: usize, width: usize, theta_base: f64) -> (f32, f32) {
    let inv_freq = theta_base.powf(-(2.0 * pair as f64) / width as f64);
    let angle = position as f64 * inv_freq;
    (angle.cos() as f32, angle.sin() as f32)
}

/// Applies rotary position embedding to every row, rotating the
/// dimension pairs `(2j, 2j + 1)` of each row by its position's angle.
pub fn rope_apply(m: &Matrix, positions: &[usize], theta_base: f64) -> Result<Matrix> {
    let mut out = m.clone();
    rope_heads_in_place(&mut out, positions, theta_base, m.cols)?;
    Ok(out)
}

/// Rotary embedding applied independently to each `head_dim`-wide block
/// of columns.
pub(crate) fn rope_heads_in_place(
    m: &mut Matrix,
    positions: &[usize],
    theta_base: f64,
    head_dim: usize,
) -> Result<()> {
    if head_dim % 2 != 0 {
        return Err(Error::OddDimension(head_dim));
    }
    if positions.len() != m.rows {
        return Err(Error::ShapeMismatch {
            op: "rope_apply",
            left: m.shape(),
            right: (positions.len(), 1),
        });
    }
    if head_dim == 0 || m.cols % head_dim != 0 {
        return Err(Error::invalid(format!(
            "rope head width {head_dim} does not divide {}",
            m.cols
        )));
    }
    let cols = m.cols;
    for (i, &pos) in positions.iter().enumerate() {
        let row = &mut m.data[i * cols..(i + 1) * cols];
        for pair in 0..head_dim / 2 {
            let (c, s) = rope_angle(pos, pair, head_dim, theta_base);
            for head in row.chunks_exact_mut(head_dim) {
                let (x0, x1) = (head[2 * pair], head[2 * pair + 1]);
                head[2 * pair] = x0 * c - x1 * s;
                head[2 * pair + 1] = x0 * s + x1 * c;
            }
        }
    }
    Ok(())
}

pub fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0f32;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-10.0f32..10.0, rows * cols)
            .prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
    }

    #[test]
    fn matmul_small_cases() {
        let m = Matrix::from_rows(&[vec![1., 2., 3.], vec![4., 5., 6.], vec![7., 8., 9.]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(3), &m).unwrap(), m);

        let z = matmul(&Matrix::zeros(2, 3), &Matrix::from_vec(3, 4, vec![1.5; 12]).unwrap()).unwrap();
        assert_eq!(z, Matrix::zeros(2, 4));

        let a = Matrix::from_rows(&[vec![1., 2.], vec![3., 4.]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.], vec![6.]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
        assert!(matches!(err, Error::ShapeMismatch { left: (2, 3), right: (2, 3), .. }));
    }

    proptest! {
        #[test]
        fn matmul_matches_triple_loop_bitwise(a in arb_matrix(3, 7), b in arb_matrix(7, 5)) {
            let fast = matmul(&a, &b).unwrap();
            let slow = naive_matmul(&a, &b);
            prop_assert_eq!(
                fast.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                slow.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }

        #[test]
        fn identity_is_bitwise_neutral(m in arb_matrix(4, 4)) {
            let i = Matrix::identity(4);
            prop_assert_eq!(&matmul(&i, &m).unwrap(), &m);
            prop_assert_eq!(&matmul(&m, &i).unwrap(), &m);
        }

        #[test]
        fn softmax_is_probability_and_shift_invariant(
            v in prop::collection::vec(-20.0f32..20.0, 1..16),
            shift in -5.0f32..5.0,
        ) {
            let p = softmax_row(&v).unwrap();
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            prop_assert!((p.iter().sum::<f32>() - 1.0).abs() <= 1e-6);
            // Shifting by an exactly representable power-of-two grid keeps
            // the subtraction against the max exact.
            let shift = (shift * 4.0).round() / 4.0;
            let vs: Vec<f32> = v.iter().map(|x| ((x * 4.0).round() / 4.0) + shift).collect();
            let v0: Vec<f32> = v.iter().map(|x| (x * 4.0).round() / 4.0).collect();
            let a = softmax_row(&v0).unwrap();
            let b = softmax_row(&vs).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn rms_norm_is_scale_invariant(
            v in prop::collection::vec(0.1f32..10.0, 2..32),
            c in 0.1f32..50.0,
        ) {
            let gain = vec![1.0; v.len()];
            let a = rms_norm(&v, &gain, 1e-12).unwrap();
            let scaled: Vec<f32> = v.iter().map(|x| x * c).collect();
            let b = rms_norm(&scaled, &gain, 1e-12).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-5);
            }
        }

        #[test]
        fn rope_preserves_pair_norms(m in arb_matrix(3, 8), p in prop::collection::vec(0usize..500, 3)) {
            let r = rope_apply(&m, &p, 10000.0).unwrap();
            for i in 0..3 {
                for j in 0..4 {
                    let n0 = m.get(i, 2*j).hypot(m.get(i, 2*j+1));
                    let n1 = r.get(i, 2*j).hypot(r.get(i, 2*j+1));
                    prop_assert!((n0 - n1).abs() <= 1e-5 * n0.max(1.0));
                }
            }
        }

        #[test]
        fn rope_dot_depends_on_relative_position(
            q in arb_matrix(1, 8),
            k in arb_matrix(1, 8),
            pq in 0usize..64, pk in 0usize..64, shift in 0usize..64,
        ) {
            let d0 = dot(rope_apply(&q, &[pq], 10000.0).unwrap().row(0), rope_apply(&k, &[pk], 10000.0).unwrap().row(0));
            let d1 = dot(
                rope_apply(&q, &[pq + shift], 10000.0).unwrap().row(0),
                rope_apply(&k, &[pk + shift], 10000.0).unwrap().row(0),
            );
            prop_assert!((d0 - d1).abs() <= 1e-4 * d0.abs().max(1.0), "{} vs {}", d0, d1);
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_row(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(softmax_row(&[3.7, f32::NEG_INFINITY]).unwrap(), vec![1.0, 0.0]);
        // e^x / sum, evaluated at 30 digits.
        let expect = [0.090_030_573_170_380_46, 0.244_728_471_054_797_65, 0.665_240_955_774_821_9];
        let got = softmax_row(&[1.0, 2.0, 3.0]).unwrap();
        for (g, e) in got.iter().zip(expect) {
            assert!((*g as f64 - e).abs() < 1e-7, "{g} vs {e}");
        }
        assert!(matches!(
            softmax_row(&[f32::NEG_INFINITY, f32::NEG_INFINITY]),
            Err(Error::FullyMasked)
        ));
    }

    #[test]
    fn rms_norm_examples() {
        let ones = vec![1.0f32; 6];
        let out = rms_norm(&ones, &ones, 0.0).unwrap();
        assert_eq!(out, ones);
        assert_eq!(rms_norm(&[0.0; 4], &[1.0; 4], 1e-6).unwrap(), vec![0.0; 4]);
        let out = rms_norm(&[3.0, 4.0], &[1.0, 1.0], 0.0).unwrap();
        assert!((out[0] as f64 - 0.848_528_137_423_857).abs() < 1e-6);
        assert!((out[1] as f64 - 1.131_370_849_898_476).abs() < 1e-6);
        assert!(rms_norm(&[1.0, 2.0], &[1.0], 1e-6).is_err());
    }

    #[test]
    fn rope_examples() {
        let m = Matrix::from_rows(&[vec![0.3, -1.2, 2.0, 0.5]]).unwrap();
        assert_eq!(rope_apply(&m, &[0], 10000.0).unwrap(), m);

        let m = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let r = rope_apply(&m, &[1], 10000.0).unwrap();
        assert!((r.get(0, 0) as f64 - 0.540_302_305_868_139_7).abs() < 1e-7);
        assert!((r.get(0, 1) as f64 - 0.841_470_984_807_896_5).abs() < 1e-7);

        assert!(matches!(
            rope_apply(&Matrix::zeros(1, 3), &[0], 10000.0),
            Err(Error::OddDimension(3))
        ));
    }
}

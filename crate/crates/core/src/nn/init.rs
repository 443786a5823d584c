use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{NnError, Tensor};

/// Orthonormal initialization.
///
/// The tensor is viewed as a `shape[0] × prod(shape[1..])` matrix. A standard
/// normal matrix is QR-factorized and the columns of `Q` are sign-corrected by
/// `sign(diag(R))`, so the result is unique for a given rng stream. The
/// smaller-dimension Gram matrix of the result is the identity.
pub fn orthonormal_init<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor<f32>, NnError> {
    if shape.len() < 2 || shape.contains(&0) {
        return Err(NnError::Shape(format!("orthonormal init needs ≥ 2 non-zero dims, got {shape:?}")));
    }
    let rows = shape[0];
    let cols: usize = shape[1..].iter().product();
    let (tall, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let gaussian = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = gaussian.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    // q is tall × short with orthonormal columns
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
            data.push(v as f32);
        }
    }
    Tensor::from_vec(shape, data)
}

/// Largest deviation of the smaller-side Gram matrix from the identity.
pub fn gram_deviation(t: &Tensor<f32>) -> f64 {
    let rows = t.shape()[0];
    let cols = t.len() / rows;
    let m = DMatrix::from_row_slice(rows, cols, t.data()).map(|v| v as f64);
    let gram = if rows >= cols { m.transpose() * &m } else { &m * m.transpose() };
    let n = gram.nrows();
    (gram - DMatrix::identity(n, n)).abs().max()
}

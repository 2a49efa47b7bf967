//! Raw kernel math shared by the forward and backward passes.
//!
//! Matrix products go through `matrixmultiply` (the pure-Rust gemm with
//! runtime SIMD dispatch); transposed operand layouts are expressed through
//! its stride arguments instead of materialized transposes. In `F32` mode
//! operands are cast once and accumulated in single precision.

#![allow(clippy::needless_range_loop)]

use super::tensor::FloatMode;

/// C[m,n] = A[m,k] @ B[k,n].
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, mode: FloatMode) -> Vec<f64> {
    match mode {
        FloatMode::F64 => {
            let mut c = vec![0.0f64; m * n];
            unsafe {
                matrixmultiply::dgemm(
                    m, k, n, 1.0,
                    a.as_ptr(), k as isize, 1,
                    b.as_ptr(), n as isize, 1,
                    0.0,
                    c.as_mut_ptr(), n as isize, 1,
                );
            }
            c
        }
        FloatMode::F32 => {
            let a32: Vec<f32> = a.iter().map(|&x| x as f32).collect();
            let b32: Vec<f32> = b.iter().map(|&x| x as f32).collect();
            let mut c = vec![0.0f32; m * n];
            unsafe {
                matrixmultiply::sgemm(
                    m, k, n, 1.0,
                    a32.as_ptr(), k as isize, 1,
                    b32.as_ptr(), n as isize, 1,
                    0.0,
                    c.as_mut_ptr(), n as isize, 1,
                );
            }
            c.into_iter().map(f64::from).collect()
        }
    }
}

/// C[m,n] = A[m,k] @ B[n,k]^T — rows of A against rows of B.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, mode: FloatMode) -> Vec<f64> {
    match mode {
        FloatMode::F64 => {
            let mut c = vec![0.0f64; m * n];
            unsafe {
                matrixmultiply::dgemm(
                    m, k, n, 1.0,
                    a.as_ptr(), k as isize, 1,
                    b.as_ptr(), 1, k as isize,
                    0.0,
                    c.as_mut_ptr(), n as isize, 1,
                );
            }
            c
        }
        FloatMode::F32 => {
            let a32: Vec<f32> = a.iter().map(|&x| x as f32).collect();
            let b32: Vec<f32> = b.iter().map(|&x| x as f32).collect();
            let mut c = vec![0.0f32; m * n];
            unsafe {
                matrixmultiply::sgemm(
                    m, k, n, 1.0,
                    a32.as_ptr(), k as isize, 1,
                    b32.as_ptr(), 1, k as isize,
                    0.0,
                    c.as_mut_ptr(), n as isize, 1,
                );
            }
            c.into_iter().map(f64::from).collect()
        }
    }
}

/// C[k,n] = A[m,k]^T @ B[m,n].
pub fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, mode: FloatMode) -> Vec<f64> {
    match mode {
        FloatMode::F64 => {
            let mut c = vec![0.0f64; k * n];
            unsafe {
                matrixmultiply::dgemm(
                    k, m, n, 1.0,
                    a.as_ptr(), 1, k as isize,
                    b.as_ptr(), n as isize, 1,
                    0.0,
                    c.as_mut_ptr(), n as isize, 1,
                );
            }
            c
        }
        FloatMode::F32 => {
            let a32: Vec<f32> = a.iter().map(|&x| x as f32).collect();
            let b32: Vec<f32> = b.iter().map(|&x| x as f32).collect();
            let mut c = vec![0.0f32; k * n];
            unsafe {
                matrixmultiply::sgemm(
                    k, m, n, 1.0,
                    a32.as_ptr(), 1, k as isize,
                    b32.as_ptr(), n as isize, 1,
                    0.0,
                    c.as_mut_ptr(), n as isize, 1,
                );
            }
            c.into_iter().map(f64::from).collect()
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 0..rows {
        let row = &x[i * cols..(i + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let orow = &mut out[i * cols..(i + 1) * cols];
        let mut sum = 0.0;
        for j in 0..cols {
            let e = (row[j] - max).exp();
            orow[j] = e;
            sum += e;
        }
        for v in orow.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 0..rows {
        let row = &x[i * cols..(i + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..cols {
            sum += (row[j] - max).exp();
        }
        let lse = max + sum.ln();
        let orow = &mut out[i * cols..(i + 1) * cols];
        for j in 0..cols {
            orow[j] = row[j] - lse;
        }
    }
    out
}

const GELU_COEF: f64 = 0.044_715;

/// Tanh-approximation GELU: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
pub fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + GELU_COEF * x * x * x)).tanh())
}

/// Derivative of the tanh-approximation GELU.
pub fn gelu_grad(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + GELU_COEF * x * x * x);
    let t = u.tanh();
    let du = c * (1.0 + 3.0 * GELU_COEF * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Per-row mean and reciprocal std for layer norm; returns (mean, rstd).
pub fn layer_norm_stats(x: &[f64], rows: usize, cols: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; rows];
    let mut rstd = vec![0.0; rows];
    for i in 0..rows {
        let row = &x[i * cols..(i + 1) * cols];
        let mu = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / cols as f64;
        mean[i] = mu;
        rstd[i] = 1.0 / (var + eps).sqrt();
    }
    (mean, rstd)
}

//! Raw numeric loops shared by forward and backward passes.
//!
//! Matrix products use the ikj order: the inner loop is an axpy over a
//! contiguous output row, which autovectorizes and keeps accumulation order
//! fixed (deterministic results).

use crate::scalar::Scalar;

#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * *xi;
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    // Four partial sums so the reduction vectorizes; order is fixed.
    let mut s0 = T::zero();
    let mut s1 = T::zero();
    let mut s2 = T::zero();
    let mut s3 = T::zero();
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        s0 = s0 + ca[0] * cb[0];
        s1 = s1 + ca[1] * cb[1];
        s2 = s2 + ca[2] * cb[2];
        s3 = s3 + ca[3] * cb[3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for (ai, bi) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        s = s + *ai * *bi;
    }
    s
}

/// C[m,n] += A[m,k] * B[k,n], all row-major.
pub fn matmul_acc<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, apv) in a_row.iter().enumerate() {
            axpy(c_row, *apv, &b[p * n..(p + 1) * n]);
        }
    }
}

pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    matmul_acc(&mut c, a, b, m, k, n);
    c
}

/// C[k,n] += A^T * G for A[m,k], G[m,n]: the weight-gradient product,
/// computed without materializing the transpose.
pub fn matmul_tn_acc<T: Scalar>(c: &mut [T], a: &[T], g: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, apv) in a_row.iter().enumerate() {
            axpy(&mut c[p * n..(p + 1) * n], *apv, g_row);
        }
    }
}

/// C[m,k] = G[m,n] * B[k,n]^T: the input-gradient product. B is transposed
/// once so the main loop stays in ikj form.
pub fn matmul_nt<T: Scalar>(g: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let bt = transpose(b, k, n);
    matmul(g, &bt, m, n, k)
}

pub fn transpose<T: Scalar>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    debug_assert_eq!(x.len(), rows * cols);
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    out
}

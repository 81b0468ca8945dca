//! Matrix products, shape ops, and the stop-gradient linear map.

use crate::autodiff::kernels;
use crate::autodiff::tape::Tape;
use crate::autodiff::tensor::{numel, shape_string, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn dims2(op: &'static str, t: &Tensor<impl Scalar>) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::shape(
            op,
            format!("expected rank-2 tensor, got {}", shape_string(s)),
        )),
    }
}

pub fn matmul<T: Scalar>(tape: &Tape<T>, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, ka) = dims2("matmul", a)?;
    let (kb, n) = dims2("matmul", b)?;
    if ka != kb {
        return Err(Error::shape(
            "matmul",
            format!("inner dims differ: [{m},{ka}] x [{kb},{n}]"),
        ));
    }
    let values = kernels::matmul(a.values(), b.values(), m, ka, n);
    let rg = a.requires_grad() || b.requires_grad();
    let y = Tensor::new(values, vec![m, n], rg);
    if rg {
        let (a, b) = (a.clone(), b.clone());
        tape.record("matmul", &y, move |g, sink| {
            if a.requires_grad() {
                // dA = G * B^T
                sink.accumulate_owned(&a, kernels::matmul_nt(g, b.values(), m, n, ka));
            }
            if b.requires_grad() {
                // dB = A^T * G
                let mut db = vec![T::zero(); ka * n];
                kernels::matmul_tn_acc(&mut db, a.values(), g, m, ka, n);
                sink.accumulate_owned(&b, db);
            }
        });
    }
    Ok(y)
}

pub fn transpose<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (r, c) = dims2("transpose", x)?;
    let values = kernels::transpose(x.values(), r, c);
    let y = Tensor::new(values, vec![c, r], x.requires_grad());
    if y.requires_grad() {
        let x = x.clone();
        tape.record("transpose", &y, move |g, sink| {
            sink.accumulate_owned(&x, kernels::transpose(g, c, r));
        });
    }
    Ok(y)
}

pub fn reshape<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, shape: Vec<usize>) -> Result<Tensor<T>> {
    if numel(&shape) != x.numel() {
        return Err(Error::shape(
            "reshape",
            format!(
                "cannot reshape {} ({} elements) to {}",
                shape_string(x.shape()),
                x.numel(),
                shape_string(&shape)
            ),
        ));
    }
    let y = Tensor::new(x.values().to_vec(), shape, x.requires_grad());
    if y.requires_grad() {
        let x = x.clone();
        tape.record("reshape", &y, move |g, sink| {
            sink.accumulate(&x, g);
        });
    }
    Ok(y)
}

/// `y = scale * A x` (vector) or `Y = scale * X A^T` (rows), with `A` and
/// `scale` treated as constants: the backward pass maps the upstream
/// gradient through `scale * A^T` into `x` only.
pub fn detached_linear<T: Scalar>(
    tape: &Tape<T>,
    x: &Tensor<T>,
    a: &Tensor<T>,
    scale: T,
) -> Result<Tensor<T>> {
    let (d_out, d_in) = dims2("detached_linear", a)?;
    let a_vals = a.values().to_vec(); // snapshot; never receives grad
    match x.shape() {
        [n] if *n == d_in => {
            let mut y = vec![T::zero(); d_out];
            for (r, yo) in y.iter_mut().enumerate() {
                *yo = scale * kernels::dot(&a_vals[r * d_in..(r + 1) * d_in], x.values());
            }
            let out = Tensor::new(y, vec![d_out], x.requires_grad());
            if out.requires_grad() {
                let x = x.clone();
                tape.record("detached_linear", &out, move |g, sink| {
                    // dx = scale * A^T g
                    let mut dx = vec![T::zero(); d_in];
                    for (r, gr) in g.iter().enumerate() {
                        kernels::axpy(&mut dx, scale * *gr, &a_vals[r * d_in..(r + 1) * d_in]);
                    }
                    sink.accumulate_owned(&x, dx);
                });
            }
            Ok(out)
        }
        [t, n] if *n == d_in => {
            let t_rows = *t;
            // Y = scale * X A^T
            let at = kernels::transpose(&a_vals, d_out, d_in);
            let mut y = kernels::matmul(x.values(), &at, t_rows, d_in, d_out);
            for v in &mut y {
                *v = *v * scale;
            }
            let out = Tensor::new(y, vec![t_rows, d_out], x.requires_grad());
            if out.requires_grad() {
                let x = x.clone();
                tape.record("detached_linear", &out, move |g, sink| {
                    // dX = scale * G A
                    let mut dx = kernels::matmul(g, &a_vals, t_rows, d_out, d_in);
                    for v in &mut dx {
                        *v = *v * scale;
                    }
                    sink.accumulate_owned(&x, dx);
                });
            }
            Ok(out)
        }
        s => Err(Error::shape(
            "detached_linear",
            format!(
                "x {} incompatible with A [{d_out},{d_in}]",
                shape_string(s)
            ),
        )),
    }
}

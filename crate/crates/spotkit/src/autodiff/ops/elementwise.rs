//! Broadcasted elementwise ops and pointwise nonlinearities.

use crate::autodiff::tape::Tape;
use crate::autodiff::tensor::{shape_string, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// View of a shape as (rows, cols) for rank <= 2 broadcasting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dims2 {
    pub rows: usize,
    pub cols: usize,
}

pub(crate) fn as_2d(op: &'static str, shape: &[usize]) -> Result<Dims2> {
    match shape.len() {
        0 => Ok(Dims2 { rows: 1, cols: 1 }),
        1 => Ok(Dims2 {
            rows: 1,
            cols: shape[0],
        }),
        2 => Ok(Dims2 {
            rows: shape[0],
            cols: shape[1],
        }),
        _ => Err(Error::shape(
            op,
            format!("rank > 2 not supported, got {}", shape_string(shape)),
        )),
    }
}

fn broadcast_dim(op: &'static str, a: usize, b: usize, axis: &str) -> Result<usize> {
    if a == b {
        Ok(a)
    } else if a == 1 {
        Ok(b)
    } else if b == 1 {
        Ok(a)
    } else {
        Err(Error::shape(
            op,
            format!("cannot broadcast {axis} dims {a} vs {b}"),
        ))
    }
}

pub(crate) fn broadcast_2d(op: &'static str, a: Dims2, b: Dims2) -> Result<Dims2> {
    Ok(Dims2 {
        rows: broadcast_dim(op, a.rows, b.rows, "row")?,
        cols: broadcast_dim(op, a.cols, b.cols, "col")?,
    })
}

/// Output shape for a broadcasted binary op, preserving the higher input rank.
fn broadcast_out_shape(a: &[usize], b: &[usize], out: Dims2) -> Vec<usize> {
    let rank = a.len().max(b.len());
    match rank {
        0 => vec![],
        1 => vec![out.cols],
        _ => vec![out.rows, out.cols],
    }
}

/// Read element (i, j) of a tensor broadcast to `out` dims.
#[inline]
fn bget<T: Scalar>(v: &[T], d: Dims2, i: usize, j: usize) -> T {
    let ii = if d.rows == 1 { 0 } else { i };
    let jj = if d.cols == 1 { 0 } else { j };
    v[ii * d.cols + jj]
}

fn binary_forward<T: Scalar>(
    a: &[T],
    ad: Dims2,
    b: &[T],
    bd: Dims2,
    out: Dims2,
    f: impl Fn(T, T) -> T,
) -> Vec<T> {
    // Fast paths for the shapes the model actually uses.
    if ad == out && bd == out {
        return a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect();
    }
    if ad == out && b.len() == 1 {
        let s = b[0];
        return a.iter().map(|x| f(*x, s)).collect();
    }
    if a.len() == 1 && bd == out {
        let s = a[0];
        return b.iter().map(|y| f(s, *y)).collect();
    }
    if ad == out && bd.rows == 1 && bd.cols == out.cols {
        let mut res = Vec::with_capacity(out.rows * out.cols);
        for i in 0..out.rows {
            let row = &a[i * out.cols..(i + 1) * out.cols];
            res.extend(row.iter().zip(b).map(|(x, y)| f(*x, *y)));
        }
        return res;
    }
    let mut res = Vec::with_capacity(out.rows * out.cols);
    for i in 0..out.rows {
        for j in 0..out.cols {
            res.push(f(bget(a, ad, i, j), bget(b, bd, i, j)));
        }
    }
    res
}

/// Sum `g` (laid out as `out`) down to an operand's dims.
pub(crate) fn reduce_to<T: Scalar>(g: &[T], out: Dims2, target: Dims2) -> Vec<T> {
    if target == out {
        return g.to_vec();
    }
    let mut acc = vec![T::zero(); target.rows * target.cols];
    for i in 0..out.rows {
        let ti = if target.rows == 1 { 0 } else { i };
        for j in 0..out.cols {
            let tj = if target.cols == 1 { 0 } else { j };
            acc[ti * target.cols + tj] += g[i * out.cols + j];
        }
    }
    acc
}

fn binary_op<T: Scalar>(
    op: &'static str,
    tape: &Tape<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
    // per-element partials (df/da, df/db) as closures of (a, b)
    dfa: impl Fn(T, T) -> T + 'static,
    dfb: impl Fn(T, T) -> T + 'static,
) -> Result<Tensor<T>> {
    let ad = as_2d(op, a.shape())?;
    let bd = as_2d(op, b.shape())?;
    let out = broadcast_2d(op, ad, bd)?;
    let values = binary_forward(a.values(), ad, b.values(), bd, out, f);
    let shape = broadcast_out_shape(a.shape(), b.shape(), out);
    let rg = a.requires_grad() || b.requires_grad();
    let y = Tensor::new(values, shape, rg);
    if rg {
        let (a, b) = (a.clone(), b.clone());
        tape.record(op, &y, move |g, sink| {
            if a.requires_grad() {
                let full = weighted_grad(g, out, a.values(), ad, b.values(), bd, &dfa);
                sink.accumulate_owned(&a, reduce_to(&full, out, ad));
            }
            if b.requires_grad() {
                let full = weighted_grad(g, out, a.values(), ad, b.values(), bd, &dfb);
                sink.accumulate_owned(&b, reduce_to(&full, out, bd));
            }
        });
    }
    Ok(y)
}

fn weighted_grad<T: Scalar>(
    g: &[T],
    out: Dims2,
    a: &[T],
    ad: Dims2,
    b: &[T],
    bd: Dims2,
    df: &impl Fn(T, T) -> T,
) -> Vec<T> {
    let mut res = Vec::with_capacity(g.len());
    for i in 0..out.rows {
        for j in 0..out.cols {
            let w = df(bget(a, ad, i, j), bget(b, bd, i, j));
            res.push(g[i * out.cols + j] * w);
        }
    }
    res
}

pub fn add<T: Scalar>(tape: &Tape<T>, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary_op(
        "add",
        tape,
        a,
        b,
        |x, y| x + y,
        |_, _| T::one(),
        |_, _| T::one(),
    )
}

pub fn sub<T: Scalar>(tape: &Tape<T>, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary_op(
        "sub",
        tape,
        a,
        b,
        |x, y| x - y,
        |_, _| T::one(),
        |_, _| -T::one(),
    )
}

pub fn mul<T: Scalar>(tape: &Tape<T>, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary_op("mul", tape, a, b, |x, y| x * y, |_, y| y, |x, _| x)
}

/// Multiply by a compile-time-known constant.
pub fn scale<T: Scalar>(tape: &Tape<T>, a: &Tensor<T>, c: f64) -> Result<Tensor<T>> {
    mul(tape, a, &Tensor::scalar_value(T::cast(c)))
}

pub fn abs<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let values: Vec<T> = x.values().iter().map(|v| v.abs()).collect();
    let y = Tensor::new(values, x.shape().to_vec(), x.requires_grad());
    if y.requires_grad() {
        let x = x.clone();
        tape.record("abs", &y, move |g, sink| {
            let dx: Vec<T> = g
                .iter()
                .zip(x.values())
                .map(|(gi, xi)| {
                    if *xi > T::zero() {
                        *gi
                    } else if *xi < T::zero() {
                        -*gi
                    } else {
                        T::zero()
                    }
                })
                .collect();
            sink.accumulate_owned(&x, dx);
        });
    }
    Ok(y)
}

const GELU_C0: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C1: f64 = 0.044_715;

/// GELU with the tanh approximation.
pub fn gelu<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let c0 = T::cast(GELU_C0);
    let c1 = T::cast(GELU_C1);
    let half = T::cast(0.5);
    let values: Vec<T> = x
        .values()
        .iter()
        .map(|&v| {
            let u = c0 * (v + c1 * v * v * v);
            half * v * (T::one() + u.tanh())
        })
        .collect();
    let y = Tensor::new(values, x.shape().to_vec(), x.requires_grad());
    if y.requires_grad() {
        let x = x.clone();
        tape.record("gelu", &y, move |g, sink| {
            let three = T::cast(3.0);
            let dx: Vec<T> = g
                .iter()
                .zip(x.values())
                .map(|(gi, &v)| {
                    let u = c0 * (v + c1 * v * v * v);
                    let t = u.tanh();
                    let sech2 = T::one() - t * t;
                    let du = c0 * (T::one() + three * c1 * v * v);
                    let d = half * (T::one() + t) + half * v * sech2 * du;
                    *gi * d
                })
                .collect();
            sink.accumulate_owned(&x, dx);
        });
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t64(v: Vec<f64>, s: Vec<usize>) -> Tensor<f64> {
        Tensor::param(v, s)
    }

    #[test]
    fn gelu_at_zero_is_zero() {
        let tape = Tape::new();
        let x = t64(vec![0.0], vec![]);
        let y = gelu(&tape, &x).unwrap();
        assert_eq!(y.scalar().unwrap(), 0.0);
    }

    #[test]
    fn row_vector_broadcast() {
        let tape = Tape::new();
        let a = t64(vec![1.0, 2.0, 3.0, 4.0], vec![2, 2]);
        let b = t64(vec![10.0, 20.0], vec![2]);
        let y = add(&tape, &a, &b).unwrap();
        assert_eq!(y.values(), &[11.0, 22.0, 13.0, 24.0]);
        assert_eq!(y.shape(), &[2, 2]);
    }

    #[test]
    fn broadcast_grad_reduces() {
        // loss = sum(a * b) with b a row vector: db = column sums of a
        let tape = Tape::new();
        let a = Tensor::constant(vec![1.0, 2.0, 3.0, 4.0], vec![2, 2]);
        let b = t64(vec![1.0, 1.0], vec![2]);
        tape.watch(&b);
        let y = mul(&tape, &a, &b).unwrap();
        let loss = crate::autodiff::ops::sum(&tape, &y).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(b.grad().unwrap(), vec![4.0, 6.0]);
    }

    #[test]
    fn incompatible_shapes_error() {
        let tape = Tape::<f64>::new();
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 2]);
        assert!(add(&tape, &a, &b).is_err());
    }

    #[test]
    fn abs_subgradient_at_zero() {
        let tape = Tape::new();
        let x = t64(vec![-2.0, 0.0, 3.0], vec![3]);
        tape.watch(&x);
        let y = abs(&tape, &x).unwrap();
        let loss = crate::autodiff::ops::sum(&tape, &y).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![-1.0, 0.0, 1.0]);
    }
}

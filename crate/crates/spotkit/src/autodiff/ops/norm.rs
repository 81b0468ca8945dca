//! Normalizations, reductions, and row-wise cosine similarity.

use crate::autodiff::kernels;
use crate::autodiff::tape::Tape;
use crate::autodiff::tensor::{shape_string, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const COSINE_EPS: f64 = 1e-8;

fn rows_cols(op: &'static str, t: &Tensor<impl Scalar>) -> Result<(usize, usize)> {
    match t.shape() {
        [] => Err(Error::shape(op, "scalar input not supported".to_string())),
        [n] => Ok((1, *n)),
        [r, c] => Ok((*r, *c)),
        s => Err(Error::shape(
            op,
            format!("expected rank <= 2, got {}", shape_string(s)),
        )),
    }
}

/// Softmax over the last axis.
pub fn softmax<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, cols) = rows_cols("softmax", x)?;
    if cols == 0 {
        return Err(Error::shape("softmax", "empty last axis".to_string()));
    }
    let mut values = vec![T::zero(); rows * cols];
    for i in 0..rows {
        let xr = &x.values()[i * cols..(i + 1) * cols];
        let yr = &mut values[i * cols..(i + 1) * cols];
        let mut m = xr[0];
        for v in xr {
            if *v > m {
                m = *v;
            }
        }
        let mut z = T::zero();
        for (yv, xv) in yr.iter_mut().zip(xr) {
            let e = (*xv - m).exp();
            *yv = e;
            z += e;
        }
        let inv = T::one() / z;
        for yv in yr.iter_mut() {
            *yv = *yv * inv;
        }
    }
    let y = Tensor::new(values, x.shape().to_vec(), x.requires_grad());
    if y.requires_grad() {
        let x = x.clone();
        let y_saved = y.clone();
        tape.record("softmax", &y, move |g, sink| {
            let mut dx = vec![T::zero(); rows * cols];
            for i in 0..rows {
                let yr = &y_saved.values()[i * cols..(i + 1) * cols];
                let gr = &g[i * cols..(i + 1) * cols];
                let s = kernels::dot(gr, yr);
                for ((d, gv), yv) in dx[i * cols..(i + 1) * cols].iter_mut().zip(gr).zip(yr) {
                    *d = *yv * (*gv - s);
                }
            }
            sink.accumulate_owned(&x, dx);
        });
    }
    Ok(y)
}

/// Layer normalization over the last axis with learnable gain and bias.
pub fn layer_norm<T: Scalar>(
    tape: &Tape<T>,
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let (rows, cols) = rows_cols("layer_norm", x)?;
    if gamma.shape() != [cols] || beta.shape() != [cols] {
        return Err(Error::shape(
            "layer_norm",
            format!(
                "gamma {} / beta {} must be [{cols}]",
                shape_string(gamma.shape()),
                shape_string(beta.shape())
            ),
        ));
    }
    let epst = T::cast(eps);
    let inv_cols = T::one() / T::cast_usize(cols);
    let mut values = vec![T::zero(); rows * cols];
    let mut xhat = vec![T::zero(); rows * cols];
    let mut inv_std = vec![T::zero(); rows];
    for i in 0..rows {
        let xr = &x.values()[i * cols..(i + 1) * cols];
        let mut mu = T::zero();
        for v in xr {
            mu += *v;
        }
        mu = mu * inv_cols;
        let mut var = T::zero();
        for v in xr {
            let d = *v - mu;
            var += d * d;
        }
        var = var * inv_cols;
        let inv = T::one() / (var + epst).sqrt();
        inv_std[i] = inv;
        let xh = &mut xhat[i * cols..(i + 1) * cols];
        let yr = &mut values[i * cols..(i + 1) * cols];
        for ((h, yv), (xv, (gm, bt))) in xh
            .iter_mut()
            .zip(yr.iter_mut())
            .zip(xr.iter().zip(gamma.values().iter().zip(beta.values())))
        {
            *h = (*xv - mu) * inv;
            *yv = *gm * *h + *bt;
        }
    }
    let rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    let y = Tensor::new(values, x.shape().to_vec(), rg);
    if rg {
        let (x, gamma, beta) = (x.clone(), gamma.clone(), beta.clone());
        tape.record("layer_norm", &y, move |g, sink| {
            let mut dgamma = vec![T::zero(); cols];
            let mut dbeta = vec![T::zero(); cols];
            let mut dx = vec![T::zero(); rows * cols];
            for i in 0..rows {
                let gr = &g[i * cols..(i + 1) * cols];
                let xh = &xhat[i * cols..(i + 1) * cols];
                let inv = inv_std[i];
                let mut m1 = T::zero();
                let mut m2 = T::zero();
                for ((gv, h), gm) in gr.iter().zip(xh).zip(gamma.values()) {
                    let gh = *gv * *gm;
                    m1 += gh;
                    m2 += gh * *h;
                }
                m1 = m1 * inv_cols;
                m2 = m2 * inv_cols;
                for (((d, gv), h), gm) in dx[i * cols..(i + 1) * cols]
                    .iter_mut()
                    .zip(gr)
                    .zip(xh)
                    .zip(gamma.values())
                {
                    let gh = *gv * *gm;
                    *d = inv * (gh - m1 - *h * m2);
                }
                for ((dg, db), (gv, h)) in
                    dgamma.iter_mut().zip(dbeta.iter_mut()).zip(gr.iter().zip(xh))
                {
                    *dg += *gv * *h;
                    *db += *gv;
                }
            }
            sink.accumulate_owned(&x, dx);
            sink.accumulate_owned(&gamma, dgamma);
            sink.accumulate_owned(&beta, dbeta);
        });
    }
    Ok(y)
}

pub fn sum<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let mut s = T::zero();
    for v in x.values() {
        s += *v;
    }
    let y = Tensor::new(vec![s], vec![], x.requires_grad());
    if y.requires_grad() {
        let x = x.clone();
        tape.record("sum", &y, move |g, sink| {
            sink.accumulate_owned(&x, vec![g[0]; x.numel()]);
        });
    }
    Ok(y)
}

pub fn mean<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.numel() == 0 {
        return Err(Error::shape("mean", "empty tensor".to_string()));
    }
    let inv = T::one() / T::cast_usize(x.numel());
    let mut s = T::zero();
    for v in x.values() {
        s += *v;
    }
    let y = Tensor::new(vec![s * inv], vec![], x.requires_grad());
    if y.requires_grad() {
        let x = x.clone();
        tape.record("mean", &y, move |g, sink| {
            sink.accumulate_owned(&x, vec![g[0] * inv; x.numel()]);
        });
    }
    Ok(y)
}

/// Euclidean norm of all elements, as a scalar.
pub fn l2_norm<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let mut s = T::zero();
    for v in x.values() {
        s += *v * *v;
    }
    let n = s.sqrt();
    let y = Tensor::new(vec![n], vec![], x.requires_grad());
    if y.requires_grad() {
        let x = x.clone();
        tape.record("l2_norm", &y, move |g, sink| {
            let dx: Vec<T> = if n > T::zero() {
                x.values().iter().map(|v| g[0] * *v / n).collect()
            } else {
                vec![T::zero(); x.numel()]
            };
            sink.accumulate_owned(&x, dx);
        });
    }
    Ok(y)
}

fn norm_of<T: Scalar>(v: &[T]) -> T {
    let mut s = T::zero();
    for x in v {
        s += *x * *x;
    }
    s.sqrt()
}

/// Cosine similarity between corresponding rows of `a` and `b`, producing a
/// vector of length `t`. The denominator is clamped at `COSINE_EPS`.
pub fn cosine_sim_rows<T: Scalar>(
    tape: &Tape<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (ta, d) = rows_cols("cosine_sim", a)?;
    let (tb, db) = rows_cols("cosine_sim", b)?;
    if ta != tb || d != db {
        return Err(Error::shape(
            "cosine_sim",
            format!(
                "{} vs {}",
                shape_string(a.shape()),
                shape_string(b.shape())
            ),
        ));
    }
    let eps = T::cast(COSINE_EPS);
    let mut values = Vec::with_capacity(ta);
    for i in 0..ta {
        let ar = &a.values()[i * d..(i + 1) * d];
        let br = &b.values()[i * d..(i + 1) * d];
        let denom = (norm_of(ar) * norm_of(br)).max(eps);
        values.push(kernels::dot(ar, br) / denom);
    }
    let rg = a.requires_grad() || b.requires_grad();
    let y = Tensor::new(values, vec![ta], rg);
    if rg {
        let (a, b) = (a.clone(), b.clone());
        let y_saved = y.clone();
        tape.record("cosine_sim", &y, move |g, sink| {
            let mut da = vec![T::zero(); ta * d];
            let mut db_ = vec![T::zero(); ta * d];
            for i in 0..ta {
                let ar = &a.values()[i * d..(i + 1) * d];
                let br = &b.values()[i * d..(i + 1) * d];
                let na = norm_of(ar);
                let nb = norm_of(br);
                let gi = g[i];
                let prod = na * nb;
                if prod < eps {
                    // clamped branch: c = dot / eps
                    kernels::axpy(&mut da[i * d..(i + 1) * d], gi / eps, br);
                    kernels::axpy(&mut db_[i * d..(i + 1) * d], gi / eps, ar);
                } else {
                    let c = y_saved.values()[i];
                    let dar = &mut da[i * d..(i + 1) * d];
                    kernels::axpy(dar, gi / prod, br);
                    kernels::axpy(dar, -gi * c / (na * na), ar);
                    let dbr = &mut db_[i * d..(i + 1) * d];
                    kernels::axpy(dbr, gi / prod, ar);
                    kernels::axpy(dbr, -gi * c / (nb * nb), br);
                }
            }
            sink.accumulate_owned(&a, da);
            sink.accumulate_owned(&b, db_);
        });
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let tape = Tape::new();
        let x = Tensor::<f64>::constant(vec![0.0, 0.0, 0.0], vec![3]);
        let y = softmax(&tape, &x).unwrap();
        let third = 1.0 / 3.0;
        for v in y.values() {
            assert!((v - third).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let tape = Tape::new();
        let x = Tensor::<f64>::constant(vec![1.0, -3.0, 0.5, 100.0, 99.0, 98.0], vec![2, 3]);
        let y = softmax(&tape, &x).unwrap();
        for i in 0..2 {
            let s: f64 = y.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(y.row(i).iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn sum_of_softmax_has_zero_grad() {
        let tape = Tape::new();
        let x = Tensor::<f64>::param(vec![0.3, -1.0, 2.0, 0.7], vec![4]);
        tape.watch(&x);
        let y = softmax(&tape, &x).unwrap();
        let loss = sum(&tape, &y).unwrap();
        tape.backward(&loss).unwrap();
        for g in x.grad().unwrap() {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_identical_rows_is_one() {
        let tape = Tape::new();
        let a = Tensor::<f64>::constant(vec![1.0, 2.0, 3.0, -1.0], vec![2, 2]);
        let y = cosine_sim_rows(&tape, &a, &a).unwrap();
        for v in y.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_orthogonal_rows_is_zero() {
        let tape = Tape::new();
        let a = Tensor::<f64>::constant(vec![1.0, 0.0], vec![1, 2]);
        let b = Tensor::<f64>::constant(vec![0.0, 5.0], vec![1, 2]);
        let y = cosine_sim_rows(&tape, &a, &b).unwrap();
        assert_eq!(y.values(), &[0.0]);
    }

    #[test]
    fn cosine_scale_invariant_above_eps() {
        let tape = Tape::<f64>::new();
        let a = Tensor::constant(vec![0.3, -0.2, 0.9], vec![1, 3]);
        let b = Tensor::constant(vec![0.1, 0.8, -0.4], vec![1, 3]);
        let base = cosine_sim_rows(&tape, &a, &b).unwrap().values()[0];
        for c in [0.001, 0.1, 7.5] {
            let bs = Tensor::constant(b.values().iter().map(|v| v * c).collect(), vec![1, 3]);
            let got = cosine_sim_rows(&tape, &a, &bs).unwrap().values()[0];
            assert!((got - base).abs() < 1e-6);
        }
    }

    #[test]
    fn layer_norm_normalizes_rows() {
        let tape = Tape::new();
        let x = Tensor::<f64>::constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![2, 3]);
        let gamma = Tensor::constant(vec![1.0; 3], vec![3]);
        let beta = Tensor::constant(vec![0.0; 3], vec![3]);
        let y = layer_norm(&tape, &x, &gamma, &beta, 1e-12).unwrap();
        for i in 0..2 {
            let row = y.row(i);
            let mu: f64 = row.iter().sum::<f64>() / 3.0;
            let var: f64 = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 3.0;
            assert!(mu.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn l2_norm_value() {
        let tape = Tape::new();
        let x = Tensor::<f64>::constant(vec![3.0, 4.0], vec![2]);
        let y = l2_norm(&tape, &x).unwrap();
        assert_eq!(y.scalar().unwrap(), 5.0);
    }
}

//! 1-D convolutions over (time, channel) matrices with same zero padding.

use crate::autodiff::kernels;
use crate::autodiff::tape::Tape;
use crate::autodiff::tensor::{shape_string, Tensor};
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

/// Depthwise conv: each channel convolved with its own length-`k` filter.
/// `w` is tap-major `[k, d]`; odd `k`, same zero padding.
pub fn conv1d_depthwise<T: Scalar>(
    tape: &Tape<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (t_len, d) = dims2("conv1d_depthwise", x)?;
    let (k, dw) = dims2("conv1d_depthwise", w)?;
    if dw != d {
        return Err(Error::shape(
            "conv1d_depthwise",
            format!("weight channels {dw} != input channels {d}"),
        ));
    }
    if k % 2 == 0 {
        return Err(Error::shape(
            "conv1d_depthwise",
            format!("kernel size must be odd, got {k}"),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [d] {
            return Err(Error::shape(
                "conv1d_depthwise",
                format!("bias {} must be [{d}]", shape_string(b.shape())),
            ));
        }
    }
    let off = k / 2;
    let mut values = vec![T::zero(); t_len * d];
    if let Some(b) = bias {
        for t in 0..t_len {
            values[t * d..(t + 1) * d].copy_from_slice(b.values());
        }
    }
    for j in 0..k {
        let wrow = &w.values()[j * d..(j + 1) * d];
        for t in 0..t_len {
            let src = t as isize + j as isize - off as isize;
            if src < 0 || src >= t_len as isize {
                continue;
            }
            let xr = &x.values()[src as usize * d..(src as usize + 1) * d];
            let yr = &mut values[t * d..(t + 1) * d];
            for ((yv, xv), wv) in yr.iter_mut().zip(xr).zip(wrow) {
                *yv = *yv + *xv * *wv;
            }
        }
    }
    let rg =
        x.requires_grad() || w.requires_grad() || bias.map(|b| b.requires_grad()).unwrap_or(false);
    let y = Tensor::new(values, vec![t_len, d], rg);
    if rg {
        let x = x.clone();
        let w = w.clone();
        let bias = bias.cloned();
        tape.record("conv1d_depthwise", &y, move |g, sink| {
            let mut dx = vec![T::zero(); t_len * d];
            let mut dwv = vec![T::zero(); k * d];
            for j in 0..k {
                let wrow = &w.values()[j * d..(j + 1) * d];
                let dwrow_start = j * d;
                for t in 0..t_len {
                    let src = t as isize + j as isize - off as isize;
                    if src < 0 || src >= t_len as isize {
                        continue;
                    }
                    let s = src as usize;
                    let gr = &g[t * d..(t + 1) * d];
                    let xr = &x.values()[s * d..(s + 1) * d];
                    for (((dxv, gv), wv), (dwv_, xv)) in dx[s * d..(s + 1) * d]
                        .iter_mut()
                        .zip(gr)
                        .zip(wrow)
                        .zip(dwv[dwrow_start..dwrow_start + d].iter_mut().zip(xr))
                    {
                        *dxv = *dxv + *gv * *wv;
                        *dwv_ = *dwv_ + *gv * *xv;
                    }
                }
            }
            sink.accumulate_owned(&x, dx);
            sink.accumulate_owned(&w, dwv);
            if let Some(b) = &bias {
                let mut db = vec![T::zero(); d];
                for t in 0..t_len {
                    for (dbv, gv) in db.iter_mut().zip(&g[t * d..(t + 1) * d]) {
                        *dbv += *gv;
                    }
                }
                sink.accumulate_owned(b, db);
            }
        });
    }
    Ok(y)
}

/// Pointwise (kernel-1) conv: a per-frame linear map `y = x W + b`.
pub fn conv1d_pointwise<T: Scalar>(
    tape: &Tape<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (t_len, d_in) = dims2("conv1d_pointwise", x)?;
    let (dw_in, d_out) = dims2("conv1d_pointwise", w)?;
    if dw_in != d_in {
        return Err(Error::shape(
            "conv1d_pointwise",
            format!("weight rows {dw_in} != input channels {d_in}"),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [d_out] {
            return Err(Error::shape(
                "conv1d_pointwise",
                format!("bias {} must be [{d_out}]", shape_string(b.shape())),
            ));
        }
    }
    let mut values = vec![T::zero(); t_len * d_out];
    if let Some(b) = bias {
        for t in 0..t_len {
            values[t * d_out..(t + 1) * d_out].copy_from_slice(b.values());
        }
    }
    kernels::matmul_acc(&mut values, x.values(), w.values(), t_len, d_in, d_out);
    let rg =
        x.requires_grad() || w.requires_grad() || bias.map(|b| b.requires_grad()).unwrap_or(false);
    let y = Tensor::new(values, vec![t_len, d_out], rg);
    if rg {
        let x = x.clone();
        let w = w.clone();
        let bias = bias.cloned();
        tape.record("conv1d_pointwise", &y, move |g, sink| {
            if x.requires_grad() {
                sink.accumulate_owned(&x, kernels::matmul_nt(g, w.values(), t_len, d_out, d_in));
            }
            if w.requires_grad() {
                let mut dw = vec![T::zero(); d_in * d_out];
                kernels::matmul_tn_acc(&mut dw, x.values(), g, t_len, d_in, d_out);
                sink.accumulate_owned(&w, dw);
            }
            if let Some(b) = &bias {
                let mut db = vec![T::zero(); d_out];
                for t in 0..t_len {
                    for (dbv, gv) in db.iter_mut().zip(&g[t * d_out..(t + 1) * d_out]) {
                        *dbv += *gv;
                    }
                }
                sink.accumulate_owned(b, db);
            }
        });
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ops::sum;

    #[test]
    fn depthwise_identity_kernel() {
        let tape = Tape::new();
        let x = Tensor::<f64>::constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![3, 2]);
        // k=3 kernel with only the center tap set to 1
        let w = Tensor::constant(vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0], vec![3, 2]);
        let y = conv1d_depthwise(&tape, &x, &w, None).unwrap();
        assert_eq!(y.values(), x.values());
    }

    #[test]
    fn depthwise_zero_pads_edges() {
        let tape = Tape::new();
        let x = Tensor::<f64>::constant(vec![1.0, 1.0, 1.0], vec![3, 1]);
        // moving sum of 3 with zero padding: edges see only two samples
        let w = Tensor::constant(vec![1.0, 1.0, 1.0], vec![3, 1]);
        let y = conv1d_depthwise(&tape, &x, &w, None).unwrap();
        assert_eq!(y.values(), &[2.0, 3.0, 2.0]);
    }

    #[test]
    fn pointwise_is_per_frame_linear() {
        let tape = Tape::new();
        let x = Tensor::<f64>::constant(vec![1.0, 0.0, 0.0, 1.0], vec![2, 2]);
        let w = Tensor::constant(vec![2.0, 3.0, 4.0, 5.0], vec![2, 2]);
        let b = Tensor::constant(vec![0.5, -0.5], vec![2]);
        let y = conv1d_pointwise(&tape, &x, &w, Some(&b)).unwrap();
        assert_eq!(y.values(), &[2.5, 2.5, 4.5, 4.5]);
    }

    #[test]
    fn pointwise_bias_grad_is_row_count() {
        let tape = Tape::new();
        let x = Tensor::<f64>::constant(vec![0.0; 6], vec![3, 2]);
        let w = Tensor::constant(vec![0.0; 4], vec![2, 2]);
        let b = Tensor::param(vec![0.0, 0.0], vec![2]);
        tape.watch(&b);
        let y = conv1d_pointwise(&tape, &x, &w, Some(&b)).unwrap();
        let loss = sum(&tape, &y).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(b.grad().unwrap(), vec![3.0, 3.0]);
    }
}

//! Row gather/scatter. Scatter is the adjoint of gather, which gives both
//! ops exact gradients (and makes zero-padded shifts expressible).

use crate::autodiff::tape::Tape;
use crate::autodiff::tensor::{shape_string, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn row_layout(op: &'static str, t: &Tensor<impl Scalar>) -> Result<(usize, usize, bool)> {
    match t.shape() {
        [n] => Ok((*n, 1, true)),
        [r, c] => Ok((*r, *c, false)),
        s => Err(Error::shape(
            op,
            format!("expected rank 1 or 2, got {}", shape_string(s)),
        )),
    }
}

/// Select rows of `x` in the order given by `idx` (repeats allowed).
pub fn gather<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, idx: &[usize]) -> Result<Tensor<T>> {
    let (rows, cols, vector) = row_layout("gather", x)?;
    for &i in idx {
        if i >= rows {
            return Err(Error::shape(
                "gather",
                format!("index {i} out of range for {rows} rows"),
            ));
        }
    }
    let mut values = Vec::with_capacity(idx.len() * cols);
    for &i in idx {
        values.extend_from_slice(&x.values()[i * cols..(i + 1) * cols]);
    }
    let shape = if vector {
        vec![idx.len()]
    } else {
        vec![idx.len(), cols]
    };
    let y = Tensor::new(values, shape, x.requires_grad());
    if y.requires_grad() {
        let x = x.clone();
        let idx = idx.to_vec();
        tape.record("gather", &y, move |g, sink| {
            let mut dx = vec![T::zero(); rows * cols];
            for (r, &i) in idx.iter().enumerate() {
                let src = &g[r * cols..(r + 1) * cols];
                for (d, s) in dx[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                    *d += *s;
                }
            }
            sink.accumulate_owned(&x, dx);
        });
    }
    Ok(y)
}

/// Place the rows of `x` at positions `idx` in a zero-initialized output of
/// `out_rows` rows; repeated indices accumulate.
pub fn scatter<T: Scalar>(
    tape: &Tape<T>,
    x: &Tensor<T>,
    idx: &[usize],
    out_rows: usize,
) -> Result<Tensor<T>> {
    let (rows, cols, vector) = row_layout("scatter", x)?;
    if rows != idx.len() {
        return Err(Error::shape(
            "scatter",
            format!("{rows} input rows but {} indices", idx.len()),
        ));
    }
    for &i in idx {
        if i >= out_rows {
            return Err(Error::shape(
                "scatter",
                format!("index {i} out of range for {out_rows} output rows"),
            ));
        }
    }
    let mut values = vec![T::zero(); out_rows * cols];
    for (r, &i) in idx.iter().enumerate() {
        let src = &x.values()[r * cols..(r + 1) * cols];
        for (d, s) in values[i * cols..(i + 1) * cols].iter_mut().zip(src) {
            *d += *s;
        }
    }
    let shape = if vector {
        vec![out_rows]
    } else {
        vec![out_rows, cols]
    };
    let y = Tensor::new(values, shape, x.requires_grad());
    if y.requires_grad() {
        let x = x.clone();
        let idx = idx.to_vec();
        tape.record("scatter", &y, move |g, sink| {
            let mut dx = Vec::with_capacity(rows * cols);
            for &i in &idx {
                dx.extend_from_slice(&g[i * cols..(i + 1) * cols]);
            }
            sink.accumulate_owned(&x, dx);
        });
    }
    Ok(y)
}

//! The op catalog.
//!
//! Every differentiable operation in the crate goes through this module:
//! typed functions for normal use, plus [`forward_op`] for name-based
//! dispatch (used by the gradient-check suite to enumerate the catalog).

mod conv;
mod elementwise;
mod index;
mod linear;
mod norm;

pub use conv::{conv1d_depthwise, conv1d_pointwise};
pub use elementwise::{abs, add, gelu, mul, scale, sub};
pub use index::{gather, scatter};
pub use linear::{detached_linear, matmul, reshape, transpose};
pub use norm::{cosine_sim_rows, l2_norm, layer_norm, mean, softmax, sum, COSINE_EPS};

use crate::autodiff::tape::Tape;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Names accepted by [`forward_op`].
pub const CATALOG: &[&str] = &[
    "matmul",
    "add",
    "sub",
    "mul",
    "transpose",
    "reshape",
    "gather",
    "scatter",
    "softmax",
    "layer_norm",
    "gelu",
    "conv1d_depthwise",
    "conv1d_pointwise",
    "mean",
    "sum",
    "l2_norm",
    "cosine_similarity",
    "detached_linear",
    "abs",
];

/// Attributes for ops that need more than tensor inputs.
#[derive(Debug, Clone, Default)]
pub struct OpAttrs {
    pub shape: Option<Vec<usize>>,
    pub indices: Option<Vec<usize>>,
    pub out_rows: Option<usize>,
    pub eps: Option<f64>,
    pub scale: Option<f64>,
}

fn arg<'a, T: Scalar>(
    op: &str,
    inputs: &'a [&Tensor<T>],
    i: usize,
) -> Result<&'a Tensor<T>> {
    inputs
        .get(i)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("{op}: missing input {i}")))
}

/// Apply a catalog op by name. Unknown names are an error.
pub fn forward_op<T: Scalar>(
    tape: &Tape<T>,
    name: &str,
    inputs: &[&Tensor<T>],
    attrs: &OpAttrs,
) -> Result<Tensor<T>> {
    match name {
        "matmul" => matmul(tape, arg(name, inputs, 0)?, arg(name, inputs, 1)?),
        "add" => add(tape, arg(name, inputs, 0)?, arg(name, inputs, 1)?),
        "sub" => sub(tape, arg(name, inputs, 0)?, arg(name, inputs, 1)?),
        "mul" => mul(tape, arg(name, inputs, 0)?, arg(name, inputs, 1)?),
        "transpose" => transpose(tape, arg(name, inputs, 0)?),
        "reshape" => {
            let shape = attrs
                .shape
                .clone()
                .ok_or_else(|| Error::InvalidArgument("reshape: missing shape attr".into()))?;
            reshape(tape, arg(name, inputs, 0)?, shape)
        }
        "gather" => {
            let idx = attrs
                .indices
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("gather: missing indices attr".into()))?;
            gather(tape, arg(name, inputs, 0)?, idx)
        }
        "scatter" => {
            let idx = attrs
                .indices
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("scatter: missing indices attr".into()))?;
            let rows = attrs
                .out_rows
                .ok_or_else(|| Error::InvalidArgument("scatter: missing out_rows attr".into()))?;
            scatter(tape, arg(name, inputs, 0)?, idx, rows)
        }
        "softmax" => softmax(tape, arg(name, inputs, 0)?),
        "layer_norm" => layer_norm(
            tape,
            arg(name, inputs, 0)?,
            arg(name, inputs, 1)?,
            arg(name, inputs, 2)?,
            attrs.eps.unwrap_or(LAYER_NORM_EPS),
        ),
        "gelu" => gelu(tape, arg(name, inputs, 0)?),
        "conv1d_depthwise" => conv1d_depthwise(
            tape,
            arg(name, inputs, 0)?,
            arg(name, inputs, 1)?,
            inputs.get(2).copied(),
        ),
        "conv1d_pointwise" => conv1d_pointwise(
            tape,
            arg(name, inputs, 0)?,
            arg(name, inputs, 1)?,
            inputs.get(2).copied(),
        ),
        "mean" => mean(tape, arg(name, inputs, 0)?),
        "sum" => sum(tape, arg(name, inputs, 0)?),
        "l2_norm" => l2_norm(tape, arg(name, inputs, 0)?),
        "cosine_similarity" => cosine_sim_rows(tape, arg(name, inputs, 0)?, arg(name, inputs, 1)?),
        "detached_linear" => {
            let s = T::cast(attrs.scale.unwrap_or(1.0));
            detached_linear(tape, arg(name, inputs, 0)?, arg(name, inputs, 1)?, s)
        }
        "abs" => abs(tape, arg(name, inputs, 0)?),
        _ => Err(Error::UnknownOp(name.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_op_is_an_error() {
        let tape = Tape::<f64>::new();
        let x = Tensor::zeros(vec![2]);
        let err = forward_op(&tape, "frobnicate", &[&x], &OpAttrs::default()).unwrap_err();
        assert!(matches!(err, Error::UnknownOp(_)));
    }

    #[test]
    fn dispatch_matches_typed_call() {
        let tape = Tape::<f64>::new();
        let a = Tensor::constant(vec![1.0, 2.0], vec![2]);
        let b = Tensor::constant(vec![3.0, 4.0], vec![2]);
        let via_name = forward_op(&tape, "add", &[&a, &b], &OpAttrs::default()).unwrap();
        let direct = add(&tape, &a, &b).unwrap();
        assert_eq!(via_name.values(), direct.values());
    }

    #[test]
    fn catalog_names_all_dispatch() {
        // Every catalog name must reach its implementation (not UnknownOp).
        let tape = Tape::<f64>::new();
        let x = Tensor::zeros(vec![2, 2]);
        for name in CATALOG {
            let err = forward_op(&tape, name, &[], &OpAttrs::default());
            if let Err(Error::UnknownOp(_)) = err {
                panic!("catalog op {name} not dispatched");
            }
            let _ = forward_op(&tape, name, &[&x, &x, &x], &OpAttrs::default());
        }
    }
}

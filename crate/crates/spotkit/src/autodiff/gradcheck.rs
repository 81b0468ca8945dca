//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tape::Tape;
use super::tensor::Tensor;

/// Result of comparing an analytic gradient against central differences.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub rel_err: Vec<f64>,
    pub max_rel_err: f64,
}

impl CheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Relative error with a floor so near-zero gradient pairs compare on
/// absolute terms.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Check the gradient of a scalar-valued `f` at `x` against central finite
/// differences with per-element step `eps * max(1, |x_i|)`.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, eps: f64) -> Result<CheckReport>
where
    T: Scalar,
    F: Fn(&Tape<T>, &Tensor<T>) -> Result<Tensor<T>>,
{
    if eps <= 0.0 {
        return Err(Error::InvalidArgument("grad_check: eps must be > 0".into()));
    }
    if !x.is_finite() {
        return Err(Error::InvalidArgument(
            "grad_check: input must be finite".into(),
        ));
    }

    // Analytic pass on a checking tape (reports the op on non-finite values).
    let tape = Tape::with_finite_checks();
    let leaf = Tensor::param(x.values().to_vec(), x.shape().to_vec());
    tape.watch(&leaf);
    let loss = f(&tape, &leaf)?;
    let loss_v = loss.scalar()?;
    if !loss_v.is_finite() {
        return Err(Error::NonFinite {
            op: tape.poisoned_op().unwrap_or("grad_check"),
            detail: "non-finite intermediate value".to_string(),
        });
    }
    tape.backward(&loss)?;
    let analytic: Vec<f64> = leaf
        .grad()
        .expect("watched leaf has grad")
        .iter()
        .map(|v| v.to_f64c())
        .collect();

    // Central differences on grad-free evaluations.
    let eval = |values: Vec<T>| -> Result<f64> {
        let t = Tape::new();
        let probe = Tensor::constant(values, x.shape().to_vec());
        let out = f(&t, &probe)?;
        Ok(out.scalar()?.to_f64c())
    };
    let base = x.values().to_vec();
    let mut numeric = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let xi = base[i].to_f64c();
        let h = eps * xi.abs().max(1.0);
        let mut plus = base.clone();
        plus[i] = T::cast(xi + h);
        let mut minus = base.clone();
        minus[i] = T::cast(xi - h);
        let fp = eval(plus)?;
        let fm = eval(minus)?;
        numeric.push((fp - fm) / (2.0 * h));
    }

    let rel: Vec<f64> = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| rel_err(*a, *n))
        .collect();
    let max_rel_err = rel.iter().cloned().fold(0.0, f64::max);
    Ok(CheckReport {
        analytic,
        numeric,
        rel_err: rel,
        max_rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ops;

    #[test]
    fn softmax_sum_gradient_is_zero() {
        let x = Tensor::<f64>::constant(vec![0.4, -1.2, 0.7, 2.0], vec![4]);
        let report = grad_check(
            |tape, x| {
                let y = ops::softmax(tape, x)?;
                ops::sum(tape, &y)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(report.passes(1e-4), "max rel err {}", report.max_rel_err);
        for a in &report.analytic {
            assert!(a.abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_gradient_matches() {
        let x = Tensor::<f64>::constant(vec![1.5, -0.3, 2.0], vec![3]);
        let report = grad_check(
            |tape, x| {
                let y = ops::mul(tape, x, x)?;
                ops::sum(tape, &y)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(report.passes(1e-6), "max rel err {}", report.max_rel_err);
        assert!((report.analytic[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_loss_reports_op() {
        let x = Tensor::<f64>::constant(vec![0.0], vec![1]);
        let err = grad_check(
            |tape, x| {
                // 1/x at 0 -> inf: realized as x^-1 via l2_norm trick is
                // awkward, so synthesize a non-finite constant directly.
                let bad = Tensor::constant(vec![f64::INFINITY], vec![1]);
                let y = ops::mul(tape, x, &bad)?;
                ops::sum(tape, &y)
            },
            &x,
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }
}

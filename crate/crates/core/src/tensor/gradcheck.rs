use super::{Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `max_i |analytic_i - numeric_i| / max(1, |numeric_i|)`.
    pub max_rel_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the tape gradient of a scalar function against central finite
/// differences, one coordinate of `x` at a time.
///
/// `f` receives a fresh tape and the leaf holding `x`, and must return a
/// one-element loss. Any other tensors it needs should be added as constants.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, eps: f64) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let loss = f(&mut tape, xv)?;
    tape.backward(loss)?;
    let analytic = tape
        .grad(xv)
        .map(|g| g.to_f64_vec())
        .unwrap_or_else(|| vec![0.0; x.len()]);

    let eval = |probe: Tensor<T>| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(probe);
        let loss = f(&mut tape, v)?;
        let out = tape.value(loss);
        if out.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "grad_check needs a scalar function, got shape {:?}",
                out.shape()
            )));
        }
        Ok(out.data()[0].as_f64())
    };

    let mut numeric = Vec::with_capacity(x.len());
    let mut max_rel_error: f64 = 0.0;
    for i in 0..x.len() {
        let base = x.data()[i].as_f64();
        let mut plus = x.clone();
        plus.data_mut()[i] = T::from_f64(base + eps);
        let mut minus = x.clone();
        minus.data_mut()[i] = T::from_f64(base - eps);
        let n = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let rel = (analytic[i] - n).abs() / n.abs().max(1.0);
        max_rel_error = max_rel_error.max(rel);
        numeric.push(n);
    }
    Ok(GradCheckReport {
        max_rel_error,
        analytic,
        numeric,
    })
}

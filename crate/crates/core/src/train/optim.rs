use super::config::AdamConfig;
use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor};
use crate::viewnet::ParamMap;

/// Clamps every gradient entry into `[lo, hi]`.
pub fn clip_gradients<T: Scalar>(grads: &mut ParamMap<T>, range: (f64, f64)) {
    let (lo, hi) = (T::from_f64(range.0), T::from_f64(range.1));
    for g in grads.values_mut() {
        for v in g.data_mut() {
            *v = v.max(lo).min(hi);
        }
    }
}

/// First and second moment estimates plus the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub m: ParamMap<T>,
    pub v: ParamMap<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments shaped like `params`.
    pub fn new(params: &ParamMap<T>) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(k, p)| (k.clone(), Tensor::zeros(p.shape()).expect("existing shape")))
                .collect()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

fn check_shapes<T: Scalar>(params: &ParamMap<T>, other: &ParamMap<T>, what: &str) -> Result<()> {
    if params.len() != other.len() {
        return Err(shape_err!(
            "{what} holds {} tensors, parameters {}",
            other.len(),
            params.len()
        ));
    }
    for (name, p) in params {
        match other.get(name) {
            Some(t) if t.shape() == p.shape() => {}
            Some(t) => {
                return Err(shape_err!(
                    "{what} `{name}` has shape {:?}, parameter {:?}",
                    t.shape(),
                    p.shape()
                ))
            }
            None => return Err(shape_err!("{what} has no entry for `{name}`")),
        }
    }
    Ok(())
}

/// One bias-corrected Adam update of every parameter. Nothing is modified
/// unless all shapes agree.
pub fn adam_step<T: Scalar>(
    params: &mut ParamMap<T>,
    grads: &ParamMap<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    check_shapes(params, grads, "gradient")?;
    check_shapes(params, &state.m, "first moment")?;
    check_shapes(params, &state.v, "second moment")?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (name, p) in params.iter_mut() {
        let g = grads[name].data();
        let m = state.m.get_mut(name).expect("checked").data_mut();
        let v = state.v.get_mut(name).expect("checked").data_mut();
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            let gi = g[i].as_f64();
            let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
            let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
            m[i] = T::from_f64(mi);
            v[i] = T::from_f64(vi);
            let update = cfg.learning_rate * (mi / c1) / ((vi / c2).sqrt() + cfg.epsilon);
            *w = T::from_f64(w.as_f64() - update);
        }
    }
    Ok(())
}

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Hyper-parameters of one momentum-SGD update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdHyper {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight decay {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// In-place update:
///
/// ```text
/// v' = momentum * v + (grad + 2 * weight_decay * param)
/// param' = param - lr * v'
/// ```
///
/// Nothing is written unless every input is finite.
pub fn sgd_momentum_update<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    velocity: &mut [T],
    hp: &SgdHyper,
) -> Result<()> {
    hp.validate()?;
    if param.len() != grad.len() || param.len() != velocity.len() {
        return Err(Error::shape(
            "sgd_momentum_step",
            format!(
                "param {}, grad {}, velocity {}",
                param.len(),
                grad.len(),
                velocity.len()
            ),
        ));
    }
    let finite = |s: &[T]| s.iter().all(|v| v.is_finite());
    if !finite(param) || !finite(grad) || !finite(velocity) {
        return Err(Error::NonFinite {
            op: "sgd_momentum_step",
        });
    }
    let lr = T::from_f64(hp.lr);
    let mu = T::from_f64(hp.momentum);
    let decay = T::from_f64(2.0 * hp.weight_decay);
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = mu * *v + (g + decay * *p);
        *p = *p - lr * *v;
    }
    Ok(())
}

/// Pure form of [`sgd_momentum_update`], returning `(param', velocity')`.
pub fn sgd_momentum_step<T: Scalar>(
    param: &Tensor<T>,
    grad: &Tensor<T>,
    velocity: &Tensor<T>,
    hp: &SgdHyper,
) -> Result<(Tensor<T>, Tensor<T>)> {
    grad.expect_shape("sgd_momentum_step", param.shape())?;
    velocity.expect_shape("sgd_momentum_step", param.shape())?;
    let mut p = param.clone();
    let mut v = velocity.clone();
    sgd_momentum_update(p.data_mut(), grad.data(), v.data_mut(), hp)?;
    Ok((p, v))
}

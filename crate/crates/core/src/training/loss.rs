use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Weight of the intermediate-feature penalty.
    pub lambda1: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda1: 1e-4 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda1 = {}", self.lambda1)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub data_term: f64,
    pub reg_term: f64,
    pub total: f64,
}

/// Per-pixel squared error averaged over the batch, plus
/// `lambda1 * sum_l ||F_l||^2 / numel(F_l)` over the given feature maps.
pub fn total_loss<T: Scalar>(
    reconstruction: &Tensor<T>,
    ground_truth: &Tensor<T>,
    intermediate_features: &[Tensor<T>],
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    ground_truth.expect_shape("total_loss", reconstruction.shape())?;
    let sq_err: f64 = reconstruction
        .data()
        .iter()
        .zip(ground_truth.data())
        .map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum();
    let data_term = if reconstruction.is_empty() {
        0.0
    } else {
        sq_err / reconstruction.len() as f64
    };
    let reg_term = cfg.lambda1
        * intermediate_features
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| f.squared_norm() / f.len() as f64)
            .sum::<f64>();
    Ok(LossBreakdown {
        data_term,
        reg_term,
        total: data_term + reg_term,
    })
}

/// Gradient of the data term with respect to the reconstruction.
pub(crate) fn data_term_gradient<T: Scalar>(
    reconstruction: &Tensor<T>,
    ground_truth: &Tensor<T>,
) -> Result<Tensor<T>> {
    let k = T::from_f64(2.0 / reconstruction.len().max(1) as f64);
    reconstruction.zip_map(ground_truth, "total_loss", |a, b| k * (a - b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Shape;

    #[test]
    fn loss_examples() {
        let cfg = LossConfig::default();
        let x = Tensor::<f64>::full(Shape::new(2, 1, 3, 3), 0.4);
        let zeros = vec![Tensor::<f64>::zeros(Shape::new(2, 4, 3, 3))];
        assert_eq!(total_loss(&x, &x, &zeros, &cfg).unwrap().total, 0.0);

        let a = Tensor::<f64>::full(Shape::new(1, 1, 1, 1), 0.75);
        let b = Tensor::<f64>::full(Shape::new(1, 1, 1, 1), 0.5);
        let no_reg = LossConfig { lambda1: 0.0 };
        let l = total_loss(&a, &b, &[], &no_reg).unwrap();
        assert_eq!(l.total, 0.0625);

        let feats = vec![Tensor::<f64>::full(Shape::new(1, 2, 2, 2), 3.0)];
        let l = total_loss(&a, &b, &feats, &no_reg).unwrap();
        assert_eq!((l.reg_term, l.total), (0.0, l.data_term));
        let l = total_loss(&a, &b, &feats, &LossConfig { lambda1: 0.5 }).unwrap();
        assert_eq!(l.reg_term, 4.5);
    }

    #[test]
    fn data_term_is_mean_over_batch_of_per_pixel_error() {
        let a = Tensor::<f64>::from_vec(Shape::new(2, 1, 1, 2), vec![1.0, 1.0, 0.0, 2.0]).unwrap();
        let b = Tensor::<f64>::zeros(a.shape());
        let l = total_loss(&a, &b, &[], &LossConfig { lambda1: 0.0 }).unwrap();
        // item 0: (1+1)/2 = 1, item 1: (0+4)/2 = 2, mean 1.5
        assert_eq!(l.data_term, 1.5);
    }

    #[test]
    fn shape_mismatch_and_bad_lambda() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 1, 2, 2));
        let b = Tensor::<f32>::zeros(Shape::new(1, 1, 2, 3));
        assert!(total_loss(&a, &b, &[], &LossConfig::default()).is_err());
        assert!(total_loss(&a, &a, &[], &LossConfig { lambda1: -1.0 }).is_err());
    }
}

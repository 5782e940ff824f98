use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

/// Gradient through a ReLU given its output (positive exactly where the
/// unit was active).
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    output.zip_map(grad_out, "relu_backward", |y, g| {
        if y > T::zero() {
            g
        } else {
            T::zero()
        }
    })
}

fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Logistic sigmoid. In `f32` it rounds to exactly 0 or 1 once |x| exceeds
/// about 17.
pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(sigmoid_scalar)
}

pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    output.zip_map(grad_out, "sigmoid_backward", |y, g| g * y * (T::one() - y))
}

pub fn hadamard<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, "hadamard", |x, y| x * y)
}

fn doubled(s: Shape) -> Shape {
    s.with_spatial(s.h * 2, s.w * 2)
}

fn halved(op: &'static str, s: Shape) -> Result<Shape> {
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::shape(op, format!("odd spatial size {}x{}", s.h, s.w)));
    }
    Ok(s.with_spatial(s.h / 2, s.w / 2))
}

/// 2x nearest-neighbour upsampling.
pub fn upsample_nearest2x<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.shape();
    Tensor::from_fn(doubled(s), |n, c, y, x| input.get(n, c, y / 2, x / 2))
}

pub fn upsample_nearest2x_backward<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let s = halved("upsample_nearest2x_backward", grad_out.shape())?;
    Ok(Tensor::from_fn(s, |n, c, y, x| {
        let (y2, x2) = (2 * y, 2 * x);
        grad_out.get(n, c, y2, x2)
            + grad_out.get(n, c, y2, x2 + 1)
            + grad_out.get(n, c, y2 + 1, x2)
            + grad_out.get(n, c, y2 + 1, x2 + 1)
    }))
}

/// Uniform 2x2 spreading: every output cell receives a quarter of its source
/// value (the "average up-pooling" decoder variant).
pub fn spread2x2<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let q = T::from_f64(0.25);
    let s = input.shape();
    Tensor::from_fn(doubled(s), |n, c, y, x| input.get(n, c, y / 2, x / 2) * q)
}

pub fn spread2x2_backward<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let q = T::from_f64(0.25);
    Ok(upsample_nearest2x_backward(grad_out)?.map(|v| v * q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(1, 1, 1, v.len()), v.to_vec()).unwrap()
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(relu(&row(&[-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(sigmoid(&row(&[0.0])).data(), &[0.5]);
        assert_eq!(hadamard(&row(&[2.0, 3.0]), &row(&[4.0, 5.0])).unwrap().data(), &[8.0, 15.0]);
        assert!(hadamard(&row(&[2.0, 3.0]), &row(&[4.0])).is_err());
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let y = sigmoid(&row(&[-800.0, 800.0]));
        assert_eq!(y.data(), &[0.0, 1.0]);
    }

    #[test]
    fn spread_conserves_mass() {
        let x = Tensor::<f64>::from_fn(Shape::new(1, 2, 2, 3), |_, c, y, x| (c * 6 + y * 3 + x) as f64);
        let s = spread2x2(&x);
        assert_eq!(s.shape(), Shape::new(1, 2, 4, 6));
        assert!((s.sum() - x.sum()).abs() < 1e-12);
        let u = upsample_nearest2x(&x);
        assert_eq!(u.get(0, 1, 3, 5), x.get(0, 1, 1, 2));
    }
}

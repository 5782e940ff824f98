use std::fmt::Debug;

use num_traits::Float;

/// Element type of a [`Tensor`](super::Tensor). Training runs in `f32`;
/// gradient checks run in `f64`.
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c = a·b (+ c)` on row-major buffers, with `a` stored as (m, k) or,
    /// when `a_t` is set, as (k, m). Likewise `b` as (k, n) or (n, k).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_t: bool,
        b: &[Self],
        b_t: bool,
        c: &mut [Self],
        accumulate: bool,
    ) {
        Self::gemm_strided(
            m,
            k,
            n,
            a,
            strides(m, k, a_t),
            b,
            strides(k, n, b_t),
            c,
            n,
            accumulate,
        );
    }

    /// General form of [`gemm`](Scalar::gemm): `a` and `b` are addressed
    /// through (row, column) strides and `c` has row stride `ldc`.
    #[allow(clippy::too_many_arguments)]
    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        c: &mut [Self],
        ldc: usize,
        accumulate: bool,
    );
}

/// Largest index touched by a rows×cols view with the given strides, plus one.
fn extent(rows: usize, cols: usize, (rs, cs): (usize, usize)) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

fn strides(rows: usize, cols: usize, transposed: bool) -> (usize, usize) {
    if transposed {
        (1, rows)
    } else {
        (cols, 1)
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm_strided(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                (rsa, csa): (usize, usize),
                b: &[Self],
                (rsb, csb): (usize, usize),
                c: &mut [Self],
                ldc: usize,
                accumulate: bool,
            ) {
                assert!(a.len() >= extent(m, k, (rsa, csa)));
                assert!(b.len() >= extent(k, n, (rsb, csb)));
                assert!(c.len() >= extent(m, n, (ldc, 1)));
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    if !accumulate {
                        for row in 0..m {
                            c[row * ldc..row * ldc + n].fill(0.0);
                        }
                    }
                    return;
                }
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: the assertions above guarantee every index reachable
                // through these dimensions and strides is in bounds.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        ldc as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2,3],[4,5,6]], b = [[1,0],[0,1],[1,1]]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 3, 2, &a, false, &b, false, &mut c, false);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);

        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let bt = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let mut c2 = [1.0f64; 4];
        f64::gemm(2, 3, 2, &at, true, &bt, true, &mut c2, true);
        assert_eq!(c2, [5.0, 6.0, 11.0, 12.0]);
    }

    #[test]
    fn strided_output_block() {
        // write a 2x2 product into columns 1..3 of a 2x4 buffer
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 1.0, 0.0, 1.0];
        let mut c = [9.0f32; 8];
        f32::gemm_strided(2, 2, 2, &a, (2, 1), &b, (2, 1), &mut c[1..], 4, false);
        assert_eq!(c, [9.0, 1.0, 3.0, 9.0, 9.0, 3.0, 7.0, 9.0]);
    }
}

//! Floating point scalar abstraction shared by the tensor engine, the
//! scale-space operators and the networks.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// f32 or f64.
///
/// Besides the usual float arithmetic this carries a dense matrix product,
/// which is where almost all of the convolution and dense-layer time goes.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Bit width, 32 or 64.
    const BITS: u32;

    /// `c = alpha * a * b + beta * c` for strided row/column-major views.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`. Strides are in
    /// elements.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );

    fn from_f64_lossy(v: f64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

fn check_extent(len: usize, rows: usize, cols: usize, (rs, cs): (isize, isize)) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    assert!(
        rs >= 0 && cs >= 0 && (last as usize) < len,
        "gemm operand out of bounds"
    );
}

macro_rules! impl_real {
    ($t:ty, $bits:expr, $gemm:path) => {
        impl Real for $t {
            const BITS: u32 = $bits;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                check_extent(a.len(), m, k, a_strides);
                check_extent(b.len(), k, n, b_strides);
                check_extent(c.len(), m, n, c_strides);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every operand extent was bounds-checked above and
                // `c` is uniquely borrowed.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    );
                }
            }

            #[inline]
            fn from_f64_lossy(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32, 32, matrixmultiply::sgemm);
impl_real!(f64, 64, matrixmultiply::dgemm);

/// Shorthand for numeric literals inside generic code.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64_lossy(v)
}

/// Sum that does not depend on the order of `values`.
///
/// The values are sorted by total order before accumulation, so any
/// permutation of the same multiset produces the same bits. Used wherever a
/// reduction runs across the batch or scale-channel axis.
pub fn order_invariant_sum<T: Real>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    values.iter().fold(T::zero(), |acc, &v| acc + v)
}

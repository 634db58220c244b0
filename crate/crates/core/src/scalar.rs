//! Floating-point scalar abstraction shared by images, tensors and the
//! network. Tone-curve math always runs in `f64`; storage and layer math
//! use whatever `Scalar` the caller picks.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Name written into diagnostics.
    const NAME: &'static str;

    /// Row-major `C = op(A)·op(B)` (or `C += ...` when `accumulate`).
    ///
    /// `op(A)` is `m×k`, `op(B)` is `k×n`. A transposed operand is stored in
    /// its untransposed row-major layout (`k×m` for A, `n×k` for B).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_trans: bool,
        b: &[Self],
        b_trans: bool,
        c: &mut [Self],
        accumulate: bool,
    );

    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every Scalar")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("every Scalar converts to f64")
    }
}

struct Strides {
    rs_a: isize,
    cs_a: isize,
    rs_b: isize,
    cs_b: isize,
}

fn strides(m: usize, k: usize, n: usize, a_trans: bool, b_trans: bool) -> Strides {
    let (rs_a, cs_a) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rs_b, cs_b) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    Strides { rs_a, cs_a, rs_b, cs_b }
}

fn check_lens(m: usize, k: usize, n: usize, a: usize, b: usize, c: usize) {
    assert!(a >= m * k, "gemm: A has {a} elements, need {}", m * k);
    assert!(b >= k * n, "gemm: B has {b} elements, need {}", k * n);
    assert!(c >= m * n, "gemm: C has {c} elements, need {}", m * n);
}

macro_rules! impl_scalar {
    ($ty:ty, $name:literal, $kernel:path) => {
        impl Scalar for $ty {
            const NAME: &'static str = $name;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_trans: bool,
                b: &[Self],
                b_trans: bool,
                c: &mut [Self],
                accumulate: bool,
            ) {
                check_lens(m, k, n, a.len(), b.len(), c.len());
                if m == 0 || n == 0 {
                    return;
                }
                let s = strides(m, k, n, a_trans, b_trans);
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: the length checks above guarantee every index the
                // kernel touches lies inside the three slices.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        s.rs_a,
                        s.cs_a,
                        b.as_ptr(),
                        s.rs_b,
                        s.cs_b,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, "f32", matrixmultiply::sgemm);
impl_scalar!(f64, "f64", matrixmultiply::dgemm);

//! Floating-point scalar abstraction shared by the network, optimizer and
//! training code.
//!
//! Everything numerical is written once against [`Scalar`] and instantiated
//! for `f64` (the default) and `f32` (the reduced-precision mode used to
//! study rounding effects).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// A real scalar usable as network parameter storage.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Short name used in descriptors and reports.
    const NAME: &'static str;

    /// Lossy conversion from `f64`, rounding to nearest.
    fn of(v: f64) -> Self;

    /// Exact widening to `f64`.
    fn wide(self) -> f64;

    /// `c <- alpha * a * b + beta * c` on strided row/column layouts.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`. Strides are in
    /// elements. The summation over `k` runs in index order, so permuting
    /// the `k` axis changes the rounding of the result.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: (&[Self], isize, isize),
        b: (&[Self], isize, isize),
        beta: Self,
        c: (&mut [Self], isize, isize),
    );
}

// Below this many multiply-adds the packing overhead of the blocked kernel
// outweighs its benefit.
const SMALL_GEMM: usize = 4096;

#[allow(clippy::too_many_arguments)]
fn naive_gemm<S: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: S,
    (a, rsa, csa): (&[S], isize, isize),
    (b, rsb, csb): (&[S], isize, isize),
    beta: S,
    (c, rsc, csc): (&mut [S], isize, isize),
) {
    for i in 0..m {
        for j in 0..n {
            let mut acc = S::zero();
            for p in 0..k {
                let av = a[(i as isize * rsa + p as isize * csa) as usize];
                let bv = b[(p as isize * rsb + j as isize * csb) as usize];
                acc += av * bv;
            }
            let idx = (i as isize * rsc + j as isize * csc) as usize;
            c[idx] = if beta == S::zero() {
                alpha * acc
            } else {
                alpha * acc + beta * c[idx]
            };
        }
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    assert!(rs >= 0 && cs >= 0, "negative strides are not supported");
    let last = (rows - 1) * rs as usize + (cols - 1) * cs as usize;
    assert!(last < len, "matrix view exceeds its buffer");
}

macro_rules! impl_scalar {
    ($t:ty, $name:literal, $kernel:ident) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;

            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn wide(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: (&[Self], isize, isize),
                b: (&[Self], isize, isize),
                beta: Self,
                c: (&mut [Self], isize, isize),
            ) {
                check_extent(a.0.len(), m, k, a.1, a.2);
                check_extent(b.0.len(), k, n, b.1, b.2);
                check_extent(c.0.len(), m, n, c.1, c.2);
                if m * k * n < SMALL_GEMM {
                    naive_gemm(m, k, n, alpha, a, b, beta, c);
                    return;
                }
                // SAFETY: every view was bounds-checked above against the
                // slice it points into, and `c` is uniquely borrowed.
                unsafe {
                    matrixmultiply::$kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.0.as_ptr(),
                        a.1,
                        a.2,
                        b.0.as_ptr(),
                        b.1,
                        b.2,
                        beta,
                        c.0.as_mut_ptr(),
                        c.1,
                        c.2,
                    );
                }
            }
        }
    };
}

impl_scalar!(f64, "f64", dgemm);
impl_scalar!(f32, "f32", sgemm);

/// Logistic function, split by sign so neither branch overflows.
#[inline]
pub fn sigmoid<S: Scalar>(u: S) -> S {
    if u >= S::zero() {
        S::one() / (S::one() + (-u).exp())
    } else {
        let e = u.exp();
        e / (S::one() + e)
    }
}

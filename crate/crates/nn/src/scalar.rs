use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::Debug;
use std::iter::Sum;

/// Strided matrix view: data plus row and column strides in elements.
#[derive(Clone, Copy)]
#[doc(hidden)]
pub struct View<'a, T> {
    pub data: &'a [T],
    pub rs: isize,
    pub cs: isize,
}

/// Floating-point element type of tensors: `f32` for training, `f64` for
/// gradient checks.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + ToPrimitive + Debug + Default + Sum + Send + Sync + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite cast")
    }

    /// `c = a · b` for an `m×k` view `a`, a `k×n` view `b` and a row-major
    /// `m×n` output `c`.
    #[doc(hidden)]
    fn gemm(m: usize, k: usize, n: usize, a: View<'_, Self>, b: View<'_, Self>, c: &mut [Self]);
}

macro_rules! impl_scalar {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: View<'_, Self>,
                b: View<'_, Self>,
                c: &mut [Self],
            ) {
                assert!(c.len() >= m * n, "gemm output too small");
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    c[..m * n].fill(0.0);
                    return;
                }
                let last = |v: &View<'_, Self>, r: usize, cl: usize| {
                    (r as isize - 1) * v.rs + (cl as isize - 1) * v.cs
                };
                assert!(
                    (last(&a, m, k) as usize) < a.data.len()
                        && (last(&b, k, n) as usize) < b.data.len(),
                    "gemm view out of bounds"
                );
                // SAFETY: the asserts above keep every strided access inside
                // the borrowed slices, and `c` is exclusively borrowed.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        1.0,
                        a.data.as_ptr(),
                        a.rs,
                        a.cs,
                        b.data.as_ptr(),
                        b.rs,
                        b.cs,
                        0.0,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

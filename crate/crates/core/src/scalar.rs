use std::fmt::Debug;

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;

/// Amplitude type of a tensor network state.
///
/// Imaginary-time evolution of a real Hamiltonian from a real product state
/// never leaves the reals, so ground-state searches run on `f64`; real-time
/// dynamics needs `Complex64`.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Debug + Send + Sync + 'static {
    const IS_COMPLEX: bool;

    /// Narrowing conversion; the imaginary part is dropped for real scalars.
    fn from_c64(z: Complex64) -> Self;

    fn to_c64(self) -> Complex64;

    #[inline]
    fn from_re(x: f64) -> Self {
        Self::from_real(x)
    }

    /// Thin SVD `m = U diag(s) Vt` with `s` in nonincreasing order.
    fn thin_svd(m: &DMatrix<Self>) -> (Vec<f64>, DMatrix<Self>, DMatrix<Self>);
}

fn faer_svd<T>(m: &DMatrix<T>, re: impl Fn(T) -> f64) -> (Vec<f64>, DMatrix<T>, DMatrix<T>)
where
    T: faer::traits::ComplexField + ComplexField + Copy,
{
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return (Vec::new(), DMatrix::zeros(r, 0), DMatrix::zeros(0, c));
    }
    let a = faer::Mat::<T>::from_fn(r, c, |i, j| m[(i, j)]);
    let svd = a.thin_svd().expect("svd failed to converge");
    let (u, v) = (svd.U(), svd.V());
    let k = r.min(c);
    let s = svd.S().column_vector().iter().map(|&x| re(x)).collect();
    let u = DMatrix::from_fn(r, k, |i, j| u[(i, j)]);
    let vt = DMatrix::from_fn(k, c, |i, j| v[(j, i)].conjugate());
    (s, u, vt)
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;

    #[inline]
    fn from_c64(z: Complex64) -> Self {
        z.re
    }

    #[inline]
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }

    fn thin_svd(m: &DMatrix<Self>) -> (Vec<f64>, DMatrix<Self>, DMatrix<Self>) {
        faer_svd(m, |x| x)
    }
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;

    #[inline]
    fn from_c64(z: Complex64) -> Self {
        z
    }

    #[inline]
    fn to_c64(self) -> Complex64 {
        self
    }

    fn thin_svd(m: &DMatrix<Self>) -> (Vec<f64>, DMatrix<Self>, DMatrix<Self>) {
        faer_svd(m, |x| x.re)
    }
}

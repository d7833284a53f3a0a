use faer::traits::Conjugate;
use faer::{Accum, Mat, MatRef, Par};
use num_complex::Complex64;

/// Dense product computed sequentially, so the floating-point summation
/// order never depends on the number of worker threads.
pub(crate) fn mul<L, R>(lhs: MatRef<'_, L>, rhs: MatRef<'_, R>) -> Mat<Complex64>
where
    L: Conjugate<Canonical = Complex64>,
    R: Conjugate<Canonical = Complex64>,
{
    let mut out = Mat::<Complex64>::zeros(lhs.nrows(), rhs.ncols());
    faer::linalg::matmul::matmul(
        out.as_mut(),
        Accum::Replace,
        lhs,
        rhs,
        Complex64::new(1.0, 0.0),
        Par::Seq,
    );
    out
}

//! Eigenstructure of correlation matrices and the truncated channel subspace.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd;
use faer::diag::Diag;
use faer::{Mat, MatRef, Par};
use num_complex::Complex64;

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::linalg::mul;

/// Hermitian symmetry tolerance relative to the largest entry.
const HERMITIAN_TOL: f64 = 1e-10;

/// Negative eigenvalues down to `-NEGATIVE_TOL * (sum / M)` are rounding noise.
const NEGATIVE_TOL: f64 = 1e-9;

/// Eigenvalues sorted in descending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenSpectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<Complex64>,
}

impl EigenSpectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> MatRef<'_, Complex64> {
        self.eigenvectors.as_ref()
    }

    pub fn total(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Smallest `r` whose leading eigenvalues hold at least `fraction` of the
    /// total. Zero for an all-zero spectrum.
    pub fn effective_rank(&self, fraction: f64) -> Result<usize> {
        effective_rank(&self.eigenvalues, fraction)
    }

    /// Cumulative eigenvalue fractions, one per eigenvalue.
    pub fn cumulative_fractions(&self) -> Vec<f64> {
        let total = self.total();
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .map(|&v| {
                acc += v;
                if total > 0.0 {
                    acc / total
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Effective rank of a descending, non-negative eigenvalue list.
pub fn effective_rank(eigenvalues: &[f64], fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::validation(format!(
            "rank fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Ok(0);
    }
    let target = fraction * total;
    let mut acc = 0.0;
    for (idx, &v) in eigenvalues.iter().enumerate() {
        acc += v;
        if acc >= target {
            return Ok(idx + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// Hermitian eigendecomposition, sorted descending, with rounding-level
/// negative eigenvalues clamped to zero.
pub fn eigendecompose(matrix: &CorrelationMatrix) -> Result<EigenSpectrum> {
    let m = matrix.dim();
    let scale = matrix.max_abs();
    let deviation = matrix.hermitian_deviation();
    if deviation > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::validation(format!(
            "matrix is not Hermitian: max |R - R^H| = {deviation:e} (max |R| = {scale:e})"
        )));
    }
    if m == 0 {
        return Ok(EigenSpectrum {
            eigenvalues: Vec::new(),
            eigenvectors: Mat::zeros(0, 0),
        });
    }

    let mut u = Mat::<Complex64>::zeros(m, m);
    let mut s = Diag::<Complex64>::zeros(m);
    // Sequential on purpose: results must not depend on the worker count.
    let par = Par::Seq;
    let params = Default::default();
    let mut buffer = MemBuffer::new(evd::self_adjoint_evd_scratch::<Complex64>(
        m,
        evd::ComputeEigenvectors::Yes,
        par,
        params,
    ));
    evd::self_adjoint_evd(
        matrix.entries(),
        s.as_mut(),
        Some(u.as_mut()),
        par,
        MemStack::new(&mut buffer),
        params,
    )
    .map_err(|e| Error::Numerical(format!("Hermitian eigensolver failed: {e:?}")))?;

    // faer returns ascending order.
    let ascending: Vec<f64> = s.column_vector().iter().map(|z| z.re).collect();
    let total: f64 = ascending.iter().sum();
    let floor = -NEGATIVE_TOL * (total / m as f64).abs();
    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenvectors = Mat::<Complex64>::zeros(m, m);
    for (dst, src) in (0..m).rev().enumerate() {
        let mut value = ascending[src];
        if value < 0.0 {
            if value < floor {
                return Err(Error::Numerical(format!(
                    "eigenvalue {value:e} below the PSD tolerance {floor:e}"
                )));
            }
            value = 0.0;
        }
        eigenvalues.push(value);
        eigenvectors.col_mut(dst).copy_from(u.col(src));
    }
    Ok(EigenSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Orthonormal basis of the dominant eigenspace.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: Mat<Complex64>,
    eigenvalues: Vec<f64>,
    retained_fraction: f64,
}

/// Coefficients of a vector in a subspace and the relative energy left over.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coefficients: Vec<Complex64>,
    /// `||v - U U^H v|| / ||v||`.
    pub residual_norm: f64,
}

impl Subspace {
    /// Keeps the leading eigenvectors of `spectrum` holding `fraction` of the total.
    pub fn from_spectrum(spectrum: &EigenSpectrum, fraction: f64) -> Result<Self> {
        let rank = spectrum.effective_rank(fraction)?;
        if rank == 0 {
            return Err(Error::validation("cannot build a subspace from a zero matrix"));
        }
        let m = spectrum.eigenvectors.nrows();
        let basis = Mat::from_fn(m, rank, |i, j| spectrum.eigenvectors[(i, j)]);
        let eigenvalues = spectrum.eigenvalues[..rank].to_vec();
        let kept: f64 = eigenvalues.iter().sum();
        Ok(Self {
            basis,
            eigenvalues,
            retained_fraction: kept / spectrum.total(),
        })
    }

    /// Wraps an existing basis, e.g. the identity. Columns are assumed orthonormal.
    pub fn from_basis(basis: Mat<Complex64>) -> Result<Self> {
        if basis.ncols() == 0 || basis.ncols() > basis.nrows() {
            return Err(Error::validation(format!(
                "basis must have between 1 and {} columns, got {}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        let r = basis.ncols();
        Ok(Self {
            basis,
            eigenvalues: vec![1.0; r],
            retained_fraction: 1.0,
        })
    }

    pub fn basis(&self) -> MatRef<'_, Complex64> {
        self.basis.as_ref()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn retained_fraction(&self) -> f64 {
        self.retained_fraction
    }

    /// `U^H v`.
    pub fn coefficients(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_dim(v.len())?;
        Ok((0..self.rank())
            .map(|c| {
                self.basis
                    .col(c)
                    .iter()
                    .zip(v)
                    .map(|(u, x)| u.conj() * x)
                    .sum()
            })
            .collect())
    }

    /// `U x` for reduced coordinates `x`.
    pub fn expand(&self, coefficients: &[Complex64]) -> Result<Vec<Complex64>> {
        if coefficients.len() != self.rank() {
            return Err(Error::DimensionMismatch {
                expected: self.rank(),
                found: coefficients.len(),
            });
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (c, x) in coefficients.iter().enumerate() {
            for (o, u) in out.iter_mut().zip(self.basis.col(c).iter()) {
                *o += u * x;
            }
        }
        Ok(out)
    }

    pub fn project(&self, v: &[Complex64]) -> Result<Projection> {
        let coefficients = self.coefficients(v)?;
        let inside = self.expand(&coefficients)?;
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let residual: f64 = v
            .iter()
            .zip(&inside)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        Ok(Projection {
            coefficients,
            residual_norm: if norm > 0.0 { residual / norm } else { 0.0 },
        })
    }

    /// `max |U^H U - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = mul(self.basis.adjoint(), self.basis.as_ref());
        let mut max = 0.0f64;
        for j in 0..self.rank() {
            for i in 0..self.rank() {
                let target = if i == j { 1.0 } else { 0.0 };
                max = max.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        max
    }

    /// Dense projector `U U^H`.
    pub fn projector(&self) -> Mat<Complex64> {
        mul(self.basis.as_ref(), self.basis.adjoint())
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }
}

/// Eigendecomposes `matrix` and keeps the effective-rank leading subspace.
pub fn build_subspace(matrix: &CorrelationMatrix, fraction: f64) -> Result<Subspace> {
    let spectrum = eigendecompose(matrix)?;
    Subspace::from_spectrum(&spectrum, fraction)
}

//! Channel estimators for a single pilot observation `y = sqrt(rho) h + n`
//! with `n ~ CN(0, I)`.
//!
//! * MMSE: `sqrt(rho) R (rho R + I)^-1 y`, needs the true correlation `R`.
//! * LS: `y / sqrt(rho)`.
//! * RS-LS: LS restricted to a subspace, `U U^H y / sqrt(rho)`.
//! * Dynamic RS-LS: RS-LS with per-dimension weights `(l_i - 1) / l_i`
//!   learned from the sample power `l_i` of `u_i^H y` over earlier blocks.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::linalg::mul;
use crate::subspace::Subspace;

#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    y: Vec<Complex64>,
    snr: f64,
}

impl PilotObservation {
    /// `snr` is the linear pilot SNR `rho`.
    pub fn new(y: Vec<Complex64>, snr: f64) -> Result<Self> {
        if !(snr.is_finite() && snr > 0.0) {
            return Err(Error::validation(format!("pilot SNR must be positive, got {snr}")));
        }
        Ok(Self { y, snr })
    }

    pub fn y(&self) -> &[Complex64] {
        &self.y
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

fn column(v: &[Complex64]) -> Mat<Complex64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn identity_plus_scaled(r: MatRef<'_, Complex64>, rho: f64) -> Mat<Complex64> {
    let m = r.nrows();
    Mat::from_fn(m, m, |i, j| {
        let diag = if i == j { 1.0 } else { 0.0 };
        r[(i, j)] * rho + Complex64::new(diag, 0.0)
    })
}

/// Linear MMSE estimate, solving `(rho R + I) z = y` by Cholesky.
pub fn mmse_estimate(obs: &PilotObservation, r: &CorrelationMatrix) -> Result<Vec<Complex64>> {
    check_dim(r.dim(), obs.dim())?;
    let rho = obs.snr();
    let a = identity_plus_scaled(r.entries(), rho);
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Cholesky of rho R + I failed: {e:?}")))?;
    let z = llt.solve(column(obs.y()));
    let est = mul(r.entries(), z.as_ref());
    Ok((0..obs.dim()).map(|i| est[(i, 0)] * rho.sqrt()).collect())
}

/// Analytic MMSE NMSE `tr(R - rho R (rho R + I)^-1 R) / tr(R)`.
pub fn mmse_nmse(r: &CorrelationMatrix, snr: f64) -> Result<f64> {
    let a = identity_plus_scaled(r.entries(), snr);
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Cholesky of rho R + I failed: {e:?}")))?;
    let x = llt.solve(r.entries());
    let rx = mul(r.entries(), x.as_ref());
    let m = r.dim();
    let trace_r: f64 = (0..m).map(|i| r.get(i, i).re).sum();
    let trace_rx: f64 = (0..m).map(|i| rx[(i, i)].re).sum();
    Ok((trace_r - snr * trace_rx) / trace_r)
}

/// Analytic LS NMSE `M / (rho tr(R))`.
pub fn ls_nmse(r: &CorrelationMatrix, snr: f64) -> f64 {
    r.dim() as f64 / (snr * r.trace().re)
}

/// MMSE for a correlation given in factored form `R = G G^H` with few
/// columns, using `R (rho R + I)^-1 = G (rho G^H G + I)^-1 G^H`.
#[derive(Debug, Clone)]
pub struct FactoredMmse {
    factor: Mat<Complex64>,
    gram: Mat<Complex64>,
    inner: Mat<Complex64>,
    snr: f64,
}

impl FactoredMmse {
    pub fn new(factor: Mat<Complex64>, snr: f64) -> Result<Self> {
        if !(snr.is_finite() && snr > 0.0) {
            return Err(Error::validation(format!("pilot SNR must be positive, got {snr}")));
        }
        let gram = mul(factor.adjoint(), factor.as_ref());
        let a = identity_plus_scaled(gram.as_ref(), snr);
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| Error::Numerical(format!("Cholesky of rho G^H G + I failed: {e:?}")))?;
        let k = gram.nrows();
        let inner = llt.solve(Mat::<Complex64>::identity(k, k));
        Ok(Self {
            factor,
            gram,
            inner,
            snr,
        })
    }

    pub fn estimate(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        check_dim(self.factor.nrows(), y.len())?;
        let est = self.estimate_columns(column(y).as_ref());
        Ok((0..y.len()).map(|i| est[(i, 0)]).collect())
    }

    /// Estimates for every column of `y` at once.
    pub fn estimate_columns(&self, y: MatRef<'_, Complex64>) -> Mat<Complex64> {
        let gy = mul(self.factor.adjoint(), y);
        let w = mul(self.inner.as_ref(), gy.as_ref());
        let mut est = mul(self.factor.as_ref(), w.as_ref());
        let scale = self.snr.sqrt();
        for j in 0..est.ncols() {
            for i in 0..est.nrows() {
                est[(i, j)] *= scale;
            }
        }
        est
    }

    /// Analytic NMSE `tr(K - rho K W K) / tr(K)` with `K = G^H G`,
    /// `W = (rho K + I)^-1`.
    pub fn nmse(&self) -> f64 {
        let kw = mul(self.gram.as_ref(), self.inner.as_ref());
        let kwk = mul(kw.as_ref(), self.gram.as_ref());
        let k = self.gram.nrows();
        let trace: f64 = (0..k).map(|i| self.gram[(i, i)].re).sum();
        let reduced: f64 = (0..k).map(|i| kwk[(i, i)].re).sum();
        (trace - self.snr * reduced) / trace
    }
}

pub fn ls_estimate(obs: &PilotObservation) -> Vec<Complex64> {
    let scale = 1.0 / obs.snr().sqrt();
    obs.y().iter().map(|z| z * scale).collect()
}

/// Reduced-subspace LS: `U (U^H y) / sqrt(rho)`.
pub fn rsls_estimate(obs: &PilotObservation, subspace: &Subspace) -> Result<Vec<Complex64>> {
    let scale = 1.0 / obs.snr().sqrt();
    let c: Vec<Complex64> = subspace
        .coefficients(obs.y())?
        .into_iter()
        .map(|z| z * scale)
        .collect();
    subspace.expand(&c)
}

/// Running mean of `|u_i^H y|^2` per subspace dimension over past blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionPowerTracker {
    powers: Vec<f64>,
    blocks: usize,
}

impl DimensionPowerTracker {
    pub fn new(rank: usize) -> Self {
        Self {
            powers: vec![0.0; rank],
            blocks: 0,
        }
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    /// Number of blocks absorbed so far (`L - 1` when estimating block `L`).
    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Tracker after absorbing one more observation.
    pub fn update(&self, obs: &PilotObservation, subspace: &Subspace) -> Result<Self> {
        let mut next = self.clone();
        next.observe(&subspace.coefficients(obs.y())?)?;
        Ok(next)
    }

    /// Absorbs precomputed coefficients `U^H y` in place.
    pub fn observe(&mut self, coefficients: &[Complex64]) -> Result<()> {
        check_dim(self.powers.len(), coefficients.len())?;
        self.blocks += 1;
        let n = self.blocks as f64;
        for (mean, c) in self.powers.iter_mut().zip(coefficients) {
            *mean += (c.norm_sqr() - *mean) / n;
        }
        Ok(())
    }

    /// Per-dimension weights `max(0, (l - 1) / l)`.
    pub fn weights(&self) -> Result<Vec<f64>> {
        if self.blocks == 0 {
            return Err(Error::NoTrackedBlocks);
        }
        Ok(self
            .powers
            .iter()
            .map(|&l| if l > 1.0 { (l - 1.0) / l } else { 0.0 })
            .collect())
    }
}

/// Dynamic RS-LS: `U D U^H y / sqrt(rho)` with `D` from the tracker.
pub fn dynamic_rsls_estimate(
    obs: &PilotObservation,
    subspace: &Subspace,
    tracker: &DimensionPowerTracker,
) -> Result<Vec<Complex64>> {
    check_dim(subspace.rank(), tracker.powers().len())?;
    let weights = tracker.weights()?;
    let scale = 1.0 / obs.snr().sqrt();
    let c: Vec<Complex64> = subspace
        .coefficients(obs.y())?
        .into_iter()
        .zip(&weights)
        .map(|(z, w)| z * (w * scale))
        .collect();
    subspace.expand(&c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{
        cluster_correlation, representative_correlation, Cluster, ClusterSet, ScatteringRegion,
    };
    use crate::geometry::ArrayGeometry;
    use crate::response::{ResponseFlavor, SourcePoint};
    use crate::subspace::build_subspace;
    use crate::DEFAULT_RANK_FRACTION;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn norm(v: &[Complex64]) -> f64 {
        v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn test_vector(m: usize, seed: f64) -> Vec<Complex64> {
        (0..m)
            .map(|i| c((seed + i as f64 * 0.7).sin(), (seed * 1.3 + i as f64 * 0.31).cos()))
            .collect()
    }

    fn setup() -> (ArrayGeometry, CorrelationMatrix, Subspace) {
        let g = ArrayGeometry::new(6, 4, 0.05, 0.1).unwrap();
        let region = ScatteringRegion::new((-0.5, 0.5), (-0.35, 0.0), (10.0, 20.0)).unwrap();
        let rbar = representative_correlation(&g, &region, 1.0).unwrap();
        let sub = build_subspace(&rbar, DEFAULT_RANK_FRACTION).unwrap();
        let clusters = ClusterSet::new(
            vec![
                Cluster { point: SourcePoint::new(0.1, -0.1, 12.0).unwrap(), power: 0.7 },
                Cluster { point: SourcePoint::new(-0.3, -0.2, 17.0).unwrap(), power: 0.3 },
            ],
            1.0,
        )
        .unwrap();
        let r = cluster_correlation(&g, &clusters, ResponseFlavor::Fresnel).unwrap();
        (g, r, sub)
    }

    #[test]
    fn mmse_of_zero_correlation_is_zero() {
        let r = CorrelationMatrix::new(Mat::zeros(5, 5), 1.0).unwrap();
        let obs = PilotObservation::new(test_vector(5, 0.3), 2.0).unwrap();
        assert!(mmse_estimate(&obs, &r).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn mmse_approaches_ls_at_high_snr() {
        let r = CorrelationMatrix::new(Mat::identity(5, 5), 1.0).unwrap();
        let y = test_vector(5, 1.1);
        let rho = 1e10;
        let obs = PilotObservation::new(y, rho).unwrap();
        let mmse = mmse_estimate(&obs, &r).unwrap();
        let ls = ls_estimate(&obs);
        assert!(diff(&mmse, &ls) < 1e-14);
    }

    #[test]
    fn mmse_dimension_mismatch() {
        let r = CorrelationMatrix::new(Mat::identity(4, 4), 1.0).unwrap();
        let obs = PilotObservation::new(test_vector(5, 0.0), 1.0).unwrap();
        assert!(matches!(mmse_estimate(&obs, &r), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn factored_mmse_matches_dense() {
        let g = ArrayGeometry::new(6, 4, 0.05, 0.1).unwrap();
        let clusters = ClusterSet::new(
            vec![
                Cluster { point: SourcePoint::new(0.1, -0.1, 12.0).unwrap(), power: 0.6 },
                Cluster { point: SourcePoint::new(-0.3, -0.2, 17.0).unwrap(), power: 0.4 },
            ],
            1.5,
        )
        .unwrap();
        let r = cluster_correlation(&g, &clusters, ResponseFlavor::Fresnel).unwrap();
        let factored = FactoredMmse::new(clusters.factor(&g, ResponseFlavor::Fresnel), 3.0).unwrap();
        let y = test_vector(24, 0.4);
        let obs = PilotObservation::new(y.clone(), 3.0).unwrap();
        assert!(diff(&mmse_estimate(&obs, &r).unwrap(), &factored.estimate(&y).unwrap()) < 1e-12);
        assert!((mmse_nmse(&r, 3.0).unwrap() - factored.nmse()).abs() < 1e-12);
    }

    #[test]
    fn ls_examples() {
        let zero = PilotObservation::new(vec![c(0.0, 0.0); 3], 4.0).unwrap();
        assert!(ls_estimate(&zero).iter().all(|z| *z == c(0.0, 0.0)));
        let y = test_vector(3, 0.2);
        let unit = PilotObservation::new(y.clone(), 1.0).unwrap();
        assert_eq!(ls_estimate(&unit), y);
        assert!(PilotObservation::new(y, 0.0).is_err());
    }

    #[test]
    fn ls_nmse_formula() {
        let r = CorrelationMatrix::new(Mat::identity(8, 8), 1.0).unwrap();
        assert!((ls_nmse(&r, 1.0) - 1.0).abs() < 1e-15);
        assert!((ls_nmse(&r, 10.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn full_subspace_rsls_is_ls() {
        let full = Subspace::from_basis(Mat::identity(7, 7)).unwrap();
        let obs = PilotObservation::new(test_vector(7, 0.9), 2.5).unwrap();
        assert!(diff(&rsls_estimate(&obs, &full).unwrap(), &ls_estimate(&obs)) < 1e-15);
    }

    #[test]
    fn rsls_of_orthogonal_vector_is_zero() {
        let basis = Mat::from_fn(4, 2, |i, j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let sub = Subspace::from_basis(basis).unwrap();
        let obs = PilotObservation::new(vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 2.0), c(-3.0, 0.5)], 2.0).unwrap();
        assert!(norm(&rsls_estimate(&obs, &sub).unwrap()) < 1e-15);
    }

    #[test]
    fn tracker_running_mean() {
        let (_, _, sub) = setup();
        let obs = PilotObservation::new(test_vector(24, 0.5), 2.0).unwrap();
        let empty = DimensionPowerTracker::new(sub.rank());
        assert!(matches!(empty.weights(), Err(Error::NoTrackedBlocks)));
        assert!(matches!(
            dynamic_rsls_estimate(&obs, &sub, &empty),
            Err(Error::NoTrackedBlocks)
        ));
        let once = empty.update(&obs, &sub).unwrap();
        let coeffs = sub.coefficients(obs.y()).unwrap();
        assert_eq!(once.blocks(), 1);
        for (p, z) in once.powers().iter().zip(&coeffs) {
            assert_eq!(*p, z.norm_sqr());
        }
        let twice = once.update(&obs, &sub).unwrap();
        assert_eq!(twice.blocks(), 2);
        assert_eq!(twice.powers(), once.powers());
    }

    #[test]
    fn dynamic_rsls_limits() {
        let (_, _, sub) = setup();
        let obs = PilotObservation::new(test_vector(24, 0.5), 2.0).unwrap();
        let mut quiet = DimensionPowerTracker::new(sub.rank());
        quiet.observe(&vec![c(0.5, 0.5); sub.rank()]).unwrap();
        assert!(norm(&dynamic_rsls_estimate(&obs, &sub, &quiet).unwrap()) == 0.0);

        let mut loud = DimensionPowerTracker::new(sub.rank());
        loud.observe(&vec![c(1e9, 0.0); sub.rank()]).unwrap();
        let dynamic = dynamic_rsls_estimate(&obs, &sub, &loud).unwrap();
        let plain = rsls_estimate(&obs, &sub).unwrap();
        assert!(diff(&dynamic, &plain) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn estimator_properties(
            seed in 0.0f64..100.0,
            other in 0.0f64..100.0,
            a in -3.0f64..3.0,
            rho in 0.05f64..50.0,
            powers in proptest::collection::vec(0.0f64..20.0, 1..4),
        ) {
            let (_, r, sub) = setup();
            let y1 = test_vector(24, seed);
            let y2 = test_vector(24, other);
            let combo: Vec<Complex64> = y1.iter().zip(&y2).map(|(p, q)| p * a + q).collect();
            let obs = |y: &[Complex64]| PilotObservation::new(y.to_vec(), rho).unwrap();

            let mut tracker = DimensionPowerTracker::new(sub.rank());
            for p in &powers {
                tracker.observe(&vec![c(p.sqrt(), 0.0); sub.rank()]).unwrap();
            }
            let weights = tracker.weights().unwrap();
            prop_assert!(weights.iter().all(|w| (0.0..1.0).contains(w)));

            // RS-LS is a scaled projection: feeding sqrt(rho) * output back is idempotent.
            let once = rsls_estimate(&obs(&y1), &sub).unwrap();
            let again_input: Vec<Complex64> = once.iter().map(|z| z * rho.sqrt()).collect();
            let twice = rsls_estimate(&obs(&again_input), &sub).unwrap();
            prop_assert!(diff(&once, &twice) < 1e-10 * (1.0 + norm(&once)));

            let dynamic = dynamic_rsls_estimate(&obs(&y1), &sub, &tracker).unwrap();
            prop_assert!(norm(&dynamic) <= norm(&once) * (1.0 + 1e-12) + 1e-15);

            // Linearity in y for fixed statistics.
            let estimators: Vec<Box<dyn Fn(&[Complex64]) -> Vec<Complex64>>> = vec![
                Box::new(|y| mmse_estimate(&obs(y), &r).unwrap()),
                Box::new(|y| ls_estimate(&obs(y))),
                Box::new(|y| rsls_estimate(&obs(y), &sub).unwrap()),
                Box::new(|y| dynamic_rsls_estimate(&obs(y), &sub, &tracker).unwrap()),
            ];
            for f in &estimators {
                let lhs = f(&combo);
                let rhs: Vec<Complex64> = f(&y1).iter().zip(f(&y2)).map(|(p, q)| p * a + q).collect();
                prop_assert!(diff(&lhs, &rhs) < 1e-9 * (1.0 + norm(&rhs)));
            }
        }
    }
}

//! Spatial correlation matrices.
//!
//! Two families are built here:
//!
//! * the exact correlation of a finite set of point scatterers (Dirac-type
//!   scattering function), `R = beta * sum_k p_k b_k b_k^H`;
//! * the *representative* correlation of a whole coverage region, obtained
//!   from the scattering density `c cos(phi) cos(theta) / d^2`. With that
//!   density the azimuth integral has an antiderivative and the distance
//!   integral collapses to the factor [`s_factor`], leaving a single
//!   elevation integral per entry that is evaluated with composite
//!   Gauss-Legendre quadrature.
//!
//! A brute-force tensor-product quadrature of the full triple integral,
//! [`oracle_correlation`], is kept as a reference for the closed form.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use faer::{Mat, MatRef, Par};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::quadrature::GaussLegendre;
use crate::response::{check_angles, fresnel_response, response, ResponseFlavor, SourcePoint};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Gauss-Legendre nodes per elevation panel.
const NODES_PER_PANEL: usize = 16;

/// Largest change tolerated between `P` and `2P` panels, relative to the
/// elevation span.
const PANEL_REFINEMENT_TOL: f64 = 1e-11;

/// Box `[phi1, phi2] x [theta1, theta2] x [d1, d2]` enclosing all scatterers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringRegion {
    azimuth: (f64, f64),
    elevation: (f64, f64),
    distance: (f64, f64),
}

impl ScatteringRegion {
    /// Angles in radians, distances in meters. Each range must be increasing.
    pub fn new(azimuth: (f64, f64), elevation: (f64, f64), distance: (f64, f64)) -> Result<Self> {
        check_angles(azimuth.0, elevation.0)?;
        check_angles(azimuth.1, elevation.1)?;
        if azimuth.0 >= azimuth.1 {
            return Err(Error::validation(format!(
                "azimuth range must be increasing, got [{}, {}]",
                azimuth.0, azimuth.1
            )));
        }
        if elevation.0 >= elevation.1 {
            return Err(Error::validation(format!(
                "elevation range must be increasing, got [{}, {}]",
                elevation.0, elevation.1
            )));
        }
        if !(distance.0.is_finite() && distance.1.is_finite() && 0.0 < distance.0 && distance.0 < distance.1)
        {
            return Err(Error::validation(format!(
                "distance range must satisfy 0 < d1 < d2, got [{}, {}]",
                distance.0, distance.1
            )));
        }
        let region = Self {
            azimuth,
            elevation,
            distance,
        };
        let c = region.normalization_constant();
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::validation(format!(
                "degenerate region: normalization constant {c}"
            )));
        }
        Ok(region)
    }

    pub fn azimuth(&self) -> (f64, f64) {
        self.azimuth
    }

    pub fn elevation(&self) -> (f64, f64) {
        self.elevation
    }

    pub fn distance(&self) -> (f64, f64) {
        self.distance
    }

    /// Same angular box with a different distance range.
    pub fn with_distance(&self, d1: f64, d2: f64) -> Result<Self> {
        Self::new(self.azimuth, self.elevation, (d1, d2))
    }

    /// `sin(phi2) - sin(phi1)`.
    pub fn azimuth_sine_span(&self) -> f64 {
        self.azimuth.1.sin() - self.azimuth.0.sin()
    }

    /// `sin(theta2) - sin(theta1)`.
    pub fn elevation_sine_span(&self) -> f64 {
        self.elevation.1.sin() - self.elevation.0.sin()
    }

    /// `1/d1 - 1/d2`, the integral of `d^-2` over the distance range.
    pub fn inverse_distance_span(&self) -> f64 {
        1.0 / self.distance.0 - 1.0 / self.distance.1
    }

    /// Constant `c` making `c cos(phi) cos(theta) / d^2` integrate to one.
    pub fn normalization_constant(&self) -> f64 {
        let (d1, d2) = self.distance;
        d1 * d2 / (d2 - d1) / (self.elevation_sine_span() * self.azimuth_sine_span())
    }

    /// Scattering density `c cos(phi) cos(theta) / d^2` (zero outside the box).
    pub fn density(&self, azimuth: f64, elevation: f64, distance: f64) -> f64 {
        if !self.contains_coords(azimuth, elevation, distance) {
            return 0.0;
        }
        self.normalization_constant() * azimuth.cos() * elevation.cos() / (distance * distance)
    }

    pub fn contains(&self, point: &SourcePoint) -> bool {
        self.contains_coords(point.azimuth, point.elevation, point.distance)
    }

    fn contains_coords(&self, azimuth: f64, elevation: f64, distance: f64) -> bool {
        (self.azimuth.0..=self.azimuth.1).contains(&azimuth)
            && (self.elevation.0..=self.elevation.1).contains(&elevation)
            && (self.distance.0..=self.distance.1).contains(&distance)
    }
}

/// One point scatterer with its share of the channel power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub point: SourcePoint,
    pub power: f64,
}

/// Discrete scatterers whose powers sum to one, plus the average gain `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    clusters: Vec<Cluster>,
    beta: f64,
}

impl ClusterSet {
    pub fn new(clusters: Vec<Cluster>, beta: f64) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::validation("cluster set is empty"));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::validation(format!("beta must be positive, got {beta}")));
        }
        if let Some(bad) = clusters.iter().find(|c| !(c.power.is_finite() && c.power >= 0.0)) {
            return Err(Error::validation(format!(
                "cluster power must be non-negative, got {}",
                bad.power
            )));
        }
        let total: f64 = clusters.iter().map(|c| c.power).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!(
                "cluster powers must sum to one, got {total}"
            )));
        }
        Ok(Self { clusters, beta })
    }

    /// Like [`ClusterSet::new`] but also requires every scatterer to lie in `region`.
    pub fn within(clusters: Vec<Cluster>, beta: f64, region: &ScatteringRegion) -> Result<Self> {
        if let Some(outside) = clusters.iter().find(|c| !region.contains(&c.point)) {
            return Err(Error::validation(format!(
                "cluster at {:?} lies outside the scattering region",
                outside.point
            )));
        }
        Self::new(clusters, beta)
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// `M x K` factor `G` with columns `sqrt(beta p_k) b_k`, so that `R = G G^H`.
    pub fn factor(&self, geometry: &ArrayGeometry, flavor: ResponseFlavor) -> Mat<Complex64> {
        let m = geometry.num_antennas();
        let mut g = Mat::<Complex64>::zeros(m, self.clusters.len());
        for (k, cluster) in self.clusters.iter().enumerate() {
            let amplitude = (self.beta * cluster.power).sqrt();
            let b = response(geometry, &cluster.point, flavor);
            for (row, z) in b.as_slice().iter().enumerate() {
                g[(row, k)] = z * amplitude;
            }
        }
        g
    }
}

/// Hermitian PSD `M x M` matrix together with the average gain it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    entries: Mat<Complex64>,
    beta: f64,
}

impl CorrelationMatrix {
    /// Wraps a square matrix. Hermitian symmetry is checked by consumers
    /// that depend on it, not here.
    pub fn new(entries: Mat<Complex64>, beta: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::validation(format!("beta must be non-negative, got {beta}")));
        }
        Ok(Self { entries, beta })
    }

    pub fn entries(&self) -> MatRef<'_, Complex64> {
        self.entries.as_ref()
    }

    pub fn into_entries(self) -> Mat<Complex64> {
        self.entries
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Entry `(n, m)` with 0-based indices.
    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.entries[(n, m)]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.entries[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        let mut max = 0.0f64;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                max = max.max(self.entries[(i, j)].norm());
            }
        }
        max
    }

    /// `max |R[n,m] - conj(R[m,n])|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let mut max = 0.0f64;
        for j in 0..self.dim() {
            for i in 0..=j {
                max = max.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        max
    }

    /// `max |A - B|` over all entries.
    pub fn max_abs_diff(&self, other: &CorrelationMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let mut max = 0.0f64;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                max = max.max((self.entries[(i, j)] - other.entries[(i, j)]).norm());
            }
        }
        Ok(max)
    }
}

/// Exact correlation of a cluster set, `beta * sum_k p_k b_k b_k^H`.
pub fn cluster_correlation(
    geometry: &ArrayGeometry,
    clusters: &ClusterSet,
    flavor: ResponseFlavor,
) -> Result<CorrelationMatrix> {
    if clusters.is_empty() {
        return Err(Error::validation("cluster set is empty"));
    }
    let g = clusters.factor(geometry, flavor);
    let m = geometry.num_antennas();
    let mut r = Mat::<Complex64>::zeros(m, m);
    faer::linalg::matmul::matmul(
        r.as_mut(),
        faer::Accum::Replace,
        g.as_ref(),
        g.adjoint(),
        Complex64::new(1.0, 0.0),
        Par::Seq,
    );
    // Exact Hermitian symmetry and a real diagonal.
    for j in 0..m {
        r[(j, j)] = Complex64::new(r[(j, j)].re, 0.0);
        for i in 0..j {
            r[(j, i)] = r[(i, j)].conj();
        }
    }
    CorrelationMatrix::new(r, clusters.beta())
}

/// Distance-integral factor `int_{d1}^{d2} d^-2 exp(-i pi spacing^2 k / (lambda d)) dd`
/// for the integer index combination `k = i_n^2 + j_n^2 - i_m^2 - j_m^2`.
pub fn s_factor(geometry: &ArrayGeometry, region: &ScatteringRegion, k: i64) -> Complex64 {
    let (d1, d2) = region.distance();
    if k == 0 {
        return Complex64::new(region.inverse_distance_span(), 0.0);
    }
    let delta = geometry.spacing();
    let alpha = PI * delta * delta * k as f64 / geometry.wavelength();
    // (-i/alpha)(e^{-i alpha/d2} - e^{-i alpha/d1}) rewritten as a sinc so
    // that small phases do not cancel catastrophically.
    let span = region.inverse_distance_span();
    let half = 0.5 * alpha * span;
    let sinc = if half.abs() < 1e-4 { 1.0 - half * half / 6.0 } else { half.sin() / half };
    Complex64::from_polar(span * sinc, -0.5 * alpha * (1.0 / d1 + 1.0 / d2))
}

/// Representative near-field correlation of `region`.
pub fn representative_correlation(
    geometry: &ArrayGeometry,
    region: &ScatteringRegion,
    beta: f64,
) -> Result<CorrelationMatrix> {
    representative_correlation_with(geometry, region, beta, |k| s_factor(geometry, region, k))
}

/// Representative correlation with the distance dependence dropped: every
/// `s` factor is replaced by its `k = 0` value `1/d1 - 1/d2`.
pub fn far_field_representative_correlation(
    geometry: &ArrayGeometry,
    region: &ScatteringRegion,
    beta: f64,
) -> Result<CorrelationMatrix> {
    let s0 = Complex64::new(region.inverse_distance_span(), 0.0);
    representative_correlation_with(geometry, region, beta, |_| s0)
}

/// Builds the representative matrix with a caller-supplied distance factor
/// `k -> s(k)`. The angular factors are shared by all entries with the same
/// index offsets, so they are computed once per distinct `(di, dj)`.
pub fn representative_correlation_with<F>(
    geometry: &ArrayGeometry,
    region: &ScatteringRegion,
    beta: f64,
    distance_factor: F,
) -> Result<CorrelationMatrix>
where
    F: Fn(i64) -> Complex64 + Sync,
{
    check_beta(beta)?;
    let m = geometry.num_antennas();
    let grid: Vec<(i64, i64)> = geometry
        .grid_iter()
        .map(|(i, j)| (i as i64, j as i64))
        .collect();

    // Distinct offsets over the upper triangle, remembering one k per offset
    // for error reporting.
    let mut offsets: BTreeMap<(i64, i64), i64> = BTreeMap::new();
    let mut ks: BTreeSet<i64> = BTreeSet::new();
    for (col, &(im, jm)) in grid.iter().enumerate() {
        for &(i_n, j_n) in &grid[..col] {
            let k = index_k(i_n, j_n, im, jm);
            offsets.entry((i_n - im, j_n - jm)).or_insert(k);
            ks.insert(k);
        }
    }

    let rule = GaussLegendre::new(NODES_PER_PANEL);
    let angular: BTreeMap<(i64, i64), Complex64> = offsets
        .par_iter()
        .map(|(&(di, dj), &k)| angular_factor(geometry, region, &rule, di, dj, k).map(|a| ((di, dj), a)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let distance: BTreeMap<i64, Complex64> = ks.into_iter().map(|k| (k, distance_factor(k))).collect();

    let scale = region.normalization_constant() * beta;
    let mut r = Mat::<Complex64>::zeros(m, m);
    for (col, &(im, jm)) in grid.iter().enumerate() {
        r[(col, col)] = Complex64::new(beta, 0.0);
        for (row, &(i_n, j_n)) in grid[..col].iter().enumerate() {
            let k = index_k(i_n, j_n, im, jm);
            let value = combine(scale, distance[&k], angular[&(i_n - im, j_n - jm)]);
            r[(row, col)] = value;
            r[(col, row)] = value.conj();
        }
    }
    CorrelationMatrix::new(r, beta)
}

/// Single entry `[R]_{n,m}` (1-based) of the representative near-field matrix,
/// computed from scratch without any sharing between entries.
pub fn representative_entry(
    geometry: &ArrayGeometry,
    region: &ScatteringRegion,
    beta: f64,
    n: usize,
    m: usize,
) -> Result<Complex64> {
    check_beta(beta)?;
    let a = geometry.antenna_index(n)?;
    let b = geometry.antenna_index(m)?;
    if n == m {
        return Ok(Complex64::new(beta, 0.0));
    }
    let (i_n, j_n, i_m, j_m) = (a.i as i64, a.j as i64, b.i as i64, b.j as i64);
    let k = index_k(i_n, j_n, i_m, j_m);
    let rule = GaussLegendre::new(NODES_PER_PANEL);
    let angular = angular_factor(geometry, region, &rule, i_n - i_m, j_n - j_m, k)?;
    Ok(combine(
        region.normalization_constant() * beta,
        s_factor(geometry, region, k),
        angular,
    ))
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("beta must be positive, got {beta}")))
    }
}

#[inline]
fn index_k(i_n: i64, j_n: i64, i_m: i64, j_m: i64) -> i64 {
    i_n * i_n + j_n * j_n - i_m * i_m - j_m * j_m
}

#[inline]
fn combine(scale: f64, s: Complex64, angular: Complex64) -> Complex64 {
    s * angular * scale
}

/// The azimuth-elevation double integral of `cos(phi) cos(theta)` times the
/// linear phase for index offsets `(di, dj)`, after the azimuth integral has
/// been carried out analytically.
fn angular_factor(
    geometry: &ArrayGeometry,
    region: &ScatteringRegion,
    rule: &GaussLegendre,
    di: i64,
    dj: i64,
    k: i64,
) -> Result<Complex64> {
    let kd = geometry.wavenumber() * geometry.spacing();
    let (t1, t2) = region.elevation();
    if di == 0 {
        if dj == 0 {
            return Ok(Complex64::new(
                region.azimuth_sine_span() * region.elevation_sine_span(),
                0.0,
            ));
        }
        let a = kd * dj as f64;
        let elevation_part = (Complex64::from_polar(1.0, a * t2.sin())
            - Complex64::from_polar(1.0, a * t1.sin()))
            * (-I / a);
        return Ok(elevation_part * region.azimuth_sine_span());
    }

    let a = kd * dj as f64;
    let b = kd * di as f64;
    let (s1, s2) = (region.azimuth().0.sin(), region.azimuth().1.sin());
    let integrand = |t: f64| {
        let (st, ct) = t.sin_cos();
        Complex64::from_polar(1.0, a * st)
            * (Complex64::from_polar(1.0, b * ct * s2) - Complex64::from_polar(1.0, b * ct * s1))
    };
    let panels = 1 + ((2.0 * geometry.spacing() / geometry.wavelength()) * (di.abs() + dj.abs()) as f64).ceil()
        as usize;
    let integrate = |p: usize| -> Complex64 {
        rule.composite(t1, t2, p)
            .into_iter()
            .map(|(t, w)| integrand(t) * w)
            .sum()
    };
    let coarse = integrate(panels);
    let fine = integrate(2 * panels);
    let change = (fine - coarse).norm();
    if change.is_nan() || change > PANEL_REFINEMENT_TOL * (t2 - t1) {
        return Err(Error::Quadrature { di, dj, k, change });
    }
    Ok(fine * (-I / b))
}

/// Brute-force tensor-product Gauss-Legendre evaluation of the triple
/// integral defining the representative matrix, using Fresnel responses.
/// Intended for small arrays only.
pub fn oracle_correlation(
    geometry: &ArrayGeometry,
    region: &ScatteringRegion,
    beta: f64,
    nodes_per_axis: usize,
) -> Result<CorrelationMatrix> {
    check_beta(beta)?;
    if nodes_per_axis == 0 {
        return Err(Error::validation("oracle needs at least one node per axis"));
    }
    let rule = GaussLegendre::new(nodes_per_axis);
    let (p1, p2) = region.azimuth();
    let (t1, t2) = region.elevation();
    let (d1, d2) = region.distance();
    let phis: Vec<(f64, f64)> = rule.scaled(p1, p2).collect();
    let thetas: Vec<(f64, f64)> = rule.scaled(t1, t2).collect();
    let dists: Vec<(f64, f64)> = rule.scaled(d1, d2).collect();
    let c = region.normalization_constant();
    let m = geometry.num_antennas();

    let partials: Vec<Vec<Complex64>> = phis
        .par_iter()
        .map(|&(phi, wp)| {
            let mut acc = vec![Complex64::new(0.0, 0.0); m * m];
            for &(theta, wt) in &thetas {
                for &(d, wd) in &dists {
                    let weight = wp * wt * wd * c * beta * phi.cos() * theta.cos() / (d * d);
                    let point = SourcePoint {
                        azimuth: phi,
                        elevation: theta,
                        distance: d,
                    };
                    let b = fresnel_response(geometry, &point);
                    let b = b.as_slice();
                    for col in 0..m {
                        let bm = b[col].conj() * weight;
                        for row in 0..=col {
                            acc[col * m + row] += b[row] * bm;
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut r = Mat::<Complex64>::zeros(m, m);
    for partial in &partials {
        for col in 0..m {
            for row in 0..=col {
                r[(row, col)] += partial[col * m + row];
            }
        }
    }
    for col in 0..m {
        r[(col, col)].im = 0.0;
        for row in 0..col {
            r[(col, row)] = r[(row, col)].conj();
        }
    }
    CorrelationMatrix::new(r, beta)
}

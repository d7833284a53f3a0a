//! Array response vectors for point sources in front of the array.
//!
//! Three flavors are provided: the exact spherical-wave response, its Fresnel
//! (second-order phase) approximation, and the planar far-field limit.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;

/// A point source seen from the array origin (element 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourcePoint {
    /// Azimuth in radians, `[-pi/2, pi/2]`.
    pub azimuth: f64,
    /// Elevation in radians, `[-pi/2, pi/2]`.
    pub elevation: f64,
    /// Distance from the origin in meters.
    pub distance: f64,
}

impl SourcePoint {
    pub fn new(azimuth: f64, elevation: f64, distance: f64) -> Result<Self> {
        check_angles(azimuth, elevation)?;
        if !(distance.is_finite() && distance > 0.0) {
            return Err(Error::validation(format!(
                "source distance must be positive, got {distance}"
            )));
        }
        Ok(Self {
            azimuth,
            elevation,
            distance,
        })
    }

    /// Cartesian position in meters.
    pub fn position(&self) -> [f64; 3] {
        let (st, ct) = self.elevation.sin_cos();
        let (sp, cp) = self.azimuth.sin_cos();
        let r = self.distance;
        [r * ct * cp, r * ct * sp, r * st]
    }
}

pub(crate) fn check_angles(azimuth: f64, elevation: f64) -> Result<()> {
    if !(azimuth.is_finite() && (-FRAC_PI_2..=FRAC_PI_2).contains(&azimuth)) {
        return Err(Error::validation(format!(
            "azimuth {azimuth} outside [-pi/2, pi/2]"
        )));
    }
    if !(elevation.is_finite() && (-FRAC_PI_2..=FRAC_PI_2).contains(&elevation)) {
        return Err(Error::validation(format!(
            "elevation {elevation} outside [-pi/2, pi/2]"
        )));
    }
    Ok(())
}

/// Which response model to use when synthesizing channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseFlavor {
    Exact,
    #[default]
    Fresnel,
}

impl std::fmt::Display for ResponseFlavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResponseFlavor::Exact => "exact",
            ResponseFlavor::Fresnel => "fresnel",
        })
    }
}

impl std::str::FromStr for ResponseFlavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "fresnel" => Ok(Self::Fresnel),
            other => Err(Error::Config(format!(
                "unknown response flavor {other:?} (expected exact|fresnel)"
            ))),
        }
    }
}

/// Length-M vector of unit-modulus phase terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseVector(Vec<Complex64>);

impl ResponseVector {
    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for ResponseVector {
    type Output = Complex64;

    fn index(&self, idx: usize) -> &Complex64 {
        &self.0[idx]
    }
}

/// Exact distance from antenna `m` (1-based) to `point`, from raw coordinates.
pub fn element_distance(geometry: &ArrayGeometry, point: &SourcePoint, m: usize) -> Result<f64> {
    let idx = geometry.antenna_index(m)?;
    Ok(distance_from(geometry, &point.position(), idx.i, idx.j))
}

fn distance_from(geometry: &ArrayGeometry, p: &[f64; 3], i: usize, j: usize) -> f64 {
    let dy = p[1] - i as f64 * geometry.spacing();
    let dz = p[2] - j as f64 * geometry.spacing();
    (p[0] * p[0] + dy * dy + dz * dz).sqrt()
}

/// Exact spherical-wave response, entry `m` equal to `exp(-i k (r_m - r))`.
pub fn exact_response(geometry: &ArrayGeometry, point: &SourcePoint) -> ResponseVector {
    let k = geometry.wavenumber();
    let p = point.position();
    let r = point.distance;
    let delta = geometry.spacing();
    ResponseVector(
        geometry
            .grid_iter()
            .map(|(i, j)| {
                let r_m = distance_from(geometry, &p, i, j);
                // r_m - r without cancellation: (r_m^2 - r^2) / (r_m + r)
                let (y, z) = (i as f64 * delta, j as f64 * delta);
                let sq_diff = y * y + z * z - 2.0 * (p[1] * y + p[2] * z);
                let diff = sq_diff / (r_m + r);
                Complex64::from_polar(1.0, -k * diff)
            })
            .collect(),
    )
}

/// Fresnel-approximated response with the quadratic `1/r` phase term.
pub fn fresnel_response(geometry: &ArrayGeometry, point: &SourcePoint) -> ResponseVector {
    fresnel_phases(geometry, point.azimuth, point.elevation, Some(point.distance))
}

/// Planar-wavefront response, the `r -> infinity` limit of the Fresnel form.
pub fn far_field_response(
    geometry: &ArrayGeometry,
    azimuth: f64,
    elevation: f64,
) -> Result<ResponseVector> {
    check_angles(azimuth, elevation)?;
    Ok(fresnel_phases(geometry, azimuth, elevation, None))
}

/// Response of the requested flavor.
pub fn response(
    geometry: &ArrayGeometry,
    point: &SourcePoint,
    flavor: ResponseFlavor,
) -> ResponseVector {
    match flavor {
        ResponseFlavor::Exact => exact_response(geometry, point),
        ResponseFlavor::Fresnel => fresnel_response(geometry, point),
    }
}

fn fresnel_phases(
    geometry: &ArrayGeometry,
    azimuth: f64,
    elevation: f64,
    distance: Option<f64>,
) -> ResponseVector {
    let k = geometry.wavenumber();
    let delta = geometry.spacing();
    let (st, ct) = elevation.sin_cos();
    let horizontal = ct * azimuth.sin();
    let curvature = distance.map_or(0.0, |r| delta * delta / (2.0 * r));
    ResponseVector(
        geometry
            .grid_iter()
            .map(|(i, j)| {
                let (fi, fj) = (i as f64, j as f64);
                let linear = delta * (fi * horizontal + fj * st);
                let quadratic = curvature * (fi * fi + fj * fj);
                Complex64::from_polar(1.0, k * (linear - quadratic))
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn reference_array() -> ArrayGeometry {
        ArrayGeometry::new(32, 32, 0.05, 0.1).unwrap()
    }

    /// Factored form `r sqrt(1 - 2 delta (i cos t sin p + j sin t)/r + delta^2 (i^2+j^2)/r^2)`.
    fn factored_distance(g: &ArrayGeometry, p: &SourcePoint, m: usize) -> f64 {
        let idx = g.antenna_index(m).unwrap();
        let (i, j) = (idx.i as f64, idx.j as f64);
        let d = g.spacing();
        let r = p.distance;
        let lin = i * p.elevation.cos() * p.azimuth.sin() + j * p.elevation.sin();
        r * (1.0 - 2.0 * d * lin / r + d * d * (i * i + j * j) / (r * r)).sqrt()
    }

    fn wrap(phase: f64) -> f64 {
        (phase + PI).rem_euclid(2.0 * PI) - PI
    }

    fn max_phase_error(a: &ResponseVector, b: &ResponseVector) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x * y.conj()).arg().abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn corner_element_distance_is_range() {
        let g = reference_array();
        let p = SourcePoint::new(0.3, -0.2, 17.5).unwrap();
        assert!((element_distance(&g, &p, 1).unwrap() - 17.5).abs() < 1e-12);
    }

    #[test]
    fn broadside_distance() {
        let g = reference_array();
        let p = SourcePoint::new(0.0, 0.0, 10.0).unwrap();
        let expected = (100.0f64 + 0.05 * 0.05).sqrt();
        assert!((element_distance(&g, &p, 2).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 10.000125).abs() < 1e-6);
    }

    #[test]
    fn single_antenna_responses() {
        let g = ArrayGeometry::new(1, 1, 0.05, 0.1).unwrap();
        let p = SourcePoint::new(0.4, 0.1, 3.0).unwrap();
        assert_eq!(exact_response(&g, &p).as_slice(), &[Complex64::new(1.0, 0.0)]);
        assert_eq!(fresnel_response(&g, &p).as_slice(), &[Complex64::new(1.0, 0.0)]);
    }

    #[test]
    fn broadside_far_field_is_all_ones() {
        let g = reference_array();
        let b = far_field_response(&g, 0.0, 0.0).unwrap();
        assert!(b.as_slice().iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn ula_steering_phases() {
        let g = ArrayGeometry::half_wavelength(16, 1, 0.1).unwrap();
        let phi = PI / 6.0;
        let b = far_field_response(&g, phi, 0.0).unwrap();
        for (i, z) in b.as_slice().iter().enumerate() {
            let expected = Complex64::from_polar(1.0, i as f64 * PI * phi.sin());
            assert!((z - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn fresnel_converges_to_far_field() {
        let g = reference_array();
        let r = 1e7 * g.fraunhofer_distance();
        let p = SourcePoint::new(0.3, -0.2, r).unwrap();
        let nf = fresnel_response(&g, &p);
        let ff = far_field_response(&g, 0.3, -0.2).unwrap();
        assert!(max_phase_error(&nf, &ff) < 1e-6);
    }

    #[test]
    fn fresnel_error_shrinks_with_distance() {
        let g = reference_array();
        let lo = g.fresnel_distance().ln();
        let hi = (10.0 * g.fraunhofer_distance()).ln();
        let mut previous = f64::INFINITY;
        for step in 0..25 {
            let r = (lo + (hi - lo) * step as f64 / 24.0).exp();
            let p = SourcePoint::new(0.2, -0.1, r).unwrap();
            let err = max_phase_error(&exact_response(&g, &p), &fresnel_response(&g, &p));
            assert!(err < previous, "r={r}: {err} !< {previous}");
            previous = err;
        }
    }

    #[test]
    fn broadside_ten_meters_phase_deviation() {
        let g = reference_array();
        let p = SourcePoint::new(0.0, 0.0, 10.0).unwrap();
        let err = max_phase_error(&exact_response(&g, &p), &fresnel_response(&g, &p));
        // Third-order Taylor remainder at the far corner: k (y^2+z^2)^2 / (8 r^3).
        let corner: f64 = 2.0 * (31.0f64 * 0.05).powi(2);
        let bound = g.wavenumber() * corner * corner / (8.0 * 1000.0);
        assert!(err > 0.0 && err <= bound * 1.01, "err={err} bound={bound}");
    }

    #[test]
    fn rejects_out_of_range_angles() {
        assert!(SourcePoint::new(2.0, 0.0, 1.0).is_err());
        assert!(SourcePoint::new(0.0, -1.6, 1.0).is_err());
        assert!(SourcePoint::new(0.0, 0.0, 0.0).is_err());
        let g = reference_array();
        assert!(far_field_response(&g, 0.0, 1.6).is_err());
    }

    proptest! {
        #[test]
        fn distance_forms_agree(
            phi in -1.5f64..1.5,
            theta in -1.5f64..1.5,
            r in 0.5f64..500.0,
            m in 1usize..=1024,
        ) {
            let g = reference_array();
            let p = SourcePoint::new(phi, theta, r).unwrap();
            let raw = element_distance(&g, &p, m).unwrap();
            let factored = factored_distance(&g, &p, m);
            prop_assert!((raw - factored).abs() <= 1e-12 * raw);
        }

        #[test]
        fn responses_unit_modulus_and_consistent(
            phi in -1.5f64..1.5,
            theta in -1.5f64..1.5,
            r in 1.0f64..500.0,
        ) {
            let g = ArrayGeometry::new(8, 6, 0.05, 0.1).unwrap();
            let p = SourcePoint::new(phi, theta, r).unwrap();
            let exact = exact_response(&g, &p);
            let fresnel = fresnel_response(&g, &p);
            let far = far_field_response(&g, phi, theta).unwrap();
            for v in [&exact, &fresnel, &far] {
                prop_assert_eq!(v.len(), 48);
                for z in v.as_slice() {
                    prop_assert!((z.norm() - 1.0).abs() < 1e-12);
                }
            }
            prop_assert_eq!(exact[0], Complex64::new(1.0, 0.0));
            prop_assert_eq!(fresnel[0], Complex64::new(1.0, 0.0));

            // Sign convention: the Fresnel phase is -k (r_m - r) with r_m expanded
            // to second order, so it must track the exact phase for the same element.
            let k = g.wavenumber();
            for m in 1..=48 {
                let exact_phase = -k * (element_distance(&g, &p, m).unwrap() - r);
                prop_assert!(wrap(exact[m - 1].arg() - exact_phase).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn fresnel_sign_matches_exact_in_near_field() {
        // The Fresnel phase drops only the (u.p)^2 / 2r term and higher
        // orders, so it stays within k |u|^2 / 2r of the exact phase, while
        // the conjugate convention is off by twice the linear phase.
        let g = ArrayGeometry::half_wavelength(4, 4, 0.1).unwrap();
        let r = 30.0;
        let p = SourcePoint::new(0.4, -0.25, r).unwrap();
        let exact = exact_response(&g, &p);
        let fresnel = fresnel_response(&g, &p);
        let conj = ResponseVector(fresnel.as_slice().iter().map(|z| z.conj()).collect());
        let max_u2 = (1..=16)
            .map(|m| {
                let u = g.antenna_position(m).unwrap();
                u.iter().map(|x| x * x).sum::<f64>()
            })
            .fold(0.0, f64::max);
        let bound = g.wavenumber() * max_u2 / (2.0 * r) + 1e-3;
        assert!(max_phase_error(&exact, &fresnel) < bound);
        assert!(max_phase_error(&exact, &conj) > 1.0);
    }
}

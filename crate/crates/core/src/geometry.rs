//! Uniform planar array layout.
//!
//! Antennas are numbered row by row. Element `m` (1-based) sits at horizontal
//! index `i = (m - 1) mod M_H` and vertical index `j = (m - 1) div M_H`, at
//! position `[0, i * spacing, j * spacing]`, so the array lies in the yz-plane
//! with element 1 at the origin.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    m_h: usize,
    m_v: usize,
    spacing: f64,
    wavelength: f64,
}

/// Grid coordinates of one antenna. `m` is 1-based, `i`/`j` are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AntennaIndex {
    pub m: usize,
    pub i: usize,
    pub j: usize,
}

impl ArrayGeometry {
    /// `m_h` antennas per row, `m_v` per column, element `spacing` and
    /// carrier `wavelength` in meters.
    pub fn new(m_h: usize, m_v: usize, spacing: f64, wavelength: f64) -> Result<Self> {
        if m_h == 0 || m_v == 0 {
            return Err(Error::validation(format!(
                "array needs at least one antenna per row and column (got {m_h}x{m_v})"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::validation(format!("spacing must be positive, got {spacing}")));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::validation(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        Ok(Self {
            m_h,
            m_v,
            spacing,
            wavelength,
        })
    }

    /// Half-wavelength spaced array.
    pub fn half_wavelength(m_h: usize, m_v: usize, wavelength: f64) -> Result<Self> {
        Self::new(m_h, m_v, 0.5 * wavelength, wavelength)
    }

    pub fn m_h(&self) -> usize {
        self.m_h
    }

    pub fn m_v(&self) -> usize {
        self.m_v
    }

    /// Element spacing in meters.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Carrier wavelength in meters.
    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Total number of antennas `M = M_H * M_V`.
    pub fn num_antennas(&self) -> usize {
        self.m_h * self.m_v
    }

    /// Wavenumber `2 pi / lambda`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    /// Aperture length `D = spacing * sqrt(M_H^2 + M_V^2)` in meters.
    pub fn aperture(&self) -> f64 {
        let (h, v) = (self.m_h as f64, self.m_v as f64);
        self.spacing * (h * h + v * v).sqrt()
    }

    /// Far-field boundary `2 D^2 / lambda` in meters.
    pub fn fraunhofer_distance(&self) -> f64 {
        let d = self.aperture();
        2.0 * d * d / self.wavelength
    }

    /// Inner boundary of the radiative near field, `0.62 sqrt(D^3 / lambda)`.
    pub fn fresnel_distance(&self) -> f64 {
        let d = self.aperture();
        0.62 * (d * d * d / self.wavelength).sqrt()
    }

    /// True when `distance` lies in `[fresnel, fraunhofer]`.
    pub fn in_radiative_near_field(&self, distance: f64) -> bool {
        distance >= self.fresnel_distance() && distance <= self.fraunhofer_distance()
    }

    pub fn antenna_index(&self, m: usize) -> Result<AntennaIndex> {
        let len = self.num_antennas();
        if m == 0 || m > len {
            return Err(Error::IndexOutOfRange { index: m, len });
        }
        let (i, j) = self.grid(m - 1);
        Ok(AntennaIndex { m, i, j })
    }

    /// Position `[0, i * spacing, j * spacing]` of antenna `m` (1-based).
    pub fn antenna_position(&self, m: usize) -> Result<[f64; 3]> {
        let idx = self.antenna_index(m)?;
        Ok([
            0.0,
            idx.i as f64 * self.spacing,
            idx.j as f64 * self.spacing,
        ])
    }

    /// 1-based flat index of grid cell `(i, j)`.
    pub fn flat_index(&self, i: usize, j: usize) -> Result<usize> {
        if i >= self.m_h || j >= self.m_v {
            return Err(Error::validation(format!(
                "grid cell ({i}, {j}) outside {}x{} array",
                self.m_h, self.m_v
            )));
        }
        Ok(j * self.m_h + i + 1)
    }

    /// Grid coordinates of the 0-based element `idx`.
    pub(crate) fn grid(&self, idx: usize) -> (usize, usize) {
        (idx % self.m_h, idx / self.m_h)
    }

    /// Iterator over `(i, j)` for all elements in flat order.
    pub(crate) fn grid_iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_antennas()).map(move |idx| self.grid(idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    fn reference_array() -> ArrayGeometry {
        ArrayGeometry::new(32, 32, 0.05, 0.1).unwrap()
    }

    #[test]
    fn index_examples() {
        let g = reference_array();
        assert_eq!(g.antenna_index(1).unwrap(), AntennaIndex { m: 1, i: 0, j: 0 });
        assert_eq!(g.antenna_index(33).unwrap(), AntennaIndex { m: 33, i: 0, j: 1 });
        assert_eq!(
            g.antenna_index(1024).unwrap(),
            AntennaIndex { m: 1024, i: 31, j: 31 }
        );
    }

    #[test]
    fn index_out_of_range() {
        let g = reference_array();
        assert!(matches!(
            g.antenna_index(0),
            Err(Error::IndexOutOfRange { index: 0, len: 1024 })
        ));
        assert!(g.antenna_index(1025).is_err());
        assert!(g.antenna_position(1025).is_err());
    }

    #[test]
    fn position_examples() {
        let g = reference_array();
        assert_eq!(g.antenna_position(1).unwrap(), [0.0, 0.0, 0.0]);
        assert_eq!(g.antenna_position(2).unwrap(), [0.0, 0.05, 0.0]);
        assert_eq!(g.antenna_position(33).unwrap(), [0.0, 0.0, 0.05]);
    }

    #[test]
    fn boundary_distances() {
        let g = reference_array();
        assert!(close(g.fraunhofer_distance(), 102.4, 1e-12));
        assert!((g.aperture() - 2.26).abs() < 0.005);
        // 0.62 * sqrt(2.2627417^3 / 0.1)
        assert!((g.fresnel_distance() - 6.6727).abs() < 1e-3);
        assert!(g.in_radiative_near_field(10.0));
        assert!(g.in_radiative_near_field(40.0));
        assert!(!g.in_radiative_near_field(200.0));

        let single = ArrayGeometry::new(1, 1, 0.05, 0.1).unwrap();
        assert!(close(single.fraunhofer_distance(), 0.1, 1e-12));
        assert_eq!(single.num_antennas(), 1);
    }

    #[test]
    fn fresnel_distance_unit_ratio() {
        // D^3 = lambda: a single element with spacing s has D = s * sqrt(2).
        let s = 0.3_f64;
        let d = s * 2f64.sqrt();
        let g = ArrayGeometry::new(1, 1, s, d * d * d).unwrap();
        assert!(close(g.fresnel_distance(), 0.62, 1e-12));
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ArrayGeometry::new(0, 4, 0.05, 0.1).is_err());
        assert!(ArrayGeometry::new(4, 0, 0.05, 0.1).is_err());
        assert!(ArrayGeometry::new(4, 4, 0.0, 0.1).is_err());
        assert!(ArrayGeometry::new(4, 4, 0.05, -1.0).is_err());
        assert!(ArrayGeometry::new(4, 4, f64::NAN, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn index_roundtrip(m_h in 1usize..40, m_v in 1usize..40, seed in 0usize..10_000) {
            let g = ArrayGeometry::new(m_h, m_v, 0.05, 0.1).unwrap();
            let m = seed % g.num_antennas() + 1;
            let idx = g.antenna_index(m).unwrap();
            prop_assert!(idx.i < m_h && idx.j < m_v);
            prop_assert_eq!(g.flat_index(idx.i, idx.j).unwrap(), m);
            prop_assert_eq!(g.antenna_position(m).unwrap()[0], 0.0);
        }

        #[test]
        fn fresnel_inside_fraunhofer(
            m_h in 1usize..64,
            m_v in 1usize..64,
            spacing in 0.001f64..1.0,
            wavelength in 0.001f64..1.0,
        ) {
            prop_assume!(m_h * m_v >= 2);
            let g = ArrayGeometry::new(m_h, m_v, spacing, wavelength).unwrap();
            // fresnel < fraunhofer  <=>  D / lambda > (0.31)^2
            if g.aperture() / wavelength > 0.31f64.powi(2) {
                prop_assert!(g.fresnel_distance() < g.fraunhofer_distance());
            }
        }
    }
}

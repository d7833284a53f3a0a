//! Experiment presets.
//!
//! A configuration file is TOML with one table per preset. Keys left out of
//! a table fall back to [`Preset::default`]. Angles are strings so that
//! they can be written as rational multiples of pi (`"-pi/6"`, `"2pi/3"`,
//! `"0.25"`).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::correlation::ScatteringRegion;
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::response::ResponseFlavor;
use crate::sim::{AngleSampling, ExperimentConfig};
use crate::DEFAULT_RANK_FRACTION;

/// The preset file shipped with the crate.
pub const BUILTIN_PRESETS: &str = include_str!("../presets.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preset {
    pub m_h: usize,
    pub m_v: usize,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Element spacing as a multiple of the wavelength.
    pub spacing_wavelengths: f64,
    pub azimuth: [String; 2],
    pub elevation: [String; 2],
    /// Scatterer distance range in meters for the NMSE experiment.
    pub distance: [f64; 2],
    /// Near-field distance ranges plotted by `eigenspectrum`.
    pub spectrum_distances: Vec<[f64; 2]>,
    /// Pilot SNRs in dB; `nmse` writes one curve per value.
    pub snr_db: Vec<f64>,
    pub beta: f64,
    pub clusters: usize,
    pub trials: usize,
    pub blocks: usize,
    pub seed: u64,
    pub flavor: ResponseFlavor,
    pub rank_fraction: f64,
    pub angle_sampling: AngleSampling,
    /// Gauss-Legendre nodes per axis for the brute-force oracle.
    pub oracle_nodes: usize,
    /// Directory for cached representative matrices; empty disables caching.
    pub cache_dir: String,
}

impl Default for Preset {
    fn default() -> Self {
        Self {
            m_h: 32,
            m_v: 32,
            wavelength: 0.1,
            spacing_wavelengths: 0.5,
            azimuth: ["-pi/6".into(), "pi/6".into()],
            elevation: ["-pi/9".into(), "0".into()],
            distance: [10.0, 20.0],
            spectrum_distances: vec![[10.0, 20.0], [20.0, 40.0]],
            snr_db: vec![0.0],
            beta: 1.0,
            clusters: 10,
            trials: 2000,
            blocks: 10,
            seed: 20240,
            flavor: ResponseFlavor::Fresnel,
            rank_fraction: DEFAULT_RANK_FRACTION,
            angle_sampling: AngleSampling::UniformAngle,
            oracle_nodes: 64,
            cache_dir: String::new(),
        }
    }
}

impl Preset {
    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(
            self.m_h,
            self.m_v,
            self.spacing_wavelengths * self.wavelength,
            self.wavelength,
        )
    }

    /// Scattering region with the preset angles and the given distance range.
    pub fn region_at(&self, distance: [f64; 2]) -> Result<ScatteringRegion> {
        let az = (parse_angle(&self.azimuth[0])?, parse_angle(&self.azimuth[1])?);
        let el = (parse_angle(&self.elevation[0])?, parse_angle(&self.elevation[1])?);
        ScatteringRegion::new(az, el, (distance[0], distance[1]))
    }

    pub fn region(&self) -> Result<ScatteringRegion> {
        self.region_at(self.distance)
    }

    pub fn cache_dir(&self) -> Option<PathBuf> {
        (!self.cache_dir.is_empty()).then(|| PathBuf::from(&self.cache_dir))
    }

    /// Experiment configuration at one SNR.
    pub fn experiment(&self, snr_db: f64) -> Result<ExperimentConfig> {
        let config = ExperimentConfig {
            geometry: self.geometry()?,
            region: self.region()?,
            cluster_count: self.clusters,
            snr_db,
            beta: self.beta,
            trials: self.trials,
            max_blocks: self.blocks,
            seed: self.seed,
            response_flavor: self.flavor,
            rank_fraction: self.rank_fraction,
            angle_sampling: self.angle_sampling,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.region()?;
        for d in &self.spectrum_distances {
            self.region_at(*d)?;
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db needs at least one value".into()));
        }
        for &snr in &self.snr_db {
            self.experiment(snr)?;
        }
        if self.oracle_nodes == 0 {
            return Err(Error::Config("oracle_nodes must be positive".into()));
        }
        Ok(())
    }

    /// Applies `key=value` overrides. Values use TOML syntax; bare words are
    /// taken as strings, and a scalar assigned to a list key becomes a
    /// one-element list.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self)
            .map_err(|e| Error::Config(format!("cannot serialize preset: {e}")))?;
        for raw in overrides {
            let raw = raw.as_ref();
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {raw:?} is not key=value")))?;
            let key = key.trim();
            let current = table
                .get(key)
                .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
            let mut parsed = parse_value(value.trim());
            if current.is_array() && !parsed.is_array() {
                parsed = toml::Value::Array(vec![parsed]);
            }
            table.insert(key.to_string(), parsed);
        }
        let preset: Preset = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("invalid override: {e}")))?;
        Ok(preset)
    }
}

fn parse_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

/// All presets of a configuration file, by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    presets: BTreeMap<String, Preset>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let presets: BTreeMap<String, Preset> =
            toml::from_str(text).map_err(|e| Error::Config(format!("cannot parse config: {e}")))?;
        Ok(Self { presets })
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_PRESETS).expect("built-in presets parse")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn preset(&self, name: &str) -> Result<&Preset> {
        self.presets.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown preset {name:?} (available: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.presets.keys().map(String::as_str)
    }
}

/// Parses an angle in radians: a decimal number, or a rational multiple of
/// pi such as `pi`, `-pi/6`, `2pi/3`, `3*pi/4`, `0.5pi`.
pub fn parse_angle(text: &str) -> Result<f64> {
    let bad = || Error::Config(format!("cannot parse angle {text:?}"));
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let Some(pos) = s.find("pi") else {
        return s.parse::<f64>().map_err(|_| bad());
    };
    let (head, tail) = (&s[..pos], &s[pos + 2..]);
    let head = head.strip_suffix('*').unwrap_or(head);
    let coefficient = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let denominator = match tail {
        "" => 1.0,
        t => t
            .strip_prefix('/')
            .ok_or_else(bad)?
            .parse::<f64>()
            .map_err(|_| bad())?,
    };
    if denominator == 0.0 {
        return Err(bad());
    }
    Ok(coefficient * PI / denominator)
}

//! Monte Carlo comparison of the channel estimators.
//!
//! Every trial draws one cluster set that stays fixed for the `L` coherence
//! blocks of that trial, then draws an independent channel and noise vector
//! per block. Trial `t` uses its own ChaCha stream derived from
//! `(seed, t)`, and per-trial results are reduced in trial order, so the
//! output does not depend on how trials are scheduled across threads.

use std::path::{Path, PathBuf};

use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correlation::{
    far_field_representative_correlation, representative_correlation, Cluster, ClusterSet,
    CorrelationMatrix, ScatteringRegion,
};
use crate::error::{Error, Result};
use crate::estimators::{DimensionPowerTracker, FactoredMmse};
use crate::geometry::ArrayGeometry;
use crate::io;
use crate::linalg::mul;
use crate::response::{response, ResponseFlavor, SourcePoint};
use crate::subspace::{build_subspace, Subspace};

/// How scatterer angles are drawn inside the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AngleSampling {
    /// Uniform in the angles themselves.
    #[default]
    UniformAngle,
    /// Uniform in the sines of the angles.
    UniformSine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: ArrayGeometry,
    pub region: ScatteringRegion,
    pub cluster_count: usize,
    /// Pilot SNR in dB.
    pub snr_db: f64,
    pub beta: f64,
    pub trials: usize,
    /// Number of coherence blocks `L` per trial.
    pub max_blocks: usize,
    pub seed: u64,
    pub response_flavor: ResponseFlavor,
    pub rank_fraction: f64,
    pub angle_sampling: AngleSampling,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::validation("trials must be at least 1"));
        }
        if self.max_blocks == 0 {
            return Err(Error::validation("max_blocks must be at least 1"));
        }
        if self.cluster_count == 0 {
            return Err(Error::validation("cluster_count must be at least 1"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::validation(format!("snr_db must be finite, got {}", self.snr_db)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::validation(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.rank_fraction > 0.0 && self.rank_fraction <= 1.0) {
            return Err(Error::validation(format!(
                "rank_fraction must lie in (0, 1], got {}",
                self.rank_fraction
            )));
        }
        Ok(())
    }

    /// Linear pilot SNR `rho`.
    pub fn snr(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }
}

/// Random stream for trial `trial`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Sample from `CN(0, 1)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws `cluster_count` scatterers inside the region with powers drawn
/// uniformly on `(0, 1]` and normalized to sum to one.
pub fn sample_clusters<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> Result<ClusterSet> {
    let region = &config.region;
    let (p1, p2) = region.azimuth();
    let (t1, t2) = region.elevation();
    let (d1, d2) = region.distance();
    let mut clusters = Vec::with_capacity(config.cluster_count);
    for _ in 0..config.cluster_count {
        let (azimuth, elevation) = match config.angle_sampling {
            AngleSampling::UniformAngle => (rng.random_range(p1..=p2), rng.random_range(t1..=t2)),
            AngleSampling::UniformSine => (
                rng.random_range(p1.sin()..=p2.sin()).asin().clamp(p1, p2),
                rng.random_range(t1.sin()..=t2.sin()).asin().clamp(t1, t2),
            ),
        };
        let distance = rng.random_range(d1..=d2);
        let power = 1.0 - rng.random::<f64>();
        clusters.push(Cluster {
            point: SourcePoint::new(azimuth, elevation, distance)?,
            power,
        });
    }
    let total: f64 = clusters.iter().map(|c| c.power).sum();
    for c in &mut clusters {
        c.power /= total;
    }
    ClusterSet::within(clusters, config.beta, region)
}

/// One channel realization `h = sum_k g_k b_k` with `g_k ~ CN(0, beta p_k)`.
pub fn sample_channel<R: Rng + ?Sized>(
    clusters: &ClusterSet,
    geometry: &ArrayGeometry,
    rng: &mut R,
    flavor: ResponseFlavor,
) -> Vec<Complex64> {
    let mut h = vec![Complex64::new(0.0, 0.0); geometry.num_antennas()];
    for cluster in clusters.clusters() {
        let gain = complex_normal(rng) * (clusters.beta() * cluster.power).sqrt();
        let b = response(geometry, &cluster.point, flavor);
        for (hm, bm) in h.iter_mut().zip(b.as_slice()) {
            *hm += gain * bm;
        }
    }
    h
}

/// The estimators compared by [`run_nmse_experiment`], in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Mmse,
    Ls,
    RslsFarField,
    RslsNearField,
    DynamicRslsFarField,
    DynamicRslsNearField,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::Mmse,
        Estimator::Ls,
        Estimator::RslsFarField,
        Estimator::RslsNearField,
        Estimator::DynamicRslsFarField,
        Estimator::DynamicRslsNearField,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Mmse => "mmse",
            Estimator::Ls => "ls",
            Estimator::RslsFarField => "rsls-ff",
            Estimator::RslsNearField => "rsls-nf",
            Estimator::DynamicRslsFarField => "dyn-rsls-ff",
            Estimator::DynamicRslsNearField => "dyn-rsls-nf",
        }
    }

    /// MMSE and LS use the same statistics in every block, so their curves
    /// are pooled over blocks.
    pub fn is_flat(&self) -> bool {
        matches!(self, Estimator::Mmse | Estimator::Ls)
    }

    fn slot(&self) -> usize {
        *self as usize
    }
}

/// NMSE and its standard error for one estimator, per coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorCurve {
    pub estimator: Estimator,
    pub nmse: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl EstimatorCurve {
    /// NMSE at block `l` (1-based).
    pub fn at(&self, l: usize) -> f64 {
        self.nmse[l - 1]
    }

    pub fn stderr_at(&self, l: usize) -> f64 {
        self.stderr[l - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmseCurve {
    pub blocks: usize,
    pub trials: usize,
    pub curves: Vec<EstimatorCurve>,
}

impl NmseCurve {
    pub fn get(&self, estimator: Estimator) -> &EstimatorCurve {
        &self.curves[estimator.slot()]
    }
}

/// Ratio estimate `sum(e) / sum(h)` with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    pub value: f64,
    pub stderr: f64,
}

pub fn ratio_estimate(errors: &[f64], energies: &[f64]) -> RatioEstimate {
    let n = errors.len();
    let total_e: f64 = errors.iter().sum();
    let total_h: f64 = energies.iter().sum();
    let value = total_e / total_h;
    if n < 2 {
        return RatioEstimate { value, stderr: 0.0 };
    }
    let ss: f64 = errors
        .iter()
        .zip(energies)
        .map(|(e, h)| {
            let d = e - value * h;
            d * d
        })
        .sum();
    let mean_h = total_h / n as f64;
    let stderr = (ss / (n as f64 * (n as f64 - 1.0))).sqrt() / mean_h;
    RatioEstimate { value, stderr }
}

/// Near-field and far-field subspaces of a region, shared by all trials.
#[derive(Debug, Clone)]
pub struct RepresentativeSubspaces {
    pub near: Subspace,
    pub far: Subspace,
}

impl RepresentativeSubspaces {
    pub fn build(config: &ExperimentConfig, cache_dir: Option<&Path>) -> Result<Self> {
        let near = representative_matrix(RepresentativeKind::NearField, config, cache_dir)?;
        let far = representative_matrix(RepresentativeKind::FarField, config, cache_dir)?;
        Ok(Self {
            near: build_subspace(&near, config.rank_fraction)?,
            far: build_subspace(&far, config.rank_fraction)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepresentativeKind {
    NearField,
    FarField,
}

impl RepresentativeKind {
    fn tag(&self) -> &'static str {
        match self {
            RepresentativeKind::NearField => "nf",
            RepresentativeKind::FarField => "ff",
        }
    }
}

/// Content hash identifying a representative matrix.
pub fn cache_key(kind: RepresentativeKind, geometry: &ArrayGeometry, region: &ScatteringRegion, beta: f64) -> String {
    let bits = |x: f64| format!("{:016x}", x.to_bits());
    let text = format!(
        "nearfield-rbar-v1;kind={};m_h={};m_v={};spacing={};lambda={};az={},{};el={},{};d={},{};beta={}",
        kind.tag(),
        geometry.m_h(),
        geometry.m_v(),
        bits(geometry.spacing()),
        bits(geometry.wavelength()),
        bits(region.azimuth().0),
        bits(region.azimuth().1),
        bits(region.elevation().0),
        bits(region.elevation().1),
        bits(region.distance().0),
        bits(region.distance().1),
        bits(beta),
    );
    hex::encode(&Sha256::digest(text.as_bytes())[..16])
}

/// Cache file path for a representative matrix.
pub fn cache_path(dir: &Path, kind: RepresentativeKind, config: &ExperimentConfig) -> PathBuf {
    dir.join(format!(
        "rbar-{}-{}.bin",
        kind.tag(),
        cache_key(kind, &config.geometry, &config.region, config.beta)
    ))
}

/// Representative matrix for the experiment region, read from or written to
/// `cache_dir` when given.
pub fn representative_matrix(
    kind: RepresentativeKind,
    config: &ExperimentConfig,
    cache_dir: Option<&Path>,
) -> Result<CorrelationMatrix> {
    let build = || match kind {
        RepresentativeKind::NearField => representative_correlation(&config.geometry, &config.region, config.beta),
        RepresentativeKind::FarField => {
            far_field_representative_correlation(&config.geometry, &config.region, config.beta)
        }
    };
    let Some(dir) = cache_dir else {
        return build();
    };
    let path = cache_path(dir, kind, config);
    if path.exists() {
        let cached = io::read_correlation_binary(&path)
            .map_err(|e| e.context(format!("reading cache {}", path.display())))?;
        if cached.dim() == config.geometry.num_antennas() {
            return Ok(cached);
        }
    }
    let matrix = build()?;
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    io::write_correlation_binary(&tmp, &matrix, kind == RepresentativeKind::FarField)?;
    std::fs::rename(&tmp, &path)?;
    Ok(matrix)
}

/// Squared errors per estimator and block for one trial, plus channel energies.
#[derive(Debug, Clone)]
struct TrialRecord {
    errors: Vec<Vec<f64>>,
    energy: Vec<f64>,
}

/// Runs the estimator comparison, building the representative subspaces first.
pub fn run_nmse_experiment(config: &ExperimentConfig) -> Result<NmseCurve> {
    config.validate()?;
    let subspaces = RepresentativeSubspaces::build(config, None)?;
    run_nmse_with_subspaces(config, &subspaces)
}

/// Runs the estimator comparison with precomputed subspaces.
pub fn run_nmse_with_subspaces(
    config: &ExperimentConfig,
    subspaces: &RepresentativeSubspaces,
) -> Result<NmseCurve> {
    config.validate()?;
    let m = config.geometry.num_antennas();
    for s in [&subspaces.near, &subspaces.far] {
        if s.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: s.dim(),
            });
        }
    }
    let records = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, subspaces, t).map_err(|e| e.context(format!("trial {t}"))))
        .collect::<Result<Vec<_>>>()?;

    let blocks = config.max_blocks;
    let curves = Estimator::ALL
        .iter()
        .map(|&estimator| {
            let slot = estimator.slot();
            let mut nmse = Vec::with_capacity(blocks);
            let mut stderr = Vec::with_capacity(blocks);
            if estimator.is_flat() {
                let errors: Vec<f64> = records.iter().map(|r| r.errors[slot].iter().sum()).collect();
                let energies: Vec<f64> = records.iter().map(|r| r.energy.iter().sum()).collect();
                let pooled = ratio_estimate(&errors, &energies);
                nmse.resize(blocks, pooled.value);
                stderr.resize(blocks, pooled.stderr);
            } else {
                for b in 0..blocks {
                    let errors: Vec<f64> = records.iter().map(|r| r.errors[slot][b]).collect();
                    let energies: Vec<f64> = records.iter().map(|r| r.energy[b]).collect();
                    let est = ratio_estimate(&errors, &energies);
                    nmse.push(est.value);
                    stderr.push(est.stderr);
                }
            }
            EstimatorCurve {
                estimator,
                nmse,
                stderr,
            }
        })
        .collect();
    Ok(NmseCurve {
        blocks,
        trials: config.trials,
        curves,
    })
}

fn run_trial(config: &ExperimentConfig, subspaces: &RepresentativeSubspaces, trial: usize) -> Result<TrialRecord> {
    let mut rng = trial_rng(config.seed, trial as u64);
    let clusters = sample_clusters(config, &mut rng)?;
    let factor = clusters.factor(&config.geometry, config.response_flavor);
    let rho = config.snr();
    let sqrt_rho = rho.sqrt();
    let m = config.geometry.num_antennas();
    let k = clusters.len();
    let blocks = config.max_blocks;

    let mut gains = Mat::<Complex64>::zeros(k, blocks);
    let mut noise = Mat::<Complex64>::zeros(m, blocks);
    for b in 0..blocks {
        for i in 0..k {
            gains[(i, b)] = complex_normal(&mut rng);
        }
        for i in 0..m {
            noise[(i, b)] = complex_normal(&mut rng);
        }
    }
    let h = mul(factor.as_ref(), gains.as_ref());
    let y = Mat::from_fn(m, blocks, |i, b| h[(i, b)] * sqrt_rho + noise[(i, b)]);

    let energy: Vec<f64> = (0..blocks).map(|b| h.col(b).iter().map(|z| z.norm_sqr()).sum()).collect();
    let mut errors = vec![vec![0.0; blocks]; Estimator::ALL.len()];

    let mmse = FactoredMmse::new(factor, rho)?;
    let mmse_est = mmse.estimate_columns(y.as_ref());
    errors[Estimator::Mmse.slot()] = (0..blocks)
        .map(|b| squared_distance(h.col(b).iter(), mmse_est.col(b).iter().copied()))
        .collect();
    errors[Estimator::Ls.slot()] = (0..blocks)
        .map(|b| squared_distance(h.col(b).iter(), y.col(b).iter().map(|z| z / sqrt_rho)))
        .collect();

    for (subspace, plain, dynamic) in [
        (&subspaces.far, Estimator::RslsFarField, Estimator::DynamicRslsFarField),
        (&subspaces.near, Estimator::RslsNearField, Estimator::DynamicRslsNearField),
    ] {
        let basis_h = mul(subspace.basis().adjoint(), h.as_ref());
        let basis_y = mul(subspace.basis().adjoint(), y.as_ref());
        let mut tracker = DimensionPowerTracker::new(subspace.rank());
        for b in 0..blocks {
            let ch = basis_h.col(b);
            let cy: Vec<Complex64> = basis_y.col(b).iter().copied().collect();
            let plain_coeffs: Vec<Complex64> = cy.iter().map(|z| z / sqrt_rho).collect();
            errors[plain.slot()][b] = subspace_error(energy[b], ch, &plain_coeffs);
            let dynamic_coeffs = if tracker.blocks() == 0 {
                plain_coeffs
            } else {
                tracker
                    .weights()?
                    .iter()
                    .zip(&cy)
                    .map(|(w, z)| z * (w / sqrt_rho))
                    .collect()
            };
            errors[dynamic.slot()][b] = subspace_error(energy[b], ch, &dynamic_coeffs);
            tracker.observe(&cy)?;
        }
    }
    Ok(TrialRecord { errors, energy })
}

fn squared_distance<'a>(a: impl Iterator<Item = &'a Complex64>, b: impl Iterator<Item = Complex64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// `||h - U c||^2` from `||h||^2`, `U^H h` and `c`, using `U^H U = I`.
fn subspace_error(energy: f64, projected: faer::ColRef<'_, Complex64>, coeffs: &[Complex64]) -> f64 {
    let mut cross = 0.0;
    let mut own = 0.0;
    for (p, c) in projected.iter().zip(coeffs) {
        cross += (p.conj() * c).re;
        own += c.norm_sqr();
    }
    energy - 2.0 * cross + own
}

/// Monte Carlo NMSE of MMSE and LS for one fixed cluster set, alongside the
/// analytic values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedClusterReport {
    pub mmse: RatioEstimate,
    pub mmse_analytic: f64,
    pub ls: RatioEstimate,
    pub ls_analytic: f64,
}

pub fn fixed_cluster_nmse(
    geometry: &ArrayGeometry,
    clusters: &ClusterSet,
    flavor: ResponseFlavor,
    snr: f64,
    realizations: usize,
    seed: u64,
) -> Result<FixedClusterReport> {
    if realizations == 0 {
        return Err(Error::validation("need at least one realization"));
    }
    let factor = clusters.factor(geometry, flavor);
    let mmse = FactoredMmse::new(factor.clone(), snr)?;
    let m = geometry.num_antennas();
    let sqrt_rho = snr.sqrt();
    let mut rng = trial_rng(seed, 0);
    let mut mmse_err = Vec::with_capacity(realizations);
    let mut ls_err = Vec::with_capacity(realizations);
    let mut energy = Vec::with_capacity(realizations);
    for _ in 0..realizations {
        let h = sample_channel(clusters, geometry, &mut rng, flavor);
        let y: Vec<Complex64> = h.iter().map(|z| z * sqrt_rho + complex_normal(&mut rng)).collect();
        let est = mmse.estimate(&y)?;
        mmse_err.push(squared_distance(h.iter(), est.into_iter()));
        ls_err.push(squared_distance(h.iter(), y.iter().map(|z| z / sqrt_rho)));
        energy.push(h.iter().map(|z| z.norm_sqr()).sum());
    }
    let trace: f64 = (0..factor.ncols())
        .map(|c| factor.col(c).iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum();
    Ok(FixedClusterReport {
        mmse: ratio_estimate(&mmse_err, &energy),
        mmse_analytic: mmse.nmse(),
        ls: ratio_estimate(&ls_err, &energy),
        ls_analytic: m as f64 / (snr * trace),
    })
}

/// Worst-case and mean relative residual of Fresnel responses at `points`
/// when projected onto `subspace`.
pub fn residual_statistics(
    geometry: &ArrayGeometry,
    subspace: &Subspace,
    points: &[SourcePoint],
) -> Result<(f64, f64)> {
    if points.is_empty() {
        return Err(Error::validation("no points to project"));
    }
    let m = geometry.num_antennas();
    let mut responses = Mat::<Complex64>::zeros(m, points.len());
    for (c, p) in points.iter().enumerate() {
        let b = crate::response::fresnel_response(geometry, p);
        for (r, z) in b.as_slice().iter().enumerate() {
            responses[(r, c)] = *z;
        }
    }
    let coeffs = mul(subspace.basis().adjoint(), responses.as_ref());
    let inside = mul(subspace.basis(), coeffs.as_ref());
    let residuals: Vec<f64> = (0..points.len())
        .map(|c| {
            let total: f64 = responses.col(c).iter().map(|z| z.norm_sqr()).sum();
            let outside: f64 = squared_distance(responses.col(c).iter(), inside.col(c).iter().copied());
            (outside / total).sqrt()
        })
        .collect();
    let max = residuals.iter().copied().fold(0.0, f64::max);
    let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
    Ok((max, mean))
}

/// Uniformly drawn points inside `region`.
pub fn sample_region_points(region: &ScatteringRegion, count: usize, seed: u64) -> Result<Vec<SourcePoint>> {
    let mut rng = trial_rng(seed, 0);
    let (p1, p2) = region.azimuth();
    let (t1, t2) = region.elevation();
    let (d1, d2) = region.distance();
    (0..count)
        .map(|_| {
            SourcePoint::new(
                rng.random_range(p1..=p2),
                rng.random_range(t1..=t2),
                rng.random_range(d1..=d2),
            )
        })
        .collect()
}

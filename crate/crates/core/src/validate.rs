//! Self-checks run by the `validate` subcommand.

use std::fmt;

use crate::config::Preset;
use crate::correlation::{
    oracle_correlation, representative_correlation, representative_correlation_with, s_factor,
    CorrelationMatrix, ScatteringRegion,
};
use crate::error::Result;
use crate::geometry::ArrayGeometry;
use crate::sim::{run_nmse_experiment, Estimator};
use crate::subspace::eigendecompose;
use crate::Complex64;

/// Largest allowed entrywise deviation from the oracle, relative to beta.
pub const ORACLE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{status}  {:<width$}  {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Maximum entrywise gap between the closed form built with `distance_factor`
/// and the brute-force oracle, divided by beta.
pub fn oracle_gap_with<F>(
    geometry: &ArrayGeometry,
    region: &ScatteringRegion,
    beta: f64,
    nodes: usize,
    distance_factor: F,
) -> Result<f64>
where
    F: Fn(i64) -> Complex64 + Sync,
{
    let closed = representative_correlation_with(geometry, region, beta, distance_factor)?;
    let oracle = oracle_correlation(geometry, region, beta, nodes)?;
    Ok(closed.max_abs_diff(&oracle)? / beta)
}

pub fn oracle_gap(geometry: &ArrayGeometry, region: &ScatteringRegion, beta: f64, nodes: usize) -> Result<f64> {
    oracle_gap_with(geometry, region, beta, nodes, |k| s_factor(geometry, region, k))
}

/// Trace, Hermitian and positive-semidefinite checks on one matrix.
pub fn structural_checks(matrix: &CorrelationMatrix) -> Result<Vec<Check>> {
    let m = matrix.dim() as f64;
    let beta = matrix.beta();
    let trace = matrix.trace();
    let trace_err = (trace - Complex64::new(m * beta, 0.0)).norm() / (m * beta);
    let herm = matrix.hermitian_deviation() / matrix.max_abs();
    let spectrum = eigendecompose(matrix);
    let psd = match &spectrum {
        Ok(s) => {
            let min = s.eigenvalues().last().copied().unwrap_or(0.0);
            Check::new("psd", min >= 0.0, format!("smallest eigenvalue {min:.3e}"))
        }
        Err(e) => Check::new("psd", false, e.to_string()),
    };
    Ok(vec![
        Check::new("trace", trace_err <= 1e-9, format!("relative error {trace_err:.3e}")),
        Check::new("hermitian", herm <= 1e-12, format!("relative deviation {herm:.3e}")),
        psd,
    ])
}

/// Runs every check for `preset`. The oracle comparison uses a 4x4 array
/// with the preset spacing, wavelength and region so it stays cheap.
pub fn run_validation(preset: &Preset) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let full = preset.geometry()?;
    let small = ArrayGeometry::new(4, 4, full.spacing(), full.wavelength())?;
    let region = preset.region()?;

    let gap = oracle_gap(&small, &region, preset.beta, preset.oracle_nodes)?;
    report.checks.push(Check::new(
        "closed-form-vs-oracle",
        gap < ORACLE_TOLERANCE,
        format!("max |gap|/beta {gap:.3e} on 4x4, {} nodes", preset.oracle_nodes),
    ));

    let matrix = representative_correlation(&full, &region, preset.beta)?;
    report.checks.extend(structural_checks(&matrix)?);

    let mut smoke = preset.with_overrides(&["m_h=4", "m_v=4", "trials=200"])?;
    smoke.snr_db = vec![preset.snr_db[0]];
    let curve = run_nmse_experiment(&smoke.experiment(smoke.snr_db[0])?)?;
    let (mmse, rsls, ls) = (
        curve.get(Estimator::Mmse).at(1),
        curve.get(Estimator::RslsNearField).at(1),
        curve.get(Estimator::Ls).at(1),
    );
    report.checks.push(Check::new(
        "estimator-ordering",
        mmse <= rsls && rsls <= ls,
        format!("4x4 NMSE mmse {mmse:.4}, rs-ls {rsls:.4}, ls {ls:.4}"),
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFile;

    fn small_case() -> (ArrayGeometry, ScatteringRegion) {
        let preset = ConfigFile::builtin().preset("smoke").unwrap().clone();
        (preset.geometry().unwrap(), preset.region().unwrap())
    }

    #[test]
    fn closed_form_matches_oracle() {
        let (g, r) = small_case();
        assert!(oracle_gap(&g, &r, 1.0, 64).unwrap() < ORACLE_TOLERANCE);
    }

    #[test]
    fn sign_flip_in_distance_factor_is_caught() {
        let (g, r) = small_case();
        let gap = oracle_gap_with(&g, &r, 1.0, 64, |k| s_factor(&g, &r, -k)).unwrap();
        assert!(gap > ORACLE_TOLERANCE, "gap {gap}");
    }

    #[test]
    fn smoke_preset_validates() {
        let preset = ConfigFile::builtin().preset("smoke").unwrap().clone();
        let report = run_validation(&preset).unwrap();
        assert!(report.all_passed(), "{report}");
        assert_eq!(report.checks.len(), 5);
        assert!(report.to_string().lines().all(|l| l.starts_with("PASS")));
    }
}

//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use phaselab::interference::fringe_curve;
use phaselab::{FringeDataset, InterferenceParams};

/// Noiseless statistical fringe of `ip` on `n` phases over [−π, π).
pub fn synthetic_fringe(ip: &InterferenceParams, n: usize) -> FringeDataset {
    let thetas: Vec<f64> = (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect();
    let curve = fringe_curve(ip, &thetas).expect("valid parameters");
    let means: Vec<f64> = curve.iter().map(|m| m.mean).collect();
    let stds: Vec<f64> = curve.iter().map(|m| m.std).collect();
    FringeDataset::from_phases(&thetas, &means, Some(&stds)).expect("consistent columns")
}

/// The noise regime of the paper's simulated fringes at a given phase spread.
pub fn paper_regime(sigma_phi: f64) -> InterferenceParams {
    InterferenceParams {
        sigma_phi,
        sigma_s: 0.05,
        sigma_zeta: 0.05,
        eta: 0.98,
        ..InterferenceParams::default()
    }
}

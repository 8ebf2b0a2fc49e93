//! Min-entropy, statistical distance and the quantum reduction factor of a
//! comparator-digitized interference signal.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::interference::{
    integral_signal, phase_diff_deviation, quantum_pdf, GaussianPhaseDensity, InterferenceParams, SignalDensity,
    SAMPLE_BLOCK,
};
use crate::quad;
use crate::rng::substream;

/// Absolute tolerance of the distance quadratures.
pub const DISTANCE_TOL: f64 = 1e-12;
/// Density level, relative to the peak, at which the PDF width is measured.
pub const WIDTH_LEVEL: f64 = 1e-3;
/// Smoothing bandwidth as a fraction of the ideal support width.
pub const BANDWIDTH_FRACTION: f64 = 1.0 / 512.0;
/// Local maxima below this fraction of the peak are treated as noise.
pub const MAXIMUM_FLOOR: f64 = 0.05;

/// `−log₂` of the probability mass on `[S_min, s_th]`.
pub fn min_entropy<D: SignalDensity + ?Sized>(pdf: &D, s_th: f64) -> Result<f64> {
    let (lo, hi) = pdf.support();
    if !(s_th > lo && s_th < hi) {
        return Err(Error::OutOfDomain {
            value: s_th,
            reason: "threshold must lie inside the signal support",
        });
    }
    let mass = pdf.mass_below(s_th);
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::OutOfDomain {
            value: mass,
            reason: "tail mass must lie strictly between 0 and 1",
        });
    }
    Ok(-mass.log2())
}

/// Quantum reduction factor `1 / (2 − H∞)` for comparator digitization.
pub fn qrf(h_inf: f64) -> Result<f64> {
    if !(h_inf < 2.0) || !h_inf.is_finite() {
        return Err(invalid("h_inf", format!("must be < 2, got {h_inf}")));
    }
    Ok(1.0 / (2.0 - h_inf))
}

/// Half the L1 distance between the folded Gaussian phase density and the
/// uniform density on `[0, π]`.
pub fn statistical_distance(sigma_phi: f64, delta_theta: f64) -> Result<f64> {
    if sigma_phi == 0.0 {
        // Dirac against uniform.
        return Ok(1.0);
    }
    check_sigma(sigma_phi)?;
    Ok(0.5
        * quad::integrate(
            |x| phase_diff_deviation(x, sigma_phi, delta_theta).abs(),
            0.0,
            PI,
            DISTANCE_TOL,
        ))
}

/// The same distance computed between the signal densities under Gaussian
/// and uniform phase, integrated over the signal with the endpoint
/// substitution `y = S_min + W sin²(t/2)`.
pub fn statistical_distance_via_pdfs(sigma_phi: f64, delta_theta: f64) -> Result<f64> {
    check_sigma(sigma_phi)?;
    let ip = InterferenceParams::ideal(sigma_phi, delta_theta);
    let dens = GaussianPhaseDensity::new(&ip)?;
    let (lo, hi) = ip.support();
    let w = hi - lo;
    Ok(0.5
        * quad::integrate(
            |t| {
                let y = lo + w * (0.5 * t).sin().powi(2);
                let jac = 0.5 * w * t.sin();
                if !(y > lo && y < hi) || jac <= 0.0 {
                    return 0.0;
                }
                let quantum = quantum_pdf(y, ip.s1_mean, ip.s2_mean, ip.eta).unwrap_or(0.0);
                (dens.density(y) - quantum).abs() * jac
            },
            0.0,
            PI,
            DISTANCE_TOL,
        ))
}

fn check_sigma(sigma_phi: f64) -> Result<()> {
    if !(sigma_phi > 0.0) || !sigma_phi.is_finite() {
        return Err(invalid("sigma_phi", format!("must be > 0, got {sigma_phi}")));
    }
    Ok(())
}

/// Distance over a grid of (σ_φ, Δθ), row-major in σ_φ.
pub fn distance_map(sigmas: &[f64], delta_thetas: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let cells: Vec<(f64, f64)> = sigmas
        .iter()
        .flat_map(|&s| delta_thetas.iter().map(move |&t| (s, t)))
        .collect();
    cells
        .into_par_iter()
        .map(|(s, t)| statistical_distance(s, t).map(|d| (s, t, d)))
        .collect()
}

/// `ε_Q(σ_φ) = d(2π, 0) / d(σ_φ, 0)` on `[π, 2π]`.
pub fn epsilon_q(sigma_phi: f64) -> Result<f64> {
    if !(PI..=2.0 * PI).contains(&sigma_phi) {
        return Err(Error::OutOfDomain {
            value: sigma_phi,
            reason: "epsilon_q is defined for sigma_phi in [pi, 2 pi]",
        });
    }
    if sigma_phi == 2.0 * PI {
        return Ok(1.0);
    }
    Ok(statistical_distance(2.0 * PI, 0.0)? / statistical_distance(sigma_phi, 0.0)?)
}

/// `Γ̃ = nΓ / (n − 2Γ log₂(1/ε))` for an explicit error parameter.
pub fn qrf_corrected_with_eps(gamma: f64, n: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid("eps", format!("must lie in (0, 1], got {eps}")));
    }
    let denom = n + 2.0 * gamma * eps.log2();
    if !(denom > 0.0) {
        return Err(Error::Unattainable(format!(
            "no positive output length at block size {n}: n - 2 Gamma log2(1/eps) = {denom}"
        )));
    }
    Ok(n * gamma / denom)
}

/// Corrected reduction factor for partially randomized phases,
/// σ_φ ∈ [π, 2π].
pub fn qrf_corrected(gamma: f64, n: f64, sigma_phi: f64) -> Result<f64> {
    qrf_corrected_with_eps(gamma, n, epsilon_q(sigma_phi)?)
}

/// Which branch of the piecewise reduction factor applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// σ_φ < π, or no positive output length: no randomness can be certified.
    Blocked,
    /// π ≤ σ_φ ≤ 2π: Γ̃.
    Corrected,
    /// σ_φ > 2π: Γ.
    Uniform,
}

/// Reduction factor and the regime it came from; `value` is infinite when
/// blocked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QrfOutcome {
    pub value: f64,
    pub regime: Regime,
}

/// Piecewise reduction factor: blocked below π, Γ̃ on [π, 2π], Γ above.
pub fn qrf_dispatch(sigma_phi: f64, gamma: f64, n: f64) -> QrfOutcome {
    let blocked = QrfOutcome {
        value: f64::INFINITY,
        regime: Regime::Blocked,
    };
    if sigma_phi < PI || sigma_phi.is_nan() {
        blocked
    } else if sigma_phi <= 2.0 * PI {
        match qrf_corrected(gamma, n, sigma_phi) {
            Ok(value) => QrfOutcome {
                value,
                regime: Regime::Corrected,
            },
            Err(_) => blocked,
        }
    } else {
        QrfOutcome {
            value: gamma,
            regime: Regime::Uniform,
        }
    }
}

/// Leftover-hash-lemma output length `k − 2 log₂(1/ε)`, unfloored.
pub fn lhl_output_length(k_bits: f64, epsilon: f64) -> Result<f64> {
    if !(k_bits > 0.0) {
        return Err(invalid("k_bits", format!("must be > 0, got {k_bits}")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid("epsilon", format!("must lie in (0, 1], got {epsilon}")));
    }
    Ok(k_bits + 2.0 * epsilon.log2())
}

/// `ε = 2^{−n r}` with `r = (kγ/n − 1)/(2γ)` for a reduction `γ = n/m`.
pub fn lhl_epsilon_from_reduction(n: f64, k: f64, gamma_ratio: f64) -> Result<f64> {
    if !(gamma_ratio >= 1.0) {
        return Err(invalid("gamma_ratio", format!("must be >= 1, got {gamma_ratio}")));
    }
    let r = (k * gamma_ratio / n - 1.0) / (2.0 * gamma_ratio);
    Ok((-n * r).exp2())
}

/// Effective classical error parameter `ε_c = 2^{−nR}`, `R = (Γ − 1)/(2Γ)`.
pub fn effective_classical_epsilon(n: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    Ok((-n * (gamma - 1.0) / (2.0 * gamma)).exp2())
}

/// Samples of the uniform-phase signal with intensity fluctuations, kept as
/// the noise-free part plus a unit detector-noise draw so that the detector
/// noise level can be changed without redrawing (common random numbers).
#[derive(Debug, Clone)]
pub struct NoisySignalSamples {
    clean: Vec<f64>,
    unit_noise: Vec<f64>,
    s_min: f64,
    s_max: f64,
}

impl NoisySignalSamples {
    /// `n` seeded draws with uniform Δφ, s1,s2 ~ N(mean, σ_s²) clamped at
    /// zero, and standard normal detector noise.
    pub fn draw(ip: &InterferenceParams, n: usize, seed: u64) -> Result<Self> {
        ip.validate()?;
        if n < 2 {
            return Err(invalid("n", "need at least two samples"));
        }
        let ip = *ip;
        let blocks = n.div_ceil(SAMPLE_BLOCK);
        let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let len = SAMPLE_BLOCK.min(n - b * SAMPLE_BLOCK);
                let mut rng = substream(seed, b as u64);
                let mut clean = Vec::with_capacity(len);
                let mut unit = Vec::with_capacity(len);
                for _ in 0..len {
                    let z1: f64 = rng.sample(StandardNormal);
                    let z2: f64 = rng.sample(StandardNormal);
                    let phase = rng.random::<f64>() * 2.0 * PI;
                    let s1 = (ip.s1_mean + ip.sigma_s * z1).max(0.0);
                    let s2 = (ip.s2_mean + ip.sigma_s * z2).max(0.0);
                    clean.push(integral_signal(s1, s2, ip.eta, phase));
                    unit.push(rng.sample(StandardNormal));
                }
                (clean, unit)
            })
            .collect();
        let (mut clean, mut unit_noise) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for (c, u) in parts {
            clean.extend(c);
            unit_noise.extend(u);
        }
        let (s_min, s_max) = ip.support();
        Ok(Self {
            clean,
            unit_noise,
            s_min,
            s_max,
        })
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    /// Ideal support `(S_min, S_max)` at the mean intensities.
    pub fn support(&self) -> (f64, f64) {
        (self.s_min, self.s_max)
    }

    /// Signal values with detector noise of std `sigma_zeta`.
    pub fn values(&self, sigma_zeta: f64) -> Vec<f64> {
        self.clean
            .iter()
            .zip(&self.unit_noise)
            .map(|(c, u)| c + sigma_zeta * u)
            .collect()
    }

    /// Min-entropy with the threshold at the sample median and the lower
    /// limit at the ideal `S_min`.
    pub fn min_entropy(&self, sigma_zeta: f64) -> Result<f64> {
        let mut v = self.values(sigma_zeta);
        let mid = v.len() / 2;
        let (_, median, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
        let median = *median;
        let inside = v.iter().filter(|&&x| x >= self.s_min && x <= median).count();
        let mass = inside as f64 / v.len() as f64;
        if !(mass > 0.0 && mass < 1.0) {
            return Err(Error::OutOfDomain {
                value: mass,
                reason: "tail mass must lie strictly between 0 and 1",
            });
        }
        Ok(-mass.log2())
    }

    /// Ratio B of the PDF width to the distance between its outermost maxima,
    /// on a histogram smoothed with a Gaussian kernel of bandwidth
    /// `W/512`. `None` when fewer than two maxima remain.
    pub fn b_ratio(&self, sigma_zeta: f64) -> Option<f64> {
        let shape = smoothed_density(&self.values(sigma_zeta), (self.s_max - self.s_min) * BANDWIDTH_FRACTION)?;
        shape.b_ratio()
    }
}

struct SmoothedDensity {
    x0: f64,
    dx: f64,
    f: Vec<f64>,
}

fn smoothed_density(values: &[f64], bandwidth: f64) -> Option<SmoothedDensity> {
    if !(bandwidth > 0.0) {
        return None;
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let dx = bandwidth / 4.0;
    let pad = 6.0 * bandwidth;
    let x0 = lo - pad;
    let bins = ((hi + pad - x0) / dx).ceil() as usize + 1;
    let mut counts = vec![0.0; bins];
    for &v in values {
        let k = ((v - x0) / dx) as usize;
        counts[k.min(bins - 1)] += 1.0;
    }
    let reach = (6.0 * bandwidth / dx).ceil() as isize;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|k| {
            let z = k as f64 * dx / bandwidth;
            (-0.5 * z * z).exp()
        })
        .collect();
    let norm: f64 = kernel.iter().sum::<f64>() * dx * values.len() as f64;
    let f = (0..bins as isize)
        .map(|i| {
            let mut acc = 0.0;
            for (j, w) in kernel.iter().enumerate() {
                let k = i + j as isize - reach;
                if k >= 0 && (k as usize) < bins {
                    acc += w * counts[k as usize];
                }
            }
            acc / norm
        })
        .collect();
    // Bin k collects [x0 + k dx, x0 + (k+1) dx); report its centre.
    Some(SmoothedDensity {
        x0: x0 + 0.5 * dx,
        dx,
        f,
    })
}

impl SmoothedDensity {
    fn b_ratio(&self) -> Option<f64> {
        let f = &self.f;
        let peak = f.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0) {
            return None;
        }
        let maxima: Vec<usize> = (1..f.len() - 1)
            .filter(|&k| f[k] > f[k - 1] && f[k] >= f[k + 1] && f[k] >= MAXIMUM_FLOOR * peak)
            .collect();
        if maxima.len() < 2 {
            return None;
        }
        let left = self.peak_position(maxima[0]);
        let right = self.peak_position(*maxima.last().unwrap());
        let level = WIDTH_LEVEL * peak;
        let first = f.iter().position(|&v| v >= level)?;
        let last = f.iter().rposition(|&v| v >= level)?;
        let x_at = |k: f64| self.x0 + k * self.dx;
        let lo = if first == 0 {
            x_at(0.0)
        } else {
            x_at(first as f64 - 1.0 + (level - f[first - 1]) / (f[first] - f[first - 1]))
        };
        let hi = if last + 1 == f.len() {
            x_at(last as f64)
        } else {
            x_at(last as f64 + (f[last] - level) / (f[last] - f[last + 1]))
        };
        Some((hi - lo) / (right - left))
    }

    /// Parabolic refinement of a discrete maximum.
    fn peak_position(&self, k: usize) -> f64 {
        let (a, b, c) = (self.f[k - 1], self.f[k], self.f[k + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        self.x0 + (k as f64 + shift) * self.dx
    }
}

/// One point of the Γ(B) calibration curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaPoint {
    pub b: f64,
    pub sigma_zeta: f64,
    pub h_inf: f64,
    pub gamma: f64,
}

/// Samples used per Γ(B) curve.
pub const GAMMA_CURVE_SAMPLES: usize = 1 << 21;

/// Γ as a function of the PDF shape ratio B for the uniform-phase signal
/// with intensity noise `sigma_s`, sweeping the detector noise σ_ζ to
/// realize each B. Each target is matched to 1e−4 in B by bisection on
/// σ_ζ over common random numbers.
pub fn gamma_vs_b(sigma_s: f64, eta: f64, b_grid: &[f64], seed: u64) -> Result<Vec<GammaPoint>> {
    gamma_vs_b_with_samples(sigma_s, eta, b_grid, seed, GAMMA_CURVE_SAMPLES)
}

/// [`gamma_vs_b`] with an explicit ensemble size.
pub fn gamma_vs_b_with_samples(
    sigma_s: f64,
    eta: f64,
    b_grid: &[f64],
    seed: u64,
    n_samples: usize,
) -> Result<Vec<GammaPoint>> {
    let ip = InterferenceParams {
        sigma_s,
        eta,
        ..InterferenceParams::default()
    };
    let samples = NoisySignalSamples::draw(&ip, n_samples, seed)?;
    let (lo, hi) = samples.support();
    if !(hi > lo) {
        return Err(invalid("eta", "signal support is degenerate"));
    }
    let b_floor = samples
        .b_ratio(0.0)
        .ok_or_else(|| Error::Unattainable("noise-free PDF has no pair of maxima".into()))?;
    // σ_ζ beyond which the two maxima have merged.
    let mut top = 0.01 * (hi - lo);
    while samples.b_ratio(top).is_some() {
        top *= 2.0;
        if top > 10.0 * (hi - lo) {
            break;
        }
    }
    b_grid
        .iter()
        .map(|&b| {
            if !(b >= 1.0) {
                return Err(invalid("b", format!("must be >= 1, got {b}")));
            }
            let sigma_zeta = if b <= b_floor {
                if b_floor - b > 1e-4 {
                    return Err(Error::Unattainable(format!(
                        "B = {b} is below the noise-free value {b_floor:.4} for sigma_s = {sigma_s}"
                    )));
                }
                0.0
            } else {
                let sz = quad::bisect(
                    |sz| match samples.b_ratio(sz) {
                        Some(v) => v - b,
                        None => 1.0,
                    },
                    0.0,
                    top,
                    1e-7 * top,
                )?;
                match samples.b_ratio(sz) {
                    Some(v) if (v - b).abs() <= 1e-2 * b => sz,
                    _ => {
                        return Err(Error::Unattainable(format!(
                            "B = {b} is not realized before the PDF maxima merge"
                        )))
                    }
                }
            };
            let h_inf = samples.min_entropy(sigma_zeta)?;
            Ok(GammaPoint {
                b,
                sigma_zeta,
                h_inf,
                gamma: qrf(h_inf)?,
            })
        })
        .collect()
}

/// Randomness summary of one operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyReport {
    /// Min-entropy per comparator bit of the uniform-phase signal with the
    /// intensity and detector noise of the inputs.
    pub h_inf: f64,
    pub gamma: f64,
    /// Γ̃ when σ_φ ∈ [π, 2π] and the block admits an output; null otherwise.
    pub gamma_tilde: Option<f64>,
    /// Distance between the Gaussian and uniform phase statistics at Δθ.
    pub d: f64,
    pub eps_q: f64,
    pub eps_c: f64,
    pub regime: Regime,
    /// Reduction factor to apply in this regime; infinite when blocked.
    pub qrf: f64,
    pub block_size: f64,
    pub flags: Vec<String>,
}

/// Samples used for the min-entropy of a noisy signal in [`entropy_report`].
pub const REPORT_SAMPLES: usize = 1 << 22;

/// Min-entropy, reduction factors and distances for `ip` at block size `n`.
pub fn entropy_report(ip: &InterferenceParams, n: f64, seed: u64) -> Result<EntropyReport> {
    ip.validate()?;
    if !(n > 0.0) {
        return Err(invalid("n", format!("block size must be > 0, got {n}")));
    }
    let h_inf = if ip.sigma_s == 0.0 && ip.sigma_zeta == 0.0 {
        1.0
    } else {
        NoisySignalSamples::draw(ip, REPORT_SAMPLES, seed)?.min_entropy(ip.sigma_zeta)?
    };
    let gamma = qrf(h_inf)?;
    let mut flags = Vec::new();
    if gamma < 1.0 {
        flags.push(format!("gamma {gamma:.6} < 1: min-entropy below one bit"));
    }
    let d = statistical_distance(ip.sigma_phi, ip.delta_theta)?;
    let eps_q = if ip.sigma_phi > 2.0 * PI {
        1.0
    } else {
        (statistical_distance(2.0 * PI, 0.0)? / statistical_distance(ip.sigma_phi, 0.0)?).min(1.0)
    };
    let eps_c = effective_classical_epsilon(n, gamma.max(1.0))?;
    let outcome = qrf_dispatch(ip.sigma_phi, gamma, n);
    let gamma_tilde = match outcome.regime {
        Regime::Corrected => Some(outcome.value),
        _ => None,
    };
    if outcome.regime == Regime::Blocked && ip.sigma_phi >= PI {
        flags.push(format!("block size {n} too small for eps_q {eps_q:e}"));
    }
    Ok(EntropyReport {
        h_inf,
        gamma,
        gamma_tilde,
        d,
        eps_q,
        eps_c,
        regime: outcome.regime,
        qrf: outcome.value,
        block_size: n,
        flags,
    })
}

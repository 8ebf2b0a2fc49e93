//! Statistics of the normalized integral interference signal
//! `S = s1 + s2 + 2η√(s1 s2)·cos Δφ + ζ` of two laser pulses.

use std::f64::consts::{FRAC_1_PI, PI};
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad;
use crate::rng::substream;

/// Truncation tolerance of the theta series (double-precision floor).
pub const THETA_TOL: f64 = 1e-16;
/// Samples drawn from one substream in [`sample_signal`].
pub const SAMPLE_BLOCK: usize = 1 << 16;

const MAX_THETA_TERMS: usize = 1 << 20;

/// Parameters of the signal model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterferenceParams {
    /// Phase diffusion std σ_φ [rad].
    pub sigma_phi: f64,
    /// Interferometer phase Δθ = ω₀ΔT [rad].
    pub delta_theta: f64,
    /// Std of the pulse intensity factors s1, s2.
    pub sigma_s: f64,
    /// Std of the additive detector noise ζ.
    pub sigma_zeta: f64,
    /// Visibility η.
    pub eta: f64,
    pub s1_mean: f64,
    pub s2_mean: f64,
    /// Std of the jitter phase ω₀Δt added to Δφ when sampling [rad]. Zero
    /// switches jitter off.
    pub jitter_phase_std: f64,
}

impl Default for InterferenceParams {
    fn default() -> Self {
        Self {
            sigma_phi: PI,
            delta_theta: 0.0,
            sigma_s: 0.0,
            sigma_zeta: 0.0,
            eta: 1.0,
            s1_mean: 1.0,
            s2_mean: 1.0,
            jitter_phase_std: 0.0,
        }
    }
}

impl InterferenceParams {
    /// Noise-free signal with the given phase statistics and unit pulses.
    pub fn ideal(sigma_phi: f64, delta_theta: f64) -> Self {
        Self {
            sigma_phi,
            delta_theta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("sigma_phi", self.sigma_phi),
            ("sigma_s", self.sigma_s),
            ("sigma_zeta", self.sigma_zeta),
            ("s1_mean", self.s1_mean),
            ("s2_mean", self.s2_mean),
            ("jitter_phase_std", self.jitter_phase_std),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid("eta", format!("must lie in [0, 1], got {}", self.eta)));
        }
        if !self.delta_theta.is_finite() {
            return Err(Error::NonFinite("delta_theta"));
        }
        Ok(())
    }

    /// Support `(S_min, S_max)` of the noise-free signal at the mean pulse
    /// intensities.
    pub fn support(&self) -> (f64, f64) {
        support(self.s1_mean, self.s2_mean, self.eta)
    }

    /// q = exp(−σ_φ²/2), the nome of the wrapped-Gaussian theta series.
    pub fn nome(&self) -> f64 {
        (-0.5 * self.sigma_phi * self.sigma_phi).exp()
    }
}

/// `s1 + s2 + 2η√(s1 s2)·cos Δφ`.
pub fn integral_signal(s1: f64, s2: f64, eta: f64, delta_phi: f64) -> f64 {
    s1 + s2 + 2.0 * eta * (s1 * s2).sqrt() * delta_phi.cos()
}

/// Interference visibility reduced by a pulse delay mismatch `delta_t` between
/// Gaussian pulses of rms width `w`.
pub fn visibility_from_jitter(delta_t: f64, w: f64) -> Result<f64> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(invalid("w", format!("pulse width must be > 0, got {w}")));
    }
    Ok((-delta_t * delta_t / (8.0 * w * w)).exp())
}

/// `(S_min, S_max) = s1 + s2 ∓ 2η√(s1 s2)`.
pub fn support(s1: f64, s2: f64, eta: f64) -> (f64, f64) {
    let a = s1 + s2;
    let b = 2.0 * eta * (s1 * s2).sqrt();
    (a - b, a + b)
}

fn open_support_check(y: f64, s_min: f64, s_max: f64) -> Result<()> {
    if !(s_max > s_min) {
        return Err(Error::OutOfDomain {
            value: y,
            reason: "signal support is degenerate (eta or pulse intensity is zero)",
        });
    }
    if !(y > s_min && y < s_max) {
        return Err(Error::OutOfDomain {
            value: y,
            reason: "outside the open support (S_min, S_max)",
        });
    }
    Ok(())
}

/// The phase difference `a_y ∈ [0, π]` at which the noise-free signal equals `y`.
pub fn phase_of_level(y: f64, s_min: f64, s_max: f64) -> f64 {
    let c = (2.0 * y - s_max - s_min) / (s_max - s_min);
    c.clamp(-1.0, 1.0).acos()
}

/// Arcsine density of the signal under a uniformly random phase.
pub fn quantum_pdf(y: f64, s1: f64, s2: f64, eta: f64) -> Result<f64> {
    let (lo, hi) = support(s1, s2, eta);
    open_support_check(y, lo, hi)?;
    Ok(1.0 / (PI * ((y - lo) * (hi - y)).sqrt()))
}

/// Jacobi theta function `1 + 2 Σ_j q^{j²} cos(2ju)`, summed until the next
/// coefficient `q^{j²}` drops below `tol` times the running sum. The
/// coefficients decrease monotonically, so the neglected tail is bounded by
/// about twice the first neglected coefficient.
pub fn jacobi_theta(u: f64, q: f64, tol: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(invalid("q", format!("must lie in [0, 1), got {q}")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be > 0, got {tol}")));
    }
    Ok(theta(u, q, tol))
}

fn theta(u: f64, q: f64, tol: f64) -> f64 {
    let ln_q = q.ln();
    let mut sum = 1.0_f64;
    for j in 1..MAX_THETA_TERMS {
        let jf = j as f64;
        let c = (jf * jf * ln_q).exp();
        if c < tol * sum.abs() || c == 0.0 {
            break;
        }
        sum += 2.0 * c * (2.0 * jf * u).cos();
    }
    sum
}

/// `Σ_j q^{j²} w_j(j)` with the same stopping rule as [`jacobi_theta`],
/// measured against a sum of order one.
fn theta_like_series<F: Fn(f64) -> f64>(q: f64, term: F) -> f64 {
    let ln_q = q.ln();
    let mut sum = 0.0_f64;
    for j in 1..MAX_THETA_TERMS {
        let jf = j as f64;
        let c = (jf * jf * ln_q).exp();
        if c < THETA_TOL || c == 0.0 {
            break;
        }
        sum += c * term(jf);
    }
    sum
}

fn check_sigma_phi(sigma_phi: f64) -> Result<()> {
    if !(sigma_phi > 0.0) || !sigma_phi.is_finite() {
        return Err(invalid(
            "sigma_phi",
            format!("analytic densities need sigma_phi > 0, got {sigma_phi}"),
        ));
    }
    Ok(())
}

/// Density of the phase difference folded onto `[0, π)` when Δφ is Gaussian
/// with mean Δθ and std σ_φ; zero outside that interval.
pub fn phase_diff_pdf(x: f64, sigma_phi: f64, delta_theta: f64) -> f64 {
    if !(0.0..PI).contains(&x) {
        return 0.0;
    }
    if sigma_phi == 0.0 {
        return 0.0;
    }
    folded_gaussian(x, sigma_phi, delta_theta)
}

/// Below this σ_φ the folded Gaussian is summed over its images instead of
/// the theta series, which loses relative accuracy when q → 1.
const IMAGE_SUM_BELOW: f64 = 2.5;

/// Density at `x ∈ [0, π]` of |Δφ| folded onto [0, π].
fn folded_gaussian(x: f64, sigma: f64, delta_theta: f64) -> f64 {
    if sigma >= IMAGE_SUM_BELOW {
        let q = (-0.5 * sigma * sigma).exp();
        return (theta(0.5 * (x + delta_theta), q, THETA_TOL) + theta(0.5 * (x - delta_theta), q, THETA_TOL))
            / (2.0 * PI);
    }
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let reach = (9.0 * sigma / (2.0 * PI)).ceil() as i64 + 1;
    let mut sum = 0.0;
    for x in [x, -x] {
        let centre = ((delta_theta - x) / (2.0 * PI)).round() as i64;
        for m in centre - reach..=centre + reach {
            let z = (x + 2.0 * PI * m as f64 - delta_theta) / sigma;
            sum += (-0.5 * z * z).exp();
        }
    }
    norm * sum
}

/// `phase_diff_pdf(x) − 1/π`, summed directly so that it keeps full relative
/// accuracy when the density is nearly uniform.
pub fn phase_diff_deviation(x: f64, sigma_phi: f64, delta_theta: f64) -> f64 {
    let q = (-0.5 * sigma_phi * sigma_phi).exp();
    2.0 * FRAC_1_PI * theta_like_series(q, |j| (j * x).cos() * (j * delta_theta).cos())
}

/// Density of the noise-free signal when Δφ ~ N(Δθ, σ_φ²), at the mean pulse
/// intensities of `ip`.
pub fn gaussian_phase_pdf(y: f64, ip: &InterferenceParams) -> Result<f64> {
    check_sigma_phi(ip.sigma_phi)?;
    let (lo, hi) = ip.support();
    open_support_check(y, lo, hi)?;
    let a = phase_of_level(y, lo, hi);
    Ok(folded_gaussian(a, ip.sigma_phi, ip.delta_theta) / ((y - lo) * (hi - y)).sqrt())
}

/// `P(S ≤ y)` for the noise-free Gaussian-phase signal, in closed form.
pub fn gaussian_phase_cdf(y: f64, ip: &InterferenceParams) -> Result<f64> {
    check_sigma_phi(ip.sigma_phi)?;
    let (lo, hi) = ip.support();
    if !(hi > lo) {
        return Err(Error::OutOfDomain {
            value: y,
            reason: "signal support is degenerate (eta or pulse intensity is zero)",
        });
    }
    if y <= lo {
        return Ok(0.0);
    }
    if y >= hi {
        return Ok(1.0);
    }
    Ok(phase_cdf_upper(phase_of_level(y, lo, hi), ip.nome(), ip.delta_theta))
}

/// Probability that the folded phase difference exceeds `a`.
fn phase_cdf_upper(a: f64, q: f64, delta_theta: f64) -> f64 {
    let series = theta_like_series(q, |j| (j * a).sin() * (j * delta_theta).cos() / j);
    ((PI - a) * FRAC_1_PI - 2.0 * FRAC_1_PI * series).clamp(0.0, 1.0)
}

/// Median `S_th` of the Gaussian-phase signal: half of the probability lies
/// on either side.
pub fn threshold_s(ip: &InterferenceParams) -> Result<f64> {
    check_sigma_phi(ip.sigma_phi)?;
    let (lo, hi) = ip.support();
    let (q, dt) = (ip.nome(), ip.delta_theta);
    quad::bisect(
        |y| {
            if y <= lo {
                -0.5
            } else if y >= hi {
                0.5
            } else {
                phase_cdf_upper(phase_of_level(y, lo, hi), q, dt) - 0.5
            }
        },
        lo,
        hi,
        1e-12 * (hi - lo).max(1.0),
    )
}

/// A probability density of the signal.
pub trait SignalDensity {
    /// Interval carrying the ideal signal `(S_min, S_max)`.
    fn support(&self) -> (f64, f64);

    fn density(&self, y: f64) -> f64;

    /// Probability mass on `[S_min, y]`. The default integrates the density
    /// in `t`, `y = S_min + W sin²(t/2)`, which removes the inverse square
    /// root singularities at both ends.
    fn mass_below(&self, y: f64) -> f64 {
        let (lo, hi) = self.support();
        let w = hi - lo;
        if y <= lo {
            return 0.0;
        }
        let t_max = level_to_t(y.min(hi), lo, w);
        quad::integrate(
            |t| {
                let s = t.sin();
                if s <= 0.0 {
                    return 0.0;
                }
                self.density(lo + w * (0.5 * t).sin().powi(2)) * 0.5 * w * s
            },
            0.0,
            t_max,
            1e-13,
        )
    }
}

fn level_to_t(y: f64, lo: f64, w: f64) -> f64 {
    2.0 * ((y - lo) / w).clamp(0.0, 1.0).sqrt().asin()
}

fn t_to_level(t: f64, lo: f64, w: f64) -> f64 {
    lo + w * (0.5 * t).sin().powi(2)
}

/// The arcsine density with closed-form masses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumDensity {
    pub s1: f64,
    pub s2: f64,
    pub eta: f64,
}

impl QuantumDensity {
    pub fn new(s1: f64, s2: f64, eta: f64) -> Result<Self> {
        let (lo, hi) = support(s1, s2, eta);
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("eta", "signal support is degenerate"));
        }
        Ok(Self { s1, s2, eta })
    }
}

impl Default for QuantumDensity {
    fn default() -> Self {
        Self {
            s1: 1.0,
            s2: 1.0,
            eta: 1.0,
        }
    }
}

impl SignalDensity for QuantumDensity {
    fn support(&self) -> (f64, f64) {
        support(self.s1, self.s2, self.eta)
    }

    fn density(&self, y: f64) -> f64 {
        quantum_pdf(y, self.s1, self.s2, self.eta).unwrap_or(0.0)
    }

    fn mass_below(&self, y: f64) -> f64 {
        let (lo, hi) = self.support();
        level_to_t(y, lo, hi - lo) * FRAC_1_PI
    }
}

/// The Gaussian-phase density with closed-form masses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPhaseDensity {
    params: InterferenceParams,
}

impl GaussianPhaseDensity {
    pub fn new(ip: &InterferenceParams) -> Result<Self> {
        ip.validate()?;
        check_sigma_phi(ip.sigma_phi)?;
        let (lo, hi) = ip.support();
        if !(hi > lo) {
            return Err(invalid("eta", "signal support is degenerate"));
        }
        Ok(Self { params: *ip })
    }

    pub fn params(&self) -> &InterferenceParams {
        &self.params
    }

    /// Density with respect to `t`, `y = S_min + W sin²(t/2)`; bounded on `[0, π]`.
    pub fn density_in_t(&self, t: f64) -> f64 {
        folded_gaussian((PI - t).clamp(0.0, PI), self.params.sigma_phi, self.params.delta_theta)
    }
}

impl SignalDensity for GaussianPhaseDensity {
    fn support(&self) -> (f64, f64) {
        self.params.support()
    }

    fn density(&self, y: f64) -> f64 {
        gaussian_phase_pdf(y, &self.params).unwrap_or(0.0)
    }

    fn mass_below(&self, y: f64) -> f64 {
        gaussian_phase_cdf(y, &self.params).unwrap_or(f64::NAN)
    }
}

/// A tabulated density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfCurve {
    /// Ascending abscissae.
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub s_min: f64,
    pub s_max: f64,
}

impl PdfCurve {
    /// Tabulates `d` at `n` interior points equally spaced in `t`,
    /// `y = S_min + W sin²(t/2)`, which clusters them at the singular ends.
    pub fn tabulate<D: SignalDensity + ?Sized>(d: &D, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "need at least two grid points"));
        }
        let (lo, hi) = d.support();
        let w = hi - lo;
        let grid: Vec<f64> = (0..n)
            .map(|k| t_to_level(PI * (k as f64 + 0.5) / n as f64, lo, w))
            .collect();
        let density = grid.iter().map(|&y| d.density(y)).collect();
        Ok(Self {
            grid,
            density,
            s_min: lo,
            s_max: hi,
        })
    }

    /// Wraps tabulated values after checking shape and ordering.
    pub fn from_table(grid: Vec<f64>, density: Vec<f64>, s_min: f64, s_max: f64) -> Result<Self> {
        if grid.len() != density.len() || grid.len() < 2 {
            return Err(invalid("grid", "grid and density must have equal length >= 2"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("grid", "abscissae must be strictly increasing"));
        }
        if density.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("density", "values must be finite and >= 0"));
        }
        Ok(Self {
            grid,
            density,
            s_min,
            s_max,
        })
    }

    /// Whether the table lies strictly inside `(s_min, s_max)`, in which case
    /// it is treated as an arcsine-type density with singular ends.
    fn is_interior(&self) -> bool {
        self.s_max > self.s_min && self.grid[0] > self.s_min && *self.grid.last().unwrap() < self.s_max
    }

    /// Trapezoidal mass on `[s_min, y]`. Interior tables are integrated in
    /// `t`, where an arcsine-type density becomes bounded, with flat caps
    /// out to `t = 0` and `t = π`; other tables are integrated in `y` and
    /// vanish outside the grid.
    fn cumulative(&self, y: f64) -> f64 {
        if self.is_interior() {
            let w = self.s_max - self.s_min;
            let ts: Vec<f64> = self.grid.iter().map(|&g| level_to_t(g, self.s_min, w)).collect();
            let gs: Vec<f64> = self
                .density
                .iter()
                .zip(&ts)
                .map(|(f, t)| f * 0.5 * w * t.sin())
                .collect();
            let upper = level_to_t(y, self.s_min, w);
            let mut ext_t = Vec::with_capacity(ts.len() + 2);
            let mut ext_g = Vec::with_capacity(ts.len() + 2);
            ext_t.push(0.0);
            ext_g.push(gs[0]);
            ext_t.extend_from_slice(&ts);
            ext_g.extend_from_slice(&gs);
            ext_t.push(PI);
            ext_g.push(*gs.last().unwrap());
            trapezoid_to(&ext_t, &ext_g, upper)
        } else {
            trapezoid_to(&self.grid, &self.density, y) - trapezoid_to(&self.grid, &self.density, self.s_min)
        }
    }

    /// Total mass.
    pub fn integral(&self) -> f64 {
        if self.is_interior() {
            self.cumulative(f64::INFINITY)
        } else {
            trapezoid_to(&self.grid, &self.density, f64::INFINITY)
        }
    }
}

fn trapezoid_to(x: &[f64], f: &[f64], upper: f64) -> f64 {
    let mut acc = 0.0;
    for k in 1..x.len() {
        let (x0, x1) = (x[k - 1], x[k]);
        if upper <= x0 {
            break;
        }
        if upper >= x1 {
            acc += 0.5 * (f[k - 1] + f[k]) * (x1 - x0);
        } else {
            let fu = f[k - 1] + (f[k] - f[k - 1]) * (upper - x0) / (x1 - x0);
            acc += 0.5 * (f[k - 1] + fu) * (upper - x0);
            break;
        }
    }
    acc
}

impl SignalDensity for PdfCurve {
    fn support(&self) -> (f64, f64) {
        (self.s_min, self.s_max)
    }

    /// Linear interpolation; zero outside the grid.
    fn density(&self, y: f64) -> f64 {
        let g = &self.grid;
        if y < g[0] || y > g[g.len() - 1] {
            return 0.0;
        }
        let k = g.partition_point(|&v| v <= y).clamp(1, g.len() - 1);
        let (x0, x1) = (g[k - 1], g[k]);
        let (f0, f1) = (self.density[k - 1], self.density[k]);
        f0 + (f1 - f0) * (y - x0) / (x1 - x0)
    }

    fn mass_below(&self, y: f64) -> f64 {
        self.cumulative(y)
    }
}

/// `n` seeded draws of the full signal model. Negative draws of s1 or s2 are
/// clamped to zero. Samples are drawn in blocks of [`SAMPLE_BLOCK`], block
/// `b` from substream `b`, so the output does not depend on the thread count.
pub fn sample_signal(ip: &InterferenceParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    ip.validate()?;
    let ip = *ip;
    let blocks = n.div_ceil(SAMPLE_BLOCK);
    let out: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = SAMPLE_BLOCK.min(n - b * SAMPLE_BLOCK);
            let mut rng = substream(seed, b as u64);
            (0..len).map(|_| draw_signal(&ip, &mut rng)).collect()
        })
        .collect();
    Ok(out.concat())
}

fn draw_signal<R: Rng>(ip: &InterferenceParams, rng: &mut R) -> f64 {
    let z: [f64; 5] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let s1 = (ip.s1_mean + ip.sigma_s * z[0]).max(0.0);
    let s2 = (ip.s2_mean + ip.sigma_s * z[1]).max(0.0);
    let dphi = ip.delta_theta + ip.sigma_phi * z[2] + ip.jitter_phase_std * z[4];
    integral_signal(s1, s2, ip.eta, dphi) + ip.sigma_zeta * z[3]
}

/// Mean and standard deviation of the signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringeMoments {
    pub delta_theta: f64,
    pub mean: f64,
    pub std: f64,
}

/// E[max(X, 0)^p] for X ~ N(mean, sd²).
/// Gauss–Hermite order used for intensity moments.
const HERMITE_NODES: usize = 32;
/// Largest sd/mean ratio handled by the fixed Gauss–Hermite rule.
const HERMITE_BELOW: f64 = 0.1;

fn clamped_normal_moment(mean: f64, sd: f64, p: f64) -> f64 {
    if sd == 0.0 {
        return mean.max(0.0).powf(p);
    }
    if sd <= HERMITE_BELOW * mean {
        // The clamp sits beyond 10 sd, where the fixed rule is exact to
        // rounding; it is far cheaper than adaptive quadrature inside fits.
        static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
        return NODES
            .get_or_init(|| quad::gauss_hermite_normal(HERMITE_NODES))
            .iter()
            .map(|&(z, w)| w * (mean + sd * z).max(0.0).powf(p))
            .sum();
    }
    let z0 = (-mean / sd).max(-40.0);
    let z1 = 40.0_f64.max(z0 + 1.0);
    let norm = 1.0 / (2.0 * PI).sqrt();
    let mut breaks = vec![z0];
    breaks.extend([-8.0, -2.0, 0.0, 2.0, 8.0].into_iter().filter(|&z| z > z0 && z < z1));
    breaks.push(z1);
    quad::integrate_with_breaks(
        |z| (mean + sd * z).max(0.0).powf(p) * norm * (-0.5 * z * z).exp(),
        &breaks,
        1e-15,
    )
}

#[derive(Clone)]
struct IntensityMoments {
    m_half: f64,
    m1: f64,
    var: f64,
    /// Cov(s, √s).
    cov_s_sqrt: f64,
    /// Var √s.
    var_sqrt: f64,
}

impl IntensityMoments {
    fn pair(ip: &InterferenceParams) -> (Self, Self) {
        let s1 = Self::new(ip.s1_mean, ip.sigma_s);
        let s2 = if ip.s2_mean == ip.s1_mean {
            s1.clone()
        } else {
            Self::new(ip.s2_mean, ip.sigma_s)
        };
        (s1, s2)
    }

    fn new(mean: f64, sd: f64) -> Self {
        let m_half = clamped_normal_moment(mean, sd, 0.5);
        let m1 = clamped_normal_moment(mean, sd, 1.0);
        if sd == 0.0 {
            return Self {
                m_half,
                m1,
                var: 0.0,
                cov_s_sqrt: 0.0,
                var_sqrt: 0.0,
            };
        }
        let m3_half = clamped_normal_moment(mean, sd, 1.5);
        let m2 = clamped_normal_moment(mean, sd, 2.0);
        Self {
            m_half,
            m1,
            var: m2 - m1 * m1,
            cov_s_sqrt: m3_half - m1 * m_half,
            var_sqrt: m1 - m_half * m_half,
        }
    }
}

/// Analytic mean and std of the signal at `ip.delta_theta`.
///
/// With `a = s1 + s2`, `b = 2η√(s1 s2)` and `c = cos Δφ` independent of
/// (a, b): `Var S = Var a + 2 Cov(a,b) E c + E[b²] Var c + Var b (E c)² + σ_ζ²`,
/// where `E c = ρ cos Δθ` and `Var c = (1 − ρ⁴)/2 − ρ²(1 − ρ²) cos²Δθ` with
/// `ρ = exp(−σ²/2)` over the total phase variance σ². Moments of the clamped
/// Gaussian intensities are integrated numerically.
pub fn fringe_moments(ip: &InterferenceParams) -> Result<FringeMoments> {
    ip.validate()?;
    let (s1, s2) = IntensityMoments::pair(ip);
    Ok(moments_from(ip, &s1, &s2))
}

fn moments_from(ip: &InterferenceParams, s1: &IntensityMoments, s2: &IntensityMoments) -> FringeMoments {
    let phase_var = ip.sigma_phi.powi(2) + ip.jitter_phase_std.powi(2);
    let rho = (-0.5 * phase_var).exp();
    let rho2 = rho * rho;
    let cos_t = ip.delta_theta.cos();
    let e_c = rho * cos_t;
    let var_c = 0.5 * (1.0 - rho2 * rho2) - rho2 * (1.0 - rho2) * cos_t * cos_t;

    let eta2 = 2.0 * ip.eta;
    let e_a = s1.m1 + s2.m1;
    let e_b = eta2 * s1.m_half * s2.m_half;
    let e_b2 = eta2 * eta2 * s1.m1 * s2.m1;
    let var_a = s1.var + s2.var;
    // Cov(s1 + s2, √(s1 s2)) = Cov(s1, √s1) E√s2 + Cov(s2, √s2) E√s1.
    let cov_ab = eta2 * (s1.cov_s_sqrt * s2.m_half + s2.cov_s_sqrt * s1.m_half);
    // Var √(s1 s2) = E s1 E s2 − (E√s1 E√s2)², written through the spreads.
    let var_b = eta2 * eta2 * (s1.var_sqrt * s2.m1 + s2.var_sqrt * s1.m_half * s1.m_half);

    let var = var_a + 2.0 * cov_ab * e_c + e_b2 * var_c + var_b * e_c * e_c + ip.sigma_zeta.powi(2);
    FringeMoments {
        delta_theta: ip.delta_theta,
        mean: e_a + e_b * e_c,
        std: var.max(0.0).sqrt(),
    }
}

/// [`fringe_moments`] over a list of interferometer phases.
pub fn fringe_curve(ip: &InterferenceParams, delta_thetas: &[f64]) -> Result<Vec<FringeMoments>> {
    ip.validate()?;
    let (s1, s2) = IntensityMoments::pair(ip);
    Ok(delta_thetas
        .iter()
        .map(|&dt| {
            let p = InterferenceParams {
                delta_theta: dt,
                ..*ip
            };
            moments_from(&p, &s1, &s2)
        })
        .collect())
}

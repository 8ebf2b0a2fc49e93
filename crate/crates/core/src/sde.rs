//! Stochastic rate equations of a gain-switched laser diode.
//!
//! The field is carried as normalized intensity `Q` (mean photon number) and
//! unwrapped optical phase `φ`; the carrier number `N` has no Langevin force.
//! Integration is first-order Euler–Maruyama with N and Q clamped at zero.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{LaserParams, PumpWaveform, SimGrid, ELEMENTARY_CHARGE};
use crate::rng::substream;

/// Relative period-to-period change accepted as a periodic orbit.
pub const PERIODIC_TOLERANCE: f64 = 1e-6;
/// Minimum number of warm-up periods, even if the orbit looks settled earlier.
pub const MIN_WARMUP_PERIODS: usize = 10;
/// max Q / min Q over the periodic orbit above which the drive counts as pulsing.
pub const PULSE_CONTRAST: f64 = 10.0;

/// Instantaneous state of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserState {
    /// Carrier number.
    pub n: f64,
    /// Normalized intracavity intensity (mean photon number).
    pub q: f64,
    /// Optical phase [rad], never wrapped.
    pub phi: f64,
    /// Time [s].
    pub t: f64,
}

impl LaserState {
    pub fn new(n: f64, q: f64, phi: f64) -> Self {
        Self { n, q, phi, t: 0.0 }
    }

    fn is_finite(&self) -> bool {
        self.n.is_finite() && self.q.is_finite() && self.phi.is_finite() && self.t.is_finite()
    }
}

/// Ensemble estimate of the phase spread accumulated over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPhiEstimate {
    pub sigma_phi: f64,
    pub std_err: f64,
    pub n_samples: usize,
    pub mean_phi: f64,
}

/// Pair of standard-normal deviates per step.
pub trait NoiseSource {
    fn next_pair(&mut self) -> (f64, f64);
}

/// Deterministic integration: both deviates are zero.
pub struct Silent;

impl NoiseSource for Silent {
    #[inline]
    fn next_pair(&mut self) -> (f64, f64) {
        (0.0, 0.0)
    }
}

/// Gaussian deviates drawn from any RNG.
pub struct GaussianNoise<R>(pub R);

impl<R: Rng> NoiseSource for GaussianNoise<R> {
    #[inline]
    fn next_pair(&mut self) -> (f64, f64) {
        (self.0.sample(StandardNormal), self.0.sample(StandardNormal))
    }
}

/// Coefficients of the difference scheme that depend only on the diode.
#[derive(Debug, Clone, Copy)]
pub struct RateEquations {
    n_tr: f64,
    inv_gain_span: f64,
    inv_tau_ph: f64,
    inv_tau_e: f64,
    c_sp: f64,
    two_gamma_q: f64,
    half_alpha_over_tau_ph: f64,
    inv_conf_tau_ph: f64,
}

impl RateEquations {
    pub fn new(p: &LaserParams) -> Result<Self> {
        p.validate()?;
        Ok(Self {
            n_tr: p.n_tr,
            inv_gain_span: 1.0 / (p.n_th - p.n_tr),
            inv_tau_ph: 1.0 / p.tau_ph,
            inv_tau_e: 1.0 / p.tau_e,
            c_sp: p.c_sp,
            two_gamma_q: 2.0 * p.gamma_q(),
            half_alpha_over_tau_ph: 0.5 * p.alpha_henry / p.tau_ph,
            inv_conf_tau_ph: 1.0 / (p.gamma_conf * p.tau_ph),
        })
    }

    /// Linear gain G_L(N).
    #[inline]
    pub fn linear_gain(&self, n: f64) -> f64 {
        (n - self.n_tr) * self.inv_gain_span
    }

    /// Compressed gain G(N, Q) = G_L / sqrt(1 + 2 γ_Q Q).
    #[inline]
    pub fn gain(&self, n: f64, q: f64) -> f64 {
        self.linear_gain(n) / (1.0 + self.two_gamma_q * q).sqrt()
    }

    /// One Euler–Maruyama step without argument checks.
    #[inline]
    pub fn advance(&self, s: &LaserState, current: f64, dt: f64, sqrt_dt: f64, xi1: f64, xi2: f64) -> LaserState {
        let gl = self.linear_gain(s.n);
        let g = gl / (1.0 + self.two_gamma_q * s.q).sqrt();
        // Spontaneous emission into the mode, C_sp R_sp with R_sp = N / τ_e.
        let spont = self.c_sp * s.n * self.inv_tau_e;
        let (sin_phi, cos_phi) = s.phi.sin_cos();

        let q_noise = if spont > 0.0 {
            2.0 * (0.5 * spont * s.q).sqrt() * (xi1 * cos_phi + xi2 * sin_phi) * sqrt_dt
        } else {
            0.0
        };
        // The phase diffusion coefficient diverges as Q -> 0; below one step's
        // worth of spontaneous photons the denominator is held at that level.
        let phi_noise = if spont > 0.0 {
            let q_eff = s.q.max(spont * dt);
            (0.5 * spont / q_eff).sqrt() * (xi2 * cos_phi - xi1 * sin_phi) * sqrt_dt
        } else {
            0.0
        };

        let q = s.q + (g - 1.0) * s.q * self.inv_tau_ph * dt + spont * dt + q_noise;
        let phi = s.phi + self.half_alpha_over_tau_ph * (gl - 1.0) * dt + phi_noise;
        let n = s.n + (current / ELEMENTARY_CHARGE - s.n * self.inv_tau_e - s.q * g * self.inv_conf_tau_ph) * dt;

        LaserState {
            n: n.max(0.0),
            q: q.max(0.0),
            phi,
            t: s.t + dt,
        }
    }

    /// Deterministic phase drift rate (α / 2τ_ph)(G_L − 1) [rad/s].
    pub fn phase_drift_rate(&self, n: f64) -> f64 {
        self.half_alpha_over_tau_ph * (self.linear_gain(n) - 1.0)
    }
}

/// One checked Euler–Maruyama step of the rate equations.
pub fn step(
    state: &LaserState,
    p: &LaserParams,
    pump_current: f64,
    dt: f64,
    xi1: f64,
    xi2: f64,
) -> Result<LaserState> {
    if !state.is_finite() {
        return Err(Error::NonFinite("state"));
    }
    if !(pump_current.is_finite() && dt.is_finite() && xi1.is_finite() && xi2.is_finite()) {
        return Err(Error::NonFinite("step argument"));
    }
    if state.n < 0.0 || state.q < 0.0 {
        return Err(Error::OutOfDomain {
            value: state.n.min(state.q),
            reason: "N and Q must be non-negative",
        });
    }
    if dt <= 0.0 || dt >= 0.1 * p.tau_ph {
        return Err(Error::StepTooLarge {
            dt,
            limit: 0.1 * p.tau_ph,
        });
    }
    let eq = RateEquations::new(p)?;
    Ok(eq.advance(state, pump_current, dt, dt.sqrt(), xi1, xi2))
}

/// Discretization of one pump period on the step grid.
#[derive(Debug, Clone, Copy)]
pub struct PeriodGrid {
    pub steps: usize,
    pub high_steps: usize,
    pub dt: f64,
}

impl PeriodGrid {
    /// Rounds the period to the nearest multiple of `dt`.
    pub fn new(w: &PumpWaveform, dt: f64) -> Result<Self> {
        let period = w.period();
        let steps = (period / dt).round();
        let err = (steps * dt - period).abs();
        if steps < 1.0 || err > 0.5 * dt {
            return Err(Error::GridMismatch { period, dt, err });
        }
        let steps = steps as usize;
        let high_steps = ((w.duty * steps as f64).round() as usize).min(steps);
        Ok(Self { steps, high_steps, dt })
    }
}

/// Integrates one pump period. The period starts on the rising edge.
pub fn integrate_period<N: NoiseSource>(
    eq: &RateEquations,
    initial: &LaserState,
    w: &PumpWaveform,
    grid: &PeriodGrid,
    noise: &mut N,
) -> LaserState {
    let sqrt_dt = grid.dt.sqrt();
    let high = w.i_b + w.i_p;
    let mut s = *initial;
    for k in 0..grid.steps {
        let current = if k < grid.high_steps { high } else { w.i_b };
        let (xi1, xi2) = noise.next_pair();
        s = eq.advance(&s, current, grid.dt, sqrt_dt, xi1, xi2);
    }
    s
}

/// Integrates one period with noise drawn from `rng`.
pub fn simulate_period<R: Rng>(
    initial: &LaserState,
    p: &LaserParams,
    w: &PumpWaveform,
    g: &SimGrid,
    rng: R,
) -> Result<LaserState> {
    p.validate()?;
    w.validate()?;
    g.validate(p)?;
    if !initial.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    let eq = RateEquations::new(p)?;
    let grid = PeriodGrid::new(w, g.dt)?;
    Ok(integrate_period(&eq, initial, w, &grid, &mut GaussianNoise(rng)))
}

/// Noiseless periodic orbit of the drive, sampled at the rising edge.
#[derive(Debug, Clone, Copy)]
pub struct PeriodicOrbit {
    pub start: LaserState,
    pub periods: usize,
    pub q_max: f64,
    pub q_min: f64,
}

impl PeriodicOrbit {
    /// Whether the orbit emits a pulse, judged by the Q contrast over a period.
    pub fn is_pulsing(&self) -> bool {
        self.q_max > PULSE_CONTRAST * self.q_min.max(f64::MIN_POSITIVE)
    }
}

fn relative_change(a: &LaserState, b: &LaserState) -> f64 {
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
    rel(a.n, b.n).max(rel(a.q, b.q))
}

/// Runs noiseless periods from a cold start until the state at the rising
/// edge repeats to [`PERIODIC_TOLERANCE`].
pub fn warm_up(p: &LaserParams, w: &PumpWaveform, g: &SimGrid) -> Result<PeriodicOrbit> {
    p.validate()?;
    w.validate()?;
    g.validate(p)?;
    let eq = RateEquations::new(p)?;
    let grid = PeriodGrid::new(w, g.dt)?;
    let mean_current = w.i_b + w.duty * w.i_p;
    let n0 = (mean_current * p.tau_e / ELEMENTARY_CHARGE).min(p.n_th);
    let mut s = LaserState::new(n0, 0.0, 0.0);
    let mut change = f64::INFINITY;
    for period in 1..=g.n_periods_warmup {
        let next = integrate_period(&eq, &s, w, &grid, &mut Silent);
        change = relative_change(&s, &next);
        s = LaserState { t: 0.0, phi: 0.0, ..next };
        if period >= MIN_WARMUP_PERIODS && change < PERIODIC_TOLERANCE {
            let (q_min, q_max) = q_range(&eq, &s, w, &grid);
            return Ok(PeriodicOrbit {
                start: s,
                periods: period,
                q_max,
                q_min,
            });
        }
    }
    Err(Error::NotPeriodic {
        periods: g.n_periods_warmup,
        change,
    })
}

fn q_range(eq: &RateEquations, start: &LaserState, w: &PumpWaveform, grid: &PeriodGrid) -> (f64, f64) {
    let sqrt_dt = grid.dt.sqrt();
    let mut s = *start;
    let (mut lo, mut hi) = (s.q, s.q);
    for k in 0..grid.steps {
        let current = if k < grid.high_steps { w.i_b + w.i_p } else { w.i_b };
        s = eq.advance(&s, current, grid.dt, sqrt_dt, 0.0, 0.0);
        lo = lo.min(s.q);
        hi = hi.max(s.q);
    }
    (lo, hi)
}

/// Sample standard deviation (and mean) computed on data shifted by the first
/// element, so identical samples give exactly zero spread.
pub(crate) fn shifted_mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let x0 = xs[0];
    let mean_shift = xs.iter().map(|x| x - x0).sum::<f64>() / n as f64;
    if n == 1 {
        return (x0, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - x0 - mean_shift).powi(2)).sum();
    (x0 + mean_shift, (ss / (n - 1) as f64).sqrt())
}

/// Phase increments φ(T_p) − φ(0) of `n_iterations` independent noisy
/// trajectories started on the periodic orbit, in trajectory order.
pub fn phase_increments(p: &LaserParams, w: &PumpWaveform, g: &SimGrid, orbit: &PeriodicOrbit) -> Result<Vec<f64>> {
    let eq = RateEquations::new(p)?;
    let grid = PeriodGrid::new(w, g.dt)?;
    let start = orbit.start;
    Ok((0..g.n_iterations as u64)
        .into_par_iter()
        .map(|i| {
            let mut noise = GaussianNoise(substream(g.master_seed, i));
            let end = integrate_period(&eq, &start, w, &grid, &mut noise);
            end.phi - start.phi
        })
        .collect())
}

/// σ_φ of the phase accumulated over one period on the periodic orbit.
pub fn estimate_sigma_phi(p: &LaserParams, w: &PumpWaveform, g: &SimGrid) -> Result<SigmaPhiEstimate> {
    let orbit = warm_up(p, w, g)?;
    estimate_on_orbit(p, w, g, &orbit)
}

fn estimate_on_orbit(p: &LaserParams, w: &PumpWaveform, g: &SimGrid, orbit: &PeriodicOrbit) -> Result<SigmaPhiEstimate> {
    let phis = phase_increments(p, w, g, orbit)?;
    let n = phis.len();
    let (mean_phi, sigma_phi) = shifted_mean_std(&phis);
    let std_err = if n > 1 {
        sigma_phi / (2.0 * (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(SigmaPhiEstimate {
        sigma_phi,
        std_err,
        n_samples: n,
        mean_phi,
    })
}

/// One row of a bias sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub i_b: f64,
    pub waveform: PumpWaveform,
    pub estimate: std::result::Result<SigmaPhiEstimate, String>,
    /// Whether the noiseless orbit shows a pulse (max Q / min Q > 10).
    pub pulsing: bool,
}

/// σ_φ versus bias current with `w_template`'s modulation and frequency.
/// Failures at individual points are recorded in the row.
pub fn sweep_bias(p: &LaserParams, i_b_range: &[f64], w_template: &PumpWaveform, g: &SimGrid) -> Vec<SweepPoint> {
    let mut rows: Vec<SweepPoint> = i_b_range
        .iter()
        .map(|&i_b| {
            let w = PumpWaveform { i_b, ..*w_template };
            let (estimate, pulsing) = match warm_up(p, &w, g) {
                Ok(orbit) => (
                    estimate_on_orbit(p, &w, g, &orbit).map_err(|e| e.to_string()),
                    orbit.is_pulsing(),
                ),
                Err(e) => (Err(e.to_string()), false),
            };
            SweepPoint {
                i_b,
                waveform: w,
                estimate,
                pulsing,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.i_b.total_cmp(&b.i_b));
    rows
}

/// Time series of one seeded noisy trajectory over `periods` periods after
/// warm-up, sampled every `stride` steps.
pub fn trace(
    p: &LaserParams,
    w: &PumpWaveform,
    g: &SimGrid,
    periods: usize,
    stride: usize,
) -> Result<Vec<LaserState>> {
    let orbit = warm_up(p, w, g)?;
    let eq = RateEquations::new(p)?;
    let grid = PeriodGrid::new(w, g.dt)?;
    let stride = stride.max(1);
    let mut noise = GaussianNoise(substream(g.master_seed, 0));
    let sqrt_dt = grid.dt.sqrt();
    let mut s = orbit.start;
    let mut out = vec![s];
    for _ in 0..periods {
        for k in 0..grid.steps {
            let current = if k < grid.high_steps { w.i_b + w.i_p } else { w.i_b };
            let (xi1, xi2) = noise.next_pair();
            s = eq.advance(&s, current, grid.dt, sqrt_dt, xi1, xi2);
            if (k + 1) % stride == 0 {
                out.push(s);
            }
        }
    }
    Ok(out)
}

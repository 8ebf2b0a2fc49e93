//! Recovery of σ_φ and σ_s from conventional (mean) and statistical (std)
//! interference fringes.

use std::f64::consts::PI;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};
use crate::interference::{fringe_curve, InterferenceParams};
use crate::rng::substream;

/// Minimum number of points in a fringe dataset.
pub const MIN_POINTS: usize = 8;
/// Iteration cap of the Levenberg–Marquardt solver.
pub const MAX_ITERATIONS: usize = 500;
/// Latin-hypercube starts of the joint fit.
pub const JOINT_STARTS: usize = 8;

/// What the first column of a fringe dataset measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Abscissa {
    /// Interferometer phase Δθ [rad].
    Phase,
    /// Interferometer temperature shift [K].
    Temperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    /// Δθ [rad] or temperature shift [K], per [`FringeDataset::abscissa`].
    pub x: f64,
    pub mean: f64,
    pub std: Option<f64>,
}

/// Signal mean and std recorded at a series of interferometer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeDataset {
    pub abscissa: Abscissa,
    pub points: Vec<FringePoint>,
    /// Known conversion from temperature to phase [rad/K].
    pub phase_per_kelvin: Option<f64>,
}

impl FringeDataset {
    pub fn from_phases(delta_theta: &[f64], mean: &[f64], std: Option<&[f64]>) -> Result<Self> {
        Self::from_columns(Abscissa::Phase, delta_theta, mean, std)
    }

    pub fn from_columns(abscissa: Abscissa, x: &[f64], mean: &[f64], std: Option<&[f64]>) -> Result<Self> {
        if x.len() != mean.len() || std.is_some_and(|s| s.len() != x.len()) {
            return Err(invalid("points", "columns must have equal length"));
        }
        let points = x
            .iter()
            .enumerate()
            .map(|(i, &x)| FringePoint {
                x,
                mean: mean[i],
                std: std.map(|s| s[i]),
            })
            .collect();
        let ds = Self {
            abscissa,
            points,
            phase_per_kelvin: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Reads CSV with a header naming the first column `delta_theta_rad` or
    /// `temp_shift_K`, followed by `mean` and optionally `std`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let (abscissa, x_col) = match (col("delta_theta_rad"), col("temp_shift_K")) {
            (Some(i), None) => (Abscissa::Phase, i),
            (None, Some(i)) => (Abscissa::Temperature, i),
            _ => {
                return Err(Error::Parse(
                    "expected exactly one of the columns delta_theta_rad, temp_shift_K".into(),
                ))
            }
        };
        let mean_col = col("mean").ok_or_else(|| Error::Parse("missing column `mean`".into()))?;
        let std_col = col("std");
        let mut points = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                let raw = rec.get(i).unwrap_or("");
                raw.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: cannot parse `{raw}` as a number", line + 2)))
            };
            points.push(FringePoint {
                x: field(x_col)?,
                mean: field(mean_col)?,
                std: std_col.map(field).transpose()?,
            });
        }
        let ds = Self {
            abscissa,
            points,
            phase_per_kelvin: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < MIN_POINTS {
            return Err(invalid(
                "points",
                format!("need at least {MIN_POINTS} points, got {}", self.points.len()),
            ));
        }
        for p in &self.points {
            if !p.x.is_finite() || !p.mean.is_finite() {
                return Err(Error::NonFinite("fringe point"));
            }
            if let Some(s) = p.std {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(invalid("std", format!("must be finite and >= 0, got {s}")));
                }
            }
        }
        if let Some(k) = self.phase_per_kelvin {
            if !k.is_finite() || k == 0.0 {
                return Err(invalid("phase_per_kelvin", "must be finite and nonzero"));
            }
        }
        Ok(())
    }

    fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }

    fn stds(&self) -> Option<Vec<f64>> {
        self.points.iter().map(|p| p.std).collect()
    }

    /// Conversion to phase when it is known: 1 for phase data.
    fn known_slope(&self) -> Option<f64> {
        match self.abscissa {
            Abscissa::Phase => Some(1.0),
            Abscissa::Temperature => self.phase_per_kelvin,
        }
    }
}

/// σ_φ implied by a fringe visibility attributed entirely to phase diffusion.
pub fn sigma_from_visibility(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(invalid("eta", format!("must lie in (0, 1], got {eta}")));
    }
    Ok((-2.0 * eta.ln()).sqrt())
}

/// `2(I_b − I_th)`: the modulation amplitude at which the fringe bend sits at
/// threshold.
pub fn ip_from_bend(i_b_exp_at_bend: f64, i_th: f64) -> Result<f64> {
    let ip = 2.0 * (i_b_exp_at_bend - i_th);
    if !(ip >= 0.0) {
        return Err(invalid(
            "i_b_exp_at_bend",
            format!("bend {i_b_exp_at_bend} lies below threshold {i_th}"),
        ));
    }
    Ok(ip)
}

/// Fit of the mean fringe `2[1 + η_eff cos(Δθ + φ₀)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConventionalFit {
    pub eta_eff: f64,
    pub phi0: f64,
    /// Fitted or supplied phase per kelvin for temperature data.
    pub phase_per_kelvin: Option<f64>,
    pub residual_rms: f64,
    pub residuals: Vec<f64>,
    /// False when η_eff vanishes and φ₀ carries no information.
    pub phi0_identifiable: bool,
}

/// Linear least squares of `mean/2 − 1 = a cos x − b sin x`.
fn conventional_at(phases: &[f64], means: &[f64]) -> (f64, f64, f64) {
    let (mut cc, mut ss, mut cs, mut yc, mut ys) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &m) in phases.iter().zip(means) {
        let (s, c) = x.sin_cos();
        let y = 0.5 * m - 1.0;
        cc += c * c;
        ss += s * s;
        cs += c * s;
        yc += y * c;
        ys += y * s;
    }
    let det = cc * ss - cs * cs;
    if det.abs() <= 1e-14 * (cc * ss).max(1e-300) {
        return (0.0, 0.0, f64::INFINITY);
    }
    // Solve for (a, -b).
    let a = (yc * ss - ys * cs) / det;
    let mb = (ys * cc - yc * cs) / det;
    let rss: f64 = phases
        .iter()
        .zip(means)
        .map(|(&x, &m)| {
            let r = 2.0 * (1.0 + a * x.cos() + mb * x.sin()) - m;
            r * r
        })
        .sum();
    (a, -mb, rss)
}

/// Least-squares fit of the mean fringe. For temperature data without a
/// known conversion the slope is found by a periodogram scan over
/// `[0.05, 20]` rad/K refined by golden-section search.
pub fn fit_conventional(data: &FringeDataset) -> Result<ConventionalFit> {
    data.validate()?;
    let xs = data.xs();
    let means = data.means();
    let slope = match data.known_slope() {
        Some(k) => k,
        None => scan_slope(&xs, &means)?,
    };
    let phases: Vec<f64> = xs.iter().map(|x| slope * x).collect();
    let (a, b, rss) = conventional_at(&phases, &means);
    if !rss.is_finite() {
        return Err(Error::NoConvergence("phases do not span the fringe".into()));
    }
    let eta_eff = a.hypot(b);
    let scale = means.iter().map(|m| m.abs()).fold(0.0, f64::max).max(1.0);
    let phi0_identifiable = eta_eff > 1e-9 * scale;
    let phi0 = if phi0_identifiable { b.atan2(a) } else { 0.0 };
    let residuals: Vec<f64> = phases
        .iter()
        .zip(&means)
        .map(|(&x, &m)| 2.0 * (1.0 + eta_eff * (x + phi0).cos()) - m)
        .collect();
    let residual_rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    Ok(ConventionalFit {
        eta_eff,
        phi0,
        phase_per_kelvin: match data.abscissa {
            Abscissa::Temperature => Some(slope),
            Abscissa::Phase => None,
        },
        residual_rms,
        residuals,
        phi0_identifiable,
    })
}

fn scan_slope(xs: &[f64], means: &[f64]) -> Result<f64> {
    let rss = |k: f64| {
        let ph: Vec<f64> = xs.iter().map(|x| k * x).collect();
        conventional_at(&ph, means).2
    };
    let (lo, hi, n) = (0.05_f64, 20.0_f64, 4000_usize);
    let ratio = (hi / lo).powf(1.0 / n as f64);
    let grid: Vec<f64> = (0..=n).map(|i| lo * ratio.powi(i as i32)).collect();
    let values: Vec<f64> = grid.iter().map(|&k| rss(k)).collect();
    let best = (0..grid.len())
        .min_by(|&i, &j| values[i].total_cmp(&values[j]))
        .ok_or_else(|| Error::NoConvergence("empty slope scan".into()))?;
    Ok(golden_min(rss, grid[best.saturating_sub(1)], grid[(best + 1).min(n)], 1e-13))
}

/// Golden-section minimiser of a unimodal function on [a, b].
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..MAX_ITERATIONS {
        if b - a <= rel_tol * a.abs().max(b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Settings of the joint fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointFitOptions {
    /// Pins σ_ζ instead of fitting it.
    pub sigma_zeta: Option<f64>,
    /// Seed of the Latin-hypercube starts.
    pub seed: u64,
    pub starts: usize,
}

impl Default for JointFitOptions {
    fn default() -> Self {
        Self {
            sigma_zeta: None,
            seed: 0x0f17,
            starts: JOINT_STARTS,
        }
    }
}

/// Outcome of the joint fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub sigma_phi: f64,
    pub sigma_s: f64,
    pub eta: f64,
    pub phi0: f64,
    pub sigma_zeta: f64,
    pub phase_per_kelvin: Option<f64>,
    /// RMS of the scaled residuals (mean and std blocks divided by their
    /// data RMS).
    pub residual_rms: f64,
    /// Names of the fitted parameters, in covariance order.
    pub parameters: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    /// Parameters that ended on a bound.
    pub at_bound: Vec<String>,
    pub iterations: usize,
}

impl FitResult {
    /// Standard error of a fitted parameter, by name.
    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.parameters.iter().position(|p| p == name)?;
        Some(self.covariance[i][i].max(0.0).sqrt())
    }
}

const NAMES: [&str; 6] = ["sigma_phi", "sigma_s", "eta", "phi0", "sigma_zeta", "phase_per_kelvin"];
const LOWER: [f64; 6] = [0.0, 0.0, 0.0, f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY];
const UPPER: [f64; 6] = [20.0, 1.0, 1.0, f64::INFINITY, 2.0, f64::INFINITY];
const REFLECTED: [bool; 6] = [true, true, false, false, true, false];
const START_LOW: [f64; 5] = [0.1, 0.0, 0.5, -PI, 0.0];
const START_HIGH: [f64; 5] = [6.0, 0.2, 1.0, PI, 0.2];

#[derive(Clone)]
struct JointProblem<'a> {
    xs: &'a [f64],
    means: &'a [f64],
    stds: &'a [f64],
    mean_scale: f64,
    std_scale: f64,
    /// Indices of free parameters in the full vector.
    free: Vec<usize>,
    full: [f64; 6],
    /// Works in the variances σ² instead of the spreads σ. The model is
    /// nearly linear in σ², which the solver prefers; the spreads are used
    /// for the final covariance.
    squared: bool,
}

impl JointProblem<'_> {
    fn expand(&self, p: &[f64]) -> [f64; 6] {
        let mut full = self.full;
        for (&i, &v) in self.free.iter().zip(p) {
            full[i] = match (REFLECTED[i], self.squared) {
                (true, true) => v.max(0.0).sqrt(),
                (true, false) => v.abs(),
                (false, _) => v,
            };
        }
        full
    }

    fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
        let f = self.expand(p);
        let ip = InterferenceParams {
            sigma_phi: f[0],
            sigma_s: f[1],
            eta: f[2],
            sigma_zeta: f[4],
            ..InterferenceParams::default()
        };
        let thetas: Vec<f64> = self.xs.iter().map(|x| f[5] * x + f[3]).collect();
        let curve = fringe_curve(&ip, &thetas).ok()?;
        let n = self.xs.len();
        let mut r = DVector::zeros(2 * n);
        for (i, m) in curve.iter().enumerate() {
            r[i] = (m.mean - self.means[i]) / self.mean_scale;
            r[n + i] = (m.std - self.stds[i]) / self.std_scale;
        }
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    /// The model is even in the spreads, so in σ-space a step through 0
    /// is reflected rather than stopped at a zero-gradient wall.
    fn reflects(&self, i: usize) -> bool {
        REFLECTED[i] && !self.squared
    }

    fn upper(&self, i: usize) -> f64 {
        if REFLECTED[i] && self.squared {
            UPPER[i] * UPPER[i]
        } else {
            UPPER[i]
        }
    }

    /// Internal coordinates of a full parameter vector.
    fn reduce(&self, full: &[f64; 6]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| if REFLECTED[i] && self.squared { full[i] * full[i] } else { full[i] })
            .collect()
    }

    fn clamp(&self, p: &mut [f64]) {
        for (&i, v) in self.free.iter().zip(p.iter_mut()) {
            if self.reflects(i) {
                *v = v.abs();
            }
            *v = v.clamp(LOWER[i], self.upper(i));
        }
    }

    /// Five-point central-difference Jacobian; second-order one-sided
    /// differences where the stencil would cross a bound.
    fn jacobian(&self, p: &[f64], r0: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(r0.len(), p.len());
        let at = |k: usize, x: f64| {
            let mut q = p.to_vec();
            q[k] = x;
            self.residuals(&q)
        };
        for (k, &i) in self.free.iter().enumerate() {
            let x = p[k];
            let h = 1e-3 * x.abs().max(0.05);
            let within = |y: f64| self.reflects(i) && y <= UPPER[i] || (LOWER[i]..=self.upper(i)).contains(&y);
            let col = if within(x - 2.0 * h) && within(x + 2.0 * h) {
                (at(k, x - 2.0 * h)? - at(k, x + 2.0 * h)? + (at(k, x + h)? - at(k, x - h)?) * 8.0) / (12.0 * h)
            } else {
                let h = 1e-5 * x.abs().max(0.05);
                let dir = if within(x + 2.0 * h) { 1.0 } else { -1.0 };
                let (r1, r2) = (at(k, x + dir * h)?, at(k, x + 2.0 * dir * h)?);
                (r1 * 4.0 - r2 - r0 * 3.0) / (2.0 * dir * h)
            };
            jac.set_column(k, &col);
        }
        Some(jac)
    }
}

/// Relative probe length for the second directional derivative.
const GEODESIC_PROBE: f64 = 0.1;
/// Largest accepted ratio of acceleration to velocity.
const GEODESIC_RATIO: f64 = 0.75;

struct LmOutcome {
    p: Vec<f64>,
    cost: f64,
    iterations: usize,
}

/// Projected Levenberg–Marquardt with Marquardt scaling.
fn levenberg_marquardt(problem: &JointProblem, start: &[f64]) -> Option<LmOutcome> {
    let mut p = start.to_vec();
    problem.clamp(&mut p);
    let mut r = problem.residuals(&p)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3_f64;
    let mut jac = problem.jacobian(&p, &r)?;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (m, k) = jac.shape();
        let col_norms: Vec<f64> = (0..k).map(|j| jac.column(j).norm().max(1e-12)).collect();
        // Parameters resting on a bound with the gradient pointing outward
        // are held fixed for this step.
        let grad = jac.transpose() * &r;
        let held: Vec<bool> = (0..k)
            .map(|j| {
                let i = problem.free[j];
                (p[j] <= LOWER[i] && grad[j] > 0.0) || (p[j] >= problem.upper(i) && grad[j] < 0.0)
            })
            .collect();
        let mut improved = false;
        while lambda < 1e12 {
            // Solve the damped problem as an augmented least-squares system
            // so the conditioning of J is not squared.
            let mut aug = DMatrix::zeros(m + k, k);
            let mut rhs = DVector::zeros(m + k);
            rhs.rows_mut(0, m).copy_from(&(-&r));
            for j in 0..k {
                if held[j] {
                    aug[(m + j, j)] = 1.0;
                } else {
                    aug.view_mut((0, j), (m, 1)).copy_from(&jac.column(j));
                    aug[(m + j, j)] = lambda.sqrt() * col_norms[j];
                }
            }
            let svd = aug.svd(true, true);
            let Ok(velocity) = svd.solve(&rhs, 1e-15) else {
                lambda *= 10.0;
                continue;
            };
            // Geodesic acceleration: a second-order correction along the
            // curved valleys this model has between σ_φ, η and σ_ζ.
            let mut step = velocity.clone();
            let probe: Vec<f64> = p.iter().zip(velocity.iter()).map(|(a, b)| a + GEODESIC_PROBE * b).collect();
            if let Some(rp) = problem.residuals(&probe) {
                let curvature = ((rp - &r) / GEODESIC_PROBE - &jac * &velocity) * (2.0 / GEODESIC_PROBE);
                let mut rhs2 = DVector::zeros(m + k);
                rhs2.rows_mut(0, m).copy_from(&(-curvature));
                if let Ok(accel) = svd.solve(&rhs2, 1e-15) {
                    let scaled = |v: &DVector<f64>| {
                        v.iter().zip(&col_norms).map(|(x, c)| (x * c).powi(2)).sum::<f64>().sqrt()
                    };
                    // Near the noise floor the probe difference is roundoff, so
                    // an implausible correction is dropped rather than damped.
                    if 2.0 * scaled(&accel) <= GEODESIC_RATIO * scaled(&velocity) {
                        step += accel * 0.5;
                    }
                }
            }
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            problem.clamp(&mut trial);
            if let Some(rt) = problem.residuals(&trial) {
                let ct = rt.norm_squared();
                if ct < cost {
                    let moved = p
                        .iter()
                        .zip(&trial)
                        .map(|(a, b)| (a - b).abs() / a.abs().max(1e-3))
                        .fold(0.0, f64::max);
                    let gain = (cost - ct) / cost.max(1e-300);
                    p = trial;
                    r = rt;
                    cost = ct;
                    lambda = (lambda / 10.0).max(1e-15);
                    improved = true;
                    jac = problem.jacobian(&p, &r)?;
                    if gain < 1e-14 || moved < 1e-12 {
                        return Some(LmOutcome {
                            p,
                            cost,
                            iterations,
                        });
                    }
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    Some(LmOutcome {
        p,
        cost,
        iterations,
    })
}

/// Joint fit of the mean and std fringes to the signal moment model over
/// (σ_φ, σ_s, η, φ₀, σ_ζ), plus the phase per kelvin for temperature data
/// without a known conversion. The best of several Latin-hypercube starts
/// and one start seeded by the conventional fit wins.
pub fn fit_joint(data: &FringeDataset, opts: &JointFitOptions) -> Result<FitResult> {
    data.validate()?;
    let stds = data
        .stds()
        .ok_or_else(|| invalid("std", "joint fit needs the std column for every point"))?;
    let xs = data.xs();
    let means = data.means();
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let (mean_scale, std_scale) = (rms(&means), rms(&stds));
    if !(mean_scale > 0.0 && std_scale > 0.0) {
        return Err(invalid("points", "mean and std columns must not vanish identically"));
    }
    let conventional = fit_conventional(data)?;
    let slope = conventional.phase_per_kelvin.unwrap_or(1.0);

    let mut free = vec![0, 1, 2, 3];
    let mut full = [0.0, 0.0, 1.0, 0.0, 0.0, data.known_slope().unwrap_or(slope)];
    match opts.sigma_zeta {
        Some(sz) if sz >= 0.0 && sz.is_finite() => full[4] = sz,
        Some(sz) => return Err(invalid("sigma_zeta", format!("must be >= 0, got {sz}"))),
        None => free.push(4),
    }
    if data.known_slope().is_none() {
        free.push(5);
    }
    let problem = JointProblem {
        xs: &xs,
        means: &means,
        stds: &stds,
        mean_scale,
        std_scale,
        free,
        full,
        squared: true,
    };

    let mut starts = latin_hypercube(opts.starts.max(1), opts.seed);
    let eta_eff = conventional.eta_eff.clamp(1e-6, 0.999);
    starts.push([sigma_from_visibility(eta_eff)?, 0.02, 0.99, conventional.phi0, 0.02]);
    let starts: Vec<Vec<f64>> = starts
        .iter()
        .map(|s| {
            let mut full = problem.full;
            full[..5].copy_from_slice(s);
            // The conventional fit fixes the phase origin well; Latin starts
            // only perturb it.
            full[3] = conventional.phi0 + 0.25 * s[3];
            full[5] = slope;
            for (i, v) in full.iter_mut().enumerate() {
                if !problem.free.contains(&i) {
                    *v = problem.full[i];
                }
            }
            problem.reduce(&full)
        })
        .collect();

    let best = starts
        .par_iter()
        .filter_map(|s| levenberg_marquardt(&problem, s))
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .ok_or_else(|| Error::NoConvergence("no start produced a finite model".into()))?;

    let best = if problem.free.contains(&4) {
        polish_sigma_zeta(&problem, best)
    } else {
        best
    };

    let full = problem.expand(&best.p);
    let spreads = JointProblem {
        squared: false,
        ..problem.clone()
    };
    let p = spreads.reduce(&full);
    let r = spreads
        .residuals(&p)
        .ok_or_else(|| Error::NoConvergence("model not finite at the optimum".into()))?;
    let jac = spreads
        .jacobian(&p, &r)
        .ok_or_else(|| Error::NoConvergence("model not finite near the optimum".into()))?;
    let m = 2 * xs.len();
    let k = p.len();
    let dof = m.saturating_sub(k).max(1) as f64;
    let s2 = best.cost / dof;
    let jtj = jac.transpose() * &jac;
    let eps = 1e-12 * jtj.amax().max(1e-300);
    let cov = jtj
        .pseudo_inverse(eps)
        .map_err(|e| Error::NoConvergence(e.to_string()))?
        * s2;

    let at_bound = problem
        .free
        .iter()
        .zip(&best.p)
        .filter(|(&i, &v)| v <= LOWER[i] || v >= problem.upper(i))
        .map(|(&i, _)| NAMES[i].to_string())
        .collect();
    Ok(FitResult {
        sigma_phi: full[0],
        sigma_s: full[1],
        eta: full[2],
        phi0: wrap_phase(full[3]),
        sigma_zeta: full[4],
        phase_per_kelvin: match data.abscissa {
            Abscissa::Temperature => Some(full[5]),
            Abscissa::Phase => None,
        },
        residual_rms: (best.cost / m as f64).sqrt(),
        parameters: spreads.free.iter().map(|&i| NAMES[i].to_string()).collect(),
        covariance: (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect(),
        at_bound,
        iterations: best.iterations,
    })
}

/// The detector noise σ_ζ shares a shallow valley with η and σ_φ once the
/// fringe is strongly damped, and finite-difference steps cannot follow it
/// to the end. Profiling it out leaves a well-conditioned fit per value,
/// so a line search over σ_ζ² finishes the job.
fn polish_sigma_zeta(problem: &JointProblem, best: LmOutcome) -> LmOutcome {
    let slot = problem.free.iter().position(|&i| i == 4).expect("sigma_zeta is free");
    let full = problem.expand(&best.p);
    let inner = |z: f64| {
        let mut pinned = problem.clone();
        pinned.free.remove(slot);
        pinned.full = full;
        pinned.full[4] = z.max(0.0).sqrt();
        let start = pinned.reduce(&pinned.full);
        levenberg_marquardt(&pinned, &start).map(|o| (pinned.expand(&o.p), o))
    };
    let cost = |z: f64| inner(z).map_or(f64::INFINITY, |(_, o)| o.cost);
    let z0 = best.p[slot];
    let reach = 0.05 * z0 + 1e-6;
    let z = golden_min(cost, (z0 - reach).max(0.0), z0 + reach, 1e-9);
    match inner(z) {
        Some((full, o)) if o.cost < best.cost => LmOutcome {
            p: problem.reduce(&full),
            cost: o.cost,
            iterations: best.iterations + o.iterations,
        },
        _ => best,
    }
}

fn wrap_phase(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

fn latin_hypercube(n: usize, seed: u64) -> Vec<[f64; 5]> {
    let mut rng = substream(seed, 0);
    let mut out = vec![[0.0; 5]; n];
    for d in 0..5 {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (row, &s) in out.iter_mut().zip(&strata) {
            let u = (s as f64 + rng.random::<f64>()) / n as f64;
            row[d] = START_LOW[d] + u * (START_HIGH[d] - START_LOW[d]);
        }
    }
    out
}

/// One fitted bias point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFit {
    pub i_b_exp: f64,
    pub fit: std::result::Result<FitResult, String>,
}

/// Joint fits of a series of datasets labelled by experimental bias.
pub fn fit_sweep(datasets: &[(f64, FringeDataset)], opts: &JointFitOptions) -> Vec<SweepFit> {
    let mut rows: Vec<SweepFit> = datasets
        .par_iter()
        .map(|(i_b, ds)| SweepFit {
            i_b_exp: *i_b,
            fit: fit_joint(ds, opts).map_err(|e| e.to_string()),
        })
        .collect();
    rows.sort_by(|a, b| a.i_b_exp.total_cmp(&b.i_b_exp));
    rows
}

/// Straight-line extrapolation of σ(I_b).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extrapolation {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Residual standard deviation.
    pub residual_std: f64,
    /// Abscissa where the line equals π.
    pub crossing_pi: Option<f64>,
    /// Abscissa where the line equals 2π.
    pub crossing_2pi: Option<f64>,
    pub band: Vec<BandPoint>,
}

/// Fitted value and 95 % prediction interval at one abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandPoint {
    pub x: f64,
    pub y: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Confidence level of the prediction band.
pub const BAND_LEVEL: f64 = 0.95;

/// Ordinary least-squares line through `points` with a prediction band at
/// `targets`.
pub fn extrapolate_sigma(points: &[(f64, f64)], targets: &[f64]) -> Result<Extrapolation> {
    let n = points.len();
    if n < 3 {
        return Err(invalid("points", format!("need at least 3 points, got {n}")));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::NonFinite("extrapolation point"));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("points", "abscissae must not all coincide"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let residual_std = (sse / (nf - 2.0)).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map_err(|e| Error::NoConvergence(e.to_string()))?
        .inverse_cdf(0.5 + 0.5 * BAND_LEVEL);
    let band = targets
        .iter()
        .map(|&x| {
            let y = intercept + slope * x;
            let half = t * residual_std * (1.0 + 1.0 / nf + (x - mx).powi(2) / sxx).sqrt();
            BandPoint {
                x,
                y,
                lower: y - half,
                upper: y + half,
            }
        })
        .collect();
    let crossing = |level: f64| (slope != 0.0).then(|| (level - intercept) / slope);
    Ok(Extrapolation {
        slope,
        intercept,
        r_squared,
        residual_std,
        crossing_pi: crossing(PI),
        crossing_2pi: crossing(2.0 * PI),
        band,
    })
}

use std::f64::consts::PI;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Result;
use clap::{Args, ValueEnum};
use phaselab::cascade::propagate;
use phaselab::entropy::distance_map;
use phaselab::interference::{fringe_curve, fringe_moments, sample_signal, threshold_s};
use phaselab::params::units::{GHZ, MA, PS};
use phaselab::sde::sweep_bias;
use phaselab::{
    threshold_current, CascadeConfig, DelayLine, GaussianPhaseDensity, InterferenceParams, PdfCurve, PumpWaveform,
    QuantumDensity, SimGrid,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::{seed, write_sweep_row, SWEEP_HEADER};
use crate::config::ParamFile;
use crate::output::{half_open, histogram, linspace, write_json, Cell, Table};
use crate::Global;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig6,
    Fig13,
    Fig14,
}

#[derive(Args)]
pub struct ReproduceArgs {
    pub figure: Figure,
    /// Trajectories per bias point for fig4.
    #[arg(long, default_value_t = 2000)]
    pub iterations: usize,
    /// Signal samples per curve for fig6.
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
}

#[derive(Serialize)]
struct Artifact {
    file: String,
    rows: usize,
    runtime_s: f64,
}

#[derive(Serialize)]
struct Manifest {
    figure: Figure,
    seed: u64,
    version: &'static str,
    parameters: Value,
    artifacts: Vec<Artifact>,
    runtime_s: f64,
    created_unix_s: u64,
}

/// Collects tables under the figure directory and times each one.
struct Recorder {
    dir: std::path::PathBuf,
    artifacts: Vec<Artifact>,
    clock: Instant,
}

impl Recorder {
    fn table(&self, name: &str, header: &[&str]) -> Result<Table> {
        Table::create(self.dir.join(name), header)
    }

    fn done(&mut self, t: Table) -> Result<()> {
        let (path, rows) = t.finish()?;
        let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        self.artifacts.push(Artifact {
            file,
            rows,
            runtime_s: self.clock.elapsed().as_secs_f64(),
        });
        self.clock = Instant::now();
        Ok(())
    }
}

pub fn run(a: ReproduceArgs, g: &Global, params: &ParamFile) -> Result<String> {
    let name = format!("{:?}", a.figure).to_lowercase();
    let dir = g.out.join(&name);
    std::fs::create_dir_all(&dir)?;
    let start = Instant::now();
    let mut rec = Recorder {
        dir: dir.clone(),
        artifacts: Vec::new(),
        clock: Instant::now(),
    };
    let seed = seed(g, params);
    let ip = params.interference;
    let parameters = match a.figure {
        Figure::Fig1 => fig1(&mut rec, &ip)?,
        Figure::Fig2 => fig2(&mut rec, &ip)?,
        Figure::Fig3 => fig3(&mut rec)?,
        Figure::Fig4 => fig4(&mut rec, params, seed, a.iterations)?,
        Figure::Fig6 => fig6(&mut rec, &ip, seed, a.samples)?,
        Figure::Fig13 => fig13(&mut rec, &params.cascade)?,
        Figure::Fig14 => fig14(&mut rec, &ip)?,
    };
    let manifest = Manifest {
        figure: a.figure,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        parameters,
        runtime_s: start.elapsed().as_secs_f64(),
        artifacts: rec.artifacts,
        created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    let rows: usize = manifest.artifacts.iter().map(|a| a.rows).sum();
    Ok(format!(
        "reproduce {name}: {} files, {rows} rows in {:.1} s -> {}",
        manifest.artifacts.len(),
        manifest.runtime_s,
        dir.display()
    ))
}

const THETAS: [f64; 3] = [0.0, PI / 2.0, PI];

/// Densities at σ_φ = π/4, π/2, π for Δθ = 0, π/2, π, plus the arcsine law.
fn fig1(rec: &mut Recorder, base: &InterferenceParams) -> Result<Value> {
    let sigmas = [PI / 4.0, PI / 2.0, PI];
    let points = 801;
    let mut t = rec.table("pdf.csv", &["sigma_phi", "delta_theta", "y", "density"])?;
    for &s in &sigmas {
        for &th in &THETAS {
            let c = PdfCurve::tabulate(&GaussianPhaseDensity::new(&ideal(base, s, th))?, points)?;
            for (&y, &d) in c.grid.iter().zip(&c.density) {
                t.row([Cell::F(s), th.into(), y.into(), d.into()])?;
            }
        }
    }
    rec.done(t)?;
    let q = PdfCurve::tabulate(&QuantumDensity::new(base.s1_mean, base.s2_mean, base.eta)?, points)?;
    let mut t = rec.table("pdf_quantum.csv", &["y", "density"])?;
    for (&y, &d) in q.grid.iter().zip(&q.density) {
        t.row([Cell::F(y), d.into()])?;
    }
    rec.done(t)?;
    Ok(json!({ "sigma_phi": sigmas, "delta_theta": THETAS, "points": points, "eta": base.eta }))
}

/// The signal parameters of the params file without intensity or detector noise.
fn ideal(base: &InterferenceParams, sigma_phi: f64, delta_theta: f64) -> InterferenceParams {
    InterferenceParams {
        sigma_s: 0.0,
        sigma_zeta: 0.0,
        jitter_phase_std: 0.0,
        ..InterferenceParams {
            sigma_phi,
            delta_theta,
            ..*base
        }
    }
}

fn fig2(rec: &mut Recorder, base: &InterferenceParams) -> Result<Value> {
    let sigmas = linspace(0.05, 2.0 * PI, 64);
    let mut t = rec.table("threshold.csv", &["sigma_phi", "delta_theta", "s_th"])?;
    for &th in &THETAS {
        for &s in &sigmas {
            t.row([Cell::F(s), th.into(), threshold_s(&ideal(base, s, th))?.into()])?;
        }
    }
    rec.done(t)?;
    Ok(json!({ "sigma_phi": [0.05, 2.0 * PI, 64], "delta_theta": THETAS }))
}

fn fig3(rec: &mut Recorder) -> Result<Value> {
    let sigmas = linspace(0.1, 2.5 * PI, 48);
    let thetas = linspace(0.0, PI, 48);
    let mut t = rec.table("dmap.csv", &["sigma_phi", "delta_theta", "d"])?;
    for (s, th, d) in distance_map(&sigmas, &thetas)? {
        t.row([Cell::F(s), th.into(), d.into()])?;
    }
    rec.done(t)?;
    // Slices near the quadrature point, where d is most sensitive to Δθ.
    let slice_thetas = [0.0, PI / 4.0, 89.9f64.to_radians(), PI / 2.0];
    let sigmas = linspace(PI / 2.0, 2.5 * PI, 64);
    let mut t = rec.table("dmap_slices.csv", &["sigma_phi", "delta_theta", "d"])?;
    for (s, th, d) in distance_map(&sigmas, &slice_thetas)? {
        t.row([Cell::F(s), th.into(), d.into()])?;
    }
    rec.done(t)?;
    Ok(json!({ "map": { "sigma_phi": [0.1, 2.5 * PI, 48], "delta_theta": [0.0, PI, 48] },
               "slices": { "sigma_phi": [PI / 2.0, 2.5 * PI, 64], "delta_theta": slice_thetas } }))
}

fn fig4(rec: &mut Recorder, params: &ParamFile, seed: u64, iterations: usize) -> Result<Value> {
    let p = &params.laser;
    let i_th = threshold_current(p);
    let biases = linspace(0.0, i_th, 13);
    let grid = SimGrid {
        n_iterations: iterations,
        master_seed: seed,
        ..params.grid
    };
    let rates = [2.5, 5.0, 10.0];
    let amplitudes = [10.0, 40.0];
    let mut t = rec.table("sweep.csv", &SWEEP_HEADER)?;
    for &f in &rates {
        for &ip in &amplitudes {
            let template = PumpWaveform::new(0.0, ip * MA, f * GHZ);
            for r in sweep_bias(p, &biases, &template, &grid) {
                write_sweep_row(&mut t, &r)?;
            }
        }
    }
    rec.done(t)?;
    Ok(json!({ "laser": p, "grid": grid, "f_p_GHz": rates, "i_p_mA": amplitudes,
               "i_b_mA": [0.0, i_th / MA, biases.len()] }))
}

/// Noise level of the simulated figures.
const FIGURE_NOISE: f64 = 0.05;

/// Sampled densities for σ_φ = π … 0 in steps of π/10 at Δθ = 0, and the
/// signal std against σ_φ.
fn fig6(rec: &mut Recorder, base: &InterferenceParams, seed: u64, samples: usize) -> Result<Value> {
    let ip0 = InterferenceParams {
        delta_theta: 0.0,
        sigma_s: FIGURE_NOISE,
        sigma_zeta: FIGURE_NOISE,
        ..*base
    };
    let bins = 100;
    let mut t = rec.table("pdf.csv", &["sigma_phi", "bin_center", "density"])?;
    for k in 0..=10 {
        let s = PI * (10 - k) as f64 / 10.0;
        let ip = InterferenceParams { sigma_phi: s, ..ip0 };
        let xs = sample_signal(&ip, samples, seed.wrapping_add(k))?;
        let h = histogram(&xs, bins);
        let width = if h.len() > 1 { h[1].0 - h[0].0 } else { 1.0 };
        for (c, n) in h {
            t.row([Cell::F(s), c.into(), (n as f64 / (samples as f64 * width)).into()])?;
        }
    }
    rec.done(t)?;
    let mut t = rec.table("std.csv", &["sigma_phi", "std"])?;
    for s in linspace(0.0, 2.0 * PI, 64) {
        t.row([Cell::F(s), fringe_moments(&InterferenceParams { sigma_phi: s, ..ip0 })?.std.into()])?;
    }
    rec.done(t)?;
    Ok(json!({ "interference": ip0, "samples": samples, "bins": bins }))
}

fn fig13(rec: &mut Recorder, base: &CascadeConfig) -> Result<Value> {
    let mut t = rec.table("cascade.csv", &["delay_line", "t_ps", "I_plus", "I_minus"])?;
    for line in DelayLine::ALL {
        let cfg = CascadeConfig {
            phi_c: line.phases(),
            ..*base
        };
        let grid = cfg.default_grid()?;
        let field = propagate(&cfg, &grid)?;
        for ((time, ip), im) in grid.times().iter().zip(field.intensity_plus()).zip(field.intensity_minus()) {
            t.row([Cell::S(line.name()), (time / PS).into(), ip.into(), im.into()])?;
        }
    }
    rec.done(t)?;
    Ok(json!({ "cascade": base }))
}

/// Statistical fringes over a grid of σ_φ and σ_s.
fn fig14(rec: &mut Recorder, base: &InterferenceParams) -> Result<Value> {
    let sigmas = [0.5, 1.0, 2.0];
    let spreads = [0.0, 0.05, 0.1, 0.2];
    let thetas = half_open(-PI, PI, 128);
    let mut t = rec.table("fringes.csv", &["sigma_phi", "sigma_s", "delta_theta_rad", "mean", "std"])?;
    for &s in &sigmas {
        for &ss in &spreads {
            let ip = InterferenceParams {
                sigma_phi: s,
                sigma_s: ss,
                sigma_zeta: FIGURE_NOISE,
                ..*base
            };
            for m in fringe_curve(&ip, &thetas)? {
                t.row([Cell::F(s), ss.into(), m.delta_theta.into(), m.mean.into(), m.std.into()])?;
            }
        }
    }
    rec.done(t)?;
    Ok(json!({ "sigma_phi": sigmas, "sigma_s": spreads, "sigma_zeta": FIGURE_NOISE, "eta": base.eta }))
}

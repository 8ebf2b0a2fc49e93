use std::f64::consts::PI;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use phaselab::cascade::{propagate, verify_closed_form};
use phaselab::entropy::{distance_map, entropy_report};
use phaselab::fringefit::{fit_conventional, fit_joint, fit_sweep};
use phaselab::ingest::{load_histogram, sidecar_path, Histogram};
use phaselab::interference::{fringe_curve, sample_signal};
use phaselab::params::units::{GHZ, MA, PS};
use phaselab::sde::{sweep_bias, trace};
use phaselab::{
    threshold_current, CascadeConfig, DelayLine, FringeDataset, GaussianPhaseDensity, InterferenceParams,
    JointFitOptions, NormalizationRef, PdfCurve, PumpWaveform, QuantumDensity, SimGrid,
};
use serde::Serialize;

use crate::config::{usage, ParamFile};
use crate::output::{half_open, histogram, linspace, write_json, Cell, Table};
use crate::Global;

pub fn seed(g: &Global, params: &ParamFile) -> u64 {
    g.seed.unwrap_or(params.grid.master_seed)
}

fn summary(what: &str, path: &Path, rows: usize) -> String {
    format!("{what}: wrote {rows} rows to {}", path.display())
}

/// Interference parameters from the params file with per-flag overrides.
#[derive(Args, Clone, Default)]
pub struct SignalFlags {
    #[arg(long, allow_hyphen_values = true)]
    pub sigma_phi: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta_theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma_s: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma_zeta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<f64>,
}

impl SignalFlags {
    pub fn apply(&self, base: &InterferenceParams) -> InterferenceParams {
        InterferenceParams {
            sigma_phi: self.sigma_phi.unwrap_or(base.sigma_phi),
            delta_theta: self.delta_theta.unwrap_or(base.delta_theta),
            sigma_s: self.sigma_s.unwrap_or(base.sigma_s),
            sigma_zeta: self.sigma_zeta.unwrap_or(base.sigma_zeta),
            eta: self.eta.unwrap_or(base.eta),
            ..*base
        }
    }
}

/// Pump and grid settings shared by the simulation commands.
#[derive(Args, Clone)]
pub struct PumpFlags {
    /// Modulation amplitude [mA].
    #[arg(long, default_value_t = 40.0)]
    pub ip_ma: f64,
    /// Repetition rate [GHz].
    #[arg(long, default_value_t = 2.5)]
    pub fp_ghz: f64,
    /// Integration step [ps]; defaults to the params file.
    #[arg(long)]
    pub dt_ps: Option<f64>,
    /// Read bias values as the mean current I_b + I_p/2.
    #[arg(long)]
    pub experimental_bias: bool,
}

impl PumpFlags {
    fn waveform(&self, i_b_ma: f64) -> PumpWaveform {
        let (i_p, f_p) = (self.ip_ma * MA, self.fp_ghz * GHZ);
        if self.experimental_bias {
            PumpWaveform::from_experimental(i_b_ma * MA, i_p, f_p)
        } else {
            PumpWaveform::new(i_b_ma * MA, i_p, f_p)
        }
    }

    fn grid(&self, g: &Global, params: &ParamFile) -> SimGrid {
        SimGrid {
            dt: self.dt_ps.map_or(params.grid.dt, |dt| dt * PS),
            master_seed: seed(g, params),
            ..params.grid
        }
    }
}

#[derive(Subcommand)]
pub enum Simulate {
    /// σ_φ versus bias current.
    Sweep(SweepArgs),
    /// One seeded trajectory (t_ps, N, Q, phi).
    Trace(TraceArgs),
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub pump: PumpFlags,
    /// First bias [mA].
    #[arg(long, default_value_t = 0.0)]
    pub ib_start_ma: f64,
    /// Last bias [mA]; defaults to 1.6 times the threshold current.
    #[arg(long)]
    pub ib_stop_ma: Option<f64>,
    #[arg(long, default_value_t = 21)]
    pub points: usize,
    /// Trajectories per point; defaults to the params file.
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub pump: PumpFlags,
    /// Bias [mA].
    #[arg(long, default_value_t = 10.0)]
    pub ib_ma: f64,
    #[arg(long, default_value_t = 4)]
    pub periods: usize,
    /// Integration steps between output rows.
    #[arg(long, default_value_t = 20)]
    pub stride: usize,
}

pub fn simulate(cmd: Simulate, g: &Global, params: &ParamFile) -> Result<String> {
    let p = &params.laser;
    match cmd {
        Simulate::Sweep(a) => {
            if a.points == 0 {
                return Err(usage("--points must be at least 1"));
            }
            let stop = a.ib_stop_ma.unwrap_or(1.6 * threshold_current(p) / MA);
            let biases = linspace(a.ib_start_ma, stop, a.points);
            let template = a.pump.waveform(biases[0]);
            let grid = SimGrid {
                n_iterations: a.iterations.unwrap_or(params.grid.n_iterations),
                ..a.pump.grid(g, params)
            };
            let i_bs: Vec<f64> = biases.iter().map(|&b| a.pump.waveform(b).i_b).collect();
            let rows = sweep_bias(p, &i_bs, &template, &grid);
            let mut t = Table::create(g.out.join("sweep.csv"), &SWEEP_HEADER)?;
            let mut failed = 0;
            for r in &rows {
                write_sweep_row(&mut t, r)?;
                failed += usize::from(r.estimate.is_err());
            }
            let (path, n) = t.finish()?;
            let mut s = summary("simulate sweep", &path, n);
            if failed > 0 {
                s.push_str(&format!(" ({failed} points failed, see the error column)"));
            }
            Ok(s)
        }
        Simulate::Trace(a) => {
            let w = a.pump.waveform(a.ib_ma);
            let states = trace(p, &w, &a.pump.grid(g, params), a.periods, a.stride)?;
            let mut t = Table::create(g.out.join("trace.csv"), &["t_ps", "N", "Q", "phi"])?;
            for s in &states {
                t.row([Cell::F(s.t / PS), s.n.into(), s.q.into(), s.phi.into()])?;
            }
            let (path, n) = t.finish()?;
            Ok(summary("simulate trace", &path, n))
        }
    }
}

pub const SWEEP_HEADER: [&str; 8] = [
    "i_b_mA",
    "i_p_mA",
    "f_p_GHz",
    "sigma_phi_rad",
    "std_err_rad",
    "n_samples",
    "pulsing",
    "error",
];

pub fn write_sweep_row(t: &mut Table, r: &phaselab::sde::SweepPoint) -> Result<()> {
    let w = &r.waveform;
    let head = [Cell::F(r.i_b / MA), Cell::F(w.i_p / MA), Cell::F(w.f_p / GHZ)];
    let pulsing = if r.pulsing { "true" } else { "false" };
    match &r.estimate {
        Ok(e) => t.row(head.into_iter().chain([
            e.sigma_phi.into(),
            e.std_err.into(),
            (e.n_samples as u64).into(),
            pulsing.into(),
            Cell::Missing,
        ])),
        Err(msg) => t.row(head.into_iter().chain([
            Cell::Missing,
            Cell::Missing,
            Cell::Missing,
            pulsing.into(),
            msg.as_str().into(),
        ])),
    }
}

#[derive(Args)]
pub struct PdfArgs {
    #[command(flatten)]
    pub signal: SignalFlags,
    /// Grid points.
    #[arg(long, default_value_t = 801)]
    pub points: usize,
    /// Uniform phase (arcsine law) instead of the Gaussian phase density.
    #[arg(long)]
    pub quantum: bool,
}

pub fn pdf(a: PdfArgs, g: &Global, params: &ParamFile) -> Result<String> {
    let ip = a.signal.apply(&params.interference);
    let curve = if a.quantum {
        PdfCurve::tabulate(&QuantumDensity::new(ip.s1_mean, ip.s2_mean, ip.eta)?, a.points)?
    } else {
        PdfCurve::tabulate(&GaussianPhaseDensity::new(&ip)?, a.points)?
    };
    let mut t = Table::create(g.out.join("pdf.csv"), &["y", "density"])?;
    for (&y, &d) in curve.grid.iter().zip(&curve.density) {
        t.row([Cell::F(y), d.into()])?;
    }
    let (path, n) = t.finish()?;
    Ok(summary("pdf", &path, n))
}

#[derive(Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub signal: SignalFlags,
    #[arg(long, default_value_t = 1_000_000)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub bins: usize,
}

pub fn sample(a: SampleArgs, g: &Global, params: &ParamFile) -> Result<String> {
    if a.bins == 0 || a.n == 0 {
        return Err(usage("--n and --bins must be at least 1"));
    }
    let ip = a.signal.apply(&params.interference);
    let xs = sample_signal(&ip, a.n, seed(g, params))?;
    let mut t = Table::create(g.out.join("sample.csv"), &["bin_center", "count"])?;
    for (c, k) in histogram(&xs, a.bins) {
        t.row([Cell::F(c), k.into()])?;
    }
    let (path, n) = t.finish()?;
    Ok(summary("sample", &path, n))
}

#[derive(Args)]
pub struct FringeModelArgs {
    #[command(flatten)]
    pub signal: SignalFlags,
    /// Phases on [0, 2π).
    #[arg(long, default_value_t = 64)]
    pub points: usize,
}

pub fn fringe_model(a: FringeModelArgs, g: &Global, params: &ParamFile) -> Result<String> {
    let ip = a.signal.apply(&params.interference);
    let curve = fringe_curve(&ip, &half_open(0.0, 2.0 * PI, a.points))?;
    let mut t = Table::create(g.out.join("fringe_model.csv"), &["delta_theta_rad", "mean", "std"])?;
    for m in &curve {
        t.row([Cell::F(m.delta_theta), m.mean.into(), m.std.into()])?;
    }
    let (path, n) = t.finish()?;
    Ok(summary("fringe-model", &path, n))
}

#[derive(Subcommand)]
pub enum Entropy {
    /// Randomness summary of one operating point (JSON).
    Report(ReportArgs),
    /// Statistical distance over a (sigma_phi, delta_theta) grid.
    Dmap(DmapArgs),
}

#[derive(Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub signal: SignalFlags,
    /// Bits per extraction block.
    #[arg(long, default_value_t = 1e6)]
    pub block_size: f64,
}

#[derive(Args)]
pub struct DmapArgs {
    #[arg(long, default_value_t = 0.1)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 2.0 * PI)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 32)]
    pub sigma_points: usize,
    /// Phases on [0, π].
    #[arg(long, default_value_t = 32)]
    pub theta_points: usize,
}

pub fn entropy(cmd: Entropy, g: &Global, params: &ParamFile) -> Result<String> {
    match cmd {
        Entropy::Report(a) => {
            let ip = a.signal.apply(&params.interference);
            let r = entropy_report(&ip, a.block_size, seed(g, params))?;
            let path = g.out.join("entropy_report.json");
            write_json(&path, &r)?;
            Ok(format!(
                "entropy report: h_inf {:.6}, regime {:?}, qrf {} -> {}",
                r.h_inf,
                r.regime,
                r.qrf,
                path.display()
            ))
        }
        Entropy::Dmap(a) => {
            let sigmas = linspace(a.sigma_min, a.sigma_max, a.sigma_points);
            let thetas = linspace(0.0, PI, a.theta_points);
            let map = distance_map(&sigmas, &thetas)?;
            let mut t = Table::create(g.out.join("dmap.csv"), &["sigma_phi", "delta_theta", "d"])?;
            for (s, th, d) in map {
                t.row([Cell::F(s), th.into(), d.into()])?;
            }
            let (path, n) = t.finish()?;
            Ok(summary("entropy dmap", &path, n))
        }
    }
}

#[derive(Subcommand)]
pub enum Fit {
    /// Conventional and joint fit of one fringe file (JSON).
    Fringes(FringesArgs),
    /// Joint fits of every CSV in a directory, one per bias.
    Sweep(FitSweepArgs),
}

#[derive(Args, Clone)]
pub struct JointFlags {
    /// Pin the detector noise instead of fitting it.
    #[arg(long)]
    pub sigma_zeta: Option<f64>,
    /// Latin-hypercube starts.
    #[arg(long)]
    pub starts: Option<usize>,
}

impl JointFlags {
    fn options(&self, g: &Global) -> JointFitOptions {
        let d = JointFitOptions::default();
        JointFitOptions {
            sigma_zeta: self.sigma_zeta,
            seed: g.seed.unwrap_or(d.seed),
            starts: self.starts.unwrap_or(d.starts),
        }
    }
}

#[derive(Args)]
pub struct FringesArgs {
    /// CSV with `delta_theta_rad` or `temp_shift_K`, `mean` and optionally `std`.
    pub input: PathBuf,
    #[command(flatten)]
    pub joint: JointFlags,
}

#[derive(Args)]
pub struct FitSweepArgs {
    /// Directory of fringe CSVs; the first number in each file name is the
    /// experimental bias in mA.
    pub dir: PathBuf,
    #[command(flatten)]
    pub joint: JointFlags,
}

fn read_dataset(path: &Path) -> Result<FringeDataset> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    FringeDataset::from_csv(file).with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct FringeFits {
    conventional: phaselab::ConventionalFit,
    joint: Option<phaselab::FitResult>,
}

/// First decimal number in a file stem, e.g. `ib_49.5mA` -> 49.5.
pub fn bias_from_name(path: &Path) -> Option<f64> {
    let stem = path.file_stem()?.to_str()?;
    let start = stem.find(|c: char| c.is_ascii_digit())?;
    let tail = &stem[start..];
    let end = tail.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(tail.len());
    tail[..end].trim_end_matches('.').parse().ok()
}

pub fn fit(cmd: Fit, g: &Global) -> Result<String> {
    match cmd {
        Fit::Fringes(a) => {
            let ds = read_dataset(&a.input)?;
            let conventional = fit_conventional(&ds)?;
            let joint = if ds.points.iter().all(|p| p.std.is_some()) {
                Some(fit_joint(&ds, &a.joint.options(g))?)
            } else {
                None
            };
            let line = match &joint {
                Some(j) => format!(
                    "fit fringes: sigma_phi {:.4}, sigma_s {:.4}, eta {:.4}",
                    j.sigma_phi, j.sigma_s, j.eta
                ),
                None => format!("fit fringes: eta_eff {:.4} (no std column, joint fit skipped)", conventional.eta_eff),
            };
            let path = g.out.join("fit.json");
            write_json(&path, &FringeFits { conventional, joint })?;
            Ok(format!("{line} -> {}", path.display()))
        }
        Fit::Sweep(a) => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&a.dir)
                .with_context(|| format!("listing {}", a.dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(usage(format!("no CSV files in {}", a.dir.display())));
            }
            let datasets = files
                .iter()
                .map(|f| {
                    let bias = bias_from_name(f)
                        .ok_or_else(|| usage(format!("no bias current in file name {}", f.display())))?;
                    Ok((bias * MA, read_dataset(f)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let rows = fit_sweep(&datasets, &a.joint.options(g));
            let header = [
                "i_b_exp_mA",
                "sigma_phi",
                "sigma_phi_err",
                "sigma_s",
                "sigma_s_err",
                "eta",
                "sigma_zeta",
                "residual_rms",
                "error",
            ];
            let mut t = Table::create(g.out.join("fit_sweep.csv"), &header)?;
            for r in &rows {
                let bias = Cell::F(r.i_b_exp / MA);
                match &r.fit {
                    Ok(f) => t.row([
                        bias,
                        f.sigma_phi.into(),
                        f.std_error("sigma_phi").into(),
                        f.sigma_s.into(),
                        f.std_error("sigma_s").into(),
                        f.eta.into(),
                        f.sigma_zeta.into(),
                        f.residual_rms.into(),
                        Cell::Missing,
                    ])?,
                    Err(msg) => t.row(
                        std::iter::once(bias)
                            .chain((0..7).map(|_| Cell::Missing))
                            .chain([msg.as_str().into()]),
                    )?,
                }
            }
            let (path, n) = t.finish()?;
            Ok(summary("fit sweep", &path, n))
        }
    }
}

#[derive(Subcommand)]
pub enum Cascade {
    /// Output intensities of both ports (t_ps, I_plus, I_minus).
    Trace(CascadeArgs),
}

#[derive(Args)]
pub struct CascadeArgs {
    /// Phase recipe; without it the `cascade` section of the params file is used.
    #[arg(long)]
    pub delay_line: Option<DelayLine>,
}

pub fn cascade(cmd: Cascade, g: &Global, params: &ParamFile) -> Result<String> {
    let Cascade::Trace(a) = cmd;
    let cfg = match a.delay_line {
        Some(line) => CascadeConfig {
            phi_c: line.phases(),
            ..params.cascade
        },
        None => params.cascade,
    };
    let grid = cfg.default_grid()?;
    let field = propagate(&cfg, &grid)?;
    let mut t = Table::create(g.out.join("cascade.csv"), &["t_ps", "I_plus", "I_minus"])?;
    for ((time, ip), im) in grid.times().iter().zip(field.intensity_plus()).zip(field.intensity_minus()) {
        t.row([Cell::F(time / PS), ip.into(), im.into()])?;
    }
    let (path, n) = t.finish()?;
    let mut s = summary("cascade trace", &path, n);
    if DelayLine::identify(&cfg.phi_c, 1e-12).is_some() {
        s.push_str(&format!(", closed-form deviation {:.1e}", verify_closed_form(&cfg, &grid)?));
    }
    Ok(s)
}

#[derive(Args)]
pub struct NormalizeArgs {
    /// Histogram CSV (`value` or `bin_center`, `count`).
    pub input: PathBuf,
    /// Area with the laser off; with --s-0 and --alpha-db replaces the sidecar.
    #[arg(long, requires_all = ["s_0", "alpha_db"])]
    pub s_zero: Option<f64>,
    /// Area of one undelayed pulse.
    #[arg(long, requires_all = ["s_zero", "alpha_db"])]
    pub s_0: Option<f64>,
    /// Insertion loss of the delay line [dB].
    #[arg(long, requires_all = ["s_zero", "s_0"])]
    pub alpha_db: Option<f64>,
}

pub fn normalize(a: NormalizeArgs, g: &Global) -> Result<String> {
    let hist = match (a.s_zero, a.s_0, a.alpha_db) {
        (Some(z), Some(s0), Some(alpha)) => {
            let r = NormalizationRef::new(z, s0, alpha)?;
            let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
            Histogram::from_csv(file)?.normalized(&r)?
        }
        _ => {
            let sidecar = sidecar_path(&a.input);
            if !sidecar.exists() {
                return Err(usage(format!(
                    "no reference: pass --s-zero, --s-0 and --alpha-db or provide {}",
                    sidecar.display()
                )));
            }
            load_histogram(&a.input)?
        }
    };
    let mut t = Table::create(g.out.join("normalized.csv"), &["bin_center", "count"])?;
    for (&c, &k) in hist.centers.iter().zip(&hist.counts) {
        t.row([Cell::F(c), k.into()])?;
    }
    let (path, n) = t.finish()?;
    Ok(summary("normalize", &path, n))
}

//! Laser constants, drive waveform and integration settings.
//!
//! Everything is stored in SI units. Conversions from the lab units used on
//! the command line (mA, GHz, ps) happen at the boundary, see [`units`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Elementary charge [C].
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Reduced Planck constant [J s].
pub const HBAR: f64 = 1.054_571_817e-34;

pub mod units {
    pub const MA: f64 = 1e-3;
    pub const GHZ: f64 = 1e9;
    pub const THZ: f64 = 1e12;
    pub const PS: f64 = 1e-12;
    pub const NS: f64 = 1e-9;
}

/// Physical constants of a single-mode laser diode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserParams {
    /// Photon lifetime [s].
    pub tau_ph: f64,
    /// Electron lifetime [s].
    pub tau_e: f64,
    /// Differential quantum output.
    pub eta_d: f64,
    /// Transparency carrier number.
    pub n_tr: f64,
    /// Threshold carrier number.
    pub n_th: f64,
    /// Spontaneous emission coupling factor.
    pub c_sp: f64,
    /// Confinement factor.
    pub gamma_conf: f64,
    /// Linewidth enhancement (Henry) factor.
    pub alpha_henry: f64,
    /// Central angular lasing frequency [rad/s].
    pub omega0: f64,
    /// Gain compression with respect to output power [1/W].
    pub gamma_p: f64,
}

impl Default for LaserParams {
    /// The DFB diode used for the published simulations, with γ_P = 20 W⁻¹.
    fn default() -> Self {
        Self {
            tau_ph: 1.0 * units::PS,
            tau_e: 1.0 * units::NS,
            eta_d: 0.3,
            n_tr: 6.0e7,
            n_th: 6.5e7,
            c_sp: 1e-5,
            gamma_conf: 0.12,
            alpha_henry: 6.0,
            omega0: 2.0 * std::f64::consts::PI * 193.548 * units::THZ,
            gamma_p: 20.0,
        }
    }
}

impl LaserParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tau_ph", self.tau_ph),
            ("tau_e", self.tau_e),
            ("eta_d", self.eta_d),
            ("n_tr", self.n_tr),
            ("n_th", self.n_th),
            ("c_sp", self.c_sp),
            ("gamma_conf", self.gamma_conf),
            ("alpha_henry", self.alpha_henry),
            ("omega0", self.omega0),
            ("gamma_p", self.gamma_p),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.tau_ph <= 0.0 {
            return Err(invalid("tau_ph", "must be positive"));
        }
        if self.tau_e <= 0.0 {
            return Err(invalid("tau_e", "must be positive"));
        }
        if self.n_tr <= 0.0 {
            return Err(invalid("n_tr", "must be positive"));
        }
        if self.n_th <= self.n_tr {
            return Err(invalid("n_th", "must exceed n_tr"));
        }
        // c_sp = 0 is admitted: it switches the noise source off.
        if !(0.0..=1.0).contains(&self.c_sp) {
            return Err(invalid("c_sp", "must lie in [0, 1]"));
        }
        if !(self.gamma_conf > 0.0 && self.gamma_conf <= 1.0) {
            return Err(invalid("gamma_conf", "must lie in (0, 1]"));
        }
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return Err(invalid("eta_d", "must lie in (0, 1]"));
        }
        if self.gamma_p < 0.0 {
            return Err(invalid("gamma_p", "must be non-negative"));
        }
        if self.omega0 <= 0.0 {
            return Err(invalid("omega0", "must be positive"));
        }
        Ok(())
    }

    /// Photon energy ħω₀ [J].
    pub fn photon_energy(&self) -> f64 {
        HBAR * self.omega0
    }

    /// Dimensionless gain compression γ_Q derived from γ_P.
    pub fn gamma_q(&self) -> f64 {
        gamma_q_from_gamma_p(self)
    }
}

/// Threshold current I_th = N_th e / τ_e [A].
pub fn threshold_current(p: &LaserParams) -> f64 {
    p.n_th * ELEMENTARY_CHARGE / p.tau_e
}

/// γ_Q = γ_P η_d ħω₀ / (2 Γ τ_ph).
pub fn gamma_q_from_gamma_p(p: &LaserParams) -> f64 {
    p.gamma_p * p.eta_d * p.photon_energy() / (2.0 * p.gamma_conf * p.tau_ph)
}

/// Inverse of [`gamma_q_from_gamma_p`]: γ_P = 2 γ_Q Γ τ_ph / (η_d ħω₀).
pub fn gamma_p_from_gamma_q(gamma_q: f64, p: &LaserParams) -> f64 {
    2.0 * gamma_q * p.gamma_conf * p.tau_ph / (p.eta_d * p.photon_energy())
}

/// Square-wave pump: `i_b` for the low level, `i_b + i_p` for the high one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpWaveform {
    /// Bias (minimum) current [A].
    pub i_b: f64,
    /// Peak-to-peak modulation current [A].
    pub i_p: f64,
    /// Pulse repetition frequency [Hz].
    pub f_p: f64,
    /// Fraction of the period spent at the high level.
    #[serde(default = "default_duty")]
    pub duty: f64,
}

fn default_duty() -> f64 {
    0.5
}

impl PumpWaveform {
    pub fn new(i_b: f64, i_p: f64, f_p: f64) -> Self {
        Self {
            i_b,
            i_p,
            f_p,
            duty: default_duty(),
        }
    }

    /// Builds the waveform from the bench convention, where the current swings
    /// symmetrically around `i_b_exp` so the minimum is `i_b_exp - i_p / 2`.
    pub fn from_experimental(i_b_exp: f64, i_p: f64, f_p: f64) -> Self {
        Self::new(i_b_exp - 0.5 * i_p, i_p, f_p)
    }

    /// Mid-level current I_b^exp = I_b + I_p / 2.
    pub fn experimental_bias(&self) -> f64 {
        self.i_b + 0.5 * self.i_p
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f_p
    }

    /// Pump current at time `t` since the start of a period. The period opens
    /// on the rising edge.
    pub fn current_at(&self, t: f64) -> f64 {
        let phase = (t * self.f_p).rem_euclid(1.0);
        if phase < self.duty {
            self.i_b + self.i_p
        } else {
            self.i_b
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i_b.is_finite() && self.i_b >= 0.0) {
            return Err(invalid("i_b", "must be finite and non-negative"));
        }
        if !(self.i_p.is_finite() && self.i_p >= 0.0) {
            return Err(invalid("i_p", "must be finite and non-negative"));
        }
        if !(self.f_p.is_finite() && self.f_p > 0.0) {
            return Err(invalid("f_p", "must be positive"));
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(invalid("duty", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Time step and ensemble settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimGrid {
    /// Integration step [s].
    pub dt: f64,
    /// Upper bound on noiseless warm-up periods used to reach the periodic orbit.
    pub n_periods_warmup: usize,
    /// Monte-Carlo ensemble size.
    pub n_iterations: usize,
    pub master_seed: u64,
}

impl Default for SimGrid {
    fn default() -> Self {
        Self {
            dt: 0.05 * units::PS,
            n_periods_warmup: 400,
            n_iterations: 50_000,
            master_seed: 0x5eed,
        }
    }
}

impl SimGrid {
    pub fn validate(&self, p: &LaserParams) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        if self.dt >= 0.1 * p.tau_ph {
            return Err(invalid("dt", "must be below 0.1 * tau_ph"));
        }
        if self.n_iterations < 1 {
            return Err(invalid("n_iterations", "must be at least 1"));
        }
        if self.n_periods_warmup < 1 {
            return Err(invalid("n_periods_warmup", "must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_current_for_default_diode() {
        let p = LaserParams::default();
        let expected = 6.5e7 * 1.602176634e-19 / 1e-9;
        assert!((threshold_current(&p) - expected).abs() < 1e-15);
        assert!((threshold_current(&p) - 1.0414e-2).abs() < 1e-6);
        // Bench device measured at about 10 mA.
        assert!((threshold_current(&p) - 10e-3).abs() / 10e-3 < 0.05);
        let doubled = LaserParams { n_th: 2.0 * p.n_th, ..p };
        assert_eq!(threshold_current(&doubled), 2.0 * threshold_current(&p));
    }

    #[test]
    fn gamma_q_examples() {
        let p = LaserParams::default();
        assert_eq!(gamma_q_from_gamma_p(&LaserParams { gamma_p: 0.0, ..p }), 0.0);
        // Hand evaluation: 20 * 0.3 * hbar * 2π * 193.548e12 / (2 * 0.12 * 1e-12).
        let photon = 1.054571817e-34 * 2.0 * std::f64::consts::PI * 193.548e12;
        let hand = 20.0 * 0.3 * photon / (2.0 * 0.12 * 1e-12);
        let gq = gamma_q_from_gamma_p(&p);
        assert!((gq - hand).abs() / hand < 1e-14);
        assert!((gq - 3.2065e-6).abs() < 1e-9);
        let back = gamma_p_from_gamma_q(gq, &p);
        assert!((back - 20.0).abs() / 20.0 < 1e-12);
        let slower = LaserParams { tau_ph: 2.0 * p.tau_ph, ..p };
        assert!((gamma_q_from_gamma_p(&slower) - 0.5 * gq).abs() / gq < 1e-15);
    }

    #[test]
    fn waveform_levels_and_conventions() {
        let w = PumpWaveform::new(5e-3, 40e-3, 2.5e9);
        assert_eq!(w.current_at(0.0), 45e-3);
        assert_eq!(w.current_at(0.49 * w.period()), 45e-3);
        assert_eq!(w.current_at(0.51 * w.period()), 5e-3);
        assert!((w.experimental_bias() - 25e-3).abs() < 1e-15);
        let e = PumpWaveform::from_experimental(25e-3, 40e-3, 2.5e9);
        assert!((e.i_b - 5e-3).abs() < 1e-15);
        assert!(PumpWaveform { duty: 1.0, ..w }.validate().is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let p = LaserParams::default();
        assert!(p.validate().is_ok());
        assert!(LaserParams { n_th: 5e7, ..p }.validate().is_err());
        assert!(LaserParams { c_sp: 1.5, ..p }.validate().is_err());
        assert!(LaserParams { tau_e: 0.0, ..p }.validate().is_err());
        let g = SimGrid::default();
        assert!(g.validate(&p).is_ok());
        assert!(SimGrid { dt: 0.1e-12, ..g }.validate(&p).is_err());
    }

    #[test]
    fn params_json_round_trip_uses_field_names() {
        let p = LaserParams::default();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"tau_ph\"") && s.contains("\"gamma_p\""));
        let back: LaserParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn threshold_current_monotone(n_th in 6.1e7f64..1e9, scale in 1.001f64..10.0, tau_e in 1e-10f64..1e-8) {
            let p = LaserParams { n_th, tau_e, ..LaserParams::default() };
            let higher = LaserParams { n_th: n_th * scale, ..p };
            let slower = LaserParams { tau_e: tau_e * scale, ..p };
            prop_assert!(threshold_current(&higher) > threshold_current(&p));
            prop_assert!(threshold_current(&slower) < threshold_current(&p));
        }

        #[test]
        fn gamma_conversion_round_trip(gp in 0.0f64..100.0, tau_ph in 1e-13f64..1e-11, conf in 0.01f64..1.0) {
            let p = LaserParams { gamma_p: gp, tau_ph, gamma_conf: conf, ..LaserParams::default() };
            let back = gamma_p_from_gamma_q(gamma_q_from_gamma_p(&p), &p);
            prop_assert!((back - gp).abs() <= 1e-12 * gp.max(1e-300));
        }
    }
}

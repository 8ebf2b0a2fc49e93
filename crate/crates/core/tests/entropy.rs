use std::f64::consts::{PI, SQRT_2};

use phaselab::entropy::{
    effective_classical_epsilon, entropy_report, epsilon_q, lhl_output_length, min_entropy, qrf, qrf_corrected,
    statistical_distance, NoisySignalSamples, Regime,
};
use phaselab::interference::{threshold_s, GaussianPhaseDensity, InterferenceParams, QuantumDensity};
use proptest::prelude::*;
use statrs::function::erf::erf;

#[test]
fn median_threshold_gives_one_bit_for_any_phase_spread() {
    for sigma in [0.3, 1.0, PI, 5.0] {
        for theta in [0.0, 0.8, PI / 2.0] {
            let ip = InterferenceParams::ideal(sigma, theta);
            let d = GaussianPhaseDensity::new(&ip).unwrap();
            let h = min_entropy(&d, threshold_s(&ip).unwrap()).unwrap();
            assert!((h - 1.0).abs() < 1e-9, "sigma {sigma} theta {theta}: {h}");
        }
    }
}

#[test]
fn off_median_threshold_on_arcsine_density() {
    // P(S <= 1) on the arcsine law over (0, 4) is 1/3, so H = log2(3).
    let h = min_entropy(&QuantumDensity::default(), 1.0).unwrap();
    assert!((h - 3f64.log2()).abs() < 1e-12, "{h}");
    assert!(min_entropy(&QuantumDensity::default(), 4.0).is_err());
}

#[test]
fn distance_limits() {
    assert_eq!(statistical_distance(0.0, 0.3).unwrap(), 1.0);
    // Narrow Gaussian away from the ends: the density exceeds 1/π on
    // |x − θ| < a, so d = P(|Z| < a/σ) − 2a/π.
    for sigma in [0.01, 0.05, 0.1] {
        let a = sigma * (2.0 * (PI / (sigma * (2.0 * PI).sqrt())).ln()).sqrt();
        let want = erf(a / (sigma * SQRT_2)) - 2.0 * a / PI;
        let d = statistical_distance(sigma, 1.5).unwrap();
        assert!((d - want).abs() < 1e-10, "sigma {sigma}: {d} vs {want}");
    }
    assert!(statistical_distance(-1.0, 0.0).is_err());
    // Independent check by a plain Riemann sum of |f - 1/π| with images.
    let (sigma, theta) = (1.0, 0.5);
    let n = 200_000;
    let h = PI / n as f64;
    let g = |u: f64| (-0.5 * (u / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt());
    let riemann: f64 = (0..n)
        .map(|k| {
            let x = (k as f64 + 0.5) * h;
            let f: f64 = (-4..=4)
                .map(|j| {
                    let s = 2.0 * PI * j as f64;
                    g(x - theta + s) + g(-x - theta + s)
                })
                .sum();
            (f - 1.0 / PI).abs()
        })
        .sum::<f64>()
        * h
        * 0.5;
    let d = statistical_distance(sigma, theta).unwrap();
    assert!((d - riemann).abs() < 1e-8, "{d} vs {riemann}");
}

#[test]
fn epsilon_q_definition() {
    let eps = epsilon_q(1.5 * PI).unwrap();
    let want = statistical_distance(2.0 * PI, 0.0).unwrap() / statistical_distance(1.5 * PI, 0.0).unwrap();
    assert!((eps - want).abs() < 1e-15);
    assert!(eps > 0.0 && eps < 1.0);
    assert!(epsilon_q(3.0).is_err());
    assert!(epsilon_q(7.0).is_err());
}

#[test]
fn corrected_factor_at_pi() {
    let (gamma, n) = (1.2, 4096.0);
    let eps = epsilon_q(PI).unwrap();
    let want = n * gamma / (n - 2.0 * gamma * (1.0 / eps).log2());
    assert!((qrf_corrected(gamma, n, PI).unwrap() - want).abs() < 1e-12);
    // A block too short for the penalty admits no output.
    assert!(qrf_corrected(gamma, 10.0, PI).is_err());
}

#[test]
fn small_arithmetic_helpers() {
    assert_eq!(qrf(1.0).unwrap(), 1.0);
    assert_eq!(qrf(0.0).unwrap(), 0.5);
    assert!(qrf(2.0).is_err());
    assert!((lhl_output_length(100.0, 2f64.powi(-10)).unwrap() - 80.0).abs() < 1e-12);
    assert_eq!(effective_classical_epsilon(1024.0, 1.0).unwrap(), 1.0);
    assert!((effective_classical_epsilon(100.0, 2.0).unwrap() - 2f64.powi(-25)).abs() < 1e-20);
}

#[test]
fn detector_noise_moves_mass_below_the_ideal_floor() {
    let ip = InterferenceParams {
        sigma_s: 0.05,
        sigma_zeta: 0.05,
        ..InterferenceParams::ideal(10.0, 0.0)
    };
    let samples = NoisySignalSamples::draw(&ip, 1 << 18, 5).unwrap();
    // Without detector noise every sample lies above S_min = 0, so the mass
    // below the median is one half up to the median's own rank.
    let clean = samples.min_entropy(0.0).unwrap();
    assert!((clean - 1.0).abs() < 1e-4, "{clean}");
    // Samples pushed below S_min no longer count towards the tail mass.
    let noisy = samples.min_entropy(0.05).unwrap();
    assert!(noisy > clean, "{noisy} vs {clean}");
}

#[test]
fn report_regimes() {
    let uniform = entropy_report(&InterferenceParams::ideal(7.0, 0.0), 1024.0, 1).unwrap();
    assert_eq!(uniform.regime, Regime::Uniform);
    assert_eq!(uniform.h_inf, 1.0);
    assert_eq!(uniform.qrf, uniform.gamma);
    assert!(uniform.gamma_tilde.is_none());

    let partial = entropy_report(&InterferenceParams::ideal(4.0, 0.0), 1_048_576.0, 1).unwrap();
    assert_eq!(partial.regime, Regime::Corrected);
    assert_eq!(partial.gamma_tilde, Some(partial.qrf));
    assert!(partial.qrf > partial.gamma);

    let blocked = entropy_report(&InterferenceParams::ideal(1.0, 0.0), 1024.0, 1).unwrap();
    assert_eq!(blocked.regime, Regime::Blocked);
    assert!(blocked.qrf.is_infinite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distance_is_a_probability(sigma in 0.05f64..10.0, theta in -7.0f64..7.0) {
        let d = statistical_distance(sigma, theta).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn distance_shrinks_with_spread(sigma in 0.2f64..4.0, theta in 0.0f64..PI) {
        let a = statistical_distance(sigma, theta).unwrap();
        let b = statistical_distance(sigma * 1.25, theta).unwrap();
        prop_assert!(b <= a + 1e-13, "d({}) = {} < d({}) = {}", sigma, a, sigma * 1.25, b);
    }
}

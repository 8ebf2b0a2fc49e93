use std::f64::consts::PI;

use phaselab::interference::{
    fringe_curve, fringe_moments, gaussian_phase_cdf, phase_diff_pdf, sample_signal, threshold_s, InterferenceParams,
    PdfCurve, QuantumDensity, SignalDensity, GaussianPhaseDensity,
};
use proptest::prelude::*;

/// Folded Gaussian density on [0, π] summed over enough images directly.
fn image_sum(x: f64, sigma: f64, mean: f64) -> f64 {
    let g = |u: f64| (-0.5 * (u / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt());
    let reach = (12.0 * sigma / (2.0 * PI)).ceil() as i64 + 2;
    (-reach..=reach)
        .map(|k| {
            let shift = 2.0 * PI * k as f64;
            g(x - mean + shift) + g(-x - mean + shift)
        })
        .sum()
}

#[test]
fn folded_density_matches_image_sum() {
    for sigma in [0.2, 0.7, 1.5, PI, 5.0] {
        for mean in [0.0, 0.4, PI / 2.0, 2.5, -1.1] {
            // The density lives on [0, π).
            for k in 0..40 {
                let x = PI * k as f64 / 40.0;
                let got = phase_diff_pdf(x, sigma, mean);
                let want = image_sum(x, sigma, mean);
                assert!(
                    (got - want).abs() <= 1e-12 * want.max(1e-3),
                    "sigma {sigma} mean {mean} x {x}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn noise_free_moments_in_closed_form() {
    for sigma in [0.3, 1.0, 2.0] {
        for eta in [1.0, 0.8] {
            for theta in [0.0, 0.9, PI / 2.0, 2.0] {
                let ip = InterferenceParams {
                    eta,
                    sigma_zeta: 0.07,
                    ..InterferenceParams::ideal(sigma, theta)
                };
                let m = fringe_moments(&ip).unwrap();
                let rho = (-0.5 * sigma * sigma).exp();
                let mean = 2.0 + 2.0 * eta * rho * theta.cos();
                // Var cos(Δφ) for Δφ ~ N(θ, σ²).
                let var_cos = 0.5 * (1.0 + rho.powi(4) * (2.0 * theta).cos()) - (rho * theta.cos()).powi(2);
                let std = (4.0 * eta * eta * var_cos + 0.07f64.powi(2)).sqrt();
                assert!((m.mean - mean).abs() < 1e-13, "{m:?}");
                assert!((m.std - std).abs() < 1e-12, "{m:?} vs {std}");
            }
        }
    }
}

#[test]
fn moments_agree_with_sampling() {
    let ip = InterferenceParams {
        sigma_phi: 1.2,
        delta_theta: 0.7,
        sigma_s: 0.15,
        sigma_zeta: 0.05,
        eta: 0.9,
        s1_mean: 1.0,
        s2_mean: 0.8,
        jitter_phase_std: 0.1,
    };
    let m = fringe_moments(&ip).unwrap();
    let xs = sample_signal(&ip, 400_000, 3).unwrap();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se_mean = (var / n).sqrt();
    assert!((mean - m.mean).abs() < 5.0 * se_mean, "{mean} vs {}", m.mean);
    // The std estimate has relative error about 1/sqrt(2n) for near-normal data.
    assert!((var.sqrt() / m.std - 1.0).abs() < 0.01, "{} vs {}", var.sqrt(), m.std);
}

#[test]
fn heavy_intensity_noise_is_clamped_consistently() {
    // sigma_s comparable to the mean: negative draws are clamped in both paths.
    let ip = InterferenceParams {
        sigma_s: 0.8,
        ..InterferenceParams::ideal(0.5, 0.3)
    };
    let m = fringe_moments(&ip).unwrap();
    let xs = sample_signal(&ip, 400_000, 11).unwrap();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - m.mean).abs() < 5.0 * std / n.sqrt());
    assert!((std / m.std - 1.0).abs() < 0.02);
}

#[test]
fn threshold_is_the_median() {
    for sigma in [0.2, 1.0, PI, 7.0] {
        for theta in [0.0, 1.0, PI / 2.0, 3.0] {
            let ip = InterferenceParams::ideal(sigma, theta);
            let s_th = threshold_s(&ip).unwrap();
            let f = gaussian_phase_cdf(s_th, &ip).unwrap();
            assert!((f - 0.5).abs() < 1e-10, "sigma {sigma} theta {theta}: F(S_th) = {f}");
        }
    }
    // Uniform phase limit: the arcsine median is the support centre.
    let s_th = threshold_s(&InterferenceParams::ideal(20.0, 0.3)).unwrap();
    assert!((s_th - 2.0).abs() < 1e-9);
}

#[test]
fn tabulated_densities_carry_unit_mass() {
    let q = PdfCurve::tabulate(&QuantumDensity::default(), 4001).unwrap();
    assert!((q.integral() - 1.0).abs() < 1e-3, "{}", q.integral());
    let g = GaussianPhaseDensity::new(&InterferenceParams::ideal(1.3, 0.6)).unwrap();
    let c = PdfCurve::tabulate(&g, 4001).unwrap();
    assert!((c.integral() - 1.0).abs() < 1e-3, "{}", c.integral());
    let (lo, hi) = g.support();
    assert!((g.mass_below(hi) - 1.0).abs() < 1e-12);
    assert_eq!(g.mass_below(lo), 0.0);
}

#[test]
fn sampling_is_independent_of_thread_count() {
    let ip = InterferenceParams {
        sigma_s: 0.05,
        sigma_zeta: 0.05,
        ..InterferenceParams::ideal(2.0, 0.5)
    };
    let n = 3 * (1 << 16) + 17;
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_signal(&ip, n, 42).unwrap())
    };
    let a = run(1);
    assert_eq!(a.len(), n);
    assert_eq!(a, run(3));
    assert_ne!(a, sample_signal(&ip, n, 43).unwrap());
}

#[test]
fn fringe_curve_is_two_pi_periodic() {
    let ip = InterferenceParams {
        sigma_s: 0.05,
        sigma_zeta: 0.05,
        eta: 0.9,
        ..InterferenceParams::ideal(1.0, 0.0)
    };
    let thetas: Vec<f64> = (0..16).map(|k| k as f64 * 0.4).collect();
    let shifted: Vec<f64> = thetas.iter().map(|t| t + 2.0 * PI).collect();
    for (a, b) in fringe_curve(&ip, &thetas).unwrap().iter().zip(fringe_curve(&ip, &shifted).unwrap()) {
        assert!((a.mean - b.mean).abs() < 1e-12 && (a.std - b.std).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folded_density_integrates_to_one(sigma in 0.1f64..6.0, theta in -6.0f64..6.0) {
        let n = 2000;
        let h = PI / n as f64;
        let mass: f64 = (0..n).map(|k| phase_diff_pdf((k as f64 + 0.5) * h, sigma, theta)).sum::<f64>() * h;
        prop_assert!((mass - 1.0).abs() < 1e-6, "mass {}", mass);
    }

    #[test]
    fn mean_signal_stays_in_support(sigma in 0.0f64..6.0, theta in -6.0f64..6.0, eta in 0.0f64..1.0,
                                    s1 in 0.1f64..2.0, s2 in 0.1f64..2.0) {
        let ip = InterferenceParams { eta, s1_mean: s1, s2_mean: s2, ..InterferenceParams::ideal(sigma, theta) };
        let m = fringe_moments(&ip).unwrap();
        let (lo, hi) = ip.support();
        prop_assert!(m.mean >= lo - 1e-12 && m.mean <= hi + 1e-12);
        prop_assert!(m.std <= 0.5 * (hi - lo) + 1e-12);
    }
}

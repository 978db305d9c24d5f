use chc_core::dynamics::{simulate_with, ExactNoise, RefinedNoise};
use chc_core::ensemble::with_threads;
use chc_core::experiments::semigroup_convergence;
use chc_core::gaussian::sample_mu_c;
use chc_core::spectral::distance_minus1;
use chc_core::stats::linear_fit;
use chc_core::{simulate, NoiseStream, Observable, PotentialSpec, SolverConfig, SpectralField};
use proptest::prelude::*;

fn start(seed: u64, modes: usize, c: f64) -> SpectralField {
    let mut x = sample_mu_c(&mut NoiseStream::new(seed, 99), 0.0, modes).unwrap().scale(0.3);
    x.coeffs_mut()[0] = c;
    x
}

#[test]
fn strong_error_shrinks_with_dt() {
    let fine_dt = 1e-5;
    let spec = PotentialSpec::new(1.0, 2).unwrap();
    let reference_cfg = SolverConfig::new(8, 32, fine_dt, 0.02, spec).unwrap();
    let factors = [16usize, 8, 4, 2];
    let mut errors = vec![0.0; factors.len()];
    let paths = 8;
    for p in 0..paths {
        let x = start(p, 8, 0.1);
        let stream = NoiseStream::new(21, p);
        let mut exact = ExactNoise::new(stream, 8, fine_dt, 1.0);
        let (reference, _) = simulate_with(&x, &reference_cfg, &mut exact).unwrap();
        for (e, &k) in errors.iter_mut().zip(&factors) {
            let cfg = reference_cfg.clone().with_dt(fine_dt * k as f64);
            let mut refined = RefinedNoise::new(stream, 8, fine_dt, k, 1.0);
            let (coarse, _) = simulate_with(&x, &cfg, &mut refined).unwrap();
            *e += distance_minus1(&coarse, &reference) / paths as f64;
        }
    }
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    let log_dt: Vec<f64> = factors.iter().map(|&k| (k as f64 * fine_dt).ln()).collect();
    let log_err: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let order = linear_fit(&log_dt, &log_err).unwrap().slope;
    assert!(order >= 0.5, "observed order {order}, errors {errors:?}");
}

#[test]
fn finer_quadrature_grids_agree() {
    // same modes and noise, nonlinearity evaluated on grids of growing size
    let spec = PotentialSpec::new(1.0, 2).unwrap();
    let x = start(3, 8, 0.0);
    let stream = NoiseStream::new(22, 0);
    let run = |points: usize| {
        let cfg = SolverConfig::new(8, points, 1e-4, 0.05, spec).unwrap();
        simulate(&x, &cfg, stream).unwrap().0
    };
    let reference = run(256);
    let d: Vec<f64> = [18, 32, 64].iter().map(|&p| distance_minus1(&run(p), &reference)).collect();
    assert!(d.windows(2).all(|w| w[1] <= w[0]), "{d:?}");
    assert!(d[2] < 1e-6, "{d:?}");
}

#[test]
fn ensemble_driver_ignores_thread_count() {
    let cfg = SolverConfig::new(6, 16, 1e-3, 0.02, PotentialSpec::new(0.0, 1).unwrap()).unwrap();
    let x = start(4, 6, 0.0);
    let psis = [Observable::ModeTanh { mode: 1, scale: 2.0 }, Observable::FractionAbove(0.2)];
    let go = |threads| {
        with_threads(threads, || semigroup_convergence(&x, &cfg, &psis, &[1, 2], 24, NoiseStream::new(5, 5)).unwrap())
            .unwrap()
    };
    assert_eq!(go(1), go(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mean_is_conserved_exactly(seed in 0u64..1000, c in -0.8f64..0.8, lambda in 0.0f64..2.0, n in 0usize..4) {
        let cfg = SolverConfig::new(6, 16, 1e-4, 0.01, PotentialSpec::new(lambda, n).unwrap()).unwrap();
        let x = start(seed, 6, c);
        let (out, diag) = simulate(&x, &cfg, NoiseStream::new(seed, 1)).unwrap();
        prop_assert_eq!(out.mean(), c);
        prop_assert!(diag.mean_drift <= 1e-12);
    }

    #[test]
    fn shared_noise_contracts_without_lambda(seed in 0u64..1000) {
        let cfg = SolverConfig::new(6, 16, 1e-4, 0.01, PotentialSpec::new(0.0, 2).unwrap()).unwrap();
        let x = start(seed, 6, 0.0);
        let y = start(seed + 5000, 6, 0.0);
        let run = chc_core::simulate_pair(&x, &y, &cfg, NoiseStream::new(seed, 2), true).unwrap();
        for w in run.distances.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10);
        }
    }
}

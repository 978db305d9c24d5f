//! Closed-form Gibbs moments: with `n = 0` the weight `exp(-∫F⁰(X))` is
//! Gaussian, so each mode of `ν⁰` has variance `1/(a_i + 2 - λ)`.

use chc_core::measures::{expectation, importance_sample, weak_convergence_report};
use chc_core::spectral::eigenvalue;
use chc_core::{MeasureKind, NoiseStream, Observable, PotentialSpec};

fn tilted_norm(modes: usize, lambda: f64) -> f64 {
    (1..=modes)
        .map(|i| {
            let a = eigenvalue(i);
            1.0 / (a * (a + 2.0 - lambda))
        })
        .sum()
}

#[test]
fn quadratic_potential_moment() {
    for lambda in [0.0, 1.5] {
        let spec = PotentialSpec::new(lambda, 0).unwrap();
        let s = importance_sample(NoiseStream::new(31, 0), 0.2, 8, 32, &spec, MeasureKind::NuN, 100_000).unwrap();
        let e = expectation(&s, &Observable::MinusOneNormSq).unwrap();
        let exact = tilted_norm(8, lambda);
        assert!((e.estimate - exact).abs() < 4.0 * e.se, "λ={lambda}: {} ± {} vs {exact}", e.estimate, e.se);
        let m = expectation(&s, &Observable::Mean).unwrap();
        assert!((m.estimate - 0.2).abs() < 1e-14);
    }
}

#[test]
fn limit_measure_lives_in_k() {
    let r = weak_convergence_report(
        NoiseStream::new(32, 0),
        0.0,
        8,
        32,
        0.0,
        &[1, 4],
        &[Observable::ExceedanceMass, Observable::Constant(1.0)],
        20_000,
    )
    .unwrap();
    let limit = r.estimates[0].last().unwrap();
    assert_eq!(limit.estimate, 0.0);
    assert!(r.k_fraction > 0.0 && r.k_fraction < 1.0);
    for e in &r.estimates[1] {
        assert!((e.estimate - 1.0).abs() < 1e-12);
    }
}

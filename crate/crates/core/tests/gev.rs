use extremecast::gev::{fit_mle, fit_penalized, log_likelihood, moment_initializer, GevParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params() -> impl Strategy<Value = GevParams> {
    (-100.0f64..100.0, 0.05f64..20.0, -0.4f64..0.4).prop_map(|(m, s, x)| GevParams::new(m, s, x).unwrap())
}

proptest! {
    #[test]
    fn cdf_is_a_monotone_probability(p in params()) {
        let lo = p.quantile(1e-4).unwrap() - 3.0 * p.sigma();
        let hi = p.quantile(1.0 - 1e-4).unwrap() + 3.0 * p.sigma();
        let mut prev = 0.0;
        for i in 0..1000 {
            let c = p.cdf(lo + (hi - lo) * i as f64 / 999.0);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn quantile_inverts_cdf(p in params(), prob in 1e-6f64..(1.0 - 1e-6)) {
        let x = p.quantile(prob).unwrap();
        prop_assert!((p.cdf(x) - prob).abs() < 1e-10);
    }
}

#[test]
fn shape_branches_agree_near_zero() {
    let g = GevParams::new(1.0, 2.0, 0.0).unwrap();
    let near = GevParams::new(1.0, 2.0, 1e-9).unwrap();
    for i in 0..100 {
        let x = -5.0 + 0.2 * i as f64;
        assert!((g.pdf(x) - near.pdf(x)).abs() < 1e-6, "x = {x}");
    }
}

#[test]
fn mle_improves_on_its_initializer() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = GevParams::new(5.0, 1.5, -0.2 + 0.02 * seed as f64).unwrap();
        let data: Vec<f64> = (0..200).map(|_| truth.sample(&mut rng)).collect();
        let fit = fit_mle(&data, None).unwrap();
        let start = log_likelihood(&moment_initializer(&data).unwrap(), &data).unwrap();
        assert!(fit.log_likelihood >= start, "seed {seed}");
    }
}

#[test]
fn shape_penalty_pulls_toward_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth = GevParams::new(0.0, 1.0, 0.3).unwrap();
    let data: Vec<f64> = (0..30).map(|_| truth.sample(&mut rng)).collect();
    let free = fit_mle(&data, None).unwrap();
    let held = fit_penalized(&data, None, 5.0).unwrap();
    assert!(held.params.xi().abs() < free.params.xi().abs());
    assert!(held.log_likelihood <= free.log_likelihood + 1e-9);
    assert!(fit_penalized(&data, None, -1.0).is_err());
}

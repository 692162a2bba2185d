use extremecast::forecast::{fit_var, forecast_var, CoeffSeries, FgevPanel, GaevPanel};
use extremecast::gaev::GaevDims;
use extremecast::ingest::{parse_csv, slice_annual};
use extremecast::simulate::{generate, DgpSpec};
use proptest::prelude::*;

fn var1_path(a: [[f64; 2]; 2], c: [f64; 2], x0: [f64; 2], t: usize) -> Vec<Vec<f64>> {
    let mut out = vec![x0.to_vec()];
    for _ in 1..t {
        let x = out.last().unwrap();
        out.push((0..2).map(|i| c[i] + a[i][0] * x[0] + a[i][1] * x[1]).collect());
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn noiseless_var_predicts_its_own_path(
        a in prop::array::uniform2(prop::array::uniform2(-0.45f64..0.45)),
        c in prop::array::uniform2(-1.0f64..1.0),
        x0 in prop::array::uniform2(-3.0f64..3.0),
    ) {
        let path = var1_path(a, c, x0, 30);
        let model = fit_var(&CoeffSeries::from_rows(path[..25].to_vec()).unwrap(), 1).unwrap();
        let fc = forecast_var(&model, &CoeffSeries::from_rows(path[..25].to_vec()).unwrap(), 5).unwrap();
        for (h, row) in fc.iter().enumerate() {
            for i in 0..2 {
                prop_assert!((row[i] - path[25 + h][i]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn every_forecaster_keeps_scale_positive() {
    for setting in 1..=3 {
        let truth = generate(&DgpSpec {
            setting,
            seed: 40 + setting as u64,
            ..DgpSpec::default()
        })
        .unwrap();
        let s = &truth.series;
        let fgev = FgevPanel::fit(s).unwrap().forecast(s.len(), 1).unwrap();
        assert!(fgev.params.windows(2).all(|w| w[0] == w[1]));
        let fgaev = GaevPanel::fit(s, GaevDims::new(5, 5, 0).unwrap())
            .unwrap()
            .forecast(s.len(), 2)
            .unwrap();
        for fd in [fgev, fgaev] {
            assert!(fd.params.iter().all(|p| p.sigma() > 0.0), "setting {setting}");
        }
    }
}

#[test]
fn fixture_forecast_is_highest_at_the_year_ends() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/temperature_fixture.csv");
    let series = slice_annual(&parse_csv(path).unwrap()).unwrap().series;
    let n = series.len();
    let fd = GaevPanel::fit(&series, GaevDims::new(7, 7, 0).unwrap())
        .unwrap()
        .forecast(n, 1)
        .unwrap();
    assert_eq!(fd.len(), 366);
    assert!(fd.params.iter().all(|p| p.sigma() > 0.0));
    let q = fd.quantile_curve(0.999).unwrap();
    let winter = q[150..240].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(q[..30].iter().all(|&v| v > winter));
    assert!(q[340..].iter().all(|&v| v > winter));
}

// Out-of-sample accuracy of the selectors on simulated designs.

use bmt_core::simulation::{holdout_errors, replication_rng, run_method, Method, MethodSettings};
use bmt_core::{generate_dgp, DgpConfig};

fn rmsfe(e: &[f64]) -> f64 {
    (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt()
}

#[test]
fn bmt_forecasts_at_least_as_well_as_ocmt() {
    let settings = MethodSettings::default();
    let mut d = DgpConfig::new(200, 100, 1, 0.5, 4.0, 0.75);
    d.holdout = 20;
    d.seed = 17;
    let mut bmt_wins = 0;
    for r in 0..100 {
        let real = generate_dgp(&d, &mut replication_rng(d.seed, 0, r)).unwrap();
        let score = |m| rmsfe(&holdout_errors(&real, &run_method(m, &real.dataset, &settings).unwrap()));
        let (b, o, l) = (score(Method::Bmt), score(Method::Ocmt), score(Method::LassoBic));
        assert!(l.is_finite() && l > 0.0);
        bmt_wins += (b <= o) as usize;
    }
    assert!(bmt_wins >= 70, "BMT RMSFE <= OCMT in {bmt_wins} of 100");
}

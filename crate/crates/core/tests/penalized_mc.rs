// Monte Carlo checks of the Lasso-family selectors.

use bmt_core::penalized::lasso_path_on_grid;
use bmt_core::simulation::{replication_rng, wedge_design};
use bmt_core::{
    adaptive_lasso_select, generate_dgp, lasso_select_bic, AdaptiveLassoConfig, Dataset, DgpConfig,
    LassoOptions, LassoSelectConfig, Tuning,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noise_matrix(rng: &mut ChaCha8Rng, t: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(t, n, |_, _| rng.sample(StandardNormal))
}

#[test]
fn bic_on_pure_noise_is_sparse() {
    let cfg = LassoSelectConfig::default();
    let mut total = 0;
    for s in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + s);
        let x = noise_matrix(&mut rng, 200, 40);
        let y = DVector::from_fn(200, |_, _| rng.sample(StandardNormal));
        let ds = Dataset::from_xy(y, x).unwrap();
        total += lasso_select_bic(&ds, &cfg).unwrap().selected.len();
    }
    let mean = total as f64 / 200.0;
    assert!(mean < 2.0, "mean size {mean}");
}

// At a fixed penalty the proxy enters whenever rho is inside the wedge and
// stays out when the irrepresentable condition holds.
#[test]
fn fixed_penalty_lasso_and_the_wedge() {
    let opts = LassoOptions::default();
    for (rho, want_x3) in [(0.65, true), (0.3, false)] {
        let mut agree = 0;
        for s in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + s);
            let ds = wedge_design(0.2, rho, 0.5, 2000, &mut rng).unwrap();
            let path = lasso_path_on_grid(&ds.y, &ds.x, &[0.05], None, &opts).unwrap();
            let active = path.active_set(0);
            agree += (active.contains(&0) && active.contains(&2) == want_x3) as usize;
        }
        assert!(agree >= 180, "rho {rho}: {agree} of 200");
    }
}

#[test]
fn bic_keeps_strong_orthogonal_signals() {
    let cfg = LassoSelectConfig::default();
    let mut ok = 0;
    for s in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + s);
        let x = noise_matrix(&mut rng, 200, 20);
        let y = DVector::from_fn(200, |i, _| {
            x[(i, 0)] - x[(i, 1)] + 0.8 * x[(i, 2)] + rng.sample::<f64, _>(StandardNormal)
        });
        let ds = Dataset::from_xy(y, x).unwrap();
        let sel = lasso_select_bic(&ds, &cfg).unwrap().selected;
        ok += (0..3).all(|j| sel.contains(&j)) as usize;
    }
    assert!(ok >= 190, "support kept in {ok} of 200");
}

#[test]
fn adaptive_lasso_size_without_collinearity() {
    let mut d = DgpConfig::new(300, 100, 4, 0.8, 1.0, 0.0);
    d.seed = 11;
    // BIC tuning is far sparser on this design (about 5 variables)
    let cfg = AdaptiveLassoConfig {
        tuning: Tuning::CrossValidation,
        ..Default::default()
    };
    let mut total = 0;
    for r in 0..200 {
        let mut rng = replication_rng(d.seed, 0, r);
        let real = generate_dgp(&d, &mut rng).unwrap();
        total += adaptive_lasso_select(&real.dataset, &cfg).unwrap().selected.len();
    }
    let mean = total as f64 / 200.0;
    assert!((10.0..=20.0).contains(&mean), "mean size {mean}");
}

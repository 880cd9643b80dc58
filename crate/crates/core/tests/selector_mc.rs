// Monte Carlo behaviour of the stagewise selectors.

use bmt_core::simulation::{replication_rng, wedge_design};
use bmt_core::{bmt_select, generate_dgp, ocmt_select, Dataset, DgpConfig, SelectionConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noise_dataset(seed: u64, t: usize, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(t, n, |_, _| rng.sample(StandardNormal));
    let y = DVector::from_fn(t, |_, _| rng.sample(StandardNormal));
    Dataset::from_xy(y, x).unwrap()
}

#[test]
fn pure_noise_selects_nothing() {
    let cfg = SelectionConfig::default();
    let (mut bmt_empty, mut ocmt_empty) = (0, 0);
    for s in 0..200 {
        let ds = noise_dataset(40_000 + s, 200, 50);
        bmt_empty += bmt_select(&ds, &cfg).unwrap().selected.is_empty() as usize;
        ocmt_empty += ocmt_select(&ds, &cfg).unwrap().selected.is_empty() as usize;
    }
    assert!(bmt_empty >= 190, "BMT empty in {bmt_empty} of 200");
    assert!(ocmt_empty >= 190, "OCMT empty in {ocmt_empty} of 200");
}

#[test]
fn wedge_design_true_model() {
    let cfg = SelectionConfig::default();
    let mut exact = 0;
    for s in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(60_000 + s);
        let ds = wedge_design(0.2, 0.65, 0.5, 2000, &mut rng).unwrap();
        let mut sel = bmt_select(&ds, &cfg).unwrap().selected;
        sel.sort_unstable();
        exact += (sel == [0, 1]) as usize;
    }
    assert!(exact >= 190, "exact recovery in {exact} of 200");
}

#[test]
fn ocmt_takes_the_proxy_bmt_does_not() {
    let cfg = SelectionConfig::default();
    let (t, n, rho) = (300, 20, 0.8);
    let (mut ocmt_both, mut bmt_only_signal) = (0, 0);
    for s in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(70_000 + s);
        let mut x = DMatrix::from_fn(t, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        for i in 0..t {
            x[(i, 1)] = rho * x[(i, 0)] + (1.0 - rho * rho).sqrt() * x[(i, 1)];
        }
        let y = DVector::from_fn(t, |i, _| x[(i, 0)] + rng.sample::<f64, _>(StandardNormal));
        let ds = Dataset::from_xy(y, x).unwrap();
        let o = ocmt_select(&ds, &cfg).unwrap();
        ocmt_both += (o.trace[0].admitted.contains(&0) && o.trace[0].admitted.contains(&1)) as usize;
        bmt_only_signal += (bmt_select(&ds, &cfg).unwrap().selected == [0]) as usize;
    }
    assert!(ocmt_both >= 90, "OCMT took both in {ocmt_both} of 100");
    assert!(bmt_only_signal >= 90, "BMT took only the signal in {bmt_only_signal} of 100");
}

#[test]
fn ocmt_model_size_under_strong_collinearity() {
    let mut d = DgpConfig::new(300, 100, 4, 0.8, 4.0, 0.75);
    d.seed = 5;
    let cfg = SelectionConfig::default();
    let mut total = 0;
    for r in 0..20 {
        let real = generate_dgp(&d, &mut replication_rng(d.seed, 0, r)).unwrap();
        total += ocmt_select(&real.dataset, &cfg).unwrap().selected.len();
    }
    let mean = total as f64 / 20.0;
    assert!(mean > 40.0, "mean OCMT size {mean}");
}

// Stage one on pure noise admits something exactly when the largest marginal
// |t| (with intercept) beats the threshold.
#[test]
fn first_stage_matches_marginal_t_oracle() {
    let cfg = SelectionConfig::default();
    let (t, n) = (200, 50);
    let mut hits = 0;
    for s in 0..1000 {
        let ds = noise_dataset(80_000 + s, t, n);
        let res = bmt_select(&ds, &cfg).unwrap();
        let yc = ds.y.add_scalar(-ds.y.mean());
        let max_t = (0..n)
            .map(|j| {
                let xc = ds.x.column(j).add_scalar(-ds.x.column(j).mean());
                let b = xc.dot(&yc) / xc.dot(&xc);
                let e = &yc - &xc * b;
                let s2 = e.dot(&e) / (t - 2) as f64;
                (b / (s2 / xc.dot(&xc)).sqrt()).abs()
            })
            .fold(0.0, f64::max);
        assert_eq!(res.trace[0].chosen.is_some(), max_t > res.trace[0].threshold, "seed {s}");
        hits += res.trace[0].chosen.is_some() as usize;
    }
    // Bonferroni bound with a t(198) tail allowance, plus 3 binomial sd
    let rate = hits as f64 / 1000.0;
    assert!(rate < 0.06 + 3.0 * (0.06f64 * 0.94 / 1000.0).sqrt(), "rate {rate}");
}

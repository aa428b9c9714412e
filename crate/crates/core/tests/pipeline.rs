use hdlda_core::classifier::{fit_precision, fit_rule, loocv, LabeledDataset, LoocvOptions, RuleSpec, Variant};
use hdlda_core::precision::{GlassoSpec, LamConfig, PrecisionKind, PrecisionMethod};
use hdlda_core::shrinkage::{shrink, MeanMethod, NoisyVector, ShrinkageConfig};
use hdlda_core::simlab::{
    run_setting, CovarianceFamily, CovarianceSpec, ExperimentMethods, MeanScale, MeanSpec, Population, SimSetting,
};
use hdlda_core::{seed, theory};
use proptest::prelude::*;

fn small_setting(id: &str) -> SimSetting {
    SimSetting {
        id: id.to_string(),
        cov: CovarianceSpec::new(CovarianceFamily::Ar1Prec, 40).with_rho(0.6),
        mean: MeanSpec { delta: 1.5, l: 6, scale: MeanScale::SScale },
        n_train: 30,
        n_test: 100,
        replications: 4,
        seed: 11,
    }
}

#[test]
fn small_experiment_orders_estimators_sensibly() {
    let setting = small_setting("small");
    let table = run_setting(&setting, &ExperimentMethods::default()).unwrap();
    assert_eq!(table.cells.len(), 4 * 5);
    for c in table.cells.values() {
        assert_eq!(c.reps, 4);
        assert!((0.0..=1.0).contains(&c.mean));
    }
    let sm = RuleSpec::new(MeanMethod::Sm, Variant::Diff);
    let oracle = table.get(PrecisionKind::Oracle, sm).unwrap().mean;
    let ir = table.get(PrecisionKind::Ir, sm).unwrap().mean;
    assert!(oracle <= ir, "oracle {oracle} vs IR {ir}");
    assert_eq!(table, run_setting(&setting, &ExperimentMethods::default()).unwrap());
}

#[test]
fn every_precision_method_feeds_a_rule() {
    let setting = small_setting("fit");
    let pop = Population::build(&setting).unwrap();
    let mut rng = seed::rng(3);
    let train = pop.sample(30, &mut rng).unwrap();
    let test = pop.sample(200, &mut rng).unwrap();
    let methods = [
        PrecisionMethod::Ir,
        PrecisionMethod::Glasso(GlassoSpec::default()),
        PrecisionMethod::Lam(LamConfig::default()),
        PrecisionMethod::Lam(LamConfig { cross_groups: false, ..LamConfig::default() }),
        PrecisionMethod::Oracle(Box::new(pop.oracle().clone())),
    ];
    for method in &methods {
        let prec = fit_precision(&train, method, 9).unwrap();
        assert_eq!(prec.method(), method.kind());
        for spec in RuleSpec::TABLE_ROWS {
            let rule = fit_rule(&train, &prec, spec, &ShrinkageConfig::default()).unwrap();
            let report = rule.evaluate(&test).unwrap();
            assert!(report.error_rate < 0.5, "{:?} {}: {}", method.kind(), spec.label(), report.error_rate);
        }
    }
}

#[test]
fn loocv_on_simulated_data() {
    let setting = small_setting("loo");
    let pop = Population::build(&setting).unwrap();
    let data = pop.sample(15, &mut seed::rng(5)).unwrap();
    let opts = LoocvOptions::new(RuleSpec::new(MeanMethod::Npmle, Variant::Diff), 1);
    let report = loocv(&data, &PrecisionMethod::Ir, &opts).unwrap();
    assert_eq!(report.predicted.len(), 30);
    assert!(report.error_rate < 0.3);
    let fast = loocv(&data, &PrecisionMethod::Ir, &LoocvOptions { fast_whitener: true, ..opts.clone() }).unwrap();
    assert!(fast.error_rate <= 0.5);
}

#[test]
fn relabeling_mirrors_the_rule() {
    let setting = small_setting("swap");
    let pop = Population::build(&setting).unwrap();
    let data = pop.sample(20, &mut seed::rng(8)).unwrap();
    let swapped: Vec<u8> = data.labels().iter().map(|&l| 3 - l).collect();
    let mirror = data.relabeled(swapped).unwrap();
    let prec = fit_precision(&data, &PrecisionMethod::Ir, 0).unwrap();
    let spec = RuleSpec::new(MeanMethod::Sm, Variant::Diff);
    let a = fit_rule(&data, &prec, spec, &ShrinkageConfig::default()).unwrap();
    let b = fit_rule(&mirror, &prec, spec, &ShrinkageConfig::default()).unwrap();
    for (x, y) in a.weights().iter().zip(b.weights()) {
        assert!((x + y).abs() < 1e-12);
    }
}

#[test]
fn regions_cover_the_whole_grid_with_three_valued_answers() {
    let mut covered = 0;
    for i in 0..50 {
        for j in 0..50 {
            let a = (i as f64 + 0.5) / 50.0;
            let b = -0.5 + (j as f64 + 0.5) / 50.0;
            let r = theory::region_membership(a, b).unwrap();
            covered += usize::from(!r.covered_by().is_empty());
        }
    }
    assert!(covered > 0 && covered < 2500);
}

fn dataset_strategy() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(-6.0f64..6.0, 3..40), 0.05f64..20.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shrinkers_are_scale_equivariant((values, sigma) in dataset_strategy()) {
        let cfg = ShrinkageConfig::default();
        let unit = NoisyVector::new(values.clone(), 1.0).unwrap();
        let scaled: Vec<f64> = values.iter().map(|x| x * sigma).collect();
        let noisy = NoisyVector::new(scaled, sigma).unwrap();
        for m in MeanMethod::ALL {
            let a = shrink(&unit, m, &cfg).unwrap().estimates;
            let b = shrink(&noisy, m, &cfg).unwrap().estimates;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x * sigma - y).abs() <= 1e-9 * sigma.max(1.0) * (1.0 + x.abs()), "{m:?}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn npmle_estimates_are_monotone((values, _s) in dataset_strategy()) {
        let v = NoisyVector::new(values.clone(), 1.0).unwrap();
        let est = shrink(&v, MeanMethod::Npmle, &ShrinkageConfig::default()).unwrap().estimates;
        let mut pairs: Vec<(f64, f64)> = values.into_iter().zip(est).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            prop_assert!(w[1].1 >= w[0].1 - 1e-9);
        }
    }

    #[test]
    fn fitting_needs_both_classes(n in 3usize..10, label in 1u8..=2) {
        let features = hdlda_core::Matrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64);
        let data = LabeledDataset::new(features, vec![label; n]).unwrap();
        let fitted = fit_precision(&data, &PrecisionMethod::Ir, 0)
            .and_then(|prec| fit_rule(&data, &prec, RuleSpec::TABLE_ROWS[0], &ShrinkageConfig::default()));
        prop_assert!(fitted.is_err());
    }
}

use proptest::prelude::*;

use seqtr_core::estimator::{
    self, noise_correct, run_algorithm_1, score_with, AlgorithmConfig, NuisanceValues,
};
use seqtr_core::glm::Link;
use seqtr_core::nuisance::{self, CorruptionSource, MisspecPlan, NuisanceConfig};
use seqtr_core::shrinkage::Stage;
use seqtr_core::sim::{generate_population, Floors, SimConfig, TransactionRecord};

fn algo(records: &[TransactionRecord], floors: Floors, eps: (f64, f64), k: usize) -> AlgorithmConfig {
    let mut a = AlgorithmConfig::new(NuisanceConfig::for_records(records, floors, eps.0, eps.1), 3);
    a.k = k;
    a
}

fn open_gates(n: usize, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::baseline(n, seed);
    cfg.auth_coef = vec![40.0, 0.0, 0.0, 0.0];
    cfg.report_params.issuer_base = vec![40.0; cfg.issuer_count];
    cfg.report_params.coef = vec![0.0; cfg.d];
    cfg.delay_params.issuer_rate = vec![1e6; cfg.issuer_count];
    cfg.delay_params.coef = vec![0.0; cfg.d];
    cfg
}

fn record(a: bool, r: Option<bool>, m: Option<bool>, y: Option<bool>) -> TransactionRecord {
    TransactionRecord { id: 0, x: vec![0.1, 0.2], issuer: 0, delta: 30.0, a, r, m, o: y.is_some(), y_obs: y, w1: None }
}

#[test]
fn well_specified_with_corruption_is_unbiased() {
    let mut cfg = SimConfig::baseline(300_000, 21);
    cfg.positivity_floors = Floors::new(0.3, 0.3, 0.3);
    cfg.eps10 = 0.05;
    cfg.eps01 = 0.08;
    let (records, truth) = generate_population(&cfg).unwrap();
    let out = run_algorithm_1(&records, &algo(&records, cfg.positivity_floors, (0.05, 0.08), 2)).unwrap();
    let r = &out.report;
    assert!((r.psi_hat - truth.psi_true).abs() <= 4.0 * r.se, "{} vs {} (se {})", r.psi_hat, truth.psi_true, r.se);
    assert!(r.ci.0 < r.psi_hat && r.psi_hat < r.ci.1);
    assert_eq!(r.n, records.len());
    assert_eq!(out.scored.len(), records.len());
    assert_eq!(out.labels.len(), records.len());
}

#[test]
fn without_censoring_the_estimate_is_the_label_mean() {
    let cfg = open_gates(50_000, 22);
    let (records, _) = generate_population(&cfg).unwrap();
    assert!(records.iter().all(|r| r.o));
    let out = run_algorithm_1(&records, &algo(&records, cfg.positivity_floors, (0.0, 0.0), 2)).unwrap();
    let mean = records.iter().map(|r| r.y_obs.unwrap() as u8 as f64).sum::<f64>() / records.len() as f64;
    assert!((out.report.psi_hat - mean).abs() < 1e-4, "{} vs {mean}", out.report.psi_hat);
    assert_eq!(out.report.naive_psi, Some(mean));
}

#[test]
fn reruns_are_bit_identical() {
    let (records, _) = generate_population(&SimConfig::baseline(20_000, 23)).unwrap();
    let a = algo(&records, Floors::new(0.05, 0.05, 0.05), (0.0, 0.0), 3);
    let x = run_algorithm_1(&records, &a).unwrap();
    let y = run_algorithm_1(&records, &a).unwrap();
    assert_eq!(x.report, y.report);
    assert_eq!(x.scored, y.scored);
    assert_eq!(x.labels, y.labels);
}

#[test]
fn folds_are_balanced_and_nuisances_fit_out_of_fold() {
    let (records, _) = generate_population(&SimConfig::baseline(10_001, 24)).unwrap();
    let plan = nuisance::make_folds(&records, 2, 5).unwrap();
    let sizes = plan.fold_sizes();
    assert_eq!(sizes.iter().sum::<usize>(), records.len());
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    assert!(nuisance::make_folds(&records, 1, 5).is_err());

    let ncfg = NuisanceConfig::for_records(&records, Floors::new(0.05, 0.05, 0.05), 0.0, 0.0);
    let sets = nuisance::crossfit_with_plan(&records, &plan, &MisspecPlan::NONE, &ncfg).unwrap();
    assert_eq!(sets.len(), 2);
    assert_ne!(sets[0].e_hat, sets[1].e_hat);
    // Scoring a record with the set fitted on its own fold is a contract violation.
    let i = plan.assignment.iter().position(|&f| f == 0).unwrap();
    assert!(estimator::sequential_score(&records[i], 0, &sets[1], &ncfg.floors).is_err());
}

#[test]
fn constant_authorization_is_recovered() {
    let mut cfg = SimConfig::baseline(100_000, 25);
    cfg.auth_coef = vec![0.4, 0.0, 0.0, 0.0];
    let (records, _) = generate_population(&cfg).unwrap();
    let plan = nuisance::make_folds(&records, 2, 1).unwrap();
    let ncfg = NuisanceConfig::for_records(&records, cfg.positivity_floors, 0.0, 0.0);
    let (model, pool) =
        nuisance::fit_propensity(Stage::Auth, &records, &plan, 0, &MisspecPlan::NONE, &ncfg).unwrap();
    assert!(pool.is_none());
    let truth = 1.0 / (1.0 + (-0.4f64).exp());
    for rec in records.iter().take(200) {
        assert!((model.predict(rec) - truth).abs() < 0.02);
    }
}

#[test]
fn audited_corruption_rates_are_estimated() {
    let mut cfg = SimConfig::baseline(200_000, 26);
    cfg.eps10 = 0.1;
    cfg.eps01 = 0.04;
    let (records, truth) = generate_population(&cfg).unwrap();
    let pairs: Vec<(bool, bool)> =
        records.iter().zip(&truth.y_star).filter_map(|(r, &y)| r.y_obs.map(|o| (o, y))).collect();
    let (e10, e01) = nuisance::estimate_corruption_from_audit(&pairs).unwrap();
    let pos = pairs.iter().filter(|p| p.1).count() as f64;
    let neg = pairs.len() as f64 - pos;
    assert!((e10 - 0.1).abs() <= 4.0 * (0.1 * 0.9 / pos).sqrt());
    assert!((e01 - 0.04).abs() <= 4.0 * (0.04 * 0.96 / neg).sqrt());

    let mut ncfg = NuisanceConfig::for_records(&records, cfg.positivity_floors, 0.0, 0.0);
    ncfg.corruption = CorruptionSource::Audit { pairs };
    let mut a = AlgorithmConfig::new(ncfg, 1);
    a.k = 2;
    let out = run_algorithm_1(&records, &a).unwrap();
    assert_eq!((out.nuisances.sets[0].eps10_hat, out.nuisances.sets[0].eps01_hat), (e10, e01));
    assert!((out.report.psi_hat - truth.psi_true).abs() <= 4.0 * out.report.se);

    assert!(nuisance::estimate_corruption_from_audit(&[(true, true), (false, true)]).is_err());
}

#[test]
fn post_authorization_signal_feeds_reporting_and_outcome_models() {
    let mut cfg = SimConfig::baseline(100_000, 27);
    cfg.post_auth_signal = true;
    cfg.report_params.w1_coef = 0.8;
    let (records, truth) = generate_population(&cfg).unwrap();
    let ncfg = NuisanceConfig::for_records(&records, cfg.positivity_floors, 0.0, 0.0);
    assert!(ncfg.use_w1);
    assert!(ncfg.stage_features(Stage::Report, true).w1);
    assert!(ncfg.mu_post_auth_features().w1);
    assert!(!ncfg.mu0_features().w1);
    let mut a = AlgorithmConfig::new(ncfg, 2);
    a.k = 2;
    let out = run_algorithm_1(&records, &a).unwrap();
    assert!((out.report.psi_hat - truth.psi_true).abs() <= 4.0 * out.report.se);
    // Without the signal the reporting model omits a fraud-correlated driver.
    let mut blind = a.clone();
    blind.nuisance.use_w1 = false;
    let off = run_algorithm_1(&records, &blind).unwrap();
    assert!(off.report.psi_hat != out.report.psi_hat);
}

#[test]
fn naive_estimator_loses_in_mean_squared_error() {
    let cfg = SimConfig::baseline(100_000, 28);
    let (records, truth) = generate_population(&cfg).unwrap();
    let out = run_algorithm_1(&records, &algo(&records, cfg.positivity_floors, (0.0, 0.0), 2)).unwrap();
    let naive = out.report.naive_psi.unwrap();
    let bias = estimator::naive_bias_closed_form(&truth);
    let str_mse = out.report.se * out.report.se;
    assert!(bias * bias > 10.0 * str_mse);
    assert!((naive - truth.psi_true).powi(2) > (out.report.psi_hat - truth.psi_true).powi(2));
}

#[test]
fn pseudo_labels_recover_noiseless_fraud_probabilities() {
    let cfg = open_gates(100_000, 29);
    let (records, truth) = generate_population(&cfg).unwrap();
    let out = run_algorithm_1(&records, &algo(&records, cfg.positivity_floors, (0.0, 0.0), 2)).unwrap();
    let err = out.labels.iter().zip(&truth.f_true).map(|(l, f)| (l - f).abs()).sum::<f64>() / records.len() as f64;
    assert!(err < 0.01, "mean |label - f| = {err}");
    assert!(out.labels.iter().all(|l| (0.0..=1.0).contains(l)));
}

#[test]
fn clipping_bounds_the_regression_targets() {
    let mut cfg = SimConfig::baseline(50_000, 30);
    cfg.eps01 = 0.1;
    let (records, _) = generate_population(&cfg).unwrap();
    let mut a = algo(&records, cfg.positivity_floors, (0.0, 0.1), 2);
    a.learner.link = Link::Identity;
    let raw = run_algorithm_1(&records, &a).unwrap();
    a.clip = true;
    let clipped = run_algorithm_1(&records, &a).unwrap();
    assert_eq!(raw.report, clipped.report);
    assert!(raw.scored.iter().any(|s| !(0.0..=1.0).contains(&s.u)));
    // Least squares with an intercept reproduces the mean target.
    let mean = |v: &mut dyn Iterator<Item = f64>| {
        let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        s / n as f64
    };
    let target = mean(&mut clipped.scored.iter().map(|s| s.u.clamp(0.0, 1.0)));
    assert!((mean(&mut clipped.labels.iter().copied()) - target).abs() < 1e-9);
    let unclipped = mean(&mut raw.scored.iter().map(|s| s.u));
    assert!((mean(&mut raw.labels.iter().copied()) - unclipped).abs() < 1e-9);
    assert!((target - unclipped).abs() > 1e-4);
}

#[test]
fn declined_records_score_only_the_base_term() {
    let rec = record(false, None, None, None);
    let v = NuisanceValues { e: 0.5, r: 0.5, p: 0.5, mu0: 0.2, mu1: 0.9, mu2: 0.9 };
    let s = score_with(&rec, 0, v, 0.0, 0.0, 8.0).unwrap();
    assert_eq!(s.u, 0.2);
    assert_eq!((s.auth_corr, s.report_corr, s.delay_corr, s.weight_total), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn weights_beyond_the_floor_cap_are_an_internal_error() {
    let rec = record(true, Some(true), Some(true), Some(true));
    let v = NuisanceValues { e: 0.1, r: 0.1, p: 0.1, mu0: 0.2, mu1: 0.2, mu2: 0.2 };
    assert!(score_with(&rec, 0, v, 0.0, 0.0, 100.0).is_err());
}

proptest! {
    #[test]
    fn equal_regressions_collapse_to_the_weighted_form(
        e in 0.05f64..1.0, r in 0.05f64..1.0, p in 0.05f64..1.0, f in 0.0f64..1.0,
        gates in 0u8..4, y in any::<bool>(), e10 in 0.0f64..0.3, e01 in 0.0f64..0.3,
    ) {
        let rec = match gates {
            0 => record(false, None, None, None),
            1 => record(true, Some(false), None, None),
            2 => record(true, Some(true), Some(false), None),
            _ => record(true, Some(true), Some(true), Some(y)),
        };
        let v = NuisanceValues { e, r, p, mu0: f, mu1: f, mu2: f };
        let s = score_with(&rec, 0, v, e10, e01, 1e9).unwrap();
        let collapsed = if rec.o { f + ((y as u8 as f64 - e01) / (1.0 - e10 - e01) - f) / (e * r * p) } else { f };
        prop_assert!((s.u - collapsed).abs() <= 1e-9 * (1.0 + collapsed.abs()));
    }

    #[test]
    fn correction_is_unbiased_for_the_true_label(y in any::<bool>(), e10 in 0.0f64..0.45, e01 in 0.0f64..0.45) {
        let keep = if y { 1.0 - e10 } else { 1.0 - e01 };
        let expect = keep * noise_correct(y, e10, e01).unwrap() + (1.0 - keep) * noise_correct(!y, e10, e01).unwrap();
        prop_assert!((expect - y as u8 as f64).abs() < 1e-12);
    }
}

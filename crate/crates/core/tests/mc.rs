mod common;

use std::collections::BTreeMap;

use tempering_core::mc::*;
use tempering_core::models::*;

/// Class law of a level by summing explicit configuration weights.
fn oracle_classes(lv: &common::Levels, level: usize) -> (Vec<Sigma>, Vec<f64>) {
    let lz = lv.log_z(level);
    let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for i in 0..lv.size() {
        let x = common::decode(i, lv.q, lv.n);
        *acc.entry(common::counts(&x, lv.q)).or_insert(0.0) += (lv.log_weight(level, &x) - lz).exp();
    }
    acc.into_iter().map(|(c, p)| (Sigma::new(c).unwrap(), p)).unzip()
}

fn tv_levels(hist: &[u64]) -> f64 {
    let total: u64 = hist.iter().sum();
    let u = 1.0 / hist.len() as f64;
    0.5 * hist.iter().map(|&c| (c as f64 / total as f64 - u).abs()).sum::<f64>()
}

#[test]
fn infinite_temperature_histogram_is_binomial() {
    let l = make_ladder(PottsModel::ising(8, 0.0, 0.0).unwrap(), 0, LadderKind::Tempered, None).unwrap();
    let mut s = mc_init(&l, McKind::Metropolis { level: 0 }, 11, Start::Ordered(0)).unwrap();
    let stats = mc_run(&mut s, &l, 100_000, 1_000, 1).unwrap();
    let classes: Vec<Sigma> = (0..=8u32).map(|k| Sigma::new(vec![k, 8 - k]).unwrap()).collect();
    let binom = |k: u32| (1..=k).fold(1.0, |a, i| a * (8 - k + i) as f64 / i as f64);
    let probs: Vec<f64> = (0..=8).map(|k| binom(k) / 256.0).collect();
    let tv = stats.class_histograms[0].tv_to(&classes, &probs);
    assert!(tv <= 0.05, "tv {tv}");
    assert_eq!(stats.samples, 99_000);
}

#[test]
fn tempering_visits_levels_uniformly() {
    let n = 8;
    let l =
        make_ladder(PottsModel::ising(n, 2.0 * ising_critical_beta(n), 0.3).unwrap(), 4, LadderKind::Tempered, None)
            .unwrap();
    let mut s = mc_init(&l, McKind::Tempering, 5, Start::Random).unwrap();
    let stats = mc_run(&mut s, &l, 200_000, 2_000, 1).unwrap();
    assert!(tv_levels(&stats.level_histogram) <= 0.05, "{:?}", stats.level_histogram);
    assert_eq!(stats.level_histogram.iter().sum::<u64>(), stats.samples);
    assert!(stats.temperature_moves.z_score().abs() < 4.0);
}

#[test]
fn tempering_class_histograms_match_configuration_weights() {
    let n = 6;
    let beta = 2.0 * ising_critical_beta(n as u32);
    for dampened in [false, true] {
        let kind = if dampened { LadderKind::Dampened } else { LadderKind::Tempered };
        let l = make_ladder(PottsModel::ising(n as u32, beta, 0.3).unwrap(), 2, kind, None).unwrap();
        let lv = common::Levels::new(2, n, beta, &[0.3, 0.0], 2, dampened);
        let mut s = mc_init(&l, McKind::Tempering, 3, Start::Random).unwrap();
        let stats = mc_run(&mut s, &l, 300_000, 1_000, 1).unwrap();
        for level in 0..=2 {
            let (classes, probs) = oracle_classes(&lv, level);
            let tv = stats.class_histograms[level].tv_to(&classes, &probs);
            assert!(tv <= 0.05, "level {level} dampened={dampened}: tv {tv}");
        }
    }
}

#[test]
fn strong_coupling_stays_ordered() {
    let l = make_ladder(PottsModel::from_mu(3, 12, 8.0).unwrap(), 0, LadderKind::Tempered, None).unwrap();
    let mut s = mc_init(&l, McKind::Metropolis { level: 0 }, 2, Start::Ordered(0)).unwrap();
    let stats = mc_run(&mut s, &l, 100_000, 0, 1).unwrap();
    let h = &stats.class_histograms[0];
    let ordered: u64 = h.0.iter().filter(|(s, _)| s.counts()[0] >= 8).map(|(_, c)| c).sum();
    assert!(ordered as f64 / h.total() as f64 > 0.99);
}

#[test]
fn swap_acceptances_match_their_expectation() {
    let n = 8;
    let l =
        make_ladder(PottsModel::ising(n, 2.0 * ising_critical_beta(n), 0.3).unwrap(), 3, LadderKind::Dampened, None)
            .unwrap();
    let mut s = mc_init(&l, McKind::Swap, 17, Start::Random).unwrap();
    let stats = mc_run(&mut s, &l, 200_000, 1_000, 1).unwrap();
    for (i, m) in stats.swap_moves.iter().enumerate() {
        assert!(m.proposed > 10_000);
        assert!(m.z_score().abs() < 3.0, "pair {i}: z = {}", m.z_score());
    }
    assert!(stats.level_moves.z_score().abs() < 3.0);
    // Swap chains record every level at every sample.
    assert!(stats.class_histograms.iter().all(|h| h.total() == stats.samples));
}

#[test]
fn swap_class_histograms_match_configuration_weights() {
    let n = 5;
    let beta = 2.0 * ising_critical_beta(n as u32);
    let l = make_ladder(PottsModel::ising(n as u32, beta, 0.3).unwrap(), 2, LadderKind::Tempered, None).unwrap();
    let lv = common::Levels::new(2, n, beta, &[0.3, 0.0], 2, false);
    let mut s = mc_init(&l, McKind::Swap, 23, Start::Random).unwrap();
    let stats = mc_run(&mut s, &l, 200_000, 1_000, 1).unwrap();
    for level in 0..=2 {
        let (classes, probs) = oracle_classes(&lv, level);
        assert!(stats.class_histograms[level].tv_to(&classes, &probs) <= 0.05);
    }
}

#[test]
fn runs_are_reproducible_from_the_seed() {
    let l = make_ladder(PottsModel::new(3, 9, 0.3).unwrap(), 3, LadderKind::Tempered, None).unwrap();
    let run = |seed| {
        let mut s = mc_init(&l, McKind::Swap, seed, Start::Random).unwrap();
        mc_run(&mut s, &l, 20_000, 100, 7).unwrap()
    };
    let (a, b, c) = (run(4), run(4), run(5));
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_ne!(a, c);
    assert_eq!(a.generator, GENERATOR);
}

#[test]
fn merged_runs_add_up() {
    let l = make_ladder(PottsModel::ising(6, 0.2, 0.0).unwrap(), 2, LadderKind::Tempered, None).unwrap();
    let run = |seed| {
        let mut s = mc_init(&l, McKind::Tempering, seed, Start::Random).unwrap();
        mc_run(&mut s, &l, 5_000, 0, 1).unwrap()
    };
    let mut a = run(1);
    let b = run(2);
    a.merge(&b).unwrap();
    assert_eq!(a.samples, 10_000);
    assert_eq!(a.pooled_histogram().total(), 10_000);
    assert_eq!(a.level_histogram.iter().sum::<u64>(), 10_000);
}

#[test]
fn bad_run_parameters_are_rejected() {
    let l = make_ladder(PottsModel::ising(4, 0.2, 0.0).unwrap(), 1, LadderKind::Tempered, None).unwrap();
    let mut s = mc_init(&l, McKind::Tempering, 1, Start::Random).unwrap();
    assert!(mc_run(&mut s, &l, 10, 10, 1).is_err());
    assert!(mc_run(&mut s, &l, 10, 0, 0).is_err());
    let exp = make_ladder(ExpModel::new(2.0, 2, 2).unwrap(), 1, LadderKind::Tempered, None).unwrap();
    assert!(mc_init(&exp, McKind::Tempering, 1, Start::Random).is_err());
}

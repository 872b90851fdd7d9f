mod common;

use proptest::prelude::*;
use tempering_core::analysis::*;
use tempering_core::lumped::*;
use tempering_core::models::*;

fn kind(dampened: bool) -> LadderKind {
    if dampened {
        LadderKind::Dampened
    } else {
        LadderKind::Tempered
    }
}

fn potts_ladder(q: usize, n: u32, beta: f64, h: f64, m: usize, dampened: bool) -> Ladder {
    let mut fields = vec![0.0; q];
    fields[0] = h;
    make_ladder(PottsModel::with_fields(q, n, beta, fields).unwrap(), m, kind(dampened), None).unwrap()
}

/// Row sums, non-negativity and `π_i P_ij = π_j P_ji`, checked entrywise.
fn assert_reversible(chain: &LumpedChain) {
    let pi = chain.pi();
    assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    for i in 0..chain.len() {
        let mut s = 0.0;
        for (j, p) in chain.matrix.row(i) {
            assert!(p >= -1e-15, "negative entry {p}");
            s += p;
            let back = chain.matrix.get(j, i);
            assert!((pi[i] * p - pi[j] * back).abs() <= 1e-12 * (pi[i] * p).max(1e-300) + 1e-300);
        }
        assert!((s - 1.0).abs() < 1e-12, "row {i} sums to {s}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn level_and_tempering_chains_are_reversible(
        q in 2usize..=3, n in 1u32..=10, beta in 0.0f64..3.0, h in -1.0f64..1.0,
        m in 0usize..=4, dampened: bool, rgb: bool,
    ) {
        let l = potts_ladder(q, n, beta, h, m, dampened);
        let r = if rgb && h == 0.0 { Restriction::Rgb } else { Restriction::None };
        for i in 0..l.levels() {
            assert_reversible(&build_level_chain(&l, i, r).unwrap());
        }
        let chain = build_tempering_chain(&l, r).unwrap();
        assert_reversible(&chain);
        chain.validate().unwrap();

        // Every level carries equal stationary mass.
        let pi = chain.pi();
        let mut marg = vec![0.0; l.levels()];
        for (s, p) in chain.states.iter().zip(&pi) {
            marg[s.level().unwrap()] += p;
        }
        for w in marg {
            prop_assert!((w - 1.0 / l.levels() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn swap_chain_stationary_law_is_the_product(
        n in 1u32..=5, beta in 0.0f64..2.0, h in -0.5f64..0.5, m in 1usize..=2, dampened: bool,
    ) {
        let l = potts_ladder(2, n, beta, h, m, dampened);
        let chain = build_swap_chain(&l, Restriction::None).unwrap();
        assert_reversible(&chain);
        let dists: Vec<(Vec<Sigma>, Vec<f64>)> =
            (0..l.levels()).map(|i| l.class_distribution_restricted(i, Restriction::None).unwrap()).collect();
        for (s, p) in chain.states.iter().zip(chain.pi()) {
            let StateLabel::Product { sigmas } = s else { panic!("{s}") };
            let expect: f64 = sigmas
                .iter()
                .zip(&dists)
                .map(|(g, (classes, probs))| probs[classes.iter().position(|c| c == g).unwrap()])
                .product();
            prop_assert!((p - expect).abs() < 1e-12 * expect.max(1e-12));
        }
    }

    #[test]
    fn exp_trace_projection_is_the_exact_lumping(
        c in 1.1f64..4.0, n_neg in 1u32..=3, n_pos in 1u32..=3, m in 1usize..=3,
    ) {
        let l = make_ladder(ExpModel::new(c, n_neg, n_pos).unwrap(), m, LadderKind::Tempered, None).unwrap();
        let full = build_exp_swap_chain(&l).unwrap();
        let tr = trace_threshold(&l).unwrap();
        let proj = build_trace_projection(&l, &tr).unwrap();
        let bits_of = |s: &StateLabel| -> usize {
            match s {
                StateLabel::PointProduct { xs } => xs.iter().enumerate().fold(0, |a, (i, &x)| a * 2 + tr.bit(i, x) as usize),
                StateLabel::Trace { bits } => bits.iter().fold(0, |a, &b| a * 2 + b as usize),
                other => panic!("{other}"),
            }
        };
        let labels: Vec<usize> = full.states.iter().map(bits_of).collect();
        let (p, mass) = common::lump(&full, &labels, 1 << l.levels());
        for (i, s) in proj.states.iter().enumerate() {
            let a = bits_of(s);
            prop_assert!((proj.pi()[i] - mass[a]).abs() < 1e-12);
            for (j, t) in proj.states.iter().enumerate() {
                prop_assert!((proj.matrix.get(i, j) - p[(a, bits_of(t))]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn exp_point_distribution_matches_definition(c in 1.1f64..4.0, n_neg in 1u32..=4, n_pos in 1u32..=4, e in 0.0f64..=1.0) {
        let e = e.clamp(0.001, 0.999);
        let l = make_ladder(ExpModel::new(c, n_neg, n_pos).unwrap(), 2, LadderKind::Tempered, Some(vec![0.0, e, 1.0])).unwrap();
        let p = l.point_distribution(1).unwrap();
        let w: Vec<f64> = (-(n_neg as i64)..=n_pos as i64).map(|x| c.powf(e * x.abs() as f64)).collect();
        let z: f64 = w.iter().sum();
        for (a, b) in p.iter().zip(&w) {
            prop_assert!((a - b / z).abs() < 1e-12);
        }
    }

    #[test]
    fn reparametrized_energy_is_exact(counts in prop::collection::vec(0u32..20, 3), beta in 0.0f64..2.0) {
        prop_assume!(counts.iter().sum::<u32>() > 0);
        let s = Sigma::new(counts.clone()).unwrap();
        let n = counts.iter().sum::<u32>() as f64;
        let lhs = beta * pair_hamiltonian(&s, &[0.0; 3]);
        let rhs = beta / 2.0 * bar_hamiltonian(&s) - beta * n / 2.0;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn mixing_time_respects_gap_bounds(seed in 0u64..1000, k in 3usize..=12) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let chain = common::random_reversible(&mut rng, k, 0.5);
        let eps = 0.125;
        let t = tv_mixing_time(&chain, eps).unwrap();
        prop_assert_eq!(Some(t.t as usize), common::brute_tv_time(&chain.matrix.to_dense(), &chain.pi(), eps, 1_000_000));
        let gap = spectral_gap(&chain).unwrap().gap;
        let pi_min = chain.pi().into_iter().fold(1.0, f64::min);
        let b = gap_mixing_bounds(gap, pi_min, eps).unwrap();
        prop_assert!(b.lower <= t.t as f64 + 1e-9 && t.t as f64 <= b.upper + 1e-9);
        let (l1, l2) = common::dense_extremes(&chain.matrix.to_dense(), &chain.pi());
        prop_assert!((gap - (1.0 - l1)).abs() < 1e-10);
        prop_assert!((spectral_gap(&chain).unwrap().relaxation_gap() - (1.0 - l2)).abs() < 1e-10);
    }

    #[test]
    fn cut_flow_is_balanced(seed in 0u64..1000, k in 3usize..=12, mask in 1u32..4095) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let chain = common::random_reversible(&mut rng, k, 0.5);
        let members: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
        prop_assume!(members.iter().any(|&b| b) && members.iter().any(|&b| !b));
        let cut = CutSet::new(members, "mask").unwrap();
        let a = conductance(&chain, &cut).unwrap();
        let b = conductance(&chain, &cut.complement()).unwrap();
        prop_assert!((a.flow - b.flow).abs() <= 1e-12);
        let gap = spectral_gap(&chain).unwrap().relaxation_gap();
        if a.capacity <= 0.5 {
            prop_assert!(gap <= 2.0 * a.phi + 1e-12);
        }
    }
}

use gibbscode::bp::{bp_run, tree_decode};
use gibbscode::channel::ChannelModel;
use gibbscode::cluster::{berretti_identity_residual, g_sum_split, DkpWalks, WALK_CAP};
use gibbscode::de::de_moment;
use gibbscode::duality::{dual_bracket, gf2_rank, macwilliams_residual, DualInstance, Gf2Matrix};
use gibbscode::gexit::{map_gexit_series, CodeSource};
use gibbscode::gibbs::{ExactSolver, PosteriorInstance};
use gibbscode::graph::{
    enumerate_saws, sample_ensemble, CodeKind, ComputationalTree, DegreeDistribution, Node, TannerGraph,
    TREE_NODE_CAP,
};
use gibbscode::rng::substream;
use gibbscode::sum::mean_se;
use proptest::prelude::*;
use rand::Rng;

/// Random graph where every check has at least one neighbour.
fn random_graph(n_var: usize, n_chk: usize, density: f64, kind: CodeKind, seed: u64) -> TannerGraph {
    let mut rng = substream(seed, 0);
    let mut edges = Vec::new();
    for c in 0..n_chk {
        let forced = rng.random_range(0..n_var);
        for v in 0..n_var {
            if v == forced || rng.random::<f64>() < density {
                edges.push((v, c));
            }
        }
    }
    TannerGraph::new(n_var, n_chk, &edges, kind).unwrap()
}

fn uniform_llrs(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 1);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn kind_strategy() -> impl Strategy<Value = CodeKind> {
    prop_oneof![Just(CodeKind::Ldgm), Just(CodeKind::Ldpc)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn saws_replay_and_grow_with_length(
        n_var in 3usize..8, n_chk in 2usize..7, seed in any::<u64>(), kind in kind_strategy()
    ) {
        let g = random_graph(n_var, n_chk, 0.3, kind, seed);
        let a = [0usize];
        let b = [n_var - 1];
        let k = g.growth_constant() as f64;
        let mut prev = 0;
        for max_len in 0..=n_chk {
            let walks = enumerate_saws(&g, &a, &b, max_len, WALK_CAP).unwrap();
            prop_assert!(walks.len() >= prev);
            prev = walks.len();
            for w in &walks {
                prop_assert!(w.is_valid_in(&g));
                prop_assert!(w.len() <= max_len);
            }
            let exact: usize = walks.iter().filter(|w| w.len() == max_len).count();
            prop_assert!(exact as f64 <= a.len() as f64 * k.powi(max_len as i32));
        }
    }

    #[test]
    fn ensembles_have_requested_degrees(l in 2usize..4, r in 3usize..6, mult in 2usize..5, seed in any::<u64>()) {
        let dd = DegreeDistribution::regular(l, r).unwrap();
        let n = r * mult;
        let g = sample_ensemble(&dd, n, CodeKind::Ldpc, seed).unwrap();
        prop_assert_eq!(g.n_var(), n);
        for v in 0..g.n_var() {
            prop_assert_eq!(g.var_neighbors(v).len(), l);
        }
        for c in 0..g.n_chk() {
            prop_assert_eq!(g.chk_neighbors(c).len(), r);
        }
    }

    #[test]
    fn biawgnc_density_ratio(eps in 0.05f64..5.0, l in -4.0f64..4.0) {
        let ch = ChannelModel::biawgnc(eps).unwrap();
        let (p, m) = (ch.density(l).unwrap(), ch.density(-l).unwrap());
        prop_assume!(p > 1e-280 && m > 1e-280);
        prop_assert!((m / p / (-2.0 * l).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_marginals_and_correlations_are_bounded(
        n_var in 2usize..7, n_chk in 2usize..7, seed in any::<u64>(), kind in kind_strategy()
    ) {
        let g = random_graph(n_var, n_chk, 0.35, kind, seed);
        let l = uniform_llrs(g.n_code_bits(), -30.0, 30.0, seed);
        let s = ExactSolver::new(&g).unwrap().evaluate(&l, true).unwrap();
        let n = g.n_code_bits();
        for i in 0..n {
            prop_assert!(s.marginals[i].abs() <= 1.0 && s.extrinsics[i].abs() <= 1.0);
            for j in 0..n {
                let c = s.cov(i, j).unwrap();
                prop_assert!(c.is_finite() && c.abs() <= 1.0 + 1e-12);
            }
        }
        prop_assert!(s.entropy.is_finite() && s.entropy >= -1e-12);
    }

    #[test]
    fn entropy_is_even_for_negation_closed_codes(n_var in 2usize..7, n_chk in 2usize..7, seed in any::<u64>()) {
        // odd check degrees: flipping every information bit negates every code bit
        let mut rng = substream(seed, 3);
        let mut edges = Vec::new();
        for c in 0..n_chk {
            let deg = 2 * rng.random_range(0..n_var.div_ceil(2)) + 1;
            let deg = deg.min(if n_var % 2 == 1 { n_var } else { n_var - 1 });
            let mut vs: Vec<usize> = (0..n_var).collect();
            for k in 0..deg {
                let j = rng.random_range(k..n_var);
                vs.swap(k, j);
                edges.push((vs[k], c));
            }
        }
        let g = TannerGraph::new(n_var, n_chk, &edges, CodeKind::Ldgm).unwrap();
        let l = uniform_llrs(n_chk, -2.0, 2.0, seed);
        let neg: Vec<f64> = l.iter().map(|x| -x).collect();
        let sol = ExactSolver::new(&g).unwrap();
        let (a, b) = (sol.evaluate(&l, false).unwrap(), sol.evaluate(&neg, false).unwrap());
        prop_assert!((a.entropy - b.entropy).abs() < 1e-12);
    }

    #[test]
    fn bp_equals_computational_tree(
        n_var in 3usize..6, n_chk in 2usize..5, seed in any::<u64>(), kind in kind_strategy(), d in 1usize..4
    ) {
        let g = random_graph(n_var, n_chk, 0.4, kind, seed);
        let l = uniform_llrs(g.n_code_bits(), -1.5, 1.5, seed);
        let inst = PosteriorInstance::new(&g, l).unwrap();
        let out = bp_run(&inst, d);
        for i in 0..g.n_code_bits() {
            let ct = ComputationalTree::build(&g, g.code_bit_node(i), 2 * d, TREE_NODE_CAP).unwrap();
            let t = tree_decode(&ct, &inst, false).unwrap();
            prop_assert!((t.marginal - out.marginals[i]).abs() < 1e-9);
            prop_assert!((t.extrinsic - out.extrinsics[i]).abs() < 1e-9);
            prop_assert!(out.marginals[i].is_finite());
        }
    }

    #[test]
    fn macwilliams_and_code_sizes(n_var in 2usize..11, n_chk in 1usize..7, seed in any::<u64>()) {
        let g = random_graph(n_var, n_chk, 0.3, CodeKind::Ldpc, seed);
        let l = uniform_llrs(n_var, -3.0, 3.0, seed);
        let inst = PosteriorInstance::new(&g, l.clone()).unwrap();
        prop_assert!(macwilliams_residual(&inst).unwrap() < 1e-10);
        let rank = gf2_rank(&Gf2Matrix::parity_check(&g));
        let book = ExactSolver::new(&g).unwrap().codebook().len();
        prop_assert_eq!(book << rank, 1usize << n_var);
        let mut l0 = l;
        l0[0] = 0.0;
        let dinst = DualInstance::new(PosteriorInstance::new(&g, l0).unwrap()).unwrap();
        if let Ok(v) = dual_bracket(&dinst, &[0]) {
            prop_assert!((v - 1.0).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn walk_bound_dominates(n_var in 2usize..7, n_chk in 2usize..7, seed in any::<u64>(), bsc in any::<bool>()) {
        let g = random_graph(n_var, n_chk, 0.3, CodeKind::Ldgm, seed);
        let ch = if bsc { ChannelModel::bsc(0.45).unwrap() } else { ChannelModel::biawgnc(4.0).unwrap() };
        let h = ch.default_h();
        let sol = ExactSolver::new(&g).unwrap();
        let walks: Vec<Vec<DkpWalks>> = (0..n_chk)
            .map(|i| {
                (0..n_chk)
                    .map(|j| DkpWalks::new(&g, g.chk_neighbors(i), g.chk_neighbors(j), n_chk, WALK_CAP).unwrap())
                    .collect()
            })
            .collect();
        for k in 0..20 {
            let l = ch.sample_llr(n_chk, seed ^ k);
            let s = sol.evaluate(&l, true).unwrap();
            for i in 0..n_chk {
                for j in 0..n_chk {
                    let c = s.cov(i, j).unwrap().abs();
                    prop_assert!(c <= walks[i][j].pointwise(&l, h).value + 1e-12);
                }
            }
        }
    }

    #[test]
    fn cluster_expansion_is_exact(n_var in 2usize..6, n_chk in 1usize..5, seed in any::<u64>()) {
        let g = random_graph(n_var, n_chk, 0.35, CodeKind::Ldpc, seed);
        let l = uniform_llrs(n_var, -1.0, 2.0, seed);
        let inst = PosteriorInstance::new(&g, l).unwrap();
        for i in 0..n_var {
            for j in (i + 1)..n_var {
                match berretti_identity_residual(&inst, i, j, n_var) {
                    Ok(r) => prop_assert!(r < 1e-8, "pair ({}, {}): {}", i, j, r),
                    Err(gibbscode::error::Error::NearZeroDualPartition(_)) => {}
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
        }
    }

    #[test]
    fn non_connecting_g_vanish(n_var in 2usize..5, n_chk in 2usize..7, seed in any::<u64>(), h in 0.1f64..1.0) {
        let g = random_graph(n_var, n_chk, 0.3, CodeKind::Ldgm, seed);
        let l = uniform_llrs(n_chk, -1.2, 1.2, seed);
        let inst = PosteriorInstance::new(&g, l).unwrap();
        let s = g_sum_split(&inst, &[0], &[n_var - 1], h).unwrap();
        prop_assert!(s.non_connecting.abs() < 1e-12);
        prop_assert!((s.connecting - s.correlation).abs() < 1e-10);
    }
}

#[test]
fn series_tail_bound_covers_truncation() {
    let g = TannerGraph::new(3, 2, &[(0, 0), (1, 0), (1, 1), (2, 1)], CodeKind::Ldpc).unwrap();
    let src = CodeSource::Fixed(g);
    for eps in [0.05, 0.2, 0.4] {
        let ch = ChannelModel::bsc(eps).unwrap();
        let s20 = map_gexit_series(&src, &ch, 20, 500, 4).unwrap();
        let s40 = map_gexit_series(&src, &ch, 40, 500, 4).unwrap();
        assert!((s20.value - s40.value).abs() <= s20.tail_bound + 1e-12, "eps {eps}");
    }
}

/// Regular LDPC tree of depth `2d` rooted at variable 0.
fn regular_ldpc_tree(l: usize, r: usize, d: usize) -> TannerGraph {
    let mut edges = Vec::new();
    let (mut n_var, mut n_chk) = (1, 0);
    let mut frontier = vec![0usize];
    for level in 0..d {
        let mut next = Vec::new();
        for &v in &frontier {
            let children = if level == 0 { l } else { l - 1 };
            for _ in 0..children {
                let c = n_chk;
                n_chk += 1;
                edges.push((v, c));
                for _ in 0..r - 1 {
                    edges.push((n_var, c));
                    next.push(n_var);
                    n_var += 1;
                }
            }
        }
        frontier = next;
    }
    TannerGraph::new(n_var, n_chk, &edges, CodeKind::Ldpc).unwrap()
}

#[test]
fn tree_moments_match_density_evolution() {
    let (l, r) = (3, 4);
    let dd = DegreeDistribution::regular(l, r).unwrap();
    let ch = ChannelModel::bsc(0.12).unwrap();
    let samples = 10_000;
    for d in 1..=2 {
        let g = regular_ldpc_tree(l, r, d);
        let ct = ComputationalTree::build(&g, Node::Var(0), 2 * d, TREE_NODE_CAP).unwrap();
        let ext: Vec<f64> = (0..samples)
            .map(|k| {
                let inst = PosteriorInstance::new(&g, ch.sample_llr(g.n_var(), 1000 + k)).unwrap();
                tree_decode(&ct, &inst, false).unwrap().extrinsic
            })
            .collect();
        for p in 1..=3 {
            let xs: Vec<f64> = ext.iter().map(|m| m.powi(2 * p)).collect();
            let (m, se) = mean_se(&xs);
            let de = de_moment(CodeKind::Ldpc, &dd, &ch, d, 100_000, p as u32, 5).unwrap();
            let tol = 4.0 * (se * se + de.std_error * de.std_error).sqrt();
            assert!((m - de.value).abs() < tol, "d {d} p {p}: tree {m} ± {se}, de {:?}", de);
        }
    }
}

#[test]
fn averaged_bounds_dominate_their_averages() {
    use gibbscode::cluster::{berretti_avg_bound, dkp_avg_bound};
    let ldgm = TannerGraph::new(4, 4, &[(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (3, 2), (3, 3), (0, 3)], CodeKind::Ldgm)
        .unwrap();
    let ch = ChannelModel::bsc(0.49).unwrap();
    let h = ch.default_h();
    let (a, b) = (ldgm.chk_neighbors(0).to_vec(), ldgm.chk_neighbors(2).to_vec());
    let walks = DkpWalks::new(&ldgm, &a, &b, 4, WALK_CAP).unwrap();
    let pw: Vec<f64> = (0..2000).map(|k| walks.pointwise(&ch.sample_llr(4, k), h).value).collect();
    let (m, se) = mean_se(&pw);
    let avg = dkp_avg_bound(&ldgm, &ch, &a, &b, h).unwrap();
    assert!(avg.value >= m - 4.0 * se, "{avg:?} vs {m} ± {se}");

    let ldpc = TannerGraph::new(3, 2, &[(0, 0), (1, 0), (1, 1), (2, 1)], CodeKind::Ldpc).unwrap();
    let sol = ExactSolver::new(&ldpc).unwrap();
    let mut checked = 0;
    for ch in [ChannelModel::biawgnc(0.01).unwrap(), ChannelModel::bsc(0.01).unwrap(), ChannelModel::bsc(0.05).unwrap()] {
        let bound = berretti_avg_bound(&ldpc, &ch, 0, 2, 0.1).unwrap();
        if bound.diverged {
            continue;
        }
        checked += 1;
        let xs: Vec<f64> = (0..10_000)
            .map(|k| sol.evaluate(&ch.sample_llr(3, k), true).unwrap().cov(0, 2).unwrap().abs())
            .collect();
        let (m, _) = mean_se(&xs);
        assert!(m <= bound.value, "{ch}: {m} > {bound:?}");
    }
    assert!(checked > 0);
}

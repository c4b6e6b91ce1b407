use std::sync::OnceLock;

use nalgebra::DMatrix;
use proptest::prelude::*;

use sechyp::equilibria::{
    classify_equilibrium, find_equilibria, strong_dissipativity, DissipativityOptions,
};
use sechyp::expansive::{
    chaos_probe, expansiveness_probe, match_orbits, replay_pair, ChaosOptions, Direction,
    GridOrbit, MatchParams, ProbeOptions,
};
use sechyp::flow::{attractor_sample, flow_map, tangent_flow};
use sechyp::linalg::{dist, frobenius, max_principal_angle};
use sechyp::model::VectorFieldModel;
use sechyp::section::{
    first_return_with, leaf_direction, leaf_separation_growth, make_section, section_crossings,
    stable_leaf_distance, CrossSection, GrowthOptions, ReturnOptions,
};
use sechyp::splitting::{
    cone_invariance, sectional_expansion, stable_subspace, ConeOptions, ExpansionOptions,
};

const TOL: f64 = 1e-9;

fn lorenz() -> VectorFieldModel {
    VectorFieldModel::lorenz_classic()
}

fn lorenz_sample() -> &'static [Vec<f64>] {
    static S: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    S.get_or_init(|| attractor_sample(&lorenz(), &[1.0, 1.0, 1.0], 30.0, 400, 0.1, TOL).unwrap())
}

fn z27(orientation: i8) -> Vec<CrossSection> {
    vec![make_section(
        &[0.0, 0.0, 27.0],
        &lorenz(),
        &[20.0, 20.0],
        orientation,
        Some(&[0.0, 0.0, 1.0]),
        "z27",
    )
    .unwrap()]
}

fn crossings() -> &'static [Vec<f64>] {
    static C: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    C.get_or_init(|| {
        section_crossings(
            &lorenz(),
            &z27(0),
            &[1.0, 1.0, 1.0],
            30.0,
            200,
            &ReturnOptions::default(),
        )
        .unwrap()
    })
}

fn linear_models() -> Vec<VectorFieldModel> {
    vec![
        VectorFieldModel::diagonal(&[-1.0, -2.0, -3.0]),
        VectorFieldModel::diagonal(&[2.0, -1.0]),
        VectorFieldModel::linear(vec![vec![-0.1, -1.0], vec![1.0, -0.1]]).unwrap(),
    ]
}

/// Dφ_t(x) as a full matrix.
fn derivative(m: &VectorFieldModel, x: &[f64], t: f64) -> DMatrix<f64> {
    tangent_flow(m, x, &DMatrix::identity(m.dim, m.dim), t, 1e-11)
        .unwrap()
        .transported()
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    frobenius(&(a - b)) / frobenius(b).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, ..ProptestConfig::default() })]

    #[test]
    fn flow_has_the_group_property(i in 0usize..400, t in 0.0f64..5.0, s in 0.0f64..5.0) {
        let m = lorenz();
        let x0 = &lorenz_sample()[i];
        let direct = flow_map(&m, x0, t + s, TOL).unwrap();
        let composed = flow_map(&m, &flow_map(&m, x0, t, TOL).unwrap(), s, TOL).unwrap();
        prop_assert!(dist(&direct, &composed) < 1e-6, "error {}", dist(&direct, &composed));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn tangent_flow_is_a_cocycle(i in 0usize..400, t in 0.05f64..2.0, s in 0.05f64..2.0) {
        let m = lorenz();
        let x = &lorenz_sample()[i];
        let whole = derivative(&m, x, t + s);
        let xt = flow_map(&m, x, t, 1e-11).unwrap();
        let product = derivative(&m, &xt, s) * derivative(&m, x, t);
        prop_assert!(rel_err(&product, &whole) < 1e-4, "lorenz {}", rel_err(&product, &whole));
        for lm in linear_models() {
            let x = vec![0.5; lm.dim];
            let whole = derivative(&lm, &x, t + s);
            let product = derivative(&lm, &flow_map(&lm, &x, t, 1e-11).unwrap(), s) * derivative(&lm, &x, t);
            prop_assert!(rel_err(&product, &whole) < 1e-5, "{} {}", lm.id, rel_err(&product, &whole));
        }
    }

    #[test]
    fn tangent_flow_matches_finite_differences(i in 0usize..400, t in 0.1f64..2.0) {
        let m = lorenz();
        let x = &lorenz_sample()[i];
        let dphi = derivative(&m, x, t);
        let h = 1e-5;
        for c in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let fp = flow_map(&m, &xp, t, 1e-12).unwrap();
            let fm = flow_map(&m, &xm, t, 1e-12).unwrap();
            let fd: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let col: Vec<f64> = dphi.column(c).iter().copied().collect();
            let err = dist(&fd, &col) / sechyp::linalg::norm(&col);
            prop_assert!(err < 1e-3, "column {c}: {err}");
        }
    }

    #[test]
    fn linear_flows_return_home_after_reversal(t in 0.0f64..5.0, k in 0usize..3) {
        let m = &linear_models()[k];
        let x0 = vec![0.7; m.dim];
        let x1 = flow_map(m, &x0, t, TOL).unwrap();
        let back = flow_map(m, &x1, -t, TOL).unwrap();
        prop_assert!(dist(&back, &x0) < 100.0 * TOL, "{}: {}", m.id, dist(&back, &x0));
    }

    #[test]
    fn spectra_are_permutation_invariant(p in Just([2usize, 0, 1]).prop_shuffle()) {
        // Lorenz with coordinates permuted: x'_i = x_{p[i]}
        let base = lorenz();
        let inv: Vec<usize> = (0..3).map(|j| p.iter().position(|&q| q == j).unwrap()).collect();
        let perm = |x: &[f64]| -> Vec<f64> { p.iter().map(|&q| x[q]).collect() };
        for sigma in [vec![0.0, 0.0, 0.0], vec![72f64.sqrt(), 72f64.sqrt(), 27.0]] {
            let j = base.eval_jacobian(&sigma).unwrap();
            let jp = DMatrix::from_fn(3, 3, |r, c| j[(p[r], p[c])]);
            let lm = VectorFieldModel::linear((0..3).map(|r| (0..3).map(|c| jp[(r, c)]).collect()).collect()).unwrap();
            let a = classify_equilibrium(&base, &sigma, 1).unwrap();
            let b = classify_equilibrium(&lm, &[0.0; 3], 1).unwrap();
            for (u, v) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                prop_assert!((u.re - v.re).abs() < 1e-9 && (u.im.abs() - v.im.abs()).abs() < 1e-9);
            }
            prop_assert_eq!(perm(&sigma).len(), inv.len());
        }
    }

    #[test]
    fn triangular_fields_classify_by_their_diagonal(
        diag in proptest::collection::vec(prop_oneof![-5.0f64..-0.5, 0.5f64..5.0], 3),
        upper in proptest::collection::vec(-3.0f64..3.0, 3),
    ) {
        let a = vec![
            vec![diag[0], upper[0], upper[1]],
            vec![0.0, diag[1], upper[2]],
            vec![0.0, 0.0, diag[2]],
        ];
        let m = VectorFieldModel::linear(a).unwrap();
        let r = classify_equilibrium(&m, &[0.0; 3], 1).unwrap();
        let mut expected = diag.clone();
        expected.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (e, x) in r.eigenvalues.iter().zip(&expected) {
            prop_assert!((e.re - x).abs() < 1e-10 && e.im.abs() < 1e-10);
        }
        prop_assert_eq!(r.index, expected.iter().filter(|v| **v < 0.0).count());
    }

    #[test]
    fn sectional_expansion_tracks_pair_sums(
        rates in proptest::collection::vec(prop_oneof![-3.0f64..-0.3, 0.3f64..3.0], 3),
    ) {
        // the stable direction is the most contracting one, well separated
        let mut entries = vec![-10.0];
        entries.extend(&rates);
        let m = VectorFieldModel::diagonal(&entries);
        let min_pair = (0..3)
            .flat_map(|i| ((i + 1)..3).map(move |j| (i, j)))
            .map(|(i, j)| rates[i] + rates[j])
            .fold(f64::INFINITY, f64::min);
        prop_assume!(min_pair.abs() > 0.2);
        let pts = vec![vec![0.3, 0.4, -0.2, 0.1]];
        let r = sectional_expansion(&m, &pts, 1, 2.0, &ExpansionOptions::default()).unwrap();
        prop_assert_eq!(r.pass, min_pair > 0.0, "rates {:?}, theta {}", rates, r.theta);
    }
}

#[test]
fn condition_a_is_affine_and_increasing_in_q() {
    let m = lorenz();
    let s = lorenz_sample();
    let roots = find_equilibria(&m, &[-30.0, -30.0, -10.0], &[30.0, 30.0, 60.0], 200, 0).unwrap();
    assert_eq!(roots.len(), 3);
    let opts = DissipativityOptions {
        equilibria: Some(roots.clone()),
        ..DissipativityOptions::standard()
    };
    let origin = |q: f64| {
        let r = strong_dissipativity(&m, 1, q, s, &opts).unwrap();
        r.cond_a
            .iter()
            .find(|c| c.position.iter().all(|v| v.abs() < 1e-9))
            .unwrap()
            .value
    };
    let (a, b, c) = (origin(1.1), origin(1.4), origin(1.7));
    assert!(a < b && b < c);
    assert!(((c - b) - (b - a)).abs() < 1e-9);
    let trace: f64 = classify_equilibrium(&m, &roots[1], 1)
        .unwrap()
        .eigenvalues
        .iter()
        .map(|e| e.re)
        .sum();
    assert!((trace + 41.0 / 3.0).abs() < 1e-9);
}

#[test]
fn wider_cones_accept_every_image_a_narrow_cone_accepts() {
    let m = lorenz();
    let pts: Vec<Vec<f64>> = lorenz_sample().iter().step_by(20).cloned().collect();
    let r = cone_invariance(&m, &pts, 1, 0.05, 1.0, &ConeOptions::default()).unwrap();
    let narrow = r.passes_at(0.05);
    for a in [0.1, 0.5, 2.0] {
        let wide = r.passes_at(a);
        assert!(narrow.iter().zip(&wide).all(|(n, w)| !n || *w));
    }
}

#[test]
fn stable_directions_agree_across_windows() {
    let m = lorenz();
    for x in lorenz_sample().iter().step_by(40) {
        let (a, _) = stable_subspace(&m, x, 1, 2.0, TOL).unwrap();
        let (b, _) = stable_subspace(&m, x, 1, 4.0, TOL).unwrap();
        assert!(max_principal_angle(&a, &b) < 0.05);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn accepted_returns_sit_on_the_plane_with_the_right_sign(i in 0usize..200, orientation in -1i8..=1) {
        let m = lorenz();
        let secs = z27(orientation);
        let r = first_return_with(&m, &secs, &crossings()[i], &ReturnOptions::default()).unwrap();
        if !r.miss {
            prop_assert!(r.plane_residual.unwrap() < 1e-7);
            if orientation != 0 {
                prop_assert_eq!(r.crossing_sign, orientation);
            }
            let g = m.eval_field(r.rx.as_ref().unwrap()).unwrap();
            prop_assert_eq!(g[2].signum() as i8, r.crossing_sign);
        }
    }

    #[test]
    fn return_times_are_additive(i in 0usize..200) {
        let m = lorenz();
        let secs = z27(0);
        let opts = ReturnOptions { tol: 1e-10, ..ReturnOptions::default() };
        let r1 = first_return_with(&m, &secs, &crossings()[i], &opts).unwrap();
        let r2 = first_return_with(&m, &secs, r1.rx.as_ref().unwrap(), &opts).unwrap();
        let direct = flow_map(&m, &crossings()[i], r1.tau.unwrap() + r2.tau.unwrap(), 1e-10).unwrap();
        prop_assert!(dist(&direct, r2.rx.as_ref().unwrap()) < 1e-6);
    }

    #[test]
    fn leaf_distance_is_symmetric(i in 0usize..200, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let m = lorenz();
        let secs = z27(0);
        let x = &crossings()[i];
        let y = vec![x[0] + 1e-2 * a, x[1] + 1e-2 * b, x[2]];
        let d1 = stable_leaf_distance(&secs[0], x, &y, &m, 1).unwrap().distance;
        let d2 = stable_leaf_distance(&secs[0], &y, x, &m, 1).unwrap().distance;
        prop_assert!((d1 - d2).abs() < 1e-12, "{d1} vs {d2}");
    }

    #[test]
    fn leaf_aligned_pairs_do_not_separate(i in 0usize..200) {
        let m = lorenz();
        let secs = z27(-1);
        let opts = GrowthOptions::default();
        let x = section_crossings(&m, &secs, &crossings()[i], 0.0, 1, &opts.returns).unwrap()[0].clone();
        let (leaf, _) = leaf_direction(&m, &secs[0], &x, 1, opts.t_est, opts.returns.tol).unwrap();
        let y: Vec<f64> = x.iter().zip(leaf.column(0).iter()).map(|(a, b)| a + 1e-5 * b).collect();
        let s = leaf_separation_growth(&m, &secs, &x, &y, 5, &opts).unwrap();
        prop_assert!(s.factors.iter().take(5).all(|f| *f <= 1.0 + 1e-3), "{:?}", s.factors);
    }
}

fn random_walk(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut rng = sechyp::rng::seeded(seed);
    let mut p = vec![0.0, 0.0];
    (0..n)
        .map(|_| {
            p[0] += 0.05 * sechyp::rng::normal(&mut rng);
            p[1] += 0.05 * sechyp::rng::normal(&mut rng);
            p.clone()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn optimal_warp_never_exceeds_identity(s1 in any::<u64>(), s2 in any::<u64>(), n in 5usize..120, band in 1usize..12) {
        let x = GridOrbit::new(0.01, random_walk(s1, n));
        let y = GridOrbit::new(0.01, random_walk(s2, n));
        let p = MatchParams { delta: 0.1, eps: 0.5, shift_tol: 1e-9, stop_above: None };
        let r = match_orbits(&x, &y, band, &p).unwrap();
        prop_assert!(r.sup_distance <= r.identity_sup + 1e-15);
        let idx = r.warp.indices();
        prop_assert_eq!(idx.len(), n);
        prop_assert!(idx.windows(2).all(|w| w[1] >= w[0] && w[1] - w[0] <= 3));
        prop_assert_eq!((idx[0], idx[n - 1]), (0, n - 1));
        let sup = idx.iter().enumerate().map(|(i, &j)| dist(&x.points[i], &y.points[j])).fold(0.0, f64::max);
        prop_assert!((sup - r.sup_distance).abs() < 1e-12);
    }
}

fn center_probe(eps: f64) -> ProbeOptions {
    ProbeOptions {
        eps,
        delta_grid: vec![0.001, 0.01, 0.1],
        n_pairs: 6,
        horizon: 60.0,
        ..ProbeOptions::default()
    }
}

#[test]
fn counterexamples_persist_at_larger_delta_and_replay() {
    let m = VectorFieldModel::center_contraction(1.0, 1.0);
    let sample = attractor_sample(&m, &[1.0, 0.0, 0.5], 20.0, 200, 0.05, TOL).unwrap();
    let opts = center_probe(0.5);
    let r = expansiveness_probe(&m, &sample, &opts).unwrap();
    assert!(!r.counterexamples.is_empty());
    for c in r
        .counterexamples
        .iter()
        .filter(|c| c.delta == c.evaluation.forward.delta)
    {
        for k in (c.delta_index + 1)..opts.delta_grid.len() {
            assert!(r
                .counterexamples
                .iter()
                .any(|o| o.pair_index == c.pair_index && o.delta_index == k));
        }
        let again = replay_pair(&m, &sample, &opts, c.delta_index, c.pair_index).unwrap();
        assert_eq!(again.evaluation.counterexample, c.evaluation.counterexample);
        assert_eq!(
            again.evaluation.forward.verdict,
            c.evaluation.forward.verdict
        );
    }
}

#[test]
fn delta_star_does_not_decrease_with_eps() {
    let m = lorenz();
    let opts = |eps: f64| ProbeOptions {
        eps,
        delta_grid: vec![0.001, 0.01, 0.1],
        n_pairs: 8,
        ..ProbeOptions::default()
    };
    let stars: Vec<f64> = [0.1, 0.5, 1.0]
        .iter()
        .map(|&e| {
            expansiveness_probe(&m, lorenz_sample(), &opts(e))
                .unwrap()
                .delta_star
                .unwrap_or(0.0)
        })
        .collect();
    assert!(stars.windows(2).all(|w| w[0] <= w[1]), "{stars:?}");
}

#[test]
fn past_probe_equals_future_probe_of_negated_field() {
    let m = lorenz();
    let past = ChaosOptions {
        direction: Direction::Past,
        horizon: 10.0,
        ..ChaosOptions::default()
    };
    let future = ChaosOptions {
        direction: Direction::Future,
        ..past.clone()
    };
    let a = chaos_probe(&m, lorenz_sample(), 10, &past).unwrap();
    let b = chaos_probe(&m.reversed(), lorenz_sample(), 10, &future).unwrap();
    for (p, q) in a.points.iter().zip(&b.points) {
        assert_eq!(p.past.map(f64::to_bits), q.future.map(f64::to_bits));
    }
}

use llqfp::equilibrium::{
    gamma_realized, gamma_worst_case, gamma_worst_case_tight, solve_lq_ne, solve_perturbed_lq_ne,
};
use llqfp::mechanism::{check_psd, PerturbationDraw};
use llqfp::privacy::{adjacency_check, min_bound, min_scale, plan, MechanismInput, PrivacyBudget};
use llqfp::trunc_laplace::{cdf, delta_at_shift, inverse_cdf, pdf, sample, NoiseParams};
use llqfp::{LqGame, Network};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = NoiseParams> {
    (1e-4f64..10.0, 1e-3f64..10.0).prop_map(|(a, r)| NoiseParams::new(a, a * r).unwrap())
}

/// Random undirected graph with weights small enough for strong monotonicity.
fn network() -> impl Strategy<Value = Network> {
    (3usize..12)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(any::<bool>(), n * (n - 1) / 2),
            )
        })
        .prop_map(|(n, mask)| {
            let mut edges = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if mask[k] {
                        edges.push((i, j, 0.5 / n as f64));
                    }
                    k += 1;
                }
            }
            Network::from_edges(n, &edges).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn samples_stay_in_support(p in params(), seed in any::<u64>()) {
        for x in sample(200, &p, seed) {
            prop_assert!(x.abs() <= p.a());
        }
    }

    #[test]
    fn inverse_cdf_inverts_cdf(p in params(), t in -1.0f64..1.0) {
        let x = t * p.a();
        let back = inverse_cdf(cdf(x, &p), &p).unwrap();
        prop_assert!((back - x).abs() <= 1e-9 * p.a().max(p.lambda()), "{x} -> {back}");
    }

    #[test]
    fn density_is_symmetric_and_cdf_monotone(p in params(), t in 0.0f64..1.0, s in 0.0f64..1.0) {
        let x = t * p.a();
        prop_assert_eq!(pdf(x, &p), pdf(-x, &p));
        prop_assert!((cdf(x, &p) + cdf(-x, &p) - 1.0).abs() < 1e-12);
        let y = s * p.a();
        if x <= y {
            prop_assert!(cdf(x, &p) <= cdf(y, &p));
        }
    }

    #[test]
    fn delta_decreases_in_epsilon_and_increases_in_shift(p in params(), e in 0.0f64..3.0, f in 0.0f64..1.0) {
        let shift = f * p.a();
        let d = delta_at_shift(e, shift, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(delta_at_shift(e + 0.1, shift, &p).unwrap() <= d + 1e-12);
        prop_assert!(delta_at_shift(e, (shift * 1.1).min(2.0 * p.a()), &p).unwrap() >= d - 1e-12);
    }

    #[test]
    fn planner_is_homogeneous_and_at_most_doubles_delta(
        mu in 1e-3f64..0.1,
        eps in 0.1f64..3.0,
        delta in 0.01f64..0.45,
        c in 0.1f64..10.0,
    ) {
        let p = plan(&PrivacyBudget::new(eps, delta, mu, 1).unwrap()).unwrap();
        prop_assert!(p.a() >= mu);
        prop_assert_eq!(p.lambda(), min_scale(mu, eps, delta).unwrap());
        prop_assert_eq!(p.a(), min_bound(mu, delta, p.lambda()).unwrap());
        let q = plan(&PrivacyBudget::new(eps, delta, c * mu, 1).unwrap()).unwrap();
        prop_assert!((q.a() / p.a() - c).abs() <= 1e-9 * c);
        prop_assert!((q.lambda() / p.lambda() - c).abs() <= 1e-9 * c);
        let d = delta_at_shift(eps, mu, &p).unwrap();
        prop_assert!(d <= 2.0 * delta + 1e-12, "{d} vs {delta}");
    }

    #[test]
    fn draws_are_valid_and_psd(net in network(), seed in any::<u64>(), p in params()) {
        let draw = PerturbationDraw::draw(&net, &p, seed).unwrap();
        prop_assert!(draw.validate().is_ok());
        prop_assert_eq!(draw.noise_count(), 2 * net.n() + net.total_degree());
        prop_assert!(check_psd(draw.d_matrix()).unwrap() >= -1e-10 * p.a() * net.group_factor() as f64);
    }

    #[test]
    fn perturbed_equilibrium_is_gamma_accurate(net in network(), seed in any::<u64>()) {
        let game = LqGame::uniform(net, 10.0, -1e6, 1e6).unwrap();
        let p = NoiseParams::new(0.034, 0.013).unwrap();
        let x = solve_lq_ne(&game).unwrap().x_star;
        let draw = PerturbationDraw::draw(game.network(), &p, seed).unwrap();
        let x_hat = solve_perturbed_lq_ne(&game, &draw).unwrap().x_star;
        let l_m = game.monotonicity_constant();
        let realized = gamma_realized(&draw, &x, l_m).unwrap();
        prop_assert!((&x - &x_hat).norm() <= realized * (1.0 + 1e-9));
        prop_assert!(realized <= gamma_worst_case_tight(game.network(), p.a(), x.norm(), l_m).unwrap() * (1.0 + 1e-9));
        prop_assert!(
            gamma_worst_case_tight(game.network(), p.a(), x.norm(), l_m).unwrap()
                <= gamma_worst_case(game.network(), p.a(), x.norm(), l_m).unwrap()
        );
    }

    #[test]
    fn edge_list_round_trip(net in network()) {
        let mut buf = Vec::new();
        net.write_edge_list(&mut buf).unwrap();
        let back = Network::read_edge_list(buf.as_slice()).unwrap();
        // trailing isolated players do not appear in an edge list
        let m = back.n();
        prop_assert!((0..net.n()).filter(|&i| i >= m).all(|i| net.degree(i) == 0));
        prop_assert_eq!(back.weights(), &net.weights().view((0, 0), (m, m)).into_owned());
    }

    #[test]
    fn worst_case_neighbor_touches_at_most_p_coordinates(net in network(), i0 in 0usize..3, sign in any::<bool>()) {
        let v = MechanismInput::new(&net, &vec![1.0; net.n()]).unwrap();
        let shift = if sign { 0.01 } else { -0.01 };
        let vp = v.worst_case_neighbor(i0, shift).unwrap();
        let adj = adjacency_check(&v, &vp, 0.01).unwrap();
        prop_assert!(adj.adjacent);
        prop_assert_eq!(adj.i0, Some(i0));
        prop_assert_eq!(adjacency_check(&vp, &v, 0.01).unwrap(), adj);
        let touched = (0..v.len()).filter(|&k| v.value(k) != vp.value(k)).count();
        prop_assert!(touched <= net.group_factor());
        prop_assert_eq!(touched, net.degree(i0) + 1);
    }
}

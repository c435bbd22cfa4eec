use gn_lens::bounds::{bound_deep_convex, bound_leaky, bound_pair, self_balancing_report};
use gn_lens::data::{empirical_covariance, Dataset};
use gn_lens::gauss_newton::{functional_hessian_spectrum, gn_leaky, gn_residual};
use gn_lens::network::{
    forward, init, prune_by_magnitude, InitScheme, NetworkSpec, Params, TeacherSpec,
};
use gn_lens::random::{gaussian_matrix, rng_from_seed};
use gn_lens::spectral::{
    eigenvalues, kron, kron_extreme_eigs, psd_sqrt, pseudo_condition_number,
    rank_sensitivity_sweep, weyl_sum_bounds, DenseMatrix, RankPolicy,
};
use proptest::prelude::*;

fn random_psd(n: usize, rank: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng_from_seed(seed);
    gaussian_matrix(n, rank.max(1), 1.0, &mut rng).outer_gram()
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn weyl_brackets_sum_extremes(n in 1usize..7, seed in any::<u64>()) {
        let a = random_psd(n, n, seed);
        let b = random_psd(n, n, seed ^ 0x55);
        let (upper, lower) = weyl_sum_bounds(&eigenvalues(&a).unwrap(), &eigenvalues(&b).unwrap()).unwrap();
        let sum = eigenvalues(&a.add(&b).unwrap()).unwrap();
        prop_assert!(sum.max() <= upper * (1.0 + 1e-10) + 1e-12);
        prop_assert!(sum.min() >= lower * (1.0 - 1e-10) - 1e-12);
    }

    #[test]
    fn kron_spectrum_is_pairwise_products(p in 1usize..5, q in 1usize..5, seed in any::<u64>()) {
        let a = random_psd(p, p, seed);
        let b = random_psd(q, q, seed.wrapping_add(1));
        let (ea, eb) = (eigenvalues(&a).unwrap(), eigenvalues(&b).unwrap());
        let mut products: Vec<f64> = ea.values().iter().flat_map(|x| eb.values().iter().map(move |y| x * y)).collect();
        products.sort_by(|x, y| y.total_cmp(x));
        let ek = eigenvalues(&kron(&a, &b).unwrap()).unwrap();
        let scale = ek.max().abs().max(1e-300);
        for (x, y) in ek.values().iter().zip(&products) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
        let (lo, hi) = kron_extreme_eigs(&ea, &eb).unwrap();
        prop_assert!((hi - ek.max()).abs() <= 1e-10 * scale);
        prop_assert!((lo - ek.min()).abs() <= 1e-10 * scale);
    }

    #[test]
    fn kappa_is_scale_invariant(n in 2usize..8, rank in 1usize..8, c in 1e-3f64..1e3, seed in any::<u64>()) {
        let m = random_psd(n, rank.min(n), seed);
        let policy = RankPolicy::default_for(n, n);
        let k1 = pseudo_condition_number(&eigenvalues(&m).unwrap(), policy).unwrap();
        let k2 = pseudo_condition_number(&eigenvalues(&m.scale(c)).unwrap(), policy).unwrap();
        prop_assert!((k1 - k2).abs() <= 1e-8 * k1);
    }

    #[test]
    fn psd_sqrt_squares_back(n in 1usize..7, rank in 1usize..7, seed in any::<u64>()) {
        let m = random_psd(n, rank.min(n), seed);
        let r = psd_sqrt(&m).unwrap();
        let back = r.matmul(&r).unwrap();
        prop_assert!(back.sub(&m).unwrap().max_abs() <= 1e-9 * m.max_abs().max(1.0));
        prop_assert!(r.asymmetry() <= 1e-12 * r.max_abs().max(1.0));
    }

    #[test]
    fn rank_sweep_is_non_decreasing(n in 1usize..10, seed in any::<u64>()) {
        let sweep = rank_sensitivity_sweep(&eigenvalues(&random_psd(n, n, seed)).unwrap());
        prop_assert!(!sweep.is_empty());
        prop_assert!((sweep[0].1 - 1.0).abs() < 1e-15);
        prop_assert!(sweep.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn deep_bound_chain_holds(
        depth in 1usize..5,
        d in 1usize..5,
        k in 1usize..5,
        extra in 1usize..6,
        beta_idx in 0usize..3,
        seed in any::<u64>(),
    ) {
        let m = d.max(k) + extra;
        let mut dims = vec![d];
        dims.extend(std::iter::repeat(m).take(depth - 1));
        dims.push(k);
        let beta = [0.0, 0.5, 1.0][beta_idx];
        let params = init(&NetworkSpec::linear(dims).unwrap(), &InitScheme::KaimingNormal, seed).unwrap();
        let mut rng = rng_from_seed(seed ^ 0xabc);
        let x = gaussian_matrix(d, 2 * d + 3, 1.0, &mut rng);
        let sigma = empirical_covariance(&Dataset::new(x, None, "x").unwrap()).unwrap();
        let kappa = gn_residual(&params, beta, &sigma).unwrap().kappa(None).unwrap();
        let (convex, max) = bound_pair(&params, beta, &sigma).unwrap();
        prop_assert!(kappa <= convex.value * (1.0 + 1e-9));
        prop_assert!(convex.value <= max.value * (1.0 + 1e-12));
    }

    #[test]
    fn convex_weights_sum_to_one(depth in 1usize..5, seed in any::<u64>()) {
        let mut dims = vec![3];
        dims.extend(std::iter::repeat(6).take(depth - 1));
        dims.push(2);
        let params = init(&NetworkSpec::linear(dims).unwrap(), &InitScheme::XavierNormal, seed).unwrap();
        let sigma = random_psd(3, 3, seed);
        let terms = self_balancing_report(&params, &sigma).unwrap();
        let total: f64 = terms.iter().map(|t| t.gamma).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let report = bound_deep_convex(&params, &sigma).unwrap();
        let recomposed: f64 = report.terms.iter().map(|t| t.weighted).sum::<f64>() * report.kappa_sigma;
        prop_assert!((recomposed - report.value).abs() <= 1e-12 * report.value);
    }

    #[test]
    fn leaky_bound_holds(d in 2usize..6, k in 1usize..4, extra in 1usize..6, alpha in 0.01f64..=1.0, seed in any::<u64>()) {
        let m = d.max(k) + extra;
        let n = 1 + (seed as usize % d);
        let params = init(&NetworkSpec::leaky(d, m, k, alpha).unwrap(), &InitScheme::KaimingNormal, seed).unwrap();
        let mut rng = rng_from_seed(seed.wrapping_mul(3));
        let x = gaussian_matrix(d, n, 1.0, &mut rng);
        let (w, v) = (&params.layers[1], &params.layers[0]);
        let (g, gamma) = gn_leaky(w, v, &x, alpha).unwrap();
        let bound = bound_leaky(w, v, &x, alpha, &gamma).unwrap();
        prop_assert!(g.kappa(None).unwrap() <= bound.value * (1.0 + 1e-9));
    }

    #[test]
    fn pruning_is_idempotent(rows in 1usize..6, cols in 1usize..6, fraction in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let params = Params::new(vec![gaussian_matrix(rows, cols, 1.0, &mut rng)]);
        let once = prune_by_magnitude(&params, fraction).unwrap();
        let twice = prune_by_magnitude(&once, fraction).unwrap();
        prop_assert_eq!(&once.layers, &twice.layers);
        let zeros = once.layers[0].as_slice().iter().filter(|&&w| w == 0.0).count();
        prop_assert!(zeros >= (fraction * (rows * cols) as f64).floor() as usize);
    }

    #[test]
    fn functional_hessian_spectrum_is_symmetric(d in 1usize..5, k in 1usize..5, m in 1usize..5, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let w = gaussian_matrix(k, m, 1.0, &mut rng);
        let v = gaussian_matrix(m, d, 1.0, &mut rng);
        let teacher = TeacherSpec::new(gaussian_matrix(k, d, 1.0, &mut rng), d, k).unwrap();
        let sigma = random_psd(d, d, seed);
        let (spec, _) = functional_hessian_spectrum(&w, &v, &sigma, &teacher).unwrap();
        let vals = spec.values();
        let scale = spec.max().abs().max(1e-300);
        for (a, b) in vals.iter().zip(vals.iter().rev()) {
            prop_assert!((a + b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn leaky_at_unit_slope_is_linear(d in 1usize..5, m in 1usize..6, k in 1usize..4, seed in any::<u64>()) {
        let leaky = NetworkSpec::leaky(d, m, k, 1.0).unwrap();
        let params = init(&leaky, &InitScheme::KaimingNormal, seed).unwrap();
        let mut rng = rng_from_seed(seed);
        let x = gaussian_matrix(d, 4, 1.0, &mut rng);
        let lin = NetworkSpec::linear(vec![d, m, k]).unwrap();
        prop_assert_eq!(forward(&leaky, &params, &x).unwrap(), forward(&lin, &params, &x).unwrap());
    }

    #[test]
    fn params_text_round_trips(depth in 1usize..4, seed in any::<u64>()) {
        let mut dims = vec![2];
        dims.extend(std::iter::repeat(3).take(depth - 1));
        dims.push(2);
        let params = init(&NetworkSpec::linear(dims).unwrap(), &InitScheme::KaimingNormal, seed).unwrap();
        let back = Params::from_text(&params.to_text()).unwrap();
        prop_assert_eq!(back.layers, params.layers);
    }
}

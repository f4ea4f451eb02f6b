use std::sync::{Arc, OnceLock};

use faer::Mat;
use proptest::prelude::*;

use invlasso::baselines::{LaguerreBaseline, SvdBaseline};
use invlasso::diagnostics::{kappa2_estimate, restricted_eigs};
use invlasso::dictionary::{build_dictionary, gram, gram_closed_form, GramMatrix};
use invlasso::estimation::{beta_hat_mixture, beta_hat_observational};
use invlasso::forward::{generate_observations_with, laplace_operator, rng_from_seed, staggered_grids, LaplaceKernel};
use invlasso::grid::{inner_product, Grid, GridFunction};
use invlasso::inversion::{invert_exact, InverseImages, WeightVector};
use invlasso::lasso::{self, soft_threshold, SolverOptions, WeightedLassoProblem};
use invlasso::operator::DiscreteOperator;

struct Small {
    op: DiscreteOperator,
    inv: InverseImages,
    obs: Grid,
}

// 200 cells keep every case cheap; the structure is the same as the default setup.
fn small() -> &'static Small {
    static S: OnceLock<Small> = OnceLock::new();
    S.get_or_init(|| {
        let (d, r) = staggered_grids(10.0, 200).unwrap();
        let op = laplace_operator(&LaplaceKernel::exponential(10.0).unwrap(), d.clone(), r).unwrap();
        let dict = build_dictionary(3, 5, 0.4, &d).unwrap();
        let inv = invert_exact(&op, &dict, 1e-10).unwrap();
        Small {
            op,
            inv,
            obs: Grid::right_end(0.0, 10.0, 32).unwrap(),
        }
    })
}

fn vec_of(len: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, len)
}

fn on(grid: &Arc<Grid>, v: Vec<f64>) -> GridFunction {
    GridFunction::new(grid.clone(), v).unwrap()
}

/// Normalized `XᵀX` with `β̂ = D Xᵀ y`, so `β̂` lies in the range of `Φ`.
fn lasso_instance(p: usize, m: usize, seed: u64) -> (GramMatrix, Vec<f64>) {
    use rand::Rng;
    let mut rng = rng_from_seed(seed);
    let x = Mat::from_fn(m, p, |_, _| rng.random_range(-1.0f64..1.0));
    let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0f64..1.0)).collect();
    let xtx = x.transpose() * &x;
    let d: Vec<f64> = (0..p).map(|j| 1.0 / xtx[(j, j)].sqrt()).collect();
    let phi = Mat::from_fn(p, p, |i, j| {
        let v = d[i] * d[j] * xtx[(i, j)];
        if i == j {
            1.0
        } else {
            v
        }
    });
    let beta = (0..p).map(|j| d[j] * (0..m).map(|i| x[(i, j)] * y[i]).sum::<f64>()).collect();
    let phi = Mat::from_fn(p, p, |i, j| 0.5 * (phi[(i, j)] + phi[(j, i)]));
    (GramMatrix::new(phi).unwrap(), beta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trapezoid_is_exact_for_linear(a in -5.0..5.0f64, len in 0.1..10.0f64, n in 2usize..200, c0 in -3.0..3.0f64, c1 in -3.0..3.0f64) {
        let b = a + len;
        let g = Grid::uniform(a, b, n).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| c0 + c1 * x).collect();
        let exact = c0 * len + 0.5 * c1 * (b * b - a * a);
        prop_assert!((g.integrate(&v) - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
    }

    #[test]
    fn inner_product_symmetric_bilinear(f in vec_of(41, 2.0), g in vec_of(41, 2.0), h in vec_of(41, 2.0), s in -3.0..3.0f64) {
        let grid = Arc::new(Grid::uniform(0.0, 4.0, 41).unwrap());
        let (ff, gg, hh) = (on(&grid, f.clone()), on(&grid, g), on(&grid, h));
        let fg = inner_product(&ff, &gg).unwrap();
        prop_assert!((fg - inner_product(&gg, &ff).unwrap()).abs() < 1e-12);
        let comb: Vec<f64> = f.iter().zip(hh.values()).map(|(a, b)| a + s * b).collect();
        let lhs = inner_product(&on(&grid, comb), &gg).unwrap();
        let rhs = fg + s * inner_product(&hh, &gg).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn adjoint_duality(f in vec_of(200, 1.0), u in vec_of(200, 1.0)) {
        let s = small();
        let f = on(s.op.domain_grid(), f);
        let u = on(s.op.range_grid(), u);
        let lhs = inner_product(&s.op.apply(&f).unwrap(), &u).unwrap();
        let rhs = inner_product(&f, &s.op.adjoint_apply(&u).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn volterra_is_causal(k in 1usize..199, f in vec_of(200, 1.0)) {
        // Changing f past the k-th midpoint cannot affect q at range nodes before it.
        let s = small();
        let mut g = f.clone();
        for v in &mut g[k..] {
            *v += 1.0;
        }
        let qf = s.op.apply(&on(s.op.domain_grid(), f)).unwrap();
        let qg = s.op.apply(&on(s.op.domain_grid(), g)).unwrap();
        prop_assert!(qf.values()[..k].iter().zip(&qg.values()[..k]).all(|(a, b)| a == b));
    }

    #[test]
    fn observations_linear_in_f(f in vec_of(200, 1.0), g in vec_of(200, 1.0), c in -2.0..2.0f64, seed in any::<u64>()) {
        let s = small();
        let d = s.op.domain_grid();
        let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + c * b).collect();
        let obs = |v: Vec<f64>, sigma: f64| generate_observations_with(&on(d, v), &s.op, sigma, &s.obs, &mut rng_from_seed(seed)).unwrap();
        let (yf, yg, yfg) = (obs(f, 0.5), obs(g, 0.0), obs(fg, 0.5));
        for i in 0..yf.len() {
            prop_assert!((yfg[i] - yf[i] - c * yg[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn beta_observational_linear(y in vec_of(32, 2.0), z in vec_of(32, 2.0), c in -2.0..2.0f64) {
        let s = small();
        let yz: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a + c * b).collect();
        let b = |v: &[f64]| beta_hat_observational(v, &s.obs, &s.inv).unwrap().beta_hat;
        let (by, bz, byz) = (b(&y), b(&z), b(&yz));
        for j in 0..by.len() {
            prop_assert!((byz[j] - by[j] - c * bz[j]).abs() < 1e-9 * (1.0 + byz[j].abs()));
        }
    }

    #[test]
    fn beta_mixture_permutation_invariant(samples in prop::collection::vec(0.0..10.0f64, 1..60), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let s = small();
        let mut shuffled = samples.clone();
        shuffled.shuffle(&mut rng_from_seed(seed));
        let a = beta_hat_mixture(&samples, &s.inv).unwrap().beta_hat;
        let b = beta_hat_mixture(&shuffled, &s.inv).unwrap().beta_hat;
        for j in 0..a.len() {
            prop_assert!((a[j] - b[j]).abs() < 1e-12 * (1.0 + a[j].abs()));
        }
    }

    #[test]
    fn baselines_linear_in_y(y in vec_of(32, 1.0), z in vec_of(32, 1.0), c in -2.0..2.0f64, k in 1usize..8) {
        let s = small();
        let svd = SvdBaseline::new(&s.op, &s.obs).unwrap();
        let lag = LaguerreBaseline::new(&s.op, &s.obs, 0.5, 10).unwrap();
        let yz: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a + c * b).collect();
        let fs = |v: &[f64]| svd.estimate(v, k).unwrap().f_hat.into_values();
        let fl = |v: &[f64]| lag.estimate(v, k).unwrap().f_hat.into_values();
        for f in [&fs as &dyn Fn(&[f64]) -> Vec<f64>, &fl] {
            let (a, b, ab) = (f(&y), f(&z), f(&yz));
            let scale = 1.0 + ab.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..a.len() {
                prop_assert!((ab[i] - a[i] - c * b[i]).abs() < 1e-8 * scale);
            }
        }
    }

    #[test]
    fn soft_threshold_identities(x in -10.0..10.0f64, lambda in 0.0..5.0f64) {
        let s = soft_threshold(x, lambda);
        prop_assert_eq!(soft_threshold(-x, lambda), -s);
        prop_assert!(s.abs() <= x.abs());
        prop_assert!(s == 0.0 || ((x - s).abs() - lambda).abs() < 1e-12);
        prop_assert_eq!(s == 0.0, x.abs() <= lambda);
    }

    #[test]
    fn orthonormal_design_is_soft_threshold(beta in vec_of(8, 3.0), nu in prop::collection::vec(0.1..3.0f64, 8), alpha in 0.0..4.0f64) {
        let g = GramMatrix::identity(8);
        let prob = WeightedLassoProblem::from_slices(&g, &beta, &nu, alpha).unwrap();
        let sol = lasso::solve(&prob, SolverOptions::default(), None);
        for j in 0..8 {
            prop_assert_eq!(sol.t_hat[j], soft_threshold(beta[j], alpha * nu[j] / 2.0));
        }
    }

    #[test]
    fn solver_kkt_and_monotone_trace(p in 2usize..12, m in 2usize..16, seed in any::<u64>(), frac in 0.0..1.0f64, nu in prop::collection::vec(0.2..3.0f64, 12)) {
        let (g, beta) = lasso_instance(p, m, seed);
        let nu = &nu[..p];
        let amax = lasso::alpha_max(&beta, nu);
        let prob = WeightedLassoProblem::from_slices(&g, &beta, nu, amax * frac).unwrap();
        let opts = SolverOptions { trace: true, ..SolverOptions::default() };
        let sol = lasso::solve(&prob, opts, None);
        prop_assert!(sol.converged);
        prop_assert!(lasso::kkt_residual(&prob, &sol.t_hat) <= 1e-8);
        for w in sol.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
        }
        let at_max = lasso::solve(&prob.with_alpha(amax), SolverOptions::default(), None);
        prop_assert!(at_max.t_hat.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn doubling_sigma_never_grows_cv_support(seed in any::<u64>(), sigma in 0.05..1.0f64) {
        use invlasso::lasso::CvCriterion;
        let s = small();
        let d = build_dictionary(3, 5, 0.4, s.op.domain_grid()).unwrap();
        let cv = CvCriterion::new(&s.op, &d).unwrap();
        let gm = gram(&d);
        let mut rng = rng_from_seed(seed);
        let f = d.columns()[3].clone();
        let y = generate_observations_with(&f, &s.op, sigma, &s.obs, &mut rng).unwrap();
        let beta = beta_hat_observational(&y, &s.obs, &s.inv).unwrap().beta_hat;
        let nu = WeightVector::ones(d.p());
        let prob = WeightedLassoProblem::new(&gm, &beta, &nu, 0.0).unwrap();
        let path = lasso::path(&prob, 40, SolverOptions::default()).unwrap();
        let q_hat = s.op.apply(&f).unwrap();
        let k1 = cv.select(&path, &q_hat, sigma, 32).unwrap();
        let k2 = cv.select(&path, &q_hat, sigma * std::f64::consts::SQRT_2, 32).unwrap();
        prop_assert!(path.solutions[k2].support_size() <= path.solutions[k1].support_size());
    }

    #[test]
    fn gram_subsets_symmetric_psd(idx in prop::collection::btree_set(0usize..15, 1..8)) {
        let d = build_dictionary(3, 5, 0.4, small().op.domain_grid()).unwrap();
        let idx: Vec<usize> = idx.into_iter().collect();
        let sub = gram(&d.subset(&idx).unwrap());
        let e = sub.entries();
        for i in 0..idx.len() {
            prop_assert!((e[(i, i)] - 1.0).abs() < 1e-10);
            for j in 0..i {
                prop_assert_eq!(e[(i, j)], e[(j, i)]);
            }
        }
        let eig = invlasso::linalg::symmetric_eigenvalues(e).unwrap();
        prop_assert!(eig.iter().all(|&v| v > -1e-10));
    }

    #[test]
    fn closed_form_gram_positive(l1 in 0usize..12, l2 in 0usize..12, b1 in 0.05..4.0f64, b2 in 0.05..4.0f64) {
        let v = gram_closed_form(l1, l2, b1, b2).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0 + 1e-12);
        prop_assert!((v - gram_closed_form(l2, l1, b2, b1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn restricted_eigs_nested(seed in any::<u64>()) {
        let (g, _) = lasso_instance(10, 14, seed);
        let mut prev = (f64::INFINITY, f64::NEG_INFINITY);
        for m in 1..=3 {
            let (lo, hi) = restricted_eigs(&g, m).unwrap();
            prop_assert!(lo <= prev.0 + 1e-12 && hi >= prev.1 - 1e-12);
            prev = (lo, hi);
        }
    }

    #[test]
    fn kappa2_deterministic_and_monotone(seed in any::<u64>(), n in 1usize..200) {
        let (g, _) = lasso_instance(8, 12, seed ^ 0x5eed);
        let nu = WeightVector::ones(8);
        let j = [0usize, 3];
        let a = kappa2_estimate(&g, &nu, 3.0, &j, n, seed).unwrap();
        prop_assert_eq!(a, kappa2_estimate(&g, &nu, 3.0, &j, n, seed).unwrap());
        prop_assert!(kappa2_estimate(&g, &nu, 3.0, &j, 2 * n, seed).unwrap() <= a);
    }

    #[test]
    fn reconstruction_identity(f in vec_of(200, 1.0)) {
        // <Qf, ψ_j> = <f, φ_j> whenever the inversion residual is tiny.
        let s = small();
        let d = build_dictionary(3, 5, 0.4, s.op.domain_grid()).unwrap();
        let f = on(s.op.domain_grid(), f);
        let qf = s.op.apply(&f).unwrap();
        for (j, psi) in s.inv.psi().iter().enumerate() {
            prop_assume!(s.inv.residuals()[j] <= 1e-8);
            let lhs = inner_product(&qf, psi).unwrap();
            let rhs = inner_product(&f, &d.columns()[j]).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-6, "j {}: {} vs {}", j, lhs, rhs);
        }
    }
}

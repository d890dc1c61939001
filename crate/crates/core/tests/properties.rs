mod common;

use nalgebra::dmatrix;
use pcons_core::graph::{self, DirectedGraph, Network, PinningSet};
use pcons_core::matrix::{self, Matrix, Vector};
use pcons_core::sim::{self, sector_eval, AgentNonlinearity, Protocol, SectorKind, SectorNonlinearity};
use pcons_core::synthesis::{
    feedback_gain, gamma_coefficients, lmi_block, minimize_alpha_over_e, LmiProblem, SynthesisConfig, Variant,
};
use proptest::prelude::*;

fn square(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(lo..hi, n * n).prop_map(move |v| Matrix::from_row_slice(n, n, &v))
}

fn any_square(max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max).prop_flat_map(|n| square(n, -5.0, 5.0))
}

/// Ring plus random extra weighted edges: always strongly connected.
fn strong_graph(max: usize) -> impl Strategy<Value = DirectedGraph> {
    (2..=max).prop_flat_map(|n| {
        prop::collection::vec(prop_oneof![Just(0.0), 0.2f64..3.0], n * n).prop_map(move |w| {
            let mut adj = Matrix::from_row_slice(n, n, &w);
            for i in 0..n {
                adj[(i, i)] = 0.0;
                let prev = (i + n - 1) % n;
                if adj[(i, prev)] == 0.0 {
                    adj[(i, prev)] = 1.0;
                }
            }
            DirectedGraph::new(adj).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metzler_is_off_diagonal_sign(m in any_square(6), shift in -10.0f64..10.0) {
        let metzler = matrix::is_metzler(&m, 0.0).unwrap();
        prop_assert_eq!(metzler, m.nrows() == 1 || matrix::min_off_diagonal(&m) >= 0.0);
        let shifted = &m + Matrix::identity(m.nrows(), m.nrows()) * shift;
        prop_assert_eq!(matrix::is_metzler(&shifted, 0.0).unwrap(), metzler);
    }

    #[test]
    fn spectral_norm_between_entry_and_frobenius(m in any_square(6)) {
        let s = matrix::spectral_norm(&m);
        prop_assert!(m.amax() <= s + 1e-12);
        prop_assert!(s <= m.norm() + 1e-12);
    }

    #[test]
    fn symmetric_eigenvalues_sorted_and_trace(m in any_square(6)) {
        let eig = matrix::symmetric_eigenvalues(&m).unwrap();
        prop_assert!(eig.windows(2).all(|w| w[0] >= w[1]));
        let trace: f64 = eig.iter().sum();
        prop_assert!((trace - m.trace()).abs() < 1e-9 * (1.0 + m.norm()));
    }

    #[test]
    fn laplacian_rows_sum_to_zero(g in strong_graph(7)) {
        let l = graph::laplacian(&g);
        for i in 0..g.n() {
            prop_assert!(l.row(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn perron_vector_is_positive_left_null_vector(g in strong_graph(7)) {
        let l = graph::laplacian(&g);
        let f = graph::left_perron_vector(&l).unwrap();
        prop_assert!(f.iter().all(|&x| x > 0.0));
        prop_assert!((f.sum() - 1.0).abs() < 1e-12);
        prop_assert!((l.transpose() * f).amax() < 1e-9);
    }

    #[test]
    fn connectivity_bounds_rayleigh_quotients(g in strong_graph(6), dir in prop::collection::vec(-1.0f64..1.0, 6)) {
        let l = graph::laplacian(&g);
        let f = graph::left_perron_vector(&l).unwrap();
        let a = graph::generalized_connectivity(&l, &f).unwrap();
        let n = g.n();
        let x = Vector::from_iterator(n, dir.into_iter().take(n));
        let x = &x - &f * (f.dot(&x) / f.dot(&f));
        prop_assume!(x.norm() > 1e-6);
        let gamma = Matrix::from_diagonal(&f);
        let m_hat = (&gamma * &l + l.transpose() * &gamma) * 0.5;
        let q = x.dot(&(&m_hat * &x)) / x.dot(&(&gamma * &x));
        prop_assert!(a <= q + 1e-9);
    }

    #[test]
    fn lmi_block_is_symmetric(
        a in square(2, -5.0, 5.0), h in square(2, -1.0, 1.0), w in square(2, 0.0, 5.0),
        sigma in square(2, -0.1, 0.1), pi_diag in prop::collection::vec(0.1f64..3.0, 2),
        gamma in -20.0f64..20.0, f in 0.05f64..1.0,
    ) {
        let b = dmatrix![0.7; 0.7];
        let pi = Matrix::from_diagonal(&Vector::from_vec(pi_diag));
        let blk = lmi_block(&a, &h, &b, &w, &pi, gamma, f, &sigma).unwrap();
        prop_assert!((&blk - blk.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn sector_decomposition_holds(u in -100.0f64..100.0) {
        let nl = SectorNonlinearity::sine_ripple();
        let v = nl.eval_scalar(u);
        prop_assert!(0.9 * u * u <= u * v + 1e-12 * (1.0 + u * u));
        prop_assert!(u * v <= 1.2 * u * u + 1e-12 * (1.0 + u * u));
        let xi = v - 1.05 * u;
        prop_assert!(xi * xi <= 0.15 * 0.15 * u * u + 1e-12 * (1.0 + u * u));
    }

    #[test]
    fn sector_eval_is_componentwise(u in prop::collection::vec(-10.0f64..10.0, 1..4)) {
        let nl = SectorNonlinearity::sine_ripple();
        let v = Vector::from_vec(u.clone());
        let out = sector_eval(&nl, &v);
        for (k, x) in u.iter().enumerate() {
            prop_assert_eq!(out[k], nl.eval_scalar(*x));
        }
    }

    #[test]
    fn table_sector_through_origin_is_odd_when_symmetric(s1 in 0.5f64..2.0, s2 in 0.5f64..2.0, u in -5.0f64..5.0) {
        let nl = SectorNonlinearity::new(
            SectorKind::Table { u: vec![-2.0, -1.0, 0.0, 1.0, 2.0], v: vec![-2.0 * s2, -s1, 0.0, s1, 2.0 * s2] },
            s1.min(s2),
            s1.max(s2),
        ).unwrap();
        prop_assert!((nl.eval_scalar(u) + nl.eval_scalar(-u)).abs() < 1e-12);
        prop_assert!(sim::sector_bounds_check(&nl, -5.0, 5.0, 0.05).unwrap().passed);
    }

    #[test]
    fn sweep_never_exceeds_probed_values(d1 in 0.5f64..5.0, d2 in 0.5f64..5.0, c in 0.0f64..3.0) {
        let ac = dmatrix![-d1, c; c * 0.5, -d2];
        let r = matrix::min_singular_sweep(&ac, 20.0, 128, 1e-8).unwrap();
        prop_assert!(r.min_sigma <= matrix::sigma_min_shifted(&ac, 0.0) + 1e-12);
        prop_assert!((r.min_sigma - matrix::sigma_min_shifted(&ac, r.argmin_omega)).abs() < 1e-12);
    }

    #[test]
    fn feedback_gain_is_linear_in_pi(t in 0.1f64..10.0, eta in 0.1f64..2.0) {
        let b = dmatrix![0.7; 0.7];
        let pi = dmatrix![1.0, 0.2; 0.2, 0.8];
        let k = feedback_gain(&pi, eta, &b);
        prop_assert!((feedback_gain(&(&pi * t), eta, &b) - &k * t).amax() < 1e-12);
        prop_assert!(k.iter().all(|&v| v < 0.0));
    }

    #[test]
    fn spectrum_distance_is_symmetric(re in prop::collection::vec(-3.0f64..3.0, 3), im in prop::collection::vec(-3.0f64..3.0, 3)) {
        use nalgebra::Complex;
        let a: Vec<Complex<f64>> = re.iter().zip(&im).map(|(&r, &i)| Complex::new(r, i)).collect();
        let mut b = a.clone();
        b.reverse();
        prop_assert_eq!(graph::spectrum_distance(&a, &b), 0.0);
        let c: Vec<Complex<f64>> = a.iter().map(|z| z + Complex::new(0.1, 0.0)).collect();
        let d1 = graph::spectrum_distance(&a, &c);
        let d2 = graph::spectrum_distance(&c, &a);
        prop_assert!((d1 - d2).abs() < 1e-15 && d1 <= 0.1 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn uniform_f_gamma_differs_only_by_lambda(n in 2usize..7, pinned in 0usize..6) {
        // Undirected rings have uniform f.
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| [(i, (i + 1) % n), ((i + 1) % n, i)]).collect();
        let g = DirectedGraph::from_edges(n, &edges).unwrap();
        let net = Network::new(g, PinningSet::new(n, &[pinned % n]).unwrap()).unwrap();
        let cfg = SynthesisConfig::new(0.6, 10.0, 15.0, 0.02).unwrap();
        let plant = common::plant1();
        let gamma = gamma_coefficients(&cfg, &plant, &net, Variant::Theorem1).unwrap();
        let f = &net.spectral.f;
        let shifted: Vec<f64> = (0..n).map(|i| gamma[i] + net.spectral.gamma_lap_eigs[i] / f[i]).collect();
        for v in &shifted {
            prop_assert!((v - shifted[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn e_step_stays_in_sign_set(e in square(2, -20.0, 30.0)) {
        let plant = common::plant1();
        let net = common::net1();
        let mut cfg = common::cfg1();
        cfg.search.e_iterations = 20;
        let problem = LmiProblem::new(&plant, &net, &cfg, Variant::Theorem1, Matrix::identity(2, 2) * -0.02).unwrap();
        let r = minimize_alpha_over_e(&problem, &(Matrix::identity(2, 2) * 0.8), &e, None).unwrap();
        let w = &r.e * &plant.c;
        prop_assert!(w.iter().all(|&v| v >= -1e-9));
        prop_assert!(w[(0, 1)] <= plant.a[(0, 1)] + 1e-9 && w[(1, 0)] <= plant.a[(1, 0)] + 1e-9);
        prop_assert!(r.history.windows(2).all(|x| x[1] <= x[0]));
    }

    #[test]
    fn trajectory_series_share_the_grid(every in 1usize..7, steps in 5usize..40) {
        let mut sc = common::scenario1(Protocol::DistributedObserver, common::published_ex1_alg2().e, dmatrix![-0.441, -0.441]);
        sc.step = 1e-3;
        sc.horizon = steps as f64 * 1e-3;
        sc.record_every = every;
        sc.g = AgentNonlinearity::Zero;
        let traj = sim::simulate(&sc).unwrap();
        let n = traj.len();
        prop_assert_eq!(traj.leader.len(), n);
        prop_assert_eq!(traj.states.len(), n);
        prop_assert_eq!(traj.estimates.len(), n);
        prop_assert_eq!(traj.controls.len(), n);
        prop_assert_eq!(traj.sector_controls.len(), n);
        prop_assert!((traj.times[n - 1] - sc.horizon).abs() < 1e-12);
        prop_assert!(sim::error_dynamics_residual(&traj, &sc).max_residual <= 1e-9);
    }
}

use std::sync::Arc;

use gpdm_core::boundary_geometry::{
    build_ghosts, estimate_boundary, GhostSet, NormalOptions, SamplingMode,
};
use gpdm_core::experiments::{fixture_eigs, EpsChoice, Method};
use gpdm_core::gpdm::{build_extrapolation, build_extrapolation_with, build_gpdm};
use gpdm_core::linalg::loglog_slope;
use gpdm_core::manifolds::{semi_circle, CircleBc};
use gpdm_core::operators::{assemble, assemble_augmented, DmMatrix, OperatorKind, OperatorSpec};
use gpdm_core::pde_solver::{discretize_bc, solve_robin_neumann, BvpSpec};
use gpdm_core::pointcloud::{brute_force_neighbors, build_index, PointCloud};
use proptest::prelude::*;

/// Sorted, distinct 1D samples on [0, 1] with both ends present.
fn jittered_segment(n: usize, jitter: &[f64]) -> PointCloud {
    let h = 1.0 / (n - 1) as f64;
    let xs: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                i as f64 * h
            } else {
                (i as f64 + 0.3 * jitter[i % jitter.len()]) * h
            }
        })
        .collect();
    PointCloud::new(1, xs, Some(1), vec![0, n - 1]).unwrap()
}

fn segment_setup(cloud: &PointCloud, layers: usize, eps: f64) -> (GhostSet, DmMatrix) {
    let bd =
        estimate_boundary(cloud, SamplingMode::WellSampled, &NormalOptions::default()).unwrap();
    let (ghosts, _) = build_ghosts(cloud, &bd, layers).unwrap();
    let spec = OperatorSpec::new(OperatorKind::L1, eps, 12).unwrap();
    let lh = assemble_augmented(cloud, &ghosts, &spec).unwrap();
    (ghosts, lh)
}

fn random_cloud_2d(coords: Vec<f64>) -> PointCloud {
    PointCloud::new(2, coords, Some(2), vec![]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kd_tree_matches_brute_force(coords in prop::collection::vec(-1.0f64..1.0, 60..200), k in 1usize..8) {
        let n = coords.len() / 2;
        let cloud = random_cloud_2d(coords[..2 * n].to_vec());
        let index = build_index(&cloud, k).unwrap();
        let brute = brute_force_neighbors(&cloud, k);
        for (i, want) in brute.iter().enumerate() {
            prop_assert_eq!(index.neighbors(i), &want[..]);
        }
    }

    #[test]
    fn constants_are_annihilated(coords in prop::collection::vec(-1.0f64..1.0, 80..160), eps in 5e-3f64..5e-2, shear in -0.5f64..0.5) {
        let n = coords.len() / 2;
        let cloud = random_cloud_2d(coords[..2 * n].to_vec());
        let kinds = [
            OperatorKind::L1,
            OperatorKind::weighted(Arc::new(|x: &[f64]| 1.5 + x[0] * x[1])),
            OperatorKind::L3 {
                drift: Arc::new(move |x: &[f64]| vec![shear * x[1], -x[0]]),
                diffusion: Arc::new(move |_: &[f64]| vec![2.0, shear, shear, 1.0]),
            },
        ];
        for kind in kinds {
            let spec = OperatorSpec::new(kind, eps, 15).unwrap();
            let l = assemble(&cloud, n, &spec).unwrap();
            let r = l.matrix.matvec(&vec![1.0; n]);
            prop_assert!(r.iter().all(|v| v.abs() < 1e-9 / eps));
            // I + eps * L has nonnegative off-diagonals and a positive diagonal
            for i in 0..n {
                for (c, v) in l.matrix.row_iter(i) {
                    let scaled = eps * v / l.row_scale[i] + if c == i { 1.0 } else { 0.0 };
                    let ok = if c == i { scaled > 0.0 } else { scaled >= 0.0 };
                    prop_assert!(ok, "entry ({}, {}) = {}", i, c, scaled);
                }
            }
        }
    }

    #[test]
    fn gpdm_structure_on_uneven_segments(
        n in 15usize..50,
        jitter in prop::collection::vec(-1.0f64..1.0, 7),
        layers in 1usize..6,
        f in prop::collection::vec(-3.0f64..3.0, 2),
        seed_u in prop::collection::vec(-1.0f64..1.0, 50),
    ) {
        let cloud = jittered_segment(n, &jitter);
        let h = 1.0 / (n - 1) as f64;
        let eps = 2.0 * h * h;
        let (ghosts, lh) = segment_setup(&cloud, layers, eps);

        let zero = build_extrapolation(&lh, &ghosts, &[0.0, 0.0]).unwrap();
        prop_assert!(zero.e_inv_norm < 1e4);
        let op = build_gpdm(&lh, &ghosts, &zero).unwrap();
        let sums = op.l1part.scale(eps).row_sums();
        prop_assert!(sums.iter().all(|s| s.abs() < 1e-9));
        for i in 1..n - 1 {
            prop_assert!(op.l1part.get(i, i) < 0.0);
        }

        let sys = build_extrapolation(&lh, &ghosts, &f).unwrap();
        let op = build_gpdm(&lh, &ghosts, &sys).unwrap();
        let um = seed_u[..n].to_vec();
        let mut full = um.clone();
        full.extend(sys.ghost_values(&um, &f));
        let want = lh.matrix.matvec(&full);
        let got = op.apply(&um);
        let scale = want.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        prop_assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12 * scale));
        // boundary rows of L^g reproduce f
        prop_assert!((got[0] - f[0]).abs() < 1e-9 * scale && (got[n - 1] - f[1]).abs() < 1e-9 * scale);
    }

    #[test]
    fn quadratics_pass_the_matching_rows(c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, layers in 2usize..10) {
        let n = 41;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let cloud = PointCloud::new(1, xs, Some(1), vec![0, n - 1]).unwrap();
        let (ghosts, lh) = segment_setup(&cloud, layers, 1e-3);
        let sys = build_extrapolation(&lh, &ghosts, &[0.0, 0.0]).unwrap();
        let u = |x: f64| c0 + c1 * x + c2 * x * x;
        let um: Vec<f64> = cloud.coords().iter().map(|&x| u(x)).collect();
        let ug: Vec<f64> = (0..2)
            .flat_map(|j| (1..=layers).map(move |k| (j, k)))
            .map(|(j, k)| u(ghosts.layer_point(j, k)[0]))
            .collect();
        let r = sys.residual(&um, &ug, &[0.0, 0.0]);
        for (row, v) in r.iter().enumerate() {
            if row % layers != 0 {
                prop_assert!(v.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn boundary_rows_have_at_most_two_entries(b1 in prop::sample::select(vec![0.0, 0.5, -2.0]), b2 in 0.0f64..3.0) {
        prop_assume!(b1 != 0.0 || b2 != 0.0);
        let xs: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
        let cloud = PointCloud::new(1, xs, Some(1), vec![0, 20]).unwrap();
        let (ghosts, _) = segment_setup(&cloud, 2, 1e-3);
        let spec = BvpSpec {
            operator: OperatorSpec::new(OperatorKind::L1, 1e-3, 8).unwrap(),
            f: Arc::new(|_| 0.0),
            g: Arc::new(|_| 0.0),
            beta1: Arc::new(move |_| b1),
            beta2: Arc::new(move |_| b2),
            a: None,
        };
        let bc = discretize_bc(&spec, &cloud, &ghosts).unwrap();
        for j in 0..2 {
            let len = bc.rows.row(j).0.len();
            let want = if b1 == 0.0 { 1 } else { 2 };
            prop_assert_eq!(len, want);
        }
    }

    #[test]
    fn slope_fit_recovers_power_laws(p in -3.0f64..3.0, c in 0.1f64..10.0) {
        let x = [100.0, 200.0, 400.0, 800.0, 1600.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| c * v.powf(p)).collect();
        prop_assert!((loglog_slope(&x, &y) - p).abs() < 1e-10);
    }

    #[test]
    fn robin_residual_and_dominance(b2 in 0.2f64..3.0, a in prop_oneof![Just(0.0), 0.1f64..2.0], f in prop::collection::vec(-1.0f64..1.0, 31)) {
        let n = 31;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let cloud = PointCloud::new(1, xs, Some(1), vec![0, n - 1]).unwrap();
        let (ghosts, lh) = segment_setup(&cloud, 3, 2e-3);
        let f_at = f.clone();
        let spec = BvpSpec {
            operator: lh_spec(),
            f: Arc::new(move |x: &[f64]| f_at[(x[0] * (n - 1) as f64).round() as usize]),
            g: Arc::new(|x: &[f64]| x[0] - 0.5),
            beta1: Arc::new(|_| 1.0),
            beta2: Arc::new(move |_| b2),
            a: Some(Arc::new(move |_| a)),
        };
        let sys = build_extrapolation_with(&lh, &ghosts, &[f[0], f[n - 1]], &[None, None], &[a, a]).unwrap();
        let op = build_gpdm(&lh, &ghosts, &sys).unwrap();
        let bc = discretize_bc(&spec, &cloud, &ghosts).unwrap();
        let report = solve_robin_neumann(&op, &spec, &cloud, &bc, 3).unwrap();
        prop_assert!(report.residual_inf < 1e-8 * report.rhs_inf.max(1.0));
        // The shifted ghost equation lowers the interior margin below a, but never to zero.
        if a == 0.0 {
            prop_assert!(report.dominance_margin >= -1e-9, "margin {}", report.dominance_margin);
        } else {
            prop_assert!(report.dominance_margin > 0.0, "margin {}", report.dominance_margin);
        }
    }
}

fn lh_spec() -> OperatorSpec {
    OperatorSpec::new(OperatorKind::L1, 2e-3, 12).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn eigenvalues_ignore_point_order(seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let fixture = semi_circle(60, CircleBc::Dirichlet, 5).unwrap();
        let base = fixture_eigs(&fixture, Method::Gpdm, 20, 3, EpsChoice::Fixed(2e-3), 5).unwrap();
        let mut order: Vec<usize> = (0..60).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let mut shuffled = fixture.clone();
        shuffled.cloud = fixture.cloud.permuted(&order).unwrap();
        let other = fixture_eigs(&shuffled, Method::Gpdm, 20, 3, EpsChoice::Fixed(2e-3), 5).unwrap();
        for (a, b) in base.lambdas.iter().zip(&other.lambdas) {
            prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
        prop_assert!(base.lambdas.iter().all(|l| *l < 0.0));
    }
}

use balancing_flow::bergman::{bergman_distance, BergmanSpace, HermitianInner};
use balancing_flow::fields::{is_below, metric_sup_distance, MetricField, Perturbation};
use balancing_flow::io;
use balancing_flow::linalg::{self, CMat};
use balancing_flow::manifold::{fs_monomial_integral, ModelConfig, QuadratureGrid};
use num_complex::Complex64;
use proptest::prelude::*;

fn cmat(n: usize, vals: &[(f64, f64)]) -> CMat {
    CMat::from_fn(n, n, |i, j| Complex64::new(vals[i * n + j].0, vals[i * n + j].1))
}

/// `A^dagger A + I`, Hermitian positive definite.
fn hpd(n: usize, vals: &[(f64, f64)]) -> CMat {
    let a = cmat(n, vals);
    linalg::hermitian_part(&(a.adjoint() * &a + CMat::identity(n, n)))
}

fn entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn section_count_is_riemann_roch(degrees in prop::collection::vec(-3i64..6, 1..4), k in 3u32..12) {
        let model = ModelConfig::new(degrees.clone(), k).unwrap();
        let expected: i64 = degrees.iter().map(|a| a + k as i64 + 1).sum();
        prop_assert_eq!(model.n_sections() as i64, expected);
        let space = BergmanSpace::with_default_grid(&model).unwrap();
        prop_assert_eq!(space.n_sections() as i64, expected);
    }

    #[test]
    fn quadrature_exact_to_its_degree(m in 0usize..20, extra in 0usize..4) {
        let grid = QuadratureGrid::default_for(m).unwrap();
        let j = (m + extra).min(2 * m);
        let mm = 2 * m;
        let f: Vec<f64> = grid.u().iter().map(|&u| u.powi(j as i32) * (1.0 - u).powi((mm - j) as i32)).collect();
        let per_point: Vec<f64> = (0..grid.len()).map(|p| f[grid.split_index(p).0]).collect();
        let exact = fs_monomial_integral(j, mm);
        prop_assert!((grid.integrate(&per_point) - exact).abs() <= 1e-12 * exact.max(1e-300) + 1e-300);
    }

    #[test]
    fn distance_is_a_congruence_invariant_metric(
        a in entries(4), b in entries(4), c in entries(4), g in entries(4), k in 1u32..40,
    ) {
        let (ha, hb, hc) = (
            HermitianInner::new(hpd(4, &a)).unwrap(),
            HermitianInner::new(hpd(4, &b)).unwrap(),
            HermitianInner::new(hpd(4, &c)).unwrap(),
        );
        let ab = bergman_distance(&ha, &hb, k).unwrap();
        let ba = bergman_distance(&hb, &ha, k).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-10 * (1.0 + ab));
        let ac = bergman_distance(&ha, &hc, k).unwrap();
        let cb = bergman_distance(&hc, &hb, k).unwrap();
        prop_assert!(ab <= ac + cb + 1e-10);
        prop_assert!(bergman_distance(&ha, &ha, k).unwrap() < 1e-7);
        // any invertible change of basis
        let t = cmat(4, &g) + CMat::identity(4, 4).scale(3.0);
        let move_ = |h: &HermitianInner| HermitianInner::new(linalg::hermitian_part(&(t.adjoint() * h.matrix() * &t))).unwrap();
        let moved = bergman_distance(&move_(&ha), &move_(&hb), k).unwrap();
        prop_assert!((moved - ab).abs() <= 1e-8 * (1.0 + ab));
    }

    #[test]
    fn matrix_codec_round_trips(n in 1usize..6, vals in entries(6)) {
        let m = cmat(n, &vals);
        prop_assert_eq!(io::decode_matrix(&io::encode_matrix(&m)).unwrap(), m);
    }

    #[test]
    fn field_codecs_round_trip(points in 1usize..6, r in 1usize..4, vals in entries(6)) {
        let values: Vec<CMat> = (0..points).map(|p| CMat::from_fn(r, r, |i, j| {
            let (re, im) = vals[(p * 7 + i * 3 + j) % vals.len()];
            Complex64::new(re * 1e3, im / 7.0)
        })).collect();
        prop_assert_eq!(&io::decode_field_binary(&io::encode_field_binary(&values)).unwrap().values, &values);
        prop_assert_eq!(&io::decode_field_csv(&io::encode_field_csv(&values)).unwrap().values, &values);
    }

    #[test]
    fn decoders_reject_garbage_without_panicking(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = io::decode_matrix(&bytes);
        let _ = io::decode_field_binary(&bytes);
        let _ = io::decode_field_csv(&String::from_utf8_lossy(&bytes));
    }
}

fn line_space(k: u32) -> BergmanSpace {
    BergmanSpace::with_default_grid(&ModelConfig::new(vec![1, -1], k).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn phi_is_homogeneous(seed in any::<u64>(), c in 0.1..10.0f64) {
        let space = line_space(5);
        let h = Perturbation::new(&[1, -1], seed, 0.4).metric(space.grid()).unwrap();
        let lhs = space.phi_map(&h.scaled(c)).unwrap();
        let rhs = space.phi_map(&h).unwrap().scaled(c);
        prop_assert!(metric_sup_distance(&lhs, &rhs).unwrap() < 1e-10);
    }

    #[test]
    fn phi_preserves_order_and_contracts(s0 in any::<u64>(), s1 in any::<u64>(), lift in 0.0..1.0f64) {
        let space = line_space(4);
        let grid = space.grid();
        let h0 = Perturbation::new(&[1, -1], s0, 0.4).metric(grid).unwrap();
        let h1 = Perturbation::new(&[1, -1], s1, 0.4).metric(grid).unwrap();
        // h0 <= e^lift h0
        let up = h0.scaled(lift.exp());
        prop_assert!(is_below(&space.phi_map(&h0).unwrap(), &space.phi_map(&up).unwrap(), 1e-10).unwrap());
        let before = metric_sup_distance(&h0, &h1).unwrap();
        let after = metric_sup_distance(&space.phi_map(&h0).unwrap(), &space.phi_map(&h1).unwrap()).unwrap();
        prop_assert!(after <= before + 1e-10);
    }

    #[test]
    fn q_is_symmetric(sh in any::<u64>(), sa in any::<u64>(), sb in any::<u64>()) {
        let space = line_space(4);
        let grid = space.grid();
        let h = Perturbation::new(&[1, -1], sh, 0.3).metric(grid).unwrap();
        let field = |s: u64| {
            let a = Perturbation::new(&[1, -1], s, 0.5).field(grid);
            a.zip_map(&balancing_flow::fields::EndoField::new(h.values().to_vec()), |b, g| g.clone().try_inverse().unwrap() * b).unwrap()
        };
        let (f, g) = (field(sa), field(sb));
        let pair = |x: &balancing_flow::fields::EndoField, y: &balancing_flow::fields::EndoField| {
            let prod: Vec<f64> = x.values().iter().zip(y.values()).map(|(a, b)| linalg::trace(&(a * b)).re).collect();
            grid.integrate(&prod)
        };
        let lhs = pair(&space.q_apply(&f, &h).unwrap(), &g);
        let rhs = pair(&f, &space.q_apply(&g, &h).unwrap());
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn phi_is_equivariant_under_constant_unitary_gauge(seed in any::<u64>(), angle in 0.0..6.3f64) {
        // on [1, 1] a constant unitary u mixes the two equal-degree summands
        let space = BergmanSpace::with_default_grid(&ModelConfig::new(vec![1, 1], 3).unwrap()).unwrap();
        let h = Perturbation::new(&[1, 1], seed, 0.4).metric(space.grid()).unwrap();
        let (c, s) = (angle.cos(), angle.sin());
        let u = CMat::from_row_slice(2, 2, &[
            Complex64::new(c, 0.0), Complex64::new(0.0, s),
            Complex64::new(0.0, s), Complex64::new(c, 0.0),
        ]);
        let gauge = |h: &MetricField| {
            MetricField::new(vec![1, 1], h.values().iter().map(|g| linalg::hermitian_part(&(u.adjoint() * g * &u))).collect()).unwrap()
        };
        let lhs = space.phi_map(&gauge(&h)).unwrap();
        let rhs = gauge(&space.phi_map(&h).unwrap());
        prop_assert!(metric_sup_distance(&lhs, &rhs).unwrap() < 1e-10);
    }
}

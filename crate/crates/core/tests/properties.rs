use proptest::prelude::*;
use rand::Rng;
use spectral_crossed::algebra::{
    ci_triple, default_schedule, gns, ortho_layers, AlgState, Filtration, FiltrationSpec, StateSpec,
};
use spectral_crossed::crossed::{crossed_seminorms, CrossedElement, CrossedTriple};
use spectral_crossed::dynamics::{
    epsilon_chain_partition, equicont_constant, equicontinuity_sup, ActionModel, EquicontOptions, FiniteMetricAction,
    OdometerSpec,
};
use spectral_crossed::groupgeo::{m_l_operator, LatticeWindow, LengthFunction};
use spectral_crossed::matops::{self, c, CVector};
use spectral_crossed::qmetric::{connes_distance, ConnesOptions};
use spectral_crossed::random::{self, SeededRng};
use spectral_crossed::triple::{diagonal_triple, tensor_even, Representation, SpectralTriple};

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn odometer_setup(moduli: &[usize]) -> (Filtration, SpectralTriple, ActionModel) {
    let f = Filtration::odometer(moduli).unwrap();
    let t = ci_triple(
        &f,
        &AlgState::normalized_trace(f.top()),
        &default_schedule(&f, 1.5).unwrap(),
    )
    .unwrap();
    let action = ActionModel::odometer_dual(&OdometerSpec::new(moduli.to_vec(), moduli.len()).unwrap()).unwrap();
    (f, t, action)
}

fn moduli() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(2usize..4, 1..3)
}

fn random_states(r: &mut SeededRng, n: usize, count: usize) -> Vec<CVector> {
    (0..count)
        .map(|_| {
            let mu: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
            let total: f64 = mu.iter().sum();
            CVector::from_iterator(n, mu.iter().map(|x| c(x / total)))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn opnorm_is_a_unitarily_invariant_norm(seed in any::<u64>(), n in 1usize..7) {
        let mut r = random::rng(seed);
        let a = random::random_matrix(&mut r, n, n);
        let b = random::random_matrix(&mut r, n, n);
        let (na, nb) = (matops::opnorm(&a).unwrap(), matops::opnorm(&b).unwrap());
        prop_assert!(matops::opnorm(&(&a * &b)).unwrap() <= na * nb * (1.0 + 1e-10));
        prop_assert!(matops::opnorm(&(&a + &b)).unwrap() <= (na + nb) * (1.0 + 1e-10));
        let u = random::random_unitary(&mut r, n);
        let v = random::random_unitary(&mut r, n);
        prop_assert!((matops::opnorm(&(&u * &a * &v)).unwrap() - na).abs() <= 1e-10 * (1.0 + na));
    }

    #[test]
    fn eigenvalues_survive_unitary_conjugation(seed in any::<u64>(), n in 1usize..8) {
        let mut r = random::rng(seed);
        let h = random::random_hermitian(&mut r, n);
        let u = random::random_unitary(&mut r, n);
        let conj = matops::symmetrize(&(&u * &h * u.adjoint()));
        let d = matops::spectral_deviation(&matops::herm_eigvals(&h).unwrap(), &matops::herm_eigvals(&conj).unwrap());
        prop_assert!(d <= 1e-10 * (1.0 + matops::opnorm(&h).unwrap()));
    }

    #[test]
    fn gns_reproduces_the_state(seed in any::<u64>(), moduli in moduli()) {
        let mut r = random::rng(seed);
        let f = Filtration::odometer(&moduli).unwrap();
        let mu: Vec<f64> = (0..f.top().dim()).map(|_| r.random::<f64>() + 0.01).collect();
        let total: f64 = mu.iter().sum();
        let mu: Vec<f64> = mu.iter().map(|x| x / total).collect();
        let state = AlgState::from_measure(f.top(), &mu).unwrap();
        let g = gns(f.top(), &state).unwrap();
        let phi = state.functional(f.top());
        for k in 0..f.top().dim() {
            let a = f.top().basis_element(k);
            let val = g.cyclic.dotc(&(g.rep.represent(&a) * &g.cyclic));
            prop_assert!((val - phi[k]).norm() <= 1e-10);
        }
    }

    #[test]
    fn layers_are_orthogonal_and_commute_with_lower_levels(sizes in prop::collection::vec(2usize..4, 1..3)) {
        let f = Filtration::uhf(&sizes).unwrap();
        let g = gns(f.top(), &AlgState::normalized_trace(f.top())).unwrap();
        let layers = ortho_layers(&f, &g).unwrap();
        let n = g.hilbert_dim();
        let total = layers.iter().fold(matops::identity(n) * c(0.0), |acc, q| acc + q);
        prop_assert!(matops::max_abs(&(total - matops::identity(n))) <= 1e-10);
        for (i, p) in layers.iter().enumerate() {
            for (j, q) in layers.iter().enumerate() {
                let expected = if i == j { p.clone() } else { p * c(0.0) };
                prop_assert!(matops::max_abs(&(p * q - expected)) <= 1e-10);
            }
        }
        for level in 0..f.levels.len() {
            for e in f.levels[level].basis() {
                let a = g.rep.represent(&f.embed(level, &e));
                for q in &layers[level + 1..] {
                    prop_assert!(matops::max_abs(&matops::commutator(q, &a)) <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn seminorm_axioms(seed in any::<u64>(), moduli in moduli(), scale in -5.0f64..5.0) {
        let mut r = random::rng(seed);
        let (f, t, _) = odometer_setup(&moduli);
        let n = f.top().dim();
        let a = CVector::from_vec(random::complex_vec(&mut r, n));
        let b = CVector::from_vec(random::complex_vec(&mut r, n));
        let (la, lb) = (t.seminorm(&a).unwrap(), t.seminorm(&b).unwrap());
        prop_assert!(t.seminorm(&(&a + &b)).unwrap() <= la + lb + 1e-10);
        prop_assert!((t.seminorm(&(&a * c(scale))).unwrap() - scale.abs() * la).abs() <= 1e-10 * (1.0 + la));
        let star = t.rep.adjoint(&a);
        prop_assert!((t.seminorm(&star).unwrap() - la).abs() <= 1e-10 * (1.0 + la));
    }

    #[test]
    fn even_tensor_triples_are_graded(seed in any::<u64>(), na in 1usize..5, nb in 1usize..5) {
        let mut r = random::rng(seed);
        let ta = diagonal_triple(random::random_hermitian(&mut r, na), "a").unwrap();
        let tb = diagonal_triple(random::random_hermitian(&mut r, nb), "b").unwrap();
        let t = tensor_even(&ta, &tb).unwrap();
        let gamma = t.grading_matrix().unwrap();
        let n = t.hilbert_dim();
        prop_assert!(matops::max_abs(&(&gamma * &gamma - matops::identity(n))) <= 1e-10);
        prop_assert!(matops::max_abs(&(&gamma * &t.dirac * &gamma + &t.dirac)) <= 1e-10);
        for k in 0..t.algebra_dim() {
            let a = t.represent(&t.rep.basis_element(k));
            prop_assert!(matops::max_abs(&matops::commutator(&gamma, &a)) <= 1e-10);
        }
        let e = sorted(t.spectrum().unwrap());
        let flipped = sorted(e.iter().map(|x| -x).collect());
        prop_assert!(matops::spectral_deviation(&e, &flipped) <= 1e-10);
    }

    #[test]
    fn tensor_of_nondegenerate_is_nondegenerate(moduli_a in moduli(), moduli_b in moduli()) {
        let (_, ta, _) = odometer_setup(&moduli_a);
        let (_, tb, _) = odometer_setup(&moduli_b);
        prop_assume!(ta.algebra_dim() * tb.algebra_dim() <= 36);
        let report = tensor_even(&ta, &tb).unwrap().nondegenerate_on_basis();
        prop_assert!(report.nondegenerate);
    }

    #[test]
    fn length_operators(radius in 1usize..6, d in 1usize..4) {
        let ld = LengthFunction::Ld { d };
        prop_assert_eq!(matops::max_abs(&ld.value(&vec![0; d]).unwrap()), 0.0);
        let v = ld.value(&vec![radius as i64; d]).unwrap();
        prop_assert!(matops::is_hermitian(&v, 1e-15));
        for l in [LengthFunction::Iota, LengthFunction::Ld { d: 1 }] {
            let m = m_l_operator(&l, &LatticeWindow::new(1, radius).unwrap()).unwrap();
            let e = sorted(matops::herm_eigvals(&m).unwrap());
            let flipped = sorted(e.iter().map(|x| -x).collect());
            prop_assert!(matops::spectral_deviation(&e, &flipped) <= 1e-12);
        }
    }

    #[test]
    fn odometer_action_is_isometric(seed in any::<u64>(), moduli in moduli(), g in -30i64..30) {
        let mut r = random::rng(seed);
        let (f, t, action) = odometer_setup(&moduli);
        let a = CVector::from_vec(random::complex_vec(&mut r, f.top().dim()));
        let l = t.seminorm(&a).unwrap();
        prop_assert!((t.seminorm(&action.act(&[g], &a)).unwrap() - l).abs() <= 1e-9 * (1.0 + l));
        let one = equicontinuity_sup(&t, &action, &a, 4).unwrap();
        let three = equicontinuity_sup(&t, &action, &a, 40).unwrap();
        prop_assert!(one.certificate.is_exact());
        prop_assert!((one.value - three.value).abs() <= 1e-12 * (1.0 + one.value));
    }

    #[test]
    fn chain_partitions_are_clopen(moduli in prop::collection::vec(2usize..4, 2..4), eps in 0.2f64..1.2) {
        let spec = OdometerSpec::new(moduli.clone(), moduli.len()).unwrap();
        let m = FiniteMetricAction::odometer(&spec).unwrap();
        let p = epsilon_chain_partition(&m, eps).unwrap();
        for x in 0..m.points {
            for y in 0..m.points {
                if m.dist[x][y] < eps {
                    prop_assert_eq!(p.class_of[x], p.class_of[y]);
                }
            }
        }
    }

    #[test]
    fn filtration_specs_round_trip(moduli in moduli(), uhf in any::<bool>()) {
        let f = if uhf { Filtration::uhf(&moduli).unwrap() } else { Filtration::odometer(&moduli).unwrap() };
        let spec = FiltrationSpec::describe(&f, StateSpec::Trace);
        let again = FiltrationSpec::from_json(&spec.to_json()).unwrap();
        prop_assert_eq!(again.to_json(), spec.to_json());
        let (built, _) = again.build().unwrap();
        prop_assert_eq!(built.levels.len(), f.levels.len());
        for (x, y) in built.inclusions.iter().zip(&f.inclusions) {
            prop_assert_eq!(x, y);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn crossed_envelope_covariance_and_round_trip(seed in any::<u64>(), moduli in moduli(), support in 1usize..3, h in -2i64..3) {
        let mut r = random::rng(seed);
        let (f, t, action) = odometer_setup(&moduli);
        let n_a = f.top().dim();
        let ct = CrossedTriple::even(&t, &action, &LengthFunction::Iota, LatticeWindow::new(1, support + 3).unwrap(), support).unwrap();
        let x = CrossedElement::random(&mut r, 1, support, n_a);
        let s = crossed_seminorms(&ct, &x).unwrap();
        prop_assert!(s.envelope_ok);
        let a = CVector::from_vec(random::complex_vec(&mut r, n_a));
        prop_assert!(ct.rep.covariance_defect(&a, &[h]) <= 1e-12 * (1.0 + a.norm()));
        let m = ct.rep.element(&x).unwrap();
        for (k, xk) in &x.terms {
            prop_assert!((ct.rep.fourier_coefficient(&m, k).unwrap() - xk).norm() <= 1e-12);
        }
        let back = CrossedElement::from_json(&x.to_json()).unwrap();
        prop_assert_eq!(back, x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn connes_distance_is_a_scaled_metric(seed in any::<u64>(), n in 2usize..4, t_scale in 0.5f64..4.0) {
        let mut r = random::rng(seed);
        let t = diagonal_triple(random::random_hermitian(&mut r, n), "random").unwrap();
        let opts = ConnesOptions { restarts: 10, seed, ..Default::default() };
        let s = random_states(&mut r, n, 3);
        let d = |a: &CVector, b: &CVector| connes_distance(&t, a, b, &opts).unwrap().value;
        let (ab, ba) = (d(&s[0], &s[1]), d(&s[1], &s[0]));
        prop_assert!((ab - ba).abs() <= 1e-6 * (1.0 + ab));
        prop_assert!(ab <= d(&s[0], &s[2]) + d(&s[2], &s[1]) + 1e-6 * (1.0 + ab));
        let scaled = connes_distance(&t.with_scaled_dirac(t_scale), &s[0], &s[1], &opts).unwrap().value;
        prop_assert!((scaled * t_scale - ab).abs() <= 1e-8 * ab.max(1e-12));
    }

    #[test]
    fn equicontinuity_constant_is_scale_free(seed in any::<u64>(), t_scale in 0.3f64..5.0) {
        let f = Filtration::over_scalars(spectral_crossed::algebra::MultiMatrixAlgebra::full_matrix(2)).unwrap();
        let state = AlgState::new(f.top(), vec![matops::diag_real(&[0.65, 0.35])]).unwrap();
        let t = ci_triple(&f, &state, &[0.0, 1.0]).unwrap();
        let mut r = random::rng(seed);
        let w = random::random_unitary(&mut r, 2);
        let v = &w * matops::diag_real(&[1.0, -1.0]) * w.adjoint();
        let action = ActionModel::inner(&v, Some(f.clone())).unwrap();
        let opts = EquicontOptions { seed, ..Default::default() };
        let c1 = equicont_constant(&t, &action, &f.top().basis(), &opts).unwrap();
        let c2 = equicont_constant(&t.with_scaled_dirac(t_scale), &action, &f.top().basis(), &opts).unwrap();
        prop_assert_eq!(c1.validation_violations, 0);
        prop_assert!((c1.constant - c2.constant).abs() <= 1e-7 * c1.constant, "{} vs {}", c1.constant, c2.constant);
    }
}

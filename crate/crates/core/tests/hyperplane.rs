use cylgames::hyperplane::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn y_and_w_membership() {
    assert!(AffinePlane::y_plane(3).contains(&point(&[1, 2, 0])));
    assert!(AffinePlane::y_plane(3).contains(&point(&[2, 3, 0])));
    assert!(AffinePlane::w_plane(3).contains(&point(&[1, 3, 0])));
    assert!(!AffinePlane::w_plane(3).contains(&point(&[1, 2, 0])));
}

#[test]
fn canonical_scaling_makes_first_coefficient_one() {
    let p = AffinePlane::from_ints(4, &[0, -2, 6]).unwrap();
    assert_eq!(p.r, point(&[0, 1, -3]));
    assert_eq!(p.t, q(-2));
    assert!(AffinePlane::from_ints(3, &[0, 0, 0]).is_none());
}

#[test]
fn transpose_examples() {
    let q0 = NormalForm::plane(AffinePlane::q_plane(3, 0));
    let q1 = NormalForm::plane(AffinePlane::q_plane(3, 1));
    assert_eq!(q0.transpose(0, 1), q1);
    let c01 = NormalForm::literal(3, Literal::cdelta(&[0, 1]));
    let c02 = NormalForm::literal(3, Literal::cdelta(&[0, 2]));
    assert_eq!(c01.transpose(1, 2), c02);
    let d01 = NormalForm::literal(4, Literal::diag(0, 1));
    assert_eq!(
        d01.transpose(1, 3),
        NormalForm::literal(4, Literal::diag(0, 3))
    );
}

#[test]
fn tau_worked_pair() {
    let r = point(&[1, 2, 0]);
    let t = point(&[2, 3, 0]);
    let s = tau_singletons(&r, &t).unwrap();
    assert_eq!(s, point(&[1, 3, 0]));
    assert!(AffinePlane::w_plane(3).contains(&s));
    let sym = tau(&NormalForm::singleton(&r), &NormalForm::singleton(&t));
    assert_eq!(sym.as_point(), Some(s));
}

#[test]
fn tau_mismatch_is_bottom() {
    let r = point(&[1, 2, 0]);
    let t = point(&[3, 3, 1]);
    assert!(tau_singletons(&r, &t).is_none());
    assert!(tau(&NormalForm::singleton(&r), &NormalForm::singleton(&t)).is_bottom());
}

#[test]
fn witness_example() {
    // (2,0,2) satisfies w and avoids x_0 = 0 and q_0..q_2.
    let s = point(&[2, 0, 2]);
    assert!(AffinePlane::w_plane(3).contains(&s));
    let c = AffinePlane::from_ints(0, &[1, 0, 0]).unwrap();
    let got = witness_solve(3, 2, &[c.clone()]).unwrap();
    assert!(AffinePlane::w_plane(3).contains(&got));
    assert!(!c.contains(&got));
    for l in 0..3 {
        assert!(!AffinePlane::q_plane(3, l).contains(&got));
    }
}

#[test]
fn witness_rejects_bad_constraints() {
    let no_x0 = AffinePlane::from_ints(1, &[0, 0, 1]).unwrap();
    assert!(matches!(
        witness_solve(3, 2, &[no_x0]),
        Err(HyperplaneError::MalformedConstraint { .. })
    ));
    let full = AffinePlane::from_ints(1, &[1, 1, 1]).unwrap();
    assert!(witness_solve(3, 2, &[full]).is_err());
    assert!(matches!(
        witness_solve(2, 1, &[]),
        Err(HyperplaneError::BadAlpha(2))
    ));
}

#[test]
fn contradiction_collapses_to_bottom() {
    let p = NormalForm::y(3);
    assert!(p.meet(&p.complement()).is_bottom());
    let a = NormalForm::plane(AffinePlane::from_ints(-1, &[1, 0, 0]).unwrap());
    let b = NormalForm::plane(AffinePlane::from_ints(-2, &[1, 0, 0]).unwrap());
    assert!(a.meet(&b).is_bottom());
}

#[test]
fn join_is_idempotent() {
    let y = NormalForm::y(3);
    assert_eq!(y.join(&y), y);
}

#[test]
fn cdelta_cylindrified_outside_delta_is_top() {
    let g = NormalForm::literal(3, Literal::cdelta(&[0, 1]));
    assert_eq!(g.cylindrify(2), NormalForm::top(3));
    assert_eq!(NormalForm::bottom(3).cylindrify(1), NormalForm::bottom(3));
}

#[test]
fn cylindrify_of_plane_with_axis_coefficient_is_top() {
    assert_eq!(NormalForm::y(4).cylindrify(2), NormalForm::top(4));
    let p = AffinePlane::from_ints(1, &[1, 0, 2]).unwrap();
    assert_eq!(
        NormalForm::plane(p.clone()).cylindrify(1),
        NormalForm::plane(p)
    );
}

#[test]
fn perturbation_leaves_w() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for alpha in 3..=5 {
        for _ in 0..50 {
            let (clause, z) = gen::random_g3_clause(&mut rng, alpha);
            let out = perturb_outside_w(alpha, &clause, &z).unwrap();
            assert!(clause.iter().all(|l| l.contains(&out)));
            assert!(!AffinePlane::w_plane(alpha).contains(&out));
        }
    }
}

#[test]
fn perturbation_rejects_l_literals() {
    let p = AffinePlane::from_ints(0, &[1, 0, 1]).unwrap();
    let clause = vec![Literal::plane(p)];
    assert!(matches!(
        perturb_outside_w(3, &clause, &point(&[0, 5, 0])),
        Err(HyperplaneError::NotG3(_))
    ));
}

#[test]
fn json_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let g = gen::random_normal_form(&mut rng, 4);
        let back = NormalForm::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
    }
    let frac = qf(-3, 7);
    assert_eq!(rational_from_json(&rational_to_json(&frac)).unwrap(), frac);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cylindrify_matches_oracle(seed in any::<u64>(), alpha in 3usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gen::random_normal_form(&mut rng, alpha);
        let j = (seed % alpha as u64) as usize;
        let c = g.cylindrify(j);
        for _ in 0..4 {
            let s = gen::point_near(&mut rng, &g);
            prop_assert_eq!(c.contains(&s), cylindrify_oracle(&g, j, &s));
        }
    }

    #[test]
    fn cylindrify_idempotent_and_expanding(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gen::random_normal_form(&mut rng, 3);
        let j = (seed % 3) as usize;
        let c = g.cylindrify(j);
        let s = gen::point_near(&mut rng, &g);
        prop_assert_eq!(c.cylindrify(j).contains(&s), c.contains(&s));
        if g.contains(&s) {
            prop_assert!(c.contains(&s));
        }
    }

    #[test]
    fn transpose_is_involution(seed in any::<u64>(), k in 0usize..4, l in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gen::random_normal_form(&mut rng, 4);
        let s = gen::point_near(&mut rng, &g);
        let back = g.transpose(k, l).transpose(k, l);
        prop_assert_eq!(back.contains(&s), g.contains(&s));
        let mut swapped = s.clone();
        swapped.swap(k, l);
        prop_assert_eq!(g.transpose(k, l).contains(&swapped), g.contains(&s));
    }

    #[test]
    fn complement_is_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gen::random_normal_form(&mut rng, 3);
        let s = gen::point_near(&mut rng, &g);
        prop_assert_eq!(g.complement().contains(&s), !g.contains(&s));
    }

    #[test]
    fn tau_matches_closed_form(seed in any::<u64>(), alpha in 3usize..=4, matching in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = gen::point_on_y(&mut rng, alpha);
        let mut t = gen::point_on_y(&mut rng, alpha);
        if matching {
            // Force r_1 = t_0 and r_i = t_i for i > 1, keeping t on y.
            for i in 2..alpha { t[i] = r[i].clone(); }
            t[0] = r[1].clone();
            let mut rest = q(0);
            for x in &t[2..] { rest += x; }
            t[1] = &t[0] + q(1) - rest;
        }
        let sym = tau(&NormalForm::singleton(&r), &NormalForm::singleton(&t));
        match tau_singletons(&r, &t) {
            None => prop_assert!(sym.is_bottom()),
            Some(s) => {
                prop_assert!(AffinePlane::w_plane(alpha).contains(&s));
                prop_assert_eq!(sym.as_point(), Some(s));
            }
        }
    }

    #[test]
    fn witness_avoids_everything(seed in any::<u64>(), alpha in 3usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 1 + (seed as usize) % (alpha - 1);
        let k = (seed >> 8) as usize % 4;
        let cs: Vec<AffinePlane> = (0..k).map(|_| gen::random_constraint(&mut rng, alpha, m)).collect();
        let s = witness_solve(alpha, m, &cs).unwrap();
        prop_assert!(AffinePlane::w_plane(alpha).contains(&s));
        prop_assert!(s[m + 1..].iter().all(|x| *x == q(0)));
        for c in &cs { prop_assert!(!c.contains(&s)); }
        for l in 0..=m { prop_assert!(!AffinePlane::q_plane(alpha, l).contains(&s)); }
    }
}

use std::collections::BTreeMap;

use cylgames::atom_structure::fixtures::{
    all_tuples, disjoint_union, full_set_algebra, one_atom, random_small,
};
use cylgames::atom_structure::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn set_algebra_point(s: &AtomStructure, t: &[usize]) -> usize {
    let name: String = t.iter().map(|d| d.to_string()).collect();
    s.atom_index(&format!("s{name}")).unwrap()
}

#[test]
fn one_atom_is_valid() {
    let s = one_atom(2);
    assert!(validate_atom_structure(&s).is_empty());
    assert!(check_ca_axioms(&s, 0).is_empty());
    let d = s.ca_apply(CaOp::Diag(0, 1), &[]).unwrap();
    assert_eq!(s.names(&d), vec!["a"]);
}

#[test]
fn missing_reflexive_pair_is_reported() {
    let v = json!({
        "dimension": 2,
        "atoms": ["a"],
        "identity": {"0,0": ["a"], "1,1": ["a"], "0,1": ["a"]},
        "accessibility": {"0": [], "1": [["a", "a"]]}
    });
    let s = AtomStructure::from_json(&v).unwrap();
    let report = validate_atom_structure(&s);
    assert!(report.iter().any(|r| r.axiom == "T_0 not reflexive"));
}

#[test]
fn non_transitive_relation_breaks_idempotence() {
    let v = json!({
        "dimension": 2,
        "atoms": ["a", "b", "c"],
        "identity": {"0,0": ["a","b","c"], "1,1": ["a","b","c"], "0,1": ["a","b","c"]},
        "accessibility": {
            "0": [["a","a"],["b","b"],["c","c"],["a","b"],["b","a"],["b","c"],["c","b"]],
            "1": [["a","a"],["b","b"],["c","c"]]
        }
    });
    let s = AtomStructure::from_json(&v).unwrap();
    let report = validate_atom_structure(&s);
    assert!(report.iter().any(|r| r.axiom == "T_0 not transitive"));
    let axioms = check_ca_axioms(&s, 0);
    assert!(axioms.iter().any(|r| r.axiom == "c_i c_i x = c_i x"));
}

#[test]
fn json_round_trip() {
    let s = full_set_algebra(2, 2, "s");
    let back = AtomStructure::from_json(&s.to_json().unwrap()).unwrap();
    assert_eq!(back.atoms(), s.atoms());
    for i in 0..2 {
        assert_eq!(back.access(i), s.access(i));
        for j in 0..2 {
            assert_eq!(back.diag(i, j), s.diag(i, j));
        }
    }
}

#[test]
fn set_algebras_and_unions_are_valid() {
    for n in 2..=3 {
        for base in 1..=2 {
            assert!(validate_atom_structure(&full_set_algebra(n, base, "s")).is_empty());
        }
        let u = disjoint_union(&[one_atom(n), full_set_algebra(n, 2, "s")]);
        assert!(validate_atom_structure(&u).is_empty());
    }
    // Large enough to use sampling.
    let big = full_set_algebra(3, 3, "s");
    assert!(check_ca_axioms(&big, 500).is_empty());
}

#[test]
fn cyl_basics() {
    let s = full_set_algebra(3, 2, "s");
    assert!(s.ca_apply(CaOp::Cyl(0), &[&s.bottom()]).unwrap().is_empty());
    assert!(s.ca_apply(CaOp::Cyl(3), &[&s.bottom()]).is_err());
}

#[test]
fn sc_word_examples() {
    assert_eq!(
        eval_sc_word(&[], 3).unwrap(),
        vec![Some(0), Some(1), Some(2)]
    );
    assert_eq!(
        eval_sc_word(&[ScToken::Subst(0, 1)], 3).unwrap(),
        vec![Some(1), Some(1), Some(2)]
    );
    assert_eq!(
        eval_sc_word(&[ScToken::Cyl(2)], 3).unwrap(),
        vec![Some(0), Some(1), None]
    );
    assert!(eval_sc_word(&[ScToken::Cyl(3)], 3).is_err());
}

#[test]
fn substitution_identity_and_elementary() {
    let s = full_set_algebra(3, 2, "s");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let x = CaElement::random(s.len(), &mut rng);
        assert_eq!(s.substitution_apply(&[0, 1, 2], &x).unwrap(), x);
        let direct = s.cyl(1, &x.meet(s.diag(1, 0)));
        assert_eq!(s.substitution_apply(&[0, 0, 2], &x).unwrap(), direct);
    }
    let one = one_atom(3);
    assert_eq!(
        one.substitution_apply(&[2, 2, 0], &one.top()).unwrap(),
        one.top()
    );
}

#[test]
fn full_support_permutation_is_rejected() {
    let s = full_set_algebra(3, 2, "s");
    assert!(matches!(
        s.substitution_apply(&[1, 2, 0], &s.top()),
        Err(AtomError::NoScratch(_))
    ));
}

/// In a full set algebra `s_tau X = {s : s o tau in X}`, and for a
/// permutation with scratch `m` the scratch coordinate is forgotten first.
fn set_oracle(s: &AtomStructure, n: usize, base: usize, tau: &[usize], x: &CaElement) -> CaElement {
    let prog = factor_substitution(tau, false).unwrap();
    let mut out = s.bottom();
    for t in all_tuples(n, base) {
        let moved: Vec<usize> = tau.iter().map(|&k| t[k]).collect();
        let hit = match prog.scratch {
            None => x.contains(set_algebra_point(s, &moved)),
            Some(m) => (0..base).any(|u| {
                let mut v = moved.clone();
                v[m] = u;
                x.contains(set_algebra_point(s, &v))
            }),
        };
        if hit {
            out.insert(set_algebra_point(s, &t));
        }
    }
    out
}

#[test]
fn substitution_matches_set_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (n, base) in [(3, 2), (4, 2), (3, 3)] {
        let s = full_set_algebra(n, base, "s");
        for _ in 0..60 {
            let tau: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let x = CaElement::random(s.len(), &mut rng);
            match s.substitution_apply(&tau, &x) {
                Ok(got) => assert_eq!(got, set_oracle(&s, n, base, &tau, &x), "tau {tau:?}"),
                Err(AtomError::NoScratch(_)) => {
                    let mut sorted = tau.clone();
                    sorted.sort();
                    assert_eq!(sorted, (0..n).collect::<Vec<_>>());
                    assert!(tau.iter().enumerate().all(|(i, &t)| i != t));
                }
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn additivity_on_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let s = random_small(&mut rng);
        let n = s.dimension();
        for _ in 0..5 {
            let tau: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            match s.additivity_check(&tau) {
                Ok(b) => assert!(b),
                Err(AtomError::NoScratch(_)) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn from_parts_rejects_duplicates() {
    let r = AtomStructure::from_parts(2, vec!["a".into(), "a".into()], BTreeMap::new(), vec![]);
    assert!(matches!(r, Err(AtomError::DuplicateAtom(_))));
}

fn oracle_word(word: &[ScToken], n: usize) -> Vec<Option<usize>> {
    // Recursive definition, peeling the last token.
    match word.split_last() {
        None => (0..n).map(Some).collect(),
        Some((ScToken::Subst(i, j), rest)) => {
            let w = oracle_word(rest, n);
            (0..n).map(|k| if k == *i { w[*j] } else { w[k] }).collect()
        }
        Some((ScToken::Cyl(c), rest)) => {
            let w = oracle_word(rest, n);
            (0..n).map(|k| if k == *c { None } else { w[k] }).collect()
        }
    }
}

proptest! {
    #[test]
    fn sc_words_match_recursive_oracle(raw in proptest::collection::vec((0usize..3, 0usize..4, 0usize..4), 0..=6)) {
        let n = 4;
        let word: Vec<ScToken> = raw.iter().map(|&(k, i, j)| if k == 0 { ScToken::Cyl(i) } else { ScToken::Subst(i, j) }).collect();
        prop_assert_eq!(eval_sc_word(&word, n).unwrap(), oracle_word(&word, n));
    }

    #[test]
    fn cylindrification_laws(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_small(&mut rng);
        let len = s.len();
        let i = rng.gen_range(0..s.dimension());
        let x = CaElement::random(len, &mut rng);
        let y = CaElement::random(len, &mut rng);
        let cx = s.cyl(i, &x);
        prop_assert!(x.is_subset(&cx));
        prop_assert_eq!(s.cyl(i, &cx), cx.clone());
        prop_assert_eq!(s.cyl(i, &x.join(&y)), cx.join(&s.cyl(i, &y)));
        let cy = s.cyl(i, &y);
        prop_assert_eq!(s.cyl(i, &x.meet(&cy)), cx.meet(&cy));
    }
}

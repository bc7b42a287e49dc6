use std::collections::BTreeMap;
use std::ops::ControlFlow;

use cylgames::atom_structure::fixtures::{full_set_algebra, one_atom, random_raw};
use cylgames::atom_structure::AtomStructure;
use cylgames::games::*;
use cylgames::networks::{validate_hypernetwork, NodeMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BUDGET: usize = 20_000;

fn after_initial(g: &ExplicitGame, a: usize) -> ExState {
    collect_responses(g, &g.initial_state(), &ExMove::Initial(a)).remove(0)
}

#[test]
fn initial_moves_are_atoms() {
    let s = full_set_algebra(2, 2, "s");
    let g = ExplicitGame {
        s: &s,
        kind: GameKind::H,
    };
    let moves = collect_moves(&g, &g.initial_state(), false);
    assert_eq!(moves, (0..4).map(ExMove::Initial).collect::<Vec<_>>());
}

#[test]
fn f_game_with_m_equal_n_only_reuses() {
    let s = full_set_algebra(2, 2, "s");
    let g = ExplicitGame {
        s: &s,
        kind: GameKind::F { m: 2 },
    };
    let st = after_initial(&g, 1);
    let moves = collect_moves(&g, &st, false);
    assert!(!moves.is_empty());
    for m in moves {
        match m {
            ExMove::Cylindrifier { k, .. } => assert!(k < 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[test]
fn restriction_excludes_moves_with_witnesses() {
    let s = full_set_algebra(2, 2, "s");
    let g = ExplicitGame {
        s: &s,
        kind: GameKind::H,
    };
    let a = s.atom_index("s01").unwrap();
    let st = after_initial(&g, a);
    // Node 1 already witnesses s01 at position 1 of face (0).
    let mv = ExMove::Cylindrifier {
        net: 0,
        face: vec![0],
        k: 2,
        b: a,
        l: 1,
    };
    assert!(g.is_move_legal(&st, &mv, false));
    assert!(!g.is_move_legal(&st, &mv, true));
    let fresh = ExMove::Cylindrifier {
        net: 0,
        face: vec![0],
        k: 2,
        b: s.atom_index("s00").unwrap(),
        l: 1,
    };
    assert!(!g.is_move_legal(&st, &fresh, true), "node 0 witnesses s00");
    assert!(!g.is_move_legal(
        &st,
        &ExMove::Cylindrifier {
            net: 0,
            face: vec![0],
            k: 3,
            b: a,
            l: 1
        },
        false
    ));
}

#[test]
fn transformation_has_one_response() {
    let s = full_set_algebra(2, 2, "s");
    let g = ExplicitGame {
        s: &s,
        kind: GameKind::H,
    };
    let st = after_initial(&g, s.atom_index("s01").unwrap());
    let theta: NodeMap = [(0, 1), (2, 0)].into_iter().collect();
    let mv = ExMove::Transformation { net: 0, theta };
    assert!(g.is_move_legal(&st, &mv, true));
    let rs = collect_responses(&g, &st, &mv);
    assert_eq!(rs.len(), 1);
    assert_eq!(rs[0].nets.len(), 2);
    assert!(validate_hypernetwork(&s, &rs[0].nets[1]).is_empty());
    let non_injective = ExMove::Transformation {
        net: 0,
        theta: [(0, 1), (1, 0), (2, 1)].into_iter().collect(),
    };
    let not_onto = ExMove::Transformation {
        net: 0,
        theta: [(0, 1)].into_iter().collect(),
    };
    assert!(!g.is_move_legal(&st, &not_onto, false));
    assert!(g.is_move_legal(&st, &non_injective, false));
    assert!(!g.is_move_legal(&st, &non_injective, true));
}

#[test]
fn one_atom_cylindrifier_has_one_completion() {
    let s = one_atom(3);
    let g = ExplicitGame {
        s: &s,
        kind: GameKind::H,
    };
    let st = after_initial(&g, 0);
    let mv = ExMove::Cylindrifier {
        net: 0,
        face: vec![0, 1],
        k: 3,
        b: 0,
        l: 2,
    };
    let rs = collect_responses(&g, &st, &mv);
    assert_eq!(rs.len(), 1);
    assert!(validate_hypernetwork(&s, &rs[0].nets[1]).is_empty());
}

#[test]
fn locked_demand_has_no_response() {
    // b's diagonal profile clashes with the face.
    let v = serde_json::json!({
        "dimension": 2,
        "atoms": ["a", "b"],
        "identity": {"0,0": ["a","b"], "1,1": ["a","b"], "0,1": ["a"]},
        "accessibility": {"0": [["a","a"],["b","b"],["a","b"],["b","a"]], "1": [["a","a"],["b","b"]]}
    });
    let s = AtomStructure::from_json(&v).unwrap();
    let g = ExplicitGame {
        s: &s,
        kind: GameKind::H,
    };
    // b sits outside E_01 and T_1 is the identity, so (0,0) would have to
    // carry b as well.
    assert!(collect_responses(&g, &g.initial_state(), &ExMove::Initial(1)).is_empty());
    assert_eq!(
        collect_responses(&g, &g.initial_state(), &ExMove::Initial(0)).len(),
        1
    );
    assert_eq!(solve(&g, 1, false, BUDGET).unwrap().winner, Player::A);
}

#[test]
fn one_atom_eloise_wins() {
    for n in 2..=3 {
        let s = one_atom(n);
        let f = ExplicitGame {
            s: &s,
            kind: GameKind::F { m: n + 2 },
        };
        assert_eq!(solve(&f, 5, false, BUDGET).unwrap().winner, Player::E);
        let h = ExplicitGame {
            s: &s,
            kind: GameKind::H,
        };
        assert_eq!(solve(&h, 3, true, BUDGET).unwrap().winner, Player::E);
    }
    let s = one_atom(2);
    let h = ExplicitGame {
        s: &s,
        kind: GameKind::H,
    };
    assert_eq!(solve(&h, 4, false, BUDGET).unwrap().winner, Player::E);
}

#[test]
fn budget_is_reported() {
    let s = full_set_algebra(2, 2, "s");
    let h = ExplicitGame {
        s: &s,
        kind: GameKind::H,
    };
    assert!(matches!(
        solve(&h, 4, false, 10),
        Err(GameError::Budget { budget: 10, .. })
    ));
}

fn relabelled(s: &AtomStructure, rng: &mut ChaCha8Rng) -> AtomStructure {
    let mut v = s.to_json().unwrap();
    let mut names: Vec<String> = s.atoms().to_vec();
    let mut fresh: Vec<String> = (0..names.len()).map(|i| format!("q{i}")).collect();
    for i in (1..fresh.len()).rev() {
        fresh.swap(i, rng.gen_range(0..=i));
    }
    let map: BTreeMap<String, String> = names.drain(..).zip(fresh).collect();
    fn walk(v: &mut serde_json::Value, map: &BTreeMap<String, String>) {
        match v {
            serde_json::Value::String(s) => {
                if let Some(t) = map.get(s) {
                    *s = t.clone();
                }
            }
            serde_json::Value::Array(a) => a.iter_mut().for_each(|x| walk(x, map)),
            serde_json::Value::Object(o) => o.values_mut().for_each(|x| walk(x, map)),
            _ => {}
        }
    }
    walk(&mut v, &map);
    AtomStructure::from_json(&v).unwrap()
}

#[test]
fn verdicts_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..8 {
        let s = random_raw(&mut rng, 2, 2 + i % 3);
        let copy = relabelled(&s, &mut rng);
        for kind in [GameKind::F { m: 4 }, GameKind::H] {
            let g = ExplicitGame { s: &s, kind };
            let g2 = ExplicitGame { s: &copy, kind };
            let mut prev = Player::E;
            for r in 1..=3 {
                let w = solve(&g, r, true, BUDGET).unwrap().winner;
                // Antitone for ∃: once ∀ wins he keeps winning.
                if prev == Player::A {
                    assert_eq!(w, Player::A);
                }
                prev = w;
                assert_eq!(
                    solve(&g2, r, true, BUDGET).unwrap().winner,
                    w,
                    "isomorphic copy"
                );
                assert_eq!(
                    solve(&g, r, false, BUDGET).unwrap().winner,
                    w,
                    "restriction equivalence"
                );
            }
        }
    }
}

#[test]
fn certificates_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..6 {
        let s = random_raw(&mut rng, 2, 2 + i % 3);
        let g = ExplicitGame {
            s: &s,
            kind: GameKind::H,
        };
        let sol = solve(&g, 3, true, BUDGET).unwrap();
        let mut a = SolverAbelard::<ExplicitGame>::new(true, BUDGET, sol.memo.clone());
        let mut e = SolverEloise::<ExplicitGame>::new(true, BUDGET, sol.memo.clone());
        let (trace, _) = run_match(&g, "H", &mut a, &mut e, 3, true);
        assert_eq!(trace.winner, sol.winner, "{}", trace.halt_reason);
        if sol.winner == Player::E {
            let mut ra = RandomAbelard {
                rng: ChaCha8Rng::seed_from_u64(i as u64),
                restricted: true,
            };
            let mut e = SolverEloise::<ExplicitGame>::new(true, BUDGET, sol.memo.clone());
            let (trace, last) = run_match(&g, "H", &mut ra, &mut e, 3, true);
            assert_eq!(trace.winner, Player::E, "{}", trace.halt_reason);
            for h in &last.nets {
                assert!(validate_hypernetwork(&s, h).is_empty());
            }
            assert_eq!(trace.to_json()["winner"], "E");
        }
    }
}

#[test]
fn illegal_moves_lose() {
    struct Cheat;
    impl<'a> AbelardStrategy<ExplicitGame<'a>> for Cheat {
        fn choose(&mut self, _: &ExplicitGame<'a>, _: &ExState, _: usize) -> Option<ExMove> {
            Some(ExMove::Amalgamation { m: 0, n: 1 })
        }
    }
    let s = one_atom(2);
    let g = ExplicitGame {
        s: &s,
        kind: GameKind::H,
    };
    let (trace, _) = run_match(&g, "H", &mut Cheat, &mut FirstEloise, 2, false);
    assert_eq!(trace.winner, Player::E);
    assert!(trace.halt_reason.contains("illegal"));
}

#[test]
fn responses_validate() {
    let s = full_set_algebra(2, 2, "s");
    let g = ExplicitGame {
        s: &s,
        kind: GameKind::H,
    };
    let st = after_initial(&g, s.atom_index("s01").unwrap());
    let _ = g.abelard_moves(&st, false, &mut |mv| {
        for r in collect_responses(&g, &st, &mv) {
            for h in &r.nets {
                assert!(validate_hypernetwork(&s, h).is_empty(), "{mv:?}");
            }
        }
        ControlFlow::Continue(())
    });
}

#[test]
fn move_json_round_trip() {
    let s = full_set_algebra(2, 2, "s");
    let g = ExplicitGame {
        s: &s,
        kind: GameKind::H,
    };
    let st = after_initial(&g, 1);
    for mv in collect_moves(&g, &st, false).into_iter().step_by(7) {
        assert_eq!(g.move_from_json(&g.move_json(&mv)).unwrap(), mv);
    }
}

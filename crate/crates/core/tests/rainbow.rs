use cylgames::rainbow::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

use Colour::*;

fn small() -> RainbowParams {
    RainbowParams {
        n: 3,
        green_low: 0,
        red_bound: 1,
        yellow_universe: 1,
    }
}

#[test]
fn forbidden_triple_examples() {
    assert!(forbidden_triple(Yellow, Yellow, Yellow));
    assert!(forbidden_triple(Yellow, Black, Yellow));
    assert!(!forbidden_triple(Yellow, Black, Black));
    assert!(forbidden_triple(GreenI(1), GreenSuper(0), GreenSuper(-1)));
    assert!(forbidden_triple(GreenI(1), GreenI(1), White));
    assert!(!forbidden_triple(GreenI(1), GreenI(1), Black));
    assert!(forbidden_triple(GreenSuper(0), GreenSuper(-1), White));
    assert!(!forbidden_triple(GreenSuper(-1), GreenSuper(0), Red(1, 2)));
    assert!(!forbidden_triple(GreenSuper(-1), GreenSuper(0), Red(2, 1)));
    assert!(forbidden_triple(GreenSuper(0), GreenSuper(0), Red(1, 2)));
    assert!(!forbidden_triple(GreenSuper(0), GreenSuper(0), Red(1, 1)));
    assert!(forbidden_triple(GreenSuper(-1), GreenSuper(0), Red(1, 1)));
    assert!(!forbidden_triple(Red(0, 1), Red(1, 2), Red(0, 2)));
    assert!(forbidden_triple(Red(0, 1), Red(1, 2), Red(1, 2)));
    let f = WhiteF(WhiteFn::new(&[(-1, 0)]).unwrap());
    assert!(!forbidden_triple(GreenSuper(-1), Yellow, f));
    assert!(forbidden_triple(GreenSuper(0), Yellow, f));
    assert!(WhiteFn::new(&[(-1, 1), (0, 0)]).is_none());
}

#[test]
fn palette_sizes() {
    let p = RainbowParams::minimal();
    // Empty map, 2*2 singletons and one increasing pair.
    assert_eq!(p.white_fns().len(), 6);
    assert_eq!(p.palette().len(), 1 + 2 + 1 + 6 + 1 + 1 + 4);
    assert!(p.validate().is_ok());
    assert!(RainbowParams { n: 2, ..p }.validate().is_err());
    assert_eq!(RainbowParams::from_json(&p.to_json()).unwrap(), p);
}

fn zero_cone() -> ColouredGraph {
    let mut g = ColouredGraph::with_nodes(0..3);
    g.set_edge(0, 1, White);
    g.set_edge(0, 2, GreenSuper(0));
    g.set_edge(1, 2, GreenI(1));
    g.set_shade(vec![0, 1], Shade::All);
    g.set_shade(vec![1, 0], Shade::Set(0));
    g
}

#[test]
fn zero_cone_membership() {
    let p = RainbowParams::default();
    let g = zero_cone();
    assert!(is_j_member(&g, &p), "{:?}", check_j_membership(&g, &p));
    let cones = find_cones(&g, 3);
    assert_eq!(
        cones,
        vec![Cone {
            base: vec![0, 1],
            apex: 2,
            tint: 0
        }]
    );
    let mut bad = g.clone();
    bad.set_shade(vec![0, 1], Shade::Set(0b10));
    let v = check_j_membership(&bad, &p);
    assert!(v.iter().any(|v| v.item == 4));
    let mut missing = g.clone();
    missing.tuples.remove(&vec![1, 0]);
    assert!(check_j_membership(&missing, &p).iter().any(|v| v.item == 3));
    let mut green_shaded = g;
    green_shaded.set_shade(vec![0, 2], Shade::All);
    assert!(check_j_membership(&green_shaded, &p)
        .iter()
        .any(|v| v.item == 3));
}

#[test]
fn two_apexes_over_one_base() {
    let p = RainbowParams::default();
    let mut g = zero_cone();
    g.add_node(3);
    g.set_edge(0, 3, GreenSuper(-1));
    g.set_edge(1, 3, GreenI(1));
    g.set_edge(2, 3, Red(0, 1));
    g.set_shade(vec![2, 3], Shade::Set(0));
    g.set_shade(vec![3, 2], Shade::Set(0));
    assert!(is_j_member(&g, &p), "{:?}", check_j_membership(&g, &p));
    assert_eq!(find_cones(&g, 3).len(), 2);
    g.set_edge(2, 3, White);
    assert!(check_j_membership(&g, &p).iter().any(|v| v.item == 2));
}

#[test]
fn json_round_trip() {
    let g = zero_cone();
    assert_eq!(ColouredGraph::from_json(&g.to_json()).unwrap(), g);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = RainbowParams::default();
    for _ in 0..20 {
        if let Some(g) = random_j_member(&p, 4, &mut rng) {
            assert!(is_j_member(&g, &p));
            assert_eq!(ColouredGraph::from_json(&g.to_json()).unwrap(), g);
        }
    }
}

#[test]
fn atom_of_tuple_and_encoding() {
    let g = zero_cone();
    let a = RainbowAtom::of_tuple(&g, &[2, 0, 2]);
    assert_eq!(a.pattern, vec![0, 1, 0]);
    assert_eq!(a.graph.edge(0, 1), Some(GreenSuper(0)));
    assert!(a.in_diag(0, 2));
    assert!(!a.in_diag(0, 1));
    assert_eq!(decode_atom(&a.encode(), 3), Some(a.clone()));
    let b = RainbowAtom::of_tuple(&g, &[2, 0, 1]);
    assert!(a.t_related(2, &b));
    assert!(!a.t_related(1, &b));
    assert_eq!(decode_atom(&b.encode(), 3), Some(b));
}

#[test]
fn surjection_pattern_counts() {
    // Stirling numbers of the second kind.
    assert_eq!(surjection_patterns(3, 1).len(), 1);
    assert_eq!(surjection_patterns(3, 2).len(), 3);
    assert_eq!(surjection_patterns(3, 3).len(), 1);
    assert_eq!(surjection_patterns(4, 2).len(), 7);
}

fn small_structure() -> &'static cylgames::atom_structure::AtomStructure {
    static S: OnceLock<cylgames::atom_structure::AtomStructure> = OnceLock::new();
    S.get_or_init(|| build_rainbow_atom_structure(&small()).unwrap())
}

#[test]
fn explicit_small_build() {
    let s = small_structure();
    assert_eq!(s.len(), count_atoms(&small()).unwrap());
    // Every atom id decodes to a J-member and re-encodes identically.
    for (i, id) in s.atoms().iter().enumerate().step_by(97) {
        let a = decode_atom(id, 3).unwrap();
        assert!(is_j_member(&a.graph, &small()));
        assert_eq!(&a.encode(), id, "atom {i}");
    }
    let report = cylgames::atom_structure::check_ca_axioms(s, 200);
    assert!(report.is_empty(), "{:?}", &report[..report.len().min(3)]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn forbidden_triple_is_symmetric(a in 0usize..40, b in 0usize..40, c in 0usize..40) {
        let pal = RainbowParams { n: 4, green_low: -2, red_bound: 3, yellow_universe: 2 }.palette();
        let (x, y, z) = (pal[a % pal.len()], pal[b % pal.len()], pal[c % pal.len()]);
        let v = forbidden_triple(x, y, z);
        for (p, q, r) in [(x, z, y), (y, x, z), (y, z, x), (z, x, y), (z, y, x)] {
            prop_assert_eq!(forbidden_triple(p, q, r), v);
        }
    }

    #[test]
    fn random_members_have_consistent_cones(seed in any::<u64>(), k in 2usize..6) {
        let p = RainbowParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some(g) = random_j_member(&p, k, &mut rng) {
            prop_assert!(check_j_membership(&g, &p).is_empty());
            for cone in find_cones(&g, 3) {
                prop_assert!(g.shade(&cone.base).unwrap().contains(cone.tint));
            }
        }
    }
}

#[test]
fn atom_counts_are_frozen() {
    // Cross-checked against an independent enumeration.
    assert_eq!(count_atoms(&small()).unwrap(), 172_213);
    assert_eq!(count_atoms(&RainbowParams::minimal()).unwrap(), 1_693_747);
}

//! Acceptance suite: one PASS/FAIL line per headline property.
//!
//! Set `ACCEPTANCE_STRICT=1` to make any FAIL line a non-zero exit.

use std::ops::ControlFlow;
use std::time::Instant;

use cylgames::atom_structure::fixtures::{full_set_algebra, one_atom, random_raw, random_small};
use cylgames::atom_structure::*;
use cylgames::games::*;
use cylgames::hyperplane::*;
use cylgames::networks::*;
use cylgames::rainbow::*;
use cylgames::rainbow_games::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = f();
    println!(
        "{} {name} ({:.1}s): {}",
        if o.pass { "PASS" } else { "FAIL" },
        t.elapsed().as_secs_f64(),
        o.detail
    );
    o.pass
}

fn rainbow_abelard_wins() -> Outcome {
    let p = RainbowParams::default();
    let game = RainbowGame::new(p, GameKind::F { m: p.n + 2 });
    let mut notes = vec![format!(
        "{} colours and {} shades, played on the lazy graph game",
        p.palette().len(),
        p.shades().len()
    )];
    let mut ok = true;
    for restricted in [true, false] {
        match solve(&game, 6, restricted, 100_000) {
            Ok(s) => {
                ok &= s.winner == Player::A;
                notes.push(format!("solve(restricted={restricted}) -> {:?}", s.winner));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("solve(restricted={restricted}): {e}"));
            }
        }
    }
    let script = match ScriptAbelard::new(&p, 6) {
        Ok(s) => s,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: format!("{}; script: {e}", notes.join("; ")),
            }
        }
    };
    let mut eloise = ScriptSearchEloise::new(script.clone(), 100_000);
    let (trace, _) = run_match(&game, "F5", &mut script.clone(), &mut eloise, 6, true);
    ok &= trace.winner == Player::A;
    let last = trace
        .steps
        .last()
        .map(|s| s.state["nets"][0]["graph"].clone());
    let apex_edges: Vec<String> = last
        .and_then(|g| ColouredGraph::from_json(&g).ok())
        .map(|g| {
            let base = p.n as u32 - 1;
            g.edges
                .iter()
                .filter(|((u, v), _)| *u >= base && *v >= base)
                .map(|((u, v), c)| format!("({u},{v})={c}"))
                .collect()
        })
        .unwrap_or_default();
    notes.push(format!(
        "script vs searching ∃: winner {:?} ({}), apex edges at the end {}",
        trace.winner,
        trace.halt_reason,
        apex_edges.join(" ")
    ));
    Outcome {
        pass: ok,
        detail: notes.join("; "),
    }
}

fn spaced_params() -> RainbowParams {
    RainbowParams {
        n: 3,
        green_low: -3,
        red_bound: 244,
        yellow_universe: 8,
    }
}

fn random_lines(
    game: &RainbowGame,
    rounds: usize,
    seeds: std::ops::Range<u64>,
) -> (usize, Vec<String>) {
    let p = spaced_params();
    let mut bad = Vec::new();
    let mut count = 0;
    for seed in seeds {
        count += 1;
        let mut eloise = RainbowEloise::new(p, rounds).expect("spacing fits");
        let mut abelard = RandomRainbowAbelard::new(ChaCha8Rng::seed_from_u64(seed), p);
        let play = play_h(game, &mut abelard, &mut eloise, rounds);
        let report = check_strategy_invariants(&play);
        if play.winner != Player::E {
            bad.push(format!("seed {seed}: ∃ lost ({})", play.halt_reason));
        } else if let Some(f) = report.failures.first() {
            bad.push(format!(
                "seed {seed}: round {} {} {}",
                f.round, f.property, f.detail
            ));
        }
    }
    (count, bad)
}

fn rainbow_eloise_survives() -> Outcome {
    let p = spaced_params();
    let game = RainbowGame::new(p, GameKind::H);
    let mut ok = true;
    let mut notes = Vec::new();
    for r in 1..=3 {
        let eloise = RainbowEloise::new(p, r).expect("spacing fits");
        let out = exhaustive_abelard(&game, &eloise, r, 3_000);
        ok &= out.complete && out.failure.is_none();
        notes.push(format!(
            "exhaustive r={r}: {} lines, {}{}",
            out.lines,
            if out.complete {
                "complete"
            } else {
                "incomplete (∀ move budget 3000)"
            },
            out.failure
                .map_or(String::new(), |f| format!(", failure {f}"))
        ));
    }
    for r in 1..=3 {
        let (count, bad) = random_lines(&game, r, 0..100);
        ok &= bad.is_empty();
        notes.push(format!("random r={r}: {count} lines, {} bad", bad.len()));
    }
    let (count, bad) = random_lines(&game, 4, 0..1000);
    ok &= bad.is_empty();
    notes.push(format!(
        "random r=4: {count} lines, {} bad{}",
        bad.len(),
        bad.first().map_or(String::new(), |b| format!(" ({b})"))
    ));
    Outcome {
        pass: ok,
        detail: notes.join("; "),
    }
}

/// Maps `n -> n` that factor into elementary substitutions.
fn random_taus<R: Rng>(rng: &mut R, n: usize, count: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    while out.len() < count {
        let tau: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        if factor_substitution(&tau, false).is_ok() {
            out.push(tau);
        }
    }
    out
}

fn structure_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut named: Vec<(String, AtomStructure)> = (2..=4)
        .map(|n| (format!("one_atom({n})"), one_atom(n)))
        .collect();
    named.push(("set(2,2)".into(), full_set_algebra(2, 2, "s")));
    let mut drawn = 0;
    while named.len() < 4 + 50 {
        drawn += 1;
        let s = random_small(&mut rng);
        if validate_atom_structure(&s).is_empty() {
            named.push((format!("random#{drawn}"), s));
        }
    }
    let mut bad = Vec::new();
    let mut checked = 0;
    let mut check = |name: &str, s: &AtomStructure, rng: &mut ChaCha8Rng| {
        checked += 1;
        let v = check_ca_axioms(s, 10_000);
        if let Some(first) = v.first() {
            bad.push(format!("{name}: {} violations, first {first}", v.len()));
        }
        for tau in random_taus(rng, s.dimension(), 20) {
            match s.additivity_check(&tau) {
                Ok(true) => {}
                Ok(false) => bad.push(format!("{name}: additivity fails for {tau:?}")),
                Err(e) => bad.push(format!("{name}: {tau:?}: {e}")),
            }
        }
    };
    for (name, s) in &named {
        check(name, s, &mut rng);
    }
    match build_rainbow_atom_structure(&RainbowParams::minimal()) {
        Ok(s) => check(
            &format!("minimal rainbow ({} atoms, 10^4 samples)", s.len()),
            &s,
            &mut rng,
        ),
        Err(e) => bad.push(format!("minimal rainbow: {e}")),
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "{checked} structures, 20 substitutions each; {}",
            if bad.is_empty() {
                "zero violations".to_string()
            } else {
                bad.join("; ")
            }
        ),
    }
}

fn translation_round_trips() -> Outcome {
    let p = RainbowParams::minimal();
    let space = RainbowSpace { params: p };
    let mut bad = Vec::new();
    let mut counts = Vec::new();
    let check = |g: &ColouredGraph, bad: &mut Vec<String>| {
        let net = graph_to_network(g, p.n);
        match network_to_graph(&net) {
            Ok(back) if back == *g => {
                if graph_to_network(&back, p.n) != net {
                    bad.push(format!("network differs after round trip: {}", g.to_json()));
                }
            }
            Ok(_) => bad.push(format!("graph differs after round trip: {}", g.to_json())),
            Err(e) => bad.push(format!("{e}: {}", g.to_json())),
        }
    };
    for k in 1..=p.n {
        let mut count = 0usize;
        let _ = enumerate_j_members(&p, k, &mut |g| {
            count += 1;
            check(g, &mut bad);
            if bad.len() < 5 {
                ControlFlow::Continue(())
            } else {
                ControlFlow::Break(())
            }
        });
        counts.push(format!("k={k}: {count}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut random = 0;
    while random < 100 {
        let k = rng.gen_range(1..=5);
        let Some(g) = random_j_member(&p, k, &mut rng) else {
            continue;
        };
        random += 1;
        let net = graph_to_network(&g, p.n);
        if let Some(v) = validate_network(&space, &net).first() {
            bad.push(format!("invalid network from {}: {v:?}", g.to_json()));
        }
        check(&g, &mut bad);
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "J-members {}, {random} random networks; {}",
            counts.join(", "),
            if bad.is_empty() {
                "all exact".to_string()
            } else {
                bad.join("; ")
            }
        ),
    }
}

fn hyperplane_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = Vec::new();
    for alpha in 3..=5 {
        for _ in 0..1000 {
            let g = gen::random_normal_form(&mut rng, alpha);
            let j = rng.gen_range(0..alpha);
            let s = gen::point_near(&mut rng, &g);
            if g.cylindrify(j).contains(&s) != cylindrify_oracle(&g, j, &s) {
                bad.push(format!(
                    "cylindrify alpha={alpha} j={j} at {}",
                    point_to_json(&s)
                ));
            }
        }
    }
    let mut pairs = vec![(point(&[1, 2, 0]), point(&[2, 3, 0]))];
    while pairs.len() < 100 {
        let alpha = rng.gen_range(3..=4);
        let r = gen::point_on_y(&mut rng, alpha);
        let mut t = gen::point_on_y(&mut rng, alpha);
        if rng.gen_bool(0.5) {
            // r_1 = t_0 and r_i = t_i beyond 1, with t kept on y.
            t[2..alpha].clone_from_slice(&r[2..alpha]);
            t[0] = r[1].clone();
            let rest: Q = t[2..].iter().sum();
            t[1] = &t[0] + q(1) - rest;
        }
        pairs.push((r, t));
    }
    let mut defined = 0;
    for (i, (r, t)) in pairs.iter().enumerate() {
        let sym = tau(&NormalForm::singleton(r), &NormalForm::singleton(t));
        let closed = tau_singletons(r, t);
        if i == 0 && closed != Some(point(&[1, 3, 0])) {
            bad.push(format!("worked pair gives {closed:?}"));
        }
        match closed {
            None if sym.is_bottom() => {}
            Some(s)
                if AffinePlane::w_plane(r.len()).contains(&s)
                    && sym.as_point() == Some(s.clone()) =>
            {
                defined += 1
            }
            _ => bad.push(format!("tau at {} {}", point_to_json(r), point_to_json(t))),
        }
    }
    for _ in 0..500 {
        let alpha = rng.gen_range(3..=6);
        let m = rng.gen_range(1..alpha);
        let k = rng.gen_range(0..=4);
        let cs: Vec<AffinePlane> = (0..k)
            .map(|_| gen::random_constraint(&mut rng, alpha, m))
            .collect();
        match witness_solve(alpha, m, &cs) {
            Ok(s) => {
                let ok = AffinePlane::w_plane(alpha).contains(&s)
                    && s[m + 1..].iter().all(|x| *x == q(0))
                    && cs.iter().all(|c| !c.contains(&s))
                    && (0..=m).all(|l| !AffinePlane::q_plane(alpha, l).contains(&s));
                if !ok {
                    bad.push(format!(
                        "witness alpha={alpha} m={m}: {}",
                        point_to_json(&s)
                    ));
                }
            }
            Err(e) => bad.push(format!("witness alpha={alpha} m={m}: {e}")),
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "3000 cylindrify triples, 100 tau pairs ({defined} defined, worked pair -> (1,3,0)), 500 witnesses; {}",
            if bad.is_empty() { "all agree".to_string() } else { bad.join("; ") }
        ),
    }
}

fn restriction_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut named: Vec<(String, AtomStructure)> = vec![
        ("one_atom(2)".into(), one_atom(2)),
        ("one_atom(3)".into(), one_atom(3)),
        ("set(2,2)".into(), full_set_algebra(2, 2, "s")),
    ];
    for i in 0..20 {
        let n = 2 + i % 2;
        let atoms = rng.gen_range(2..=5);
        named.push((
            format!("raw#{i}(n={n},{atoms} atoms)"),
            random_raw(&mut rng, n, atoms),
        ));
    }
    let (mut both, mut skipped) = (0, 0);
    let mut winners = [0usize; 2];
    let mut bad = Vec::new();
    for (name, s) in &named {
        let game = ExplicitGame {
            s,
            kind: GameKind::H,
        };
        for r in 1..=3 {
            let a = solve(&game, r, true, 2_000);
            let b = solve(&game, r, false, 2_000);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    both += 1;
                    winners[(a.winner == Player::A) as usize] += 1;
                    if a.winner != b.winner {
                        bad.push(format!("{name} r={r}: {:?} vs {:?}", a.winner, b.winner));
                    }
                }
                _ => skipped += 1,
            }
        }
    }
    Outcome {
        pass: bad.is_empty() && both > 0,
        detail: format!(
            "{both} instances solved both ways (∃ {}, ∀ {}), {skipped} over budget; {}",
            winners[0],
            winners[1],
            if bad.is_empty() {
                "same winner".to_string()
            } else {
                bad.join("; ")
            }
        ),
    }
}

fn main() {
    let results = [
        run("rainbow ∀ wins F^(n+2) in 6 rounds", rainbow_abelard_wins),
        run("rainbow ∃ strategy survives H", rainbow_eloise_survives),
        run("atom structure axioms and additivity", structure_axioms),
        run(
            "graph/network translation round trips",
            translation_round_trips,
        ),
        run("hyperplane oracle equivalence", hyperplane_oracles),
        run(
            "restricted and unrestricted ∀ agree",
            restriction_equivalence,
        ),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

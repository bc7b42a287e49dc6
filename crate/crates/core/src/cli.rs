//! Command-line front end. Machine output is JSON on stdout, diagnostics go
//! to stderr; exit 0 on success, 1 on a negative verdict, 2 on bad usage or
//! input.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::atom_structure::{validate_atom_structure, AtomStructure};
use crate::games::*;
use crate::hyperplane::{plane_from_json, point_to_json, witness_solve, NormalForm};
use crate::rainbow::*;
use crate::rainbow_games::*;
use crate::session::*;

#[derive(Parser, Debug)]
#[command(
    name = "cylgames",
    about = "Atom structures, rainbow graphs, network games and hyperplane algebra"
)]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Atom structure files.
    Structure {
        #[command(subcommand)]
        cmd: StructureCmd,
    },
    /// Rainbow atom structures.
    Rainbow {
        #[command(subcommand)]
        cmd: RainbowCmd,
    },
    /// Coloured graphs.
    Graph {
        #[command(subcommand)]
        cmd: GraphCmd,
    },
    /// Network games.
    Game {
        #[command(subcommand)]
        cmd: GameCmd,
    },
    /// The hyperplane calculus.
    Hyperplane {
        #[command(subcommand)]
        cmd: HyperplaneCmd,
    },
    /// Run the HTTP game service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Listen on all interfaces instead of loopback only.
        #[arg(long)]
        open: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand, Debug)]
enum StructureCmd {
    Validate { file: PathBuf },
}

#[derive(Subcommand, Debug)]
enum RainbowCmd {
    Build {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, allow_hyphen_values = true, default_value_t = -6)]
        green_low: i32,
        #[arg(long, default_value_t = 16)]
        red_bound: u32,
        #[arg(long, default_value_t = 8)]
        yellow_universe: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum GraphCmd {
    /// Check J-membership; the file may carry `params` next to the graph.
    CheckJ {
        file: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum GameCmd {
    Solve {
        /// Atom structure JSON or rainbow parameter JSON.
        #[arg(long)]
        structure: PathBuf,
        #[arg(long, default_value = "F")]
        kind: String,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        restricted: bool,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
    },
    /// ∀'s cone script in F^{n+2} against a searching ∃.
    ScriptAbelard {
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        rounds: usize,
        #[arg(long, default_value_t = 100_000)]
        budget: usize,
    },
    /// Play against the engine on the terminal.
    Play {
        #[arg(long)]
        interactive: bool,
        #[arg(long)]
        structure: PathBuf,
        #[arg(long, default_value = "H")]
        kind: String,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 4)]
        rounds: usize,
        #[arg(long, default_value = "A")]
        role: String,
        #[arg(long)]
        unrestricted: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand, Debug)]
enum HyperplaneCmd {
    Cylindrify {
        file: PathBuf,
        #[arg(long)]
        j: usize,
    },
    /// `instance` is inline JSON or a file: {"m", "alpha"?, "constraints": [plane]}.
    Witness { instance: String },
}

/// A failed command: exit code and message.
struct Fail(i32, String);

fn usage(e: impl ToString) -> Fail {
    Fail(2, e.to_string())
}

fn read_json(path: &Path) -> Result<Value, Fail> {
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, v: &Value) {
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(v).expect("json"));
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run(
    args: &[String],
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    match dispatch(cli.cmd, input, out, err) {
        Ok(code) => code,
        Err(Fail(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

fn dispatch(
    cmd: Cmd,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, Fail> {
    match cmd {
        Cmd::Structure {
            cmd: StructureCmd::Validate { file },
        } => {
            let s = AtomStructure::from_json(&read_json(&file)?).map_err(usage)?;
            let v = validate_atom_structure(&s);
            emit(
                out,
                &json!({
                    "valid": v.is_empty(),
                    "atoms": s.len(),
                    "violations": v.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
                }),
            );
            Ok(if v.is_empty() { 0 } else { 1 })
        }
        Cmd::Rainbow {
            cmd:
                RainbowCmd::Build {
                    n,
                    green_low,
                    red_bound,
                    yellow_universe,
                    output,
                },
        } => {
            let p = RainbowParams {
                n,
                green_low,
                red_bound,
                yellow_universe,
            };
            p.validate().map_err(usage)?;
            let s = build_rainbow_atom_structure(&p).map_err(|e| Fail(1, e.to_string()))?;
            let v = s.to_json().map_err(|e| Fail(1, e.to_string()))?;
            std::fs::write(&output, v.to_string())
                .map_err(|e| usage(format!("{}: {e}", output.display())))?;
            emit(
                out,
                &json!({"atoms": s.len(), "output": output.display().to_string()}),
            );
            Ok(0)
        }
        Cmd::Graph {
            cmd: GraphCmd::CheckJ { file, params },
        } => {
            let v = read_json(&file)?;
            let p = match (&params, v.get("params")) {
                (Some(path), _) => RainbowParams::from_json(&read_json(path)?).map_err(usage)?,
                (None, Some(pv)) => RainbowParams::from_json(pv).map_err(usage)?,
                (None, None) => RainbowParams::default(),
            };
            let g = ColouredGraph::from_json(v.get("graph").unwrap_or(&v)).map_err(usage)?;
            let viol = check_j_membership(&g, &p);
            emit(
                out,
                &json!({
                    "member": viol.is_empty(),
                    "violations": viol.iter().map(|x| json!({"item": x.item, "detail": x.detail})).collect::<Vec<_>>(),
                }),
            );
            Ok(if viol.is_empty() { 0 } else { 1 })
        }
        Cmd::Game { cmd } => game(cmd, input, out, err),
        Cmd::Hyperplane {
            cmd: HyperplaneCmd::Cylindrify { file, j },
        } => {
            let g = NormalForm::from_json(&read_json(&file)?).map_err(usage)?;
            if j >= g.alpha {
                return Err(usage(format!("j = {j} is not below alpha = {}", g.alpha)));
            }
            emit(out, &g.cylindrify(j).to_json());
            Ok(0)
        }
        Cmd::Hyperplane {
            cmd: HyperplaneCmd::Witness { instance },
        } => {
            let v: Value = match serde_json::from_str(&instance) {
                Ok(v) => v,
                Err(_) => read_json(Path::new(&instance))?,
            };
            let m = v
                .get("m")
                .and_then(Value::as_u64)
                .ok_or_else(|| usage("missing m"))? as usize;
            let alpha = v
                .get("alpha")
                .and_then(Value::as_u64)
                .map_or(m + 1, |a| a as usize);
            let cons = v
                .get("constraints")
                .and_then(Value::as_array)
                .map(|a| a.iter().map(plane_from_json).collect::<Result<Vec<_>, _>>())
                .transpose()
                .map_err(usage)?
                .unwrap_or_default();
            let s = witness_solve(alpha, m, &cons).map_err(usage)?;
            emit(out, &json!({"point": point_to_json(&s)}));
            Ok(0)
        }
        Cmd::Serve { port, open, seed } => {
            let ip = if open { [0, 0, 0, 0] } else { [127, 0, 0, 1] };
            let data_dir = std::env::var_os("CYLGAMES_DATA_DIR").map(PathBuf::from);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Fail(2, e.to_string()))?;
            let state = crate::service::AppState::new(seed, data_dir);
            rt.block_on(crate::service::serve((ip, port).into(), state))
                .map_err(|e| Fail(2, e.to_string()))?;
            Ok(0)
        }
    }
}

fn load_structure(path: &Path) -> Result<StoredStructure, Fail> {
    StoredStructure::from_json(&read_json(path)?).map_err(usage)
}

fn solve_json<M: GameModel>(
    model: &M,
    rounds: usize,
    restricted: bool,
    budget: usize,
) -> (Value, i32) {
    match solve(model, rounds, restricted, budget) {
        Ok(s) => (
            json!({"winner": s.winner.code(), "rounds": rounds, "restricted": restricted, "expanded": s.expanded}),
            0,
        ),
        Err(GameError::Budget { budget, table }) => (
            json!({"winner": null, "rounds": rounds, "restricted": restricted, "budgetExceeded": budget, "table": table}),
            1,
        ),
        Err(e) => (json!({"error": e.to_string()}), 2),
    }
}

fn game(
    cmd: GameCmd,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, Fail> {
    match cmd {
        GameCmd::Solve {
            structure,
            kind,
            m,
            rounds,
            restricted,
            budget,
        } => {
            let st = load_structure(&structure)?;
            let kind = parse_kind(&kind, m, st.dimension()).map_err(usage)?;
            let rounds = rounds.unwrap_or(match kind {
                GameKind::F { .. } => 6,
                GameKind::H => 4,
            });
            let (v, code) = match &st {
                StoredStructure::Explicit(s) => {
                    solve_json(&ExplicitGame { s, kind }, rounds, restricted, budget)
                }
                StoredStructure::Rainbow(p) => {
                    solve_json(&RainbowGame::new(*p, kind), rounds, restricted, budget)
                }
            };
            emit(out, &v);
            Ok(code)
        }
        GameCmd::ScriptAbelard {
            params,
            rounds,
            budget,
        } => {
            let p = match params {
                Some(f) => RainbowParams::from_json(&read_json(&f)?).map_err(usage)?,
                None => RainbowParams::default(),
            };
            let game = RainbowGame::new(p, GameKind::F { m: p.n + 2 });
            let script = ScriptAbelard::new(&p, rounds).map_err(usage)?;
            let mut abelard = script.clone();
            let mut eloise = ScriptSearchEloise::new(script, budget);
            let (trace, _) = run_match(
                &game,
                &game.kind.code(),
                &mut abelard,
                &mut eloise,
                rounds,
                true,
            );
            emit(out, &trace.to_json());
            Ok(if trace.winner == Player::A { 0 } else { 1 })
        }
        GameCmd::Play {
            interactive,
            structure,
            kind,
            m,
            rounds,
            role,
            unrestricted,
            seed,
        } => {
            if !interactive {
                return Err(usage("only --interactive play is supported"));
            }
            let st = load_structure(&structure)?;
            let cfg = GameConfig {
                kind: parse_kind(&kind, m, st.dimension()).map_err(usage)?,
                human: parse_player(&role).map_err(usage)?,
                rounds,
                restricted: !unrestricted,
                seed,
            };
            let mut s = Session::new("terminal".into(), structure.display().to_string(), &st, cfg);
            play_terminal(&mut s, input, err)?;
            emit(out, &s.trace().to_json());
            Ok(0)
        }
    }
}

fn play_terminal(
    s: &mut Session,
    input: &mut dyn BufRead,
    err: &mut dyn Write,
) -> Result<(), Fail> {
    while s.winner().is_none() {
        let view = s.view();
        let (legal, truncated) = s.legal();
        let _ = writeln!(
            err,
            "round {} of {}; you are {}",
            view["round"], view["rounds"], view["humanRole"]
        );
        let _ = writeln!(err, "position: {}", view["state"]);
        if !view["pending"].is_null() {
            let _ = writeln!(err, "∀ demands: {}", view["pending"]);
        }
        for (i, m) in legal.iter().enumerate() {
            let _ = writeln!(err, "  [{i}] {m}");
        }
        if truncated {
            let _ = writeln!(err, "  (list truncated; a move may also be typed as JSON)");
        }
        let _ = write!(err, "> ");
        let _ = err.flush();
        let mut line = String::new();
        if input.read_line(&mut line).map_err(usage)? == 0 {
            return Err(usage("input ended before the game did"));
        }
        let line = line.trim();
        let mv = match line.parse::<usize>() {
            Ok(i) if i < legal.len() => {
                let m = &legal[i];
                if m.get("response").is_some() {
                    json!({"response": m["response"]})
                } else {
                    m.clone()
                }
            }
            _ => match serde_json::from_str::<Value>(line) {
                Ok(v) => v,
                Err(e) => {
                    let _ = writeln!(err, "not a move: {e}");
                    continue;
                }
            },
        };
        if let Err(e) = s.play(&mv) {
            let _ = writeln!(err, "{e}");
        }
    }
    let v = s.view();
    let _ = writeln!(err, "winner: {} ({})", v["winner"], v["haltReason"]);
    Ok(())
}

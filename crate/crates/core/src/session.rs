//! One game between a human and the engine, shared by the HTTP service and
//! the interactive terminal player.

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::atom_structure::AtomStructure;
use crate::games::*;
use crate::rainbow::RainbowParams;
use crate::rainbow_games::*;

/// Longest legal-move list sent to a client.
pub const LEGAL_LIMIT: usize = 500;
pub const ENGINE_BUDGET: usize = 200_000;

#[derive(Clone, Debug)]
pub enum StoredStructure {
    Explicit(Arc<AtomStructure>),
    Rainbow(RainbowParams),
}

impl StoredStructure {
    /// An explicit structure JSON, `{"params": ...}` or bare rainbow params.
    pub fn from_json(v: &Value) -> Result<StoredStructure, String> {
        if let Some(p) = v.get("params") {
            return RainbowParams::from_json(p)
                .map(StoredStructure::Rainbow)
                .map_err(|e| e.to_string());
        }
        let body = v.get("structure").unwrap_or(v);
        if body.get("atoms").is_some() {
            return AtomStructure::from_json(body)
                .map(|s| StoredStructure::Explicit(Arc::new(s)))
                .map_err(|e| e.to_string());
        }
        if body.get("greenLow").is_some() || body.get("n").is_some() {
            return RainbowParams::from_json(body)
                .map(StoredStructure::Rainbow)
                .map_err(|e| e.to_string());
        }
        Err("expected an atom structure or rainbow parameters".into())
    }

    pub fn summary(&self) -> Value {
        match self {
            StoredStructure::Explicit(s) => {
                json!({"kind": "explicit", "dimension": s.dimension(), "atoms": s.len()})
            }
            StoredStructure::Rainbow(p) => json!({"kind": "rainbow", "params": p.to_json()}),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            StoredStructure::Explicit(s) => s.dimension(),
            StoredStructure::Rainbow(p) => p.n,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlayError {
    #[error("the game is over")]
    Finished,
    #[error("malformed move: {0}")]
    Malformed(String),
    #[error("illegal move")]
    Illegal,
}

pub struct GameConfig {
    pub kind: GameKind,
    pub human: Player,
    pub rounds: usize,
    pub restricted: bool,
    pub seed: u64,
}

enum Board {
    Explicit {
        structure: Arc<AtomStructure>,
        state: ExState,
    },
    Rainbow {
        game: RainbowGame,
        state: RState,
        eloise: Option<RainbowEloise>,
        script: Option<ScriptAbelard>,
        random: RandomRainbowAbelard<ChaCha8Rng>,
    },
}

/// Everything except the position itself.
struct Meta {
    kind: GameKind,
    human: Player,
    rounds: usize,
    restricted: bool,
    round: usize,
    /// ∀'s move waiting for ∃'s answer.
    pending: Option<Value>,
    history: Vec<TraceStep>,
    winner: Option<Player>,
    halt: String,
}

pub struct Session {
    pub id: String,
    pub structure_id: String,
    meta: Meta,
    board: Board,
}

fn finish(meta: &mut Meta, winner: Player, reason: String) {
    meta.winner = Some(winner);
    meta.halt = reason;
}

impl Meta {
    fn to_move(&self) -> Option<Player> {
        match (self.winner, &self.pending) {
            (Some(_), _) => None,
            (None, None) => Some(Player::A),
            (None, Some(_)) => Some(Player::E),
        }
    }

    fn left(&self) -> usize {
        self.rounds - self.round
    }
}

fn legal_list<M: GameModel>(model: &M, meta: &Meta, state: &M::State) -> (Vec<Value>, bool) {
    let mut out = Vec::new();
    let mut truncated = false;
    match meta.to_move() {
        None => {}
        Some(Player::A) => {
            let _ = model.abelard_moves(state, meta.restricted, &mut |m| {
                if out.len() == LEGAL_LIMIT {
                    truncated = true;
                    return std::ops::ControlFlow::Break(());
                }
                out.push(model.move_json(&m));
                std::ops::ControlFlow::Continue(())
            });
        }
        Some(Player::E) => {
            let Ok(mv) = model.move_from_json(meta.pending.as_ref().expect("pending")) else {
                return (out, false);
            };
            let _ = model.eloise_responses(state, &mv, &mut |r| {
                if out.len() == LEGAL_LIMIT {
                    truncated = true;
                    return std::ops::ControlFlow::Break(());
                }
                out.push(json!({"response": out.len(), "state": model.state_json(&r)}));
                std::ops::ControlFlow::Continue(())
            });
        }
    }
    (out, truncated)
}

/// Record ∀'s move after checking it.
fn abelard_plays<M: GameModel>(
    model: &M,
    meta: &mut Meta,
    state: &M::State,
    mv: &M::Move,
) -> Result<(), PlayError> {
    if !model.is_move_legal(state, mv, meta.restricted) {
        return Err(PlayError::Illegal);
    }
    meta.history.push(TraceStep {
        by: Player::A,
        round: meta.round + 1,
        mv: model.move_json(mv),
        state: model.state_json(state),
    });
    meta.pending = Some(model.move_json(mv));
    Ok(())
}

fn eloise_plays<M: GameModel>(
    model: &M,
    meta: &mut Meta,
    state: &mut M::State,
    mv: &M::Move,
    r: M::State,
) -> Result<(), PlayError> {
    if !model.is_response_legal(state, mv, &r) {
        return Err(PlayError::Illegal);
    }
    meta.history.push(TraceStep {
        by: Player::E,
        round: meta.round + 1,
        mv: Value::Null,
        state: model.state_json(&r),
    });
    *state = r;
    meta.pending = None;
    meta.round += 1;
    if meta.round == meta.rounds {
        let n = meta.rounds;
        finish(meta, Player::E, format!("∃ survived all {n} rounds"));
    }
    Ok(())
}

/// ∀ with no legal move at all loses.
fn check_stuck<M: GameModel>(model: &M, meta: &mut Meta, state: &M::State) {
    if meta.to_move() == Some(Player::A) && first_move(model, state, meta.restricted).is_none() {
        let r = meta.round + 1;
        finish(meta, Player::E, format!("∀ has no legal move in round {r}"));
    }
}

/// Apply a human move given as JSON: a move for ∀, `{"response": i}` for ∃.
fn human_plays<M: GameModel>(
    model: &M,
    meta: &mut Meta,
    state: &mut M::State,
    v: &Value,
) -> Result<(), PlayError> {
    match meta.to_move() {
        None => Err(PlayError::Finished),
        Some(Player::A) => {
            let mv = model
                .move_from_json(v)
                .map_err(|e| PlayError::Malformed(e.to_string()))?;
            abelard_plays(model, meta, state, &mv)
        }
        Some(Player::E) => {
            let i = v
                .get("response")
                .and_then(Value::as_u64)
                .ok_or_else(|| PlayError::Malformed("expected {\"response\": index}".into()))?
                as usize;
            let mv = model
                .move_from_json(meta.pending.as_ref().expect("pending"))
                .map_err(|e| PlayError::Malformed(e.to_string()))?;
            let mut found = None;
            let mut seen = 0;
            let _ = model.eloise_responses(state, &mv, &mut |r| {
                if seen == i {
                    found = Some(r);
                    return std::ops::ControlFlow::Break(());
                }
                seen += 1;
                std::ops::ControlFlow::Continue(())
            });
            let r = found.ok_or(PlayError::Illegal)?;
            eloise_plays(model, meta, state, &mv, r)
        }
    }
}

impl Session {
    pub fn new(
        id: String,
        structure_id: String,
        structure: &StoredStructure,
        cfg: GameConfig,
    ) -> Session {
        let meta = Meta {
            kind: cfg.kind,
            human: cfg.human,
            rounds: cfg.rounds,
            restricted: cfg.restricted,
            round: 0,
            pending: None,
            history: Vec::new(),
            winner: None,
            halt: String::new(),
        };
        let board = match structure {
            StoredStructure::Explicit(s) => Board::Explicit {
                structure: s.clone(),
                state: ExState {
                    nets: Vec::new(),
                    fresh: 0,
                },
            },
            StoredStructure::Rainbow(p) => Board::Rainbow {
                game: RainbowGame::new(*p, cfg.kind),
                state: RState::default(),
                eloise: match cfg.kind {
                    GameKind::H => RainbowEloise::new(*p, cfg.rounds).ok(),
                    GameKind::F { .. } => None,
                },
                script: match cfg.kind {
                    GameKind::F { .. } => ScriptAbelard::new(p, cfg.rounds).ok(),
                    GameKind::H => None,
                },
                random: RandomRainbowAbelard::new(ChaCha8Rng::seed_from_u64(cfg.seed), *p),
            },
        };
        let mut s = Session {
            id,
            structure_id,
            meta,
            board,
        };
        if s.meta.rounds == 0 {
            finish(&mut s.meta, Player::E, "∃ survived all 0 rounds".into());
        }
        s.advance();
        s
    }

    pub fn winner(&self) -> Option<Player> {
        self.meta.winner
    }

    pub fn to_move(&self) -> Option<Player> {
        self.meta.to_move()
    }

    pub fn history(&self) -> &[TraceStep] {
        &self.meta.history
    }

    pub fn legal(&self) -> (Vec<Value>, bool) {
        match &self.board {
            Board::Explicit { structure, state } => {
                let model = ExplicitGame {
                    s: structure,
                    kind: self.meta.kind,
                };
                legal_list(&model, &self.meta, state)
            }
            Board::Rainbow { game, state, .. } => legal_list(game, &self.meta, state),
        }
    }

    fn state_json(&self) -> Value {
        match &self.board {
            Board::Explicit { structure, state } => ExplicitGame {
                s: structure,
                kind: self.meta.kind,
            }
            .state_json(state),
            Board::Rainbow { game, state, .. } => game.state_json(state),
        }
    }

    pub fn trace(&self) -> Trace {
        Trace {
            kind: self.meta.kind.code(),
            rounds: self.meta.rounds,
            steps: self.meta.history.clone(),
            winner: self.meta.winner.unwrap_or(Player::E),
            halt_reason: self.meta.halt.clone(),
        }
    }

    /// The full view a client renders; legal moves are the human's.
    pub fn view(&self) -> Value {
        let mine = self.meta.to_move() == Some(self.meta.human);
        let (legal, truncated) = if mine {
            self.legal()
        } else {
            (Vec::new(), false)
        };
        json!({
            "gameId": self.id,
            "structureId": self.structure_id,
            "kind": self.meta.kind.code(),
            "rounds": self.meta.rounds,
            "round": self.meta.round,
            "restricted": self.meta.restricted,
            "humanRole": self.meta.human.code(),
            "toMove": self.meta.to_move().map(Player::code),
            "pending": self.meta.pending,
            "state": self.state_json(),
            "legal": legal,
            "legalTruncated": truncated,
            "history": self.trace().to_json()["moves"],
            "winner": self.meta.winner.map(Player::code),
            "haltReason": self.meta.halt,
        })
    }

    /// A move by the human, followed by the engine's replies.
    pub fn play(&mut self, v: &Value) -> Result<(), PlayError> {
        if self.meta.to_move().is_some() && self.meta.to_move() != Some(self.meta.human) {
            return Err(PlayError::Illegal);
        }
        let meta = &mut self.meta;
        match &mut self.board {
            Board::Explicit { structure, state } => {
                let model = ExplicitGame {
                    s: structure,
                    kind: meta.kind,
                };
                human_plays(&model, meta, state, v)?;
            }
            Board::Rainbow {
                game,
                state,
                eloise,
                ..
            } => {
                if meta.human == Player::E {
                    // A human ∃ takes over the bookkeeping strategy's role.
                    *eloise = None;
                }
                human_plays(game, meta, state, v)?;
            }
        }
        self.advance();
        Ok(())
    }

    /// Engine moves until it is the human's turn or the game ends.
    pub fn advance(&mut self) {
        loop {
            match &self.board {
                Board::Explicit { structure, state } => {
                    let model = ExplicitGame {
                        s: structure,
                        kind: self.meta.kind,
                    };
                    check_stuck(&model, &mut self.meta, state);
                }
                Board::Rainbow { game, state, .. } => check_stuck(game, &mut self.meta, state),
            }
            match self.meta.to_move() {
                None => return,
                Some(p) if p == self.meta.human => return,
                Some(p) => self.engine_step(p),
            }
        }
    }

    fn engine_step(&mut self, p: Player) {
        let meta = &mut self.meta;
        let left = meta.left();
        match &mut self.board {
            Board::Explicit { structure, state } => {
                let model = ExplicitGame {
                    s: structure,
                    kind: meta.kind,
                };
                match p {
                    Player::A => {
                        let mut a = SolverAbelard::<ExplicitGame>::new(
                            meta.restricted,
                            ENGINE_BUDGET,
                            HashMap::new(),
                        );
                        match a.choose(&model, state, left) {
                            Some(mv) if abelard_plays(&model, meta, state, &mv).is_ok() => {}
                            _ => {
                                let r = meta.round + 1;
                                finish(meta, Player::E, format!("∀ resigned in round {r}"));
                            }
                        }
                    }
                    Player::E => {
                        let mv = model
                            .move_from_json(meta.pending.as_ref().expect("pending"))
                            .expect("own move");
                        let mut e = SolverEloise::<ExplicitGame>::new(
                            meta.restricted,
                            ENGINE_BUDGET,
                            HashMap::new(),
                        );
                        eloise_engine(
                            &model,
                            meta,
                            state,
                            &mv,
                            e.respond(&model, state, &mv, left),
                        );
                    }
                }
            }
            Board::Rainbow {
                game,
                state,
                eloise,
                script,
                random,
            } => match p {
                Player::A => {
                    let mv = match script {
                        Some(s) => s.choose(game, state, left),
                        None => random.choose(game, state, left),
                    };
                    match mv {
                        Some(mv) if abelard_plays(game, meta, state, &mv).is_ok() => {}
                        _ => {
                            let r = meta.round + 1;
                            finish(meta, Player::E, format!("∀ resigned in round {r}"));
                        }
                    }
                }
                Player::E => {
                    let mv = game
                        .move_from_json(meta.pending.as_ref().expect("pending"))
                        .expect("own move");
                    let r = match eloise {
                        Some(e) => e.respond(game, state, &mv, left),
                        None => first_response(game, state, &mv),
                    };
                    eloise_engine(game, meta, state, &mv, r);
                }
            },
        }
    }
}

fn eloise_engine<M: GameModel>(
    model: &M,
    meta: &mut Meta,
    state: &mut M::State,
    mv: &M::Move,
    r: Option<M::State>,
) {
    let round = meta.round + 1;
    match r {
        None => finish(
            meta,
            Player::A,
            format!("∃ has no legal response in round {round}"),
        ),
        Some(r) => {
            if eloise_plays(model, meta, state, mv, r).is_err() {
                finish(
                    meta,
                    Player::A,
                    format!("illegal ∃ response in round {round}"),
                );
            }
        }
    }
}

/// Parse `"F"`/`"H"` with an optional node bound (default `n+2`).
pub fn parse_kind(kind: &str, m: Option<usize>, n: usize) -> Result<GameKind, String> {
    match kind {
        "F" | "f" => Ok(GameKind::F {
            m: m.unwrap_or(n + 2),
        }),
        "H" | "h" => Ok(GameKind::H),
        other => Err(format!("unknown game kind {other}")),
    }
}

pub fn parse_player(s: &str) -> Result<Player, String> {
    match s {
        "A" | "∀" => Ok(Player::A),
        "E" | "∃" => Ok(Player::E),
        other => Err(format!("unknown role {other}")),
    }
}

//! The interactive reach-avoid game over WebSocket.
//!
//! Each connection owns one [`GameSession`]. A fixed-rate tick advances the game with the
//! most recent attacker input received since the previous tick (zero if none) and the
//! server-side defender, and sends a `state` frame. Terminal states stay put until the
//! client sends a new `reset`.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::{self, Message};

use hjarl_core::adversary::{hj_defender_policy, EPSILON_GRAD};
use hjarl_core::envs::{Env, Normalization, Outcome, ReachAvoidConfig, ReachAvoidEnv};
use hjarl_core::eval::{brt_slice, grid_csv_string, lattice, BRT_HEADER};
use hjarl_core::hjsolver::SolveResult;
use hjarl_core::rl::AgentParams;

use crate::artifacts::{CheckpointFile, Manifest};
use crate::config::{DefenderSource, EnvSection, RunConfig};
use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Reset { attacker: [f64; 2], defender: [f64; 2] },
    Input { u: [f64; 2] },
    OverlayRequest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServerMessage {
    State {
        t: u64,
        attacker: [f64; 2],
        defender: [f64; 2],
        outcome: Outcome,
    },
    Overlay { mask_csv_b64: String },
    Error { msg: String },
}

impl ServerMessage {
    pub fn error(msg: impl Into<String>) -> Self {
        ServerMessage::Error { msg: msg.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("protocol frames serialize")
    }
}

pub enum DefenderPolicy {
    Checkpoint {
        agent: AgentParams,
        normalization: Normalization,
    },
    Hj(Arc<SolveResult>),
}

impl DefenderPolicy {
    fn act(&self, state: &[f64]) -> hjarl_core::Result<Vec<f64>> {
        match self {
            DefenderPolicy::Checkpoint { agent, normalization } => agent.act(normalization, state),
            DefenderPolicy::Hj(game) => hj_defender_policy(game, state, EPSILON_GRAD),
        }
    }
}

/// Read-only state shared by every session.
pub struct ServeResources {
    pub env: ReachAvoidConfig,
    pub defender: DefenderPolicy,
    /// Joint game value used for BRT overlays.
    pub game: Option<Arc<SolveResult>>,
    pub spacing: f64,
}

impl ServeResources {
    /// Loads the defender and overlay source named by the config's serve section.
    pub fn load(config: &RunConfig, checkpoint: Option<&Path>, manifest: Option<&Path>) -> Result<Self> {
        let EnvSection::ReachAvoid(env) = &config.env else {
            return Err(CliError::config("serve runs the reach-avoid task only"));
        };
        let game = match manifest {
            Some(m) => {
                let loaded = Manifest::load(m, config)?;
                let level = config.eval.level.unwrap_or(loaded.buffer.len() - 1);
                Some(Arc::new(loaded.buffer.entry(level)?.result.clone()))
            }
            None => None,
        };
        let defender = match config.serve.defender {
            DefenderSource::Checkpoint => {
                let path = checkpoint.ok_or_else(|| CliError::config("serve needs --checkpoint for a trained defender"))?;
                let file = CheckpointFile::read(path)?;
                file.check_env(config)?;
                DefenderPolicy::Checkpoint {
                    agent: file.checkpoint.protagonist,
                    normalization: file.checkpoint.normalization,
                }
            }
            DefenderSource::Hj => DefenderPolicy::Hj(
                game.clone()
                    .ok_or_else(|| CliError::config("the HJ defender needs --manifest"))?,
            ),
        };
        Ok(Self {
            env: env.clone(),
            defender,
            game,
            spacing: config.eval.spacing,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Phase {
    AwaitingReset,
    Running,
    Terminal,
}

pub struct GameSession {
    resources: Arc<ServeResources>,
    env: ReachAvoidEnv,
    phase: Phase,
    input: [f64; 2],
    t: u64,
    defender_init: Option<[f64; 2]>,
}

fn clip_unit_ball(u: [f64; 2]) -> [f64; 2] {
    let n = u[0].hypot(u[1]);
    if n > 1.0 {
        [u[0] / n, u[1] / n]
    } else {
        u
    }
}

impl GameSession {
    pub fn new(resources: Arc<ServeResources>) -> Result<Self> {
        let env = ReachAvoidEnv::new(resources.env.clone(), None)?;
        Ok(Self {
            resources,
            env,
            phase: Phase::AwaitingReset,
            input: [0.0; 2],
            t: 0,
            defender_init: None,
        })
    }

    /// The attacker input that the next tick will apply.
    pub fn pending_input(&self) -> [f64; 2] {
        self.input
    }

    fn state_frame(&self, outcome: Outcome) -> ServerMessage {
        let s = self.env.state();
        ServerMessage::State {
            t: self.t,
            attacker: [s[0], s[1]],
            defender: [s[2], s[3]],
            outcome,
        }
    }

    /// Handles one client text frame, returning the immediate reply if there is one.
    pub fn handle_text(&mut self, text: &str) -> Option<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => Some(ServerMessage::error(format!("malformed message: {e}"))),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Option<ServerMessage> {
        match msg {
            ClientMessage::Reset { attacker, defender } => match self.env.reset_to(attacker, defender) {
                Ok(()) => {
                    self.phase = Phase::Running;
                    self.t = 0;
                    self.input = [0.0; 2];
                    self.defender_init = Some(defender);
                    Some(self.state_frame(Outcome::Running))
                }
                Err(e) => Some(ServerMessage::error(e.to_string())),
            },
            ClientMessage::Input { u } => {
                if u.iter().all(|x| x.is_finite()) {
                    self.input = clip_unit_ball(u);
                    None
                } else {
                    Some(ServerMessage::error("input must be finite"))
                }
            }
            ClientMessage::OverlayRequest => Some(self.overlay().unwrap_or_else(|e| ServerMessage::error(e.to_string()))),
        }
    }

    fn overlay(&self) -> Result<ServerMessage> {
        let game = self
            .resources
            .game
            .as_ref()
            .ok_or_else(|| CliError::config("no value function loaded for overlays"))?;
        let d0 = self
            .defender_init
            .ok_or_else(|| CliError::config("send a reset before requesting an overlay"))?;
        let a = self.resources.env.arena_half_width;
        let n = lattice(a, self.resources.spacing)?.len();
        let mask: Vec<u8> = brt_slice(game, d0, a, self.resources.spacing)?
            .into_iter()
            .map(u8::from)
            .collect();
        let csv = grid_csv_string(BRT_HEADER, n, &mask)?;
        Ok(ServerMessage::Overlay {
            mask_csv_b64: base64::engine::general_purpose::STANDARD.encode(csv),
        })
    }

    /// Advances one tick. Returns the new state frame, or nothing while idle or terminal.
    pub fn tick(&mut self) -> Option<ServerMessage> {
        if self.phase != Phase::Running {
            return None;
        }
        let u = std::mem::take(&mut self.input);
        let step = self
            .resources
            .defender
            .act(self.env.state())
            .and_then(|d| self.env.step_with(&d, &u));
        match step {
            Ok(tr) => {
                self.t += 1;
                if tr.terminal() {
                    self.phase = Phase::Terminal;
                }
                Some(self.state_frame(tr.outcome))
            }
            Err(e) => {
                self.phase = Phase::AwaitingReset;
                Some(ServerMessage::error(format!("simulation failed: {e}")))
            }
        }
    }
}

/// Accepts connections forever, one session each.
pub async fn serve(listener: TcpListener, resources: Arc<ServeResources>, tick_hz: f64) -> std::io::Result<()> {
    let period = Duration::from_secs_f64(1.0 / tick_hz);
    loop {
        let (stream, peer) = listener.accept().await?;
        let resources = resources.clone();
        tokio::spawn(async move {
            if let Err(e) = run_connection(stream, resources, period).await {
                eprintln!("session {peer}: {e}");
            }
        });
    }
}

async fn run_connection(
    stream: tokio::net::TcpStream,
    resources: Arc<ServeResources>,
    period: Duration,
) -> std::result::Result<(), tungstenite::Error> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut tx, mut rx) = ws.split();
    let mut session = match GameSession::new(resources) {
        Ok(s) => s,
        Err(e) => {
            tx.send(Message::text(ServerMessage::error(e.to_string()).to_json())).await?;
            return Ok(());
        }
    };
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        let reply = tokio::select! {
            msg = rx.next() => match msg {
                None | Some(Ok(Message::Close(_))) => break,
                Some(Err(e)) => return Err(e),
                Some(Ok(Message::Text(text))) => session.handle_text(text.as_str()),
                Some(Ok(Message::Binary(_))) => Some(ServerMessage::error("binary frames are not supported")),
                Some(Ok(_)) => None,
            },
            _ = ticker.tick() => session.tick(),
        };
        if let Some(frame) = reply {
            tx.send(Message::text(frame.to_json())).await?;
        }
    }
    Ok(())
}

//! The operator session state machine behind the socket: one world, one
//! mode, one mutator at a time.
//!
//! Client messages are handled as they arrive; world changes happen only in
//! [`BridgeCore::tick`], once per control period. TAP requests queue and are
//! applied one per tick, and their acknowledgement carries the controller's
//! decision. Switching into teleop or policy mode starts a fresh episode at
//! the current seed; idle pauses.

use crate::protocol::{
    AckStatus, ActiveTapMsg, ClientMessage, Mode, ObjectMsg, PoseMsg, ServerMessage, TapInfo, TapRef, SCHEMA_VERSION,
};
use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Arc;
use tapbench_core::dataset::{append_episode, Manifest};
use tapbench_core::geometry::{Pose, PoseDelta, Vec3};
use tapbench_core::policy::PolicyWeights;
use tapbench_core::runtime::{LockstepRollout, RuntimeConfig};
use tapbench_core::sim::{FailureReason, TaskConfig, WorldState};
use tapbench_core::tap::{ControllerState, TapDecision, TapLibrary};
use tapbench_core::teleop::{CommandMatch, GainSetting, Metadata, TeleopInput, TeleopSession};

#[derive(Debug, Clone, PartialEq)]
enum Pending {
    Button(usize),
    Text(String),
}

pub struct BridgeCore {
    cfg: TaskConfig,
    library: TapLibrary,
    policy: Option<Arc<PolicyWeights>>,
    runtime: RuntimeConfig,
    data_dir: Option<PathBuf>,
    operator: String,
    mode: Mode,
    gain: GainSetting,
    seed: u64,
    session: TeleopSession,
    rollout: Option<LockstepRollout<Arc<PolicyWeights>>>,
    motion: Option<PoseDelta>,
    gripper: f64,
    pending: VecDeque<Pending>,
    ended: bool,
}

fn pose_msg(p: &Pose) -> PoseMsg {
    let q = p.orientation.quaternion();
    PoseMsg {
        position: [p.position.x, p.position.y, p.position.z],
        orientation: [q.w, q.i, q.j, q.k],
    }
}

/// The snake_case wire name of a unit enum variant.
fn serde_name<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

impl BridgeCore {
    /// `data_dir` receives finished and truncated teleop recordings.
    pub fn new(
        cfg: TaskConfig,
        policy: Option<PolicyWeights>,
        data_dir: Option<PathBuf>,
        seed: u64,
    ) -> tapbench_core::Result<Self> {
        if let Some(w) = &policy {
            if w.task != cfg.task {
                return Err(tapbench_core::Error::Config(format!(
                    "weights are for {}, bridge serves {}",
                    w.task, cfg.task
                )));
            }
        }
        let runtime = RuntimeConfig {
            control_period: cfg.control_period,
            ..Default::default()
        };
        let session = Self::fresh_session(&cfg, seed, "operator")?;
        Ok(Self {
            library: cfg.library(),
            gripper: session.ws.gripper,
            cfg,
            policy: policy.map(Arc::new),
            runtime,
            data_dir,
            operator: "operator".into(),
            mode: Mode::Idle,
            gain: GainSetting::default(),
            seed,
            session,
            rollout: None,
            motion: None,
            pending: VecDeque::new(),
            ended: false,
        })
    }

    fn fresh_session(cfg: &TaskConfig, seed: u64, operator: &str) -> tapbench_core::Result<TeleopSession> {
        TeleopSession::new(
            cfg.with_seed(seed),
            Metadata {
                operator: operator.into(),
                date: String::new(),
                noise_seed: None,
            },
        )
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn control_period(&self) -> f64 {
        self.cfg.control_period
    }

    pub fn tick_count(&self) -> u64 {
        self.world().tick
    }

    fn world(&self) -> &WorldState {
        match &self.rollout {
            Some(r) if self.mode == Mode::Policy => r.world(),
            _ => &self.session.ws,
        }
    }

    fn controller(&self) -> &ControllerState {
        match &self.rollout {
            Some(r) if self.mode == Mode::Policy => r.controller_state(),
            _ => &self.session.cs,
        }
    }

    /// Greeting sent after a valid Hello.
    pub fn welcome(&mut self, operator: &str) -> Vec<ServerMessage> {
        self.operator = operator.to_string();
        vec![
            ServerMessage::Welcome {
                schema_version: SCHEMA_VERSION,
                task: self.cfg.task.short_name().into(),
                control_period: self.cfg.control_period,
            },
            self.vocabulary(),
            self.snapshot(),
        ]
    }

    pub fn vocabulary(&self) -> ServerMessage {
        ServerMessage::VocabularyList {
            taps: self
                .library
                .iter()
                .map(|t| TapInfo {
                    id: t.id,
                    name: t.name.clone(),
                    kind: serde_name(&t.kind()),
                })
                .collect(),
            phrases: self.cfg.vocabulary.iter().map(|v| v.phrase.clone()).collect(),
        }
    }

    pub fn snapshot(&self) -> ServerMessage {
        let ws = self.world();
        let cs = self.controller();
        let active_tap = cs.active.map(|id| ActiveTapMsg {
            id,
            name: self.library.get(id).map_or_else(String::new, |t| t.name.clone()),
            step: cs.progress.as_ref().and_then(|p| p.routine_position()).map(|(s, _)| s),
        });
        ServerMessage::StateSnapshot {
            tick: ws.tick,
            mode: self.mode,
            ee: pose_msg(&ws.ee_pose),
            gripper: ws.gripper,
            objects: ws
                .objects
                .iter()
                .map(|o| ObjectMsg {
                    id: o.id.clone(),
                    kind: serde_name(&o.kind),
                    pose: pose_msg(&o.pose),
                    volume: o.liquid_volume,
                })
                .collect(),
            active_tap,
            locked_axes: cs
                .active_mask
                .as_ref()
                .map(|m| m.locked_names().into_iter().map(String::from).collect())
                .unwrap_or_default(),
            gain: [self.gain.translation_gain, self.gain.rotation_gain],
        }
    }

    fn resolve(&self, tap: &TapRef) -> Result<usize, String> {
        let found = match tap {
            TapRef::Id(id) => self.library.get(*id),
            TapRef::Name(name) => self.library.by_name(name),
        };
        found.map(|t| t.id).ok_or_else(|| {
            let what = match tap {
                TapRef::Id(id) => format!("id {id}"),
                TapRef::Name(n) => format!("`{n}`"),
            };
            format!("unknown TAP {what}; valid names: {}", self.library.names().join(", "))
        })
    }

    fn operator_mode(&self, what: &str) -> Result<(), String> {
        match self.mode {
            Mode::Teleop => Ok(()),
            Mode::Policy => Err(format!("{what} rejected: the policy is in control")),
            Mode::Idle => Err(format!("{what} rejected: bridge is idle")),
        }
    }

    /// Handles one client message. Hello is the transport's business and
    /// is refused here.
    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        let result = match msg {
            ClientMessage::Hello { .. } => Err("session already greeted".to_string()),
            ClientMessage::Teleop {
                translation,
                rotation,
                gripper,
            } => self.operator_mode("teleop motion").and_then(|()| {
                let delta = PoseDelta::new(Vec3::from(translation), Vec3::from(rotation));
                if !delta.is_finite() || !gripper.is_finite() {
                    return Err("teleop input must be finite".into());
                }
                self.motion = Some(delta);
                self.gripper = gripper.clamp(0.0, 1.0);
                Ok(vec![])
            }),
            ClientMessage::TapTrigger { tap } => self.operator_mode("TAP trigger").and_then(|()| {
                let id = self.resolve(&tap)?;
                self.pending.push_back(Pending::Button(id));
                Ok(vec![])
            }),
            ClientMessage::TextCommand { text } => self.operator_mode("text command").map(|()| {
                self.pending.push_back(Pending::Text(text));
                vec![]
            }),
            ClientMessage::GainChange { translation, rotation } => GainSetting::new(translation, rotation)
                .map_err(|e| e.to_string())
                .map(|g| {
                    self.gain = g;
                    vec![self.snapshot()]
                }),
            ClientMessage::ModeSwitch { mode } => self.switch(mode),
            ClientMessage::ResetRequest { seed } => self.reset(seed).map(|()| vec![self.snapshot()]),
        };
        result.unwrap_or_else(|e| vec![ServerMessage::error(e)])
    }

    fn switch(&mut self, mode: Mode) -> Result<Vec<ServerMessage>, String> {
        if mode == Mode::Policy && self.policy.is_none() {
            return Err("no policy loaded; start the server with weights".into());
        }
        if mode == self.mode {
            return Ok(vec![self.snapshot()]);
        }
        let mut out = self.save_unfinished();
        self.mode = mode;
        if mode != Mode::Idle {
            self.restart()?;
        }
        out.push(self.snapshot());
        Ok(out)
    }

    fn reset(&mut self, seed: u64) -> Result<(), String> {
        let _ = self.save_unfinished();
        self.seed = seed;
        self.restart()
    }

    fn restart(&mut self) -> Result<(), String> {
        self.session = Self::fresh_session(&self.cfg, self.seed, &self.operator).map_err(|e| e.to_string())?;
        self.gripper = self.session.ws.gripper;
        self.motion = None;
        self.pending.clear();
        self.ended = false;
        self.rollout = match (&self.policy, self.mode) {
            (Some(p), Mode::Policy) => Some(
                LockstepRollout::new(p.clone(), &self.cfg.with_seed(self.seed), &self.runtime, self.seed)
                    .map_err(|e| e.to_string())?,
            ),
            _ => None,
        };
        Ok(())
    }

    /// Saves a started but unfinished teleop recording as truncated.
    fn save_unfinished(&mut self) -> Vec<ServerMessage> {
        if self.mode != Mode::Teleop || self.ended || self.session.recorder.is_empty() {
            return vec![];
        }
        match self.save_demonstration() {
            Ok(_) => vec![],
            Err(e) => vec![ServerMessage::error(e)],
        }
    }

    fn save_demonstration(&mut self) -> Result<Option<String>, String> {
        let demo = self.session.clone().into_demonstration();
        let Some(root) = &self.data_dir else {
            return Ok(None);
        };
        let dir = root.join(self.cfg.task.short_name());
        let save = || -> tapbench_core::Result<PathBuf> {
            std::fs::create_dir_all(&dir)?;
            let mut manifest = if dir.join(tapbench_core::dataset::MANIFEST_FILE).exists() {
                Manifest::load(&dir)?
            } else {
                Manifest::new(self.cfg.task)
            };
            let path = append_episode(&dir, &mut manifest, &demo)?;
            manifest.save(&dir)?;
            Ok(path)
        };
        let path = save().map_err(|e| format!("saving demonstration: {e}"))?;
        log::info!(
            "saved {} ({} frames, complete {})",
            path.display(),
            demo.frames.len(),
            demo.is_complete()
        );
        Ok(Some(path.display().to_string()))
    }

    /// The session ended: keep what was recorded and stop.
    pub fn disconnect(&mut self) {
        for m in self.save_unfinished() {
            if let ServerMessage::Error { message } = m {
                log::error!("{message}");
            }
        }
        self.pending.clear();
        self.motion = None;
        self.mode = Mode::Idle;
    }

    fn end_message(&self, result: Result<(), FailureReason>, saved: Option<String>) -> ServerMessage {
        ServerMessage::EpisodeEnd {
            success: result.is_ok(),
            reason: result.err().map(|f| f.as_str().to_string()),
            ticks: self.world().tick,
            saved,
        }
    }

    /// Advances the world one control period and reports what happened,
    /// ending with a snapshot.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        match self.mode {
            Mode::Idle => {}
            _ if self.ended => {}
            Mode::Teleop => self.teleop_tick(&mut out),
            Mode::Policy => self.policy_tick(&mut out),
        }
        out.push(self.snapshot());
        out
    }

    fn teleop_tick(&mut self, out: &mut Vec<ServerMessage>) {
        let mut input = TeleopInput {
            delta: self.motion.take().unwrap_or_else(PoseDelta::zero),
            gripper: self.gripper,
            ..Default::default()
        };
        match self.pending.pop_front() {
            Some(Pending::Button(id)) => input.tap_button = Some(id),
            Some(Pending::Text(t)) => input.text_command = Some(t),
            None => {}
        }
        let tick = match self.session.tick(&input, &self.gain) {
            Ok(t) => t,
            Err(e) => {
                out.push(ServerMessage::error(e.to_string()));
                return;
            }
        };
        let distance = match tick.matched {
            Some(CommandMatch::Tap { distance, .. }) => Some(distance),
            Some(CommandMatch::NoMatch { best_distance }) => {
                out.push(ServerMessage::TapAck {
                    status: AckStatus::NoMatch,
                    tap: None,
                    name: None,
                    distance: Some(best_distance),
                });
                None
            }
            None => None,
        };
        if let Some(decision) = tick.decision {
            let (status, id) = match decision {
                TapDecision::Accepted(id) => (AckStatus::Accepted, id),
                TapDecision::Discarded(id) | TapDecision::Rejected(id) => (AckStatus::Discarded, id),
            };
            out.push(ServerMessage::TapAck {
                status,
                tap: Some(id),
                name: self.library.get(id).map(|t| t.name.clone()),
                distance,
            });
        }
        if let Some(result) = tick.terminal {
            let saved = match self.save_demonstration() {
                Ok(s) => s,
                Err(e) => {
                    out.push(ServerMessage::error(e));
                    None
                }
            };
            out.push(self.end_message(result, saved));
            self.ended = true;
        }
    }

    fn policy_tick(&mut self, out: &mut Vec<ServerMessage>) {
        let Some(rollout) = self.rollout.as_mut() else {
            return;
        };
        rollout.step();
        if rollout.is_done() {
            let ws = rollout.world().clone();
            let result = tapbench_core::sim::terminal(&ws, &self.cfg.with_seed(self.seed))
                .unwrap_or(Err(FailureReason::Timeout));
            out.push(self.end_message(result, None));
            self.ended = true;
        }
    }
}

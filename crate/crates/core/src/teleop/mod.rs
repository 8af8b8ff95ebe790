//! Operator side of the system: mapping hand motion to robot actions with
//! adjustable gain, text command matching, the scripted stand-in operator,
//! and demonstration recording.

pub mod command;
pub mod expert;

pub use command::{levenshtein, normalize, parse_command, CommandMatch, CommandVocabulary};
pub use expert::scripted_expert;

use crate::action::Action;
use crate::error::{Error, Result};
use crate::geometry::{constrained_delta, AxisMask, Pose, PoseDelta};
use crate::sim::{self, FailureReason, Observation, TaskConfig, WorldState};
use crate::tap::{Controller, ControllerState, EmittedBy, TapCommand, TapDecision};
use serde::{Deserialize, Serialize};

/// One tick of operator input.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TeleopInput {
    pub delta: PoseDelta,
    pub gripper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap_button: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_command: Option<String>,
}

impl TeleopInput {
    pub fn validate(&self) -> Result<()> {
        if self.tap_button.is_some() && self.text_command.is_some() {
            return Err(Error::Usage(
                "a teleop frame carries at most one of tap button and text command".into(),
            ));
        }
        if !self.delta.is_finite() || !self.gripper.is_finite() {
            return Err(Error::Usage("teleop input must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSetting {
    pub translation_gain: f64,
    pub rotation_gain: f64,
}

impl Default for GainSetting {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl GainSetting {
    pub const MAX: f64 = 10.0;

    pub fn new(translation_gain: f64, rotation_gain: f64) -> Result<Self> {
        let g = Self {
            translation_gain,
            rotation_gain,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn uniform(gain: f64) -> Self {
        Self {
            translation_gain: gain,
            rotation_gain: gain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |g: f64| g > 0.0 && g <= Self::MAX;
        if ok(self.translation_gain) && ok(self.rotation_gain) {
            Ok(())
        } else {
            Err(Error::Usage(format!(
                "gains must lie in (0, {}], got {} / {}",
                Self::MAX,
                self.translation_gain,
                self.rotation_gain
            )))
        }
    }
}

/// Scales operator motion by the gains and, when a lock stands, constrains
/// it to the unlocked axes.
pub fn map_input(
    input: &TeleopInput,
    gain: &GainSetting,
    mask: Option<&AxisMask>,
    reference: Option<&Pose>,
    current: &Pose,
) -> Action {
    let delta = input.delta.scaled(gain.translation_gain, gain.rotation_gain);
    let delta = match (mask, reference) {
        (Some(mask), Some(reference)) => constrained_delta(current, &delta, reference, mask),
        _ => delta,
    };
    Action::new(delta, input.gripper)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Operator,
    TapSynthesized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub observation: Observation,
    /// The action the controller executed on this tick.
    pub action: Action,
    /// TAP command issued on this tick; empty except at trigger ticks.
    pub tap_event: TapCommand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<TapDecision>,
    pub source: SourceTag,
    pub gain: GainSetting,
}

impl Frame {
    /// The TAP label used for training: the command if it was accepted.
    pub fn tap_label(&self) -> TapCommand {
        match self.decision {
            Some(TapDecision::Accepted(id)) => TapCommand::Tap(id),
            _ => TapCommand::Empty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    pub operator: String,
    /// Free-form recording date.
    pub date: String,
    /// Noise seed of the scripted operator, if one was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureReason>,
    pub ticks: u64,
    pub final_state: WorldState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub task: TaskConfig,
    pub metadata: Metadata,
    pub frames: Vec<Frame>,
    /// Absent when the recording stopped before the episode ended.
    pub outcome: Option<Outcome>,
}

impl Demonstration {
    pub fn is_complete(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn success(&self) -> bool {
        self.outcome.as_ref().is_some_and(|o| o.success)
    }

    /// Accepted TAP triggers as (tick, id).
    pub fn tap_triggers(&self) -> Vec<(usize, usize)> {
        self.frames
            .iter()
            .enumerate()
            .filter_map(|(t, f)| f.tap_label().id().map(|id| (t, id)))
            .collect()
    }
}

/// Collects frames for one episode.
#[derive(Debug, Clone)]
pub struct Recorder {
    task: TaskConfig,
    metadata: Metadata,
    frames: Vec<Frame>,
}

impl Recorder {
    pub fn new(task: TaskConfig, metadata: Metadata) -> Self {
        Self {
            task,
            metadata,
            frames: Vec::new(),
        }
    }

    pub fn push(&mut self, frame: Frame) {
        self.frames.push(frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn finish(self, outcome: Outcome) -> Demonstration {
        Demonstration {
            task: self.task,
            metadata: self.metadata,
            frames: self.frames,
            outcome: Some(outcome),
        }
    }

    /// The operator dropped out mid-episode.
    pub fn truncate(self) -> Demonstration {
        Demonstration {
            task: self.task,
            metadata: self.metadata,
            frames: self.frames,
            outcome: None,
        }
    }
}

/// A teleoperation session: world, controller and recorder stepped together.
#[derive(Debug, Clone)]
pub struct TeleopSession {
    pub cfg: TaskConfig,
    pub controller: Controller,
    pub vocabulary: CommandVocabulary,
    pub ws: WorldState,
    pub cs: ControllerState,
    pub recorder: Recorder,
    pub done: Option<Result<(), FailureReason>>,
}

/// What one session tick did.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTick {
    pub command: TapCommand,
    /// Result of matching a text command, if one was sent.
    pub matched: Option<CommandMatch>,
    pub decision: Option<TapDecision>,
    pub emitted_by: EmittedBy,
    pub terminal: Option<Result<(), FailureReason>>,
}

impl TeleopSession {
    pub fn new(cfg: TaskConfig, metadata: Metadata) -> Result<Self> {
        cfg.validate()?;
        let controller = Controller::new(cfg.library(), cfg.control_period);
        let vocabulary = CommandVocabulary::from_task(&cfg)?;
        let ws = sim::reset(&cfg);
        Ok(Self {
            recorder: Recorder::new(cfg.clone(), metadata),
            cfg,
            controller,
            vocabulary,
            ws,
            cs: ControllerState::default(),
            done: None,
        })
    }

    /// Resolves the TAP command carried by an input frame.
    pub fn command_for(&self, input: &TeleopInput) -> Result<(TapCommand, Option<CommandMatch>)> {
        if let Some(id) = input.tap_button {
            return Ok((TapCommand::Tap(id), None));
        }
        if let Some(text) = &input.text_command {
            let m = self.vocabulary.parse(text)?;
            let cmd = match m {
                CommandMatch::Tap { id, .. } => TapCommand::Tap(id),
                CommandMatch::NoMatch { .. } => TapCommand::Empty,
            };
            return Ok((cmd, Some(m)));
        }
        Ok((TapCommand::Empty, None))
    }

    pub fn tick(&mut self, input: &TeleopInput, gain: &GainSetting) -> Result<SessionTick> {
        input.validate()?;
        gain.validate()?;
        if self.done.is_some() {
            return Err(Error::Usage("episode already ended; reset first".into()));
        }
        let (command, matched) = self.command_for(input)?;
        let observation = sim::observe(&self.ws, &self.cfg);
        let action = map_input(input, gain, None, None, &self.ws.ee_pose);
        let out = self.controller.tick(&mut self.cs, &self.ws, &action, command);
        self.recorder.push(Frame {
            observation,
            action: out.action,
            tap_event: command,
            decision: out.decision,
            source: match out.emitted_by {
                EmittedBy::Tap => SourceTag::TapSynthesized,
                EmittedBy::Incoming => SourceTag::Operator,
            },
            gain: *gain,
        });
        self.ws = sim::step(&self.ws, &out.action, &self.cfg);
        let terminal = sim::terminal(&self.ws, &self.cfg);
        self.done = terminal;
        Ok(SessionTick {
            command,
            matched,
            decision: out.decision,
            emitted_by: out.emitted_by,
            terminal,
        })
    }

    /// Ends the session, returning the recording. Unfinished episodes are
    /// flagged truncated.
    pub fn into_demonstration(self) -> Demonstration {
        match self.done {
            Some(result) => {
                let outcome = Outcome {
                    success: result.is_ok(),
                    failure: result.err(),
                    ticks: self.ws.tick,
                    final_state: self.ws,
                };
                self.recorder.finish(outcome)
            }
            None => self.recorder.truncate(),
        }
    }
}

/// Runs one scripted-operator episode to completion.
pub fn record_scripted(cfg: &TaskConfig, noise_seed: u64) -> Result<Demonstration> {
    let metadata = Metadata {
        operator: "scripted-expert".into(),
        date: String::new(),
        noise_seed: Some(noise_seed),
    };
    let mut session = TeleopSession::new(cfg.clone(), metadata)?;
    while session.done.is_none() {
        let (input, gain) = scripted_expert(cfg, &session.ws, &session.cs, noise_seed);
        session.tick(&input, &gain)?;
    }
    Ok(session.into_demonstration())
}

//! Closed-loop execution of a policy through the TAP controller.
//!
//! Every tick the loop pops the scheduled (action, TAP) pair and hands it
//! to the controller. An inference is launched whenever none is in flight;
//! it sees the observation of its launch tick and completes
//! `inference_latency_ticks` later. Window position `k` of a prediction
//! launched at tick `s` is meant for tick `s + k`, so on completion the
//! positions `L .. L + execute_steps` are scheduled and replace whatever
//! was still pending. Only the first TAP trigger inside that slice is kept.
//!
//! The policy keeps predicting while a TAP runs; the controller ignores
//! those actions until the TAP hands back.

pub mod buffer;

pub use buffer::{ActionBuffer, BufferEntry};

use crate::action::Action;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::policy::{infer, PolicyOutput, PolicyWeights};
use crate::sim::{self, FailureReason, Observation, TaskConfig, TaskKind, WorldState};
use crate::tap::{Controller, ControllerState, EmittedBy, TapCommand, TapDecision};
use crate::teleop::{map_input, scripted_expert, Demonstration};
use serde::{Deserialize, Serialize};
use std::sync::mpsc;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Latency modeled in ticks; single-threaded and bit-reproducible.
    DeterministicLockstep,
    /// Inference on a worker thread against a wall-clock control loop.
    RealtimeWallClock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeConfig {
    pub control_period: f64,
    pub inference_latency_ticks: usize,
    pub execute_steps: usize,
    pub mode: ClockMode,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            control_period: 0.1,
            inference_latency_ticks: 3,
            execute_steps: 3,
            mode: ClockMode::DeterministicLockstep,
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("runtime config: {m}")));
        if !(self.control_period > 0.0) {
            return fail("control_period must be positive".into());
        }
        if self.inference_latency_ticks == 0 || self.execute_steps == 0 {
            return fail("latency and execute_steps must be at least 1".into());
        }
        if self.mode == ClockMode::DeterministicLockstep && self.execute_steps < self.inference_latency_ticks {
            return fail(format!(
                "execute_steps {} below inference latency {} starves the loop",
                self.execute_steps, self.inference_latency_ticks
            ));
        }
        if self.inference_latency_ticks + self.execute_steps > horizon {
            return fail(format!(
                "latency {} + execute_steps {} exceeds the policy horizon {horizon}",
                self.inference_latency_ticks, self.execute_steps
            ));
        }
        Ok(())
    }

    /// Oldest admissible conditioning observation for an executed action.
    pub fn staleness_bound(&self) -> u64 {
        (self.execute_steps + self.inference_latency_ticks) as u64
    }
}

/// What a policy is given at inference time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub tick: u64,
    pub observation: Observation,
    pub world: WorldState,
    pub controller: ControllerState,
}

/// Anything that predicts an action window with TAP decisions.
pub trait Policy: Sync {
    fn horizon(&self) -> usize;
    fn predict(&self, snapshot: &Snapshot, noise_seed: u64) -> PolicyOutput;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn horizon(&self) -> usize {
        (**self).horizon()
    }

    fn predict(&self, snapshot: &Snapshot, noise_seed: u64) -> PolicyOutput {
        (**self).predict(snapshot, noise_seed)
    }
}

impl<P: Policy + Send + ?Sized> Policy for std::sync::Arc<P> {
    fn horizon(&self) -> usize {
        (**self).horizon()
    }

    fn predict(&self, snapshot: &Snapshot, noise_seed: u64) -> PolicyOutput {
        (**self).predict(snapshot, noise_seed)
    }
}

impl Policy for PolicyWeights {
    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn predict(&self, snapshot: &Snapshot, noise_seed: u64) -> PolicyOutput {
        infer(self, &snapshot.observation, noise_seed)
    }
}

/// The scripted operator wrapped as a policy. It predicts by simulating
/// itself forward from the snapshot, so under lockstep it reproduces its
/// own demonstrations.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    pub cfg: TaskConfig,
    pub noise_seed: u64,
    pub horizon: usize,
}

impl Policy for ScriptedPolicy {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, snapshot: &Snapshot, _noise_seed: u64) -> PolicyOutput {
        let controller = Controller::new(self.cfg.library(), self.cfg.control_period);
        let mut ws = snapshot.world.clone();
        let mut cs = snapshot.controller.clone();
        let mut actions = Vec::with_capacity(self.horizon);
        let mut taps = Vec::with_capacity(self.horizon);
        for _ in 0..self.horizon {
            let (input, gain) = scripted_expert(&self.cfg, &ws, &cs, self.noise_seed);
            let action = map_input(&input, &gain, None, None, &ws.ee_pose);
            let command = input.tap_button.map_or(TapCommand::Empty, TapCommand::Tap);
            let out = controller.tick(&mut cs, &ws, &action, command);
            ws = sim::step(&ws, &out.action, &self.cfg);
            actions.push(action);
            taps.push(crate::policy::TapPrediction {
                command,
                confidence: 1.0,
            });
        }
        PolicyOutput {
            actions,
            tap_decisions: taps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapSource {
    Policy,
    Operator,
}

/// One TAP command seen by the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapEvent {
    pub tick: u64,
    pub tap: usize,
    pub name: String,
    pub decision: TapDecision,
    pub source: TapSource,
    /// World at the moment of the trigger, for support analysis.
    pub world: WorldState,
}

impl TapEvent {
    pub fn accepted(&self) -> bool {
        matches!(self.decision, TapDecision::Accepted(_))
    }

    pub fn ee_pose(&self) -> Pose {
        self.world.ee_pose
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub ee_pose: Pose,
    pub gripper: f64,
    pub action: Action,
    pub emitted_by: EmittedBy,
    /// Generation of the buffer entry consumed; `None` when the previous
    /// action was repeated or the tick came from a recording.
    pub generation: Option<u64>,
    pub obs_tick: Option<u64>,
    pub active_tap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task: TaskKind,
    pub env_seed: u64,
    pub policy_seed: u64,
    pub success: bool,
    pub failure: Option<FailureReason>,
    /// False for replays of truncated recordings.
    pub complete: bool,
    pub ticks: u64,
    pub trajectory: Vec<TickRecord>,
    pub tap_events: Vec<TapEvent>,
    pub inferences: u64,
    /// Ticks on which no scheduled action was available.
    pub starvation: Vec<u64>,
    pub final_state: WorldState,
}

impl EpisodeResult {
    pub fn accepted_triggers(&self) -> impl Iterator<Item = &TapEvent> {
        self.tap_events.iter().filter(|e| e.accepted())
    }

    pub fn failure_reason(&self) -> Option<&'static str> {
        self.failure.map(|f| f.as_str())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise seed of the inference launched at `tick`.
pub fn inference_seed(seed: u64, tick: u64, warm: bool) -> u64 {
    splitmix(seed ^ splitmix(tick.wrapping_mul(2) + warm as u64))
}

/// Buffer entries for window positions `range`, keeping only the first TAP.
fn window_entries(out: &PolicyOutput, launch: u64, range: std::ops::Range<usize>) -> Vec<BufferEntry> {
    let mut tap_seen = false;
    range
        .filter(|&k| k < out.actions.len())
        .map(|k| {
            let mut tap = out.tap_decisions.get(k).map_or(TapCommand::Empty, |d| d.command);
            if tap_seen {
                tap = TapCommand::Empty;
            }
            tap_seen |= !tap.is_empty();
            BufferEntry {
                tick: launch + k as u64,
                action: out.actions[k],
                tap,
                generation: 0,
                obs_tick: launch,
            }
        })
        .collect()
}

/// World, controller and log of one running episode.
struct Episode {
    cfg: TaskConfig,
    controller: Controller,
    ws: WorldState,
    cs: ControllerState,
    trajectory: Vec<TickRecord>,
    tap_events: Vec<TapEvent>,
    starvation: Vec<u64>,
    last_action: Action,
    outcome: Option<std::result::Result<(), FailureReason>>,
}

impl Episode {
    fn new(cfg: &TaskConfig) -> Self {
        let ws = sim::reset(cfg);
        Self {
            controller: Controller::new(cfg.library(), cfg.control_period),
            last_action: Action::hold(ws.gripper),
            outcome: sim::terminal(&ws, cfg),
            ws,
            cfg: cfg.clone(),
            cs: ControllerState::default(),
            trajectory: Vec::new(),
            tap_events: Vec::new(),
            starvation: Vec::new(),
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            tick: self.ws.tick,
            observation: sim::observe(&self.ws, &self.cfg),
            world: self.ws.clone(),
            controller: self.cs.clone(),
        }
    }

    /// Runs one control tick with the given scheduled entry.
    fn apply(&mut self, action: Action, tap: TapCommand, source: TapSource, entry: Option<&BufferEntry>) {
        let tick = self.ws.tick;
        let out = self.controller.tick(&mut self.cs, &self.ws, &action, tap);
        if let (Some(decision), TapCommand::Tap(id)) = (out.decision, tap) {
            self.tap_events.push(TapEvent {
                tick,
                tap: id,
                name: self
                    .controller
                    .library()
                    .get(id)
                    .map_or_else(|| format!("#{id}"), |s| s.name.clone()),
                decision,
                source,
                world: self.ws.clone(),
            });
        }
        self.trajectory.push(TickRecord {
            tick,
            ee_pose: self.ws.ee_pose,
            gripper: self.ws.gripper,
            action: out.action,
            emitted_by: out.emitted_by,
            generation: entry.map(|e| e.generation),
            obs_tick: entry.map(|e| e.obs_tick),
            active_tap: self.cs.active,
        });
        self.last_action = action;
        self.ws = sim::step(&self.ws, &out.action, &self.cfg);
        self.outcome = sim::terminal(&self.ws, &self.cfg);
    }

    fn starve(&mut self) {
        self.starvation.push(self.ws.tick);
        let a = self.last_action;
        self.apply(a, TapCommand::Empty, TapSource::Policy, None);
    }

    fn finish(self, policy_seed: u64, inferences: u64, complete: bool) -> EpisodeResult {
        let (success, failure) = match self.outcome {
            Some(Ok(())) => (true, None),
            Some(Err(f)) => (false, Some(f)),
            None => (false, None),
        };
        EpisodeResult {
            task: self.cfg.task,
            env_seed: self.cfg.seed,
            policy_seed,
            success,
            failure,
            complete,
            ticks: self.ws.tick,
            trajectory: self.trajectory,
            tap_events: self.tap_events,
            inferences,
            starvation: self.starvation,
            final_state: self.ws,
        }
    }
}

/// Runs one policy episode from `reset(cfg)` until success, absorbing
/// failure or `cfg.max_ticks`. `seed` drives inference noise only.
pub fn run_episode(policy: &dyn Policy, cfg: &TaskConfig, rt: &RuntimeConfig, seed: u64) -> Result<EpisodeResult> {
    cfg.validate()?;
    rt.validate(policy.horizon())?;
    match rt.mode {
        ClockMode::DeterministicLockstep => Ok(run_lockstep(policy, cfg, rt, seed)),
        ClockMode::RealtimeWallClock => run_realtime(policy, cfg, rt, seed),
    }
}

/// Lockstep execution, also available tick by tick for live viewing.
pub struct LockstepRollout<P: Policy> {
    policy: P,
    rt: RuntimeConfig,
    seed: u64,
    episode: Episode,
    buffer: ActionBuffer,
    in_flight: Option<(u64, PolicyOutput)>,
    inferences: u64,
}

impl<P: Policy> LockstepRollout<P> {
    pub fn new(policy: P, cfg: &TaskConfig, rt: &RuntimeConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        rt.validate(policy.horizon())?;
        let episode = Episode::new(cfg);
        let mut buffer = ActionBuffer::new();
        // The first window is computed before the clock starts and covers
        // the ticks until the first pipelined inference lands.
        let warm = policy.predict(&episode.snapshot(), inference_seed(seed, 0, true));
        buffer.install(window_entries(&warm, 0, 0..rt.inference_latency_ticks));
        Ok(Self {
            policy,
            rt: *rt,
            seed,
            episode,
            buffer,
            in_flight: None,
            inferences: 1,
        })
    }

    pub fn world(&self) -> &WorldState {
        &self.episode.ws
    }

    pub fn controller_state(&self) -> &ControllerState {
        &self.episode.cs
    }

    pub fn library(&self) -> &crate::tap::TapLibrary {
        self.episode.controller.library()
    }

    pub fn is_done(&self) -> bool {
        self.episode.outcome.is_some()
    }

    pub fn tap_events(&self) -> &[TapEvent] {
        &self.episode.tap_events
    }

    /// Advances one tick; returns false once the episode has ended.
    pub fn step(&mut self) -> bool {
        if self.is_done() {
            return false;
        }
        let t = self.episode.ws.tick;
        let lat = self.rt.inference_latency_ticks;
        if let Some((launch, _)) = &self.in_flight {
            if launch + lat as u64 == t {
                let (launch, out) = self.in_flight.take().expect("in flight");
                self.buffer
                    .install(window_entries(&out, launch, lat..lat + self.rt.execute_steps));
            }
        }
        if self.in_flight.is_none() {
            let out = self
                .policy
                .predict(&self.episode.snapshot(), inference_seed(self.seed, t, false));
            self.in_flight = Some((t, out));
            self.inferences += 1;
        }
        match self.buffer.pop(t) {
            Some(entry) => {
                assert!(
                    t - entry.obs_tick <= self.rt.staleness_bound(),
                    "tick {t} executes an action conditioned on tick {}",
                    entry.obs_tick
                );
                self.episode
                    .apply(entry.action, entry.tap, TapSource::Policy, Some(&entry));
            }
            None => self.episode.starve(),
        }
        true
    }

    pub fn finish(mut self) -> EpisodeResult {
        while self.step() {}
        self.episode.finish(self.seed, self.inferences, true)
    }
}

fn run_lockstep(policy: &dyn Policy, cfg: &TaskConfig, rt: &RuntimeConfig, seed: u64) -> EpisodeResult {
    LockstepRollout::new(policy, cfg, rt, seed)
        .expect("validated by caller")
        .finish()
}

fn run_realtime(policy: &dyn Policy, cfg: &TaskConfig, rt: &RuntimeConfig, seed: u64) -> Result<EpisodeResult> {
    let period = Duration::from_secs_f64(rt.control_period);
    let mut episode = Episode::new(cfg);
    let mut buffer = ActionBuffer::new();
    let warm = policy.predict(&episode.snapshot(), inference_seed(seed, 0, true));
    buffer.install(window_entries(&warm, 0, 0..policy.horizon()));
    let mut inferences = 1;

    std::thread::scope(|scope| {
        let (req_tx, req_rx) = mpsc::channel::<(u64, Snapshot)>();
        let (res_tx, res_rx) = mpsc::channel::<(u64, PolicyOutput)>();
        scope.spawn(move || {
            for (launch, snap) in req_rx {
                let out = policy.predict(&snap, inference_seed(seed, launch, false));
                if res_tx.send((launch, out)).is_err() {
                    break;
                }
            }
        });

        let start = Instant::now();
        let mut in_flight = false;
        while episode.outcome.is_none() {
            let t = episode.ws.tick;
            let deadline = start + period * t as u32;
            if let Some(wait) = deadline.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
            while let Ok((launch, out)) = res_rx.try_recv() {
                in_flight = false;
                let from = (t.saturating_sub(launch) as usize).min(out.actions.len());
                buffer.install(window_entries(&out, launch, from..out.actions.len()));
            }
            if !in_flight {
                if req_tx.send((t, episode.snapshot())).is_err() {
                    return Err(Error::Usage("inference worker stopped".into()));
                }
                in_flight = true;
                inferences += 1;
            }
            match buffer.pop(t) {
                Some(entry) => episode.apply(entry.action, entry.tap, TapSource::Policy, Some(&entry)),
                None => {
                    log::warn!("tick {t}: action buffer empty, repeating the last action");
                    episode.starve();
                }
            }
        }
        drop(req_tx);
        Ok(())
    })?;
    Ok(episode.finish(seed, inferences, true))
}

/// Re-executes a recording through the controller and simulator. The
/// recorded executed actions are fed back as incoming actions, which the
/// controller passes through unchanged.
pub fn replay(demo: &Demonstration, cfg: &TaskConfig) -> Result<EpisodeResult> {
    if !cfg.same_scene(&demo.task) || cfg.seed != demo.task.seed {
        return Err(Error::ReplayRefused(format!(
            "recording was made under a different {} configuration (seed {} vs {})",
            demo.task.task, demo.task.seed, cfg.seed
        )));
    }
    let mut episode = Episode::new(cfg);
    for frame in &demo.frames {
        if episode.outcome.is_some() {
            break;
        }
        episode.apply(frame.action, frame.tap_event, TapSource::Operator, None);
    }
    Ok(episode.finish(0, 0, demo.is_complete()))
}

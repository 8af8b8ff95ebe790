//! Task configuration: scene geometry, randomization ranges, limits, the TAP
//! library and the command vocabulary. One TOML file per task; the shipped
//! defaults are embedded so the library works without a config directory.

use crate::error::{Error, Result};
use crate::tap::library::{TapLibrary, TapSpec};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    VialAspiration,
    LiquidTransfer,
    Unscrew,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::VialAspiration, TaskKind::LiquidTransfer, TaskKind::Unscrew];

    /// Short name used on the command line and in file names.
    pub fn short_name(&self) -> &'static str {
        match self {
            TaskKind::VialAspiration => "vial",
            TaskKind::LiquidTransfer => "transfer",
            TaskKind::Unscrew => "unscrew",
        }
    }

    /// Whether the tool scalar drives a syringe plunger rather than a gripper.
    pub fn uses_syringe(&self) -> bool {
        !matches!(self, TaskKind::Unscrew)
    }

    pub fn default_config(&self) -> TaskConfig {
        let text = match self {
            TaskKind::VialAspiration => include_str!("../../../../configs/vial.toml"),
            TaskKind::LiquidTransfer => include_str!("../../../../configs/transfer.toml"),
            TaskKind::Unscrew => include_str!("../../../../configs/unscrew.toml"),
        };
        TaskConfig::from_toml(text).expect("embedded task config is valid")
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        TaskKind::ALL
            .into_iter()
            .find(|t| {
                t.short_name() == lower
                    || serde_json::to_value(t).ok().and_then(|v| v.as_str().map(str::to_owned)) == Some(lower.clone())
            })
            .ok_or_else(|| Error::UnknownName {
                name: s.to_string(),
                valid: TaskKind::ALL.iter().map(|t| t.short_name().to_string()).collect(),
            })
    }
}

/// Inclusive sampling interval. Equal bounds give the bound exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn fixed(v: f64) -> Self {
        Self { min: v, max: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::Config(format!(
                "`{name}`: range needs finite min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    /// Meters per tick.
    pub max_translation: f64,
    /// Radians per tick.
    pub max_rotation: f64,
    /// Gripper travel per tick (0..1 scale).
    pub gripper_rate: f64,
    /// Plunger travel per tick (0..1 scale).
    pub plunger_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomeConfig {
    pub position: [f64; 3],
    /// Half-width of the uniform jitter on each position axis.
    pub position_jitter: f64,
    /// Half-width of the uniform yaw jitter about the vertical.
    pub yaw_jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyringeConfig {
    /// Milliliters at full plunger travel.
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VialScene {
    pub mouth: [f64; 3],
    pub mouth_jitter: f64,
    /// Angle between the vial axis and the vertical.
    pub tilt: Range,
    /// Heading of the tilt about the vertical.
    pub azimuth: Range,
    pub mouth_radius: f64,
    /// Tip depth below the mouth, along the vial axis, counted as inside.
    pub depth: Range,
    pub align_tolerance: f64,
    /// Milliliters initially in the vial.
    pub volume: f64,
    /// Fraction of syringe capacity that counts as filled.
    pub fill_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContainerConfig {
    /// Center of the container base on the table.
    pub center: [f64; 2],
    pub jitter: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferScene {
    pub a: ContainerConfig,
    pub b: ContainerConfig,
    pub radius: f64,
    pub height: f64,
    /// Horizontal radius of the liquid zone around the container axis.
    pub zone_radius: f64,
    /// Vertical extent of the liquid zone.
    pub zone_z: Range,
    /// Milliliters in B that count as success.
    pub success_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnscrewScene {
    pub bottle: [f64; 2],
    pub bottle_jitter: f64,
    pub bottle_radius: f64,
    /// Height of the lid grasp point when mounted.
    pub lid_z: Range,
    /// Full turns needed to free the lid, drawn uniformly per episode.
    pub turns: Vec<u32>,
    pub grasp_distance: f64,
    pub grasp_tilt: f64,
    /// Rising this far with a mounted, still threaded lid breaks the task.
    pub break_height: f64,
    /// Height of the lid grasp point when resting on the table.
    pub table_rest_z: f64,
    pub place_center: [f64; 2],
    pub place_jitter: f64,
    pub place_half_extent: f64,
}

/// Parameters of the scripted operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertConfig {
    /// Std-dev of per-tick translation noise (meters).
    pub translation_noise: f64,
    /// Std-dev of per-tick rotation noise (radians).
    pub rotation_noise: f64,
    /// Gain used for large motions; 1 otherwise.
    pub far_gain: f64,
    /// Distance above which the far gain applies.
    pub far_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyEntry {
    pub phrase: String,
    pub tap: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub task: TaskKind,
    #[serde(default)]
    pub seed: u64,
    pub max_ticks: u64,
    pub control_period: f64,
    pub limits: Limits,
    pub home: HomeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syringe: Option<SyringeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vial: Option<VialScene>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferScene>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unscrew: Option<UnscrewScene>,
    pub expert: ExpertConfig,
    pub taps: Vec<TapSpec>,
    #[serde(default = "default_max_distance")]
    pub max_distance: usize,
    #[serde(default)]
    pub vocabulary: Vec<VocabularyEntry>,
}

fn default_max_distance() -> usize {
    3
}

impl TaskConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TaskConfig = toml::from_str(text).map_err(|e| Error::Config(format!("task config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("task config serializes")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn library(&self) -> TapLibrary {
        TapLibrary::new(self.taps.clone()).expect("validated library")
    }

    pub fn vial(&self) -> &VialScene {
        self.vial.as_ref().expect("vial scene")
    }

    pub fn transfer(&self) -> &TransferScene {
        self.transfer.as_ref().expect("transfer scene")
    }

    pub fn unscrew(&self) -> &UnscrewScene {
        self.unscrew.as_ref().expect("unscrew scene")
    }

    pub fn syringe(&self) -> &SyringeConfig {
        self.syringe.as_ref().expect("syringe")
    }

    /// Per-tick travel of the tool scalar.
    pub fn tool_rate(&self) -> f64 {
        if self.task.uses_syringe() {
            self.limits.plunger_rate
        } else {
            self.limits.gripper_rate
        }
    }

    /// Everything except the seed must match for recorded streams to
    /// replay identically.
    pub fn same_scene(&self, other: &TaskConfig) -> bool {
        self.with_seed(0) == other.with_seed(0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must be positive, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must be nonnegative, got {v}")))
            }
        };
        positive("control_period", self.control_period)?;
        if self.max_ticks == 0 {
            return Err(Error::Config("`max_ticks` must be positive".into()));
        }
        positive("limits.max_translation", self.limits.max_translation)?;
        positive("limits.max_rotation", self.limits.max_rotation)?;
        if self.limits.max_rotation > std::f64::consts::PI {
            return Err(Error::Config("`limits.max_rotation` must not exceed pi".into()));
        }
        positive("limits.gripper_rate", self.limits.gripper_rate)?;
        positive("limits.plunger_rate", self.limits.plunger_rate)?;
        nonneg("home.position_jitter", self.home.position_jitter)?;
        nonneg("home.yaw_jitter", self.home.yaw_jitter)?;
        nonneg("expert.translation_noise", self.expert.translation_noise)?;
        nonneg("expert.rotation_noise", self.expert.rotation_noise)?;
        positive("expert.far_gain", self.expert.far_gain)?;
        if self.expert.far_gain > 10.0 {
            return Err(Error::Config("`expert.far_gain` must be at most 10".into()));
        }

        let missing = |section: &str| Error::Config(format!("task `{}` needs a [{section}] section", self.task));
        if self.task.uses_syringe() {
            let s = self.syringe.as_ref().ok_or_else(|| missing("syringe"))?;
            positive("syringe.capacity", s.capacity)?;
        }
        match self.task {
            TaskKind::VialAspiration => {
                let v = self.vial.as_ref().ok_or_else(|| missing("vial"))?;
                nonneg("vial.mouth_jitter", v.mouth_jitter)?;
                v.tilt.validate("vial.tilt")?;
                v.azimuth.validate("vial.azimuth")?;
                v.depth.validate("vial.depth")?;
                positive("vial.mouth_radius", v.mouth_radius)?;
                positive("vial.align_tolerance", v.align_tolerance)?;
                nonneg("vial.volume", v.volume)?;
                positive("vial.fill_fraction", v.fill_fraction)?;
            }
            TaskKind::LiquidTransfer => {
                let t = self.transfer.as_ref().ok_or_else(|| missing("transfer"))?;
                for (name, c) in [("a", &t.a), ("b", &t.b)] {
                    nonneg(&format!("transfer.{name}.jitter"), c.jitter)?;
                    nonneg(&format!("transfer.{name}.volume"), c.volume)?;
                }
                positive("transfer.radius", t.radius)?;
                positive("transfer.height", t.height)?;
                positive("transfer.zone_radius", t.zone_radius)?;
                t.zone_z.validate("transfer.zone_z")?;
                positive("transfer.success_volume", t.success_volume)?;
            }
            TaskKind::Unscrew => {
                let u = self.unscrew.as_ref().ok_or_else(|| missing("unscrew"))?;
                nonneg("unscrew.bottle_jitter", u.bottle_jitter)?;
                positive("unscrew.bottle_radius", u.bottle_radius)?;
                u.lid_z.validate("unscrew.lid_z")?;
                if u.turns.is_empty() || u.turns.contains(&0) {
                    return Err(Error::Config(
                        "`unscrew.turns` must list at least one positive turn count".into(),
                    ));
                }
                positive("unscrew.grasp_distance", u.grasp_distance)?;
                positive("unscrew.grasp_tilt", u.grasp_tilt)?;
                positive("unscrew.break_height", u.break_height)?;
                nonneg("unscrew.table_rest_z", u.table_rest_z)?;
                nonneg("unscrew.place_jitter", u.place_jitter)?;
                positive("unscrew.place_half_extent", u.place_half_extent)?;
            }
        }

        let library = TapLibrary::new(self.taps.clone())?;
        for entry in &self.vocabulary {
            library
                .require(&entry.tap)
                .map_err(|e| Error::Config(format!("vocabulary phrase `{}`: {e}", entry.phrase)))?;
        }
        Ok(())
    }
}

//! Shared vocabulary: signals, danger and reaction levels, scenario kinds and
//! resource requests/allocations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::controllers::Reference;

/// A finite sample of a generic continuous plasma or actuator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSignal {
    pub name: String,
    pub value: f64,
    pub time: f64,
}

impl ContinuousSignal {
    /// Returns `None` if the value is not finite or the time is negative.
    pub fn new(name: impl Into<String>, value: f64, time: f64) -> Option<Self> {
        if value.is_finite() && time.is_finite() && time >= 0.0 {
            Some(Self {
                name: name.into(),
                value,
                time,
            })
        } else {
            None
        }
    }
}

/// Per-event severity classification.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum DangerLevel {
    #[default]
    No = 0,
    Low = 1,
    Medium = 2,
    High = 3,
    VeryHigh = 4,
}

impl DangerLevel {
    pub const ALL: [DangerLevel; 5] = [
        DangerLevel::No,
        DangerLevel::Low,
        DangerLevel::Medium,
        DangerLevel::High,
        DangerLevel::VeryHigh,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DangerLevel::No => "no",
            DangerLevel::Low => "low",
            DangerLevel::Medium => "medium",
            DangerLevel::High => "high",
            DangerLevel::VeryHigh => "very_high",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }
}

impl fmt::Display for DangerLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Required response for one event, 0 (no action) to 4 (mitigation).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(try_from = "u8", into = "u8")]
pub struct ReactionLevel(u8);

impl ReactionLevel {
    pub const MAX: u8 = 4;
    pub const NONE: ReactionLevel = ReactionLevel(0);

    pub fn new(level: u8) -> Option<Self> {
        (level <= Self::MAX).then_some(Self(level))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = ReactionLevel> {
        (0..=Self::MAX).map(ReactionLevel)
    }

    /// Levels latched by default once reached.
    pub fn default_irreversible() -> Vec<ReactionLevel> {
        vec![ReactionLevel(3), ReactionLevel(4)]
    }
}

impl TryFrom<u8> for ReactionLevel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        ReactionLevel::new(v).ok_or_else(|| format!("reaction level {v} outside 0..=4"))
    }
}

impl From<ReactionLevel> for u8 {
    fn from(r: ReactionLevel) -> u8 {
        r.0
    }
}

impl fmt::Display for ReactionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The five basic kinds of control scenario, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Normal,
    Recovery,
    Backup,
    SoftShutdown,
    DisruptionMitigation,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Normal,
        ScenarioKind::Recovery,
        ScenarioKind::Backup,
        ScenarioKind::SoftShutdown,
        ScenarioKind::DisruptionMitigation,
    ];

    /// Scenario kind conventionally answering a reaction level.
    pub fn for_reaction(level: ReactionLevel) -> Self {
        Self::ALL[level.get() as usize]
    }

    pub fn severity(self) -> u8 {
        self as u8
    }

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            ScenarioKind::SoftShutdown | ScenarioKind::DisruptionMitigation
        )
    }
}

/// A task's demand on one actuator group for the current tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceRequest {
    pub task: String,
    pub group: String,
    pub amount: f64,
    /// Smallest grant the task can use; anything less is replaced by zero.
    pub minimum: f64,
}

impl ResourceRequest {
    pub fn new(task: impl Into<String>, group: impl Into<String>, amount: f64) -> Self {
        Self {
            task: task.into(),
            group: group.into(),
            amount,
            minimum: 0.0,
        }
    }

    pub fn with_minimum(mut self, minimum: f64) -> Self {
        self.minimum = minimum;
        self
    }
}

/// Granted amounts keyed by (task, group), plus the tasks left empty-handed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub grants: BTreeMap<String, BTreeMap<String, f64>>,
    pub starved: Vec<String>,
}

impl Allocation {
    pub fn granted(&self, task: &str, group: &str) -> f64 {
        self.grants
            .get(task)
            .and_then(|g| g.get(group))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn group_total(&self, group: &str) -> f64 {
        self.grants.values().filter_map(|g| g.get(group)).fold(0.0, |a, b| a + b)
    }

    pub(crate) fn insert(&mut self, task: &str, group: &str, amount: f64) {
        self.grants
            .entry(task.to_string())
            .or_default()
            .insert(group.to_string(), amount);
    }
}

/// Condition under which a task inside the selected scenario is active.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Activation {
    /// Inclusive start time in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<f64>,
    /// Exclusive end time in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<EventTrigger>,
}

/// Fires while the named event's level lies in `min_level..=max_level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventTrigger {
    pub one: String,
    pub min_level: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_level: Option<u8>,
}

impl EventTrigger {
    pub fn holds(&self, level: u8) -> bool {
        level >= self.min_level && self.max_level.is_none_or(|m| level <= m)
    }
}

/// One control objective inside a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlTask {
    pub id: String,
    /// 1 is the highest priority.
    pub priority: u32,
    pub controller: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
    #[serde(default, skip_serializing_if = "Activation::is_always")]
    pub activation: Activation,
}

impl Activation {
    pub fn is_always(&self) -> bool {
        self == &Activation::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub tasks: Vec<ControlTask>,
}

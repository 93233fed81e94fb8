//! Actuator manager: priority-ordered allocation of actuator-group resources
//! and merging of controller commands into one command per group.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::state::{Allocation, ResourceRequest};

/// Grants and commands below this are treated as zero.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupSemantics {
    /// Contributions add up (powers, fluxes).
    #[default]
    Additive,
    /// Only the highest-priority holder commands the group (e.g. launcher aiming).
    Exclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorGroup {
    pub id: String,
    pub capacity: f64,
    /// Currently usable share of the capacity; defaults to the capacity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub availability: Option<f64>,
    #[serde(default)]
    pub semantics: GroupSemantics,
    /// Allowed command values; defaults to `[0, capacity]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command_range: Option<[f64; 2]>,
    /// Free-form unit label, e.g. "MW".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl ActuatorGroup {
    pub fn new(id: impl Into<String>, capacity: f64) -> Self {
        Self {
            id: id.into(),
            capacity,
            availability: None,
            semantics: GroupSemantics::Additive,
            command_range: None,
            unit: None,
        }
    }

    pub fn exclusive(mut self) -> Self {
        self.semantics = GroupSemantics::Exclusive;
        self
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.command_range = Some([lo, hi]);
        self
    }

    pub fn available(&self) -> f64 {
        self.availability.unwrap_or(self.capacity).clamp(0.0, self.capacity)
    }

    pub fn range(&self) -> (f64, f64) {
        let [lo, hi] = self.command_range.unwrap_or([0.0, self.capacity]);
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub group: String,
    pub value: f64,
    pub time: f64,
}

/// Priority-ordered greedy allocation, groups handled independently. Each
/// request receives `min(amount, remaining)` when that reaches its minimum and
/// zero otherwise. `priority` maps task id to priority (1 first); ties break on
/// task id.
pub fn allocate(
    requests: &[ResourceRequest],
    groups: &[ActuatorGroup],
    priority: &BTreeMap<String, u32>,
) -> Result<Allocation, ConfigError> {
    let mut seen = std::collections::BTreeSet::new();
    for r in requests {
        if !seen.insert((r.task.as_str(), r.group.as_str())) {
            return Err(ConfigError::DuplicateRequest {
                task: r.task.clone(),
                group: r.group.clone(),
            });
        }
        if !groups.iter().any(|g| g.id == r.group) {
            return Err(ConfigError::UnknownGroup(r.group.clone()));
        }
    }
    let rank = |task: &str| priority.get(task).copied().unwrap_or(u32::MAX);
    let mut order: Vec<&ResourceRequest> = requests.iter().collect();
    order.sort_by(|a, b| {
        rank(&a.task)
            .cmp(&rank(&b.task))
            .then_with(|| a.task.cmp(&b.task))
    });

    let mut remaining: BTreeMap<&str, f64> =
        groups.iter().map(|g| (g.id.as_str(), g.available())).collect();
    let mut alloc = Allocation::default();
    for r in order {
        let left = remaining.get_mut(r.group.as_str()).expect("checked above");
        let amount = r.amount.max(0.0);
        let offer = amount.min(*left);
        let grant = if offer > EPS && offer + EPS >= r.minimum {
            offer
        } else {
            0.0
        };
        *left -= grant;
        alloc.insert(&r.task, &r.group, grant);
        if amount > EPS && grant == 0.0 && !alloc.starved.contains(&r.task) {
            alloc.starved.push(r.task.clone());
        }
    }
    Ok(alloc)
}

/// A controller output tagged with the task that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskCommand {
    pub task: String,
    pub priority: u32,
    pub command: ActuatorCommand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub task: String,
    pub group: String,
    pub reason: &'static str,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Merged {
    /// One command per group, in group order.
    pub commands: Vec<ActuatorCommand>,
    pub violations: Vec<Violation>,
}

/// Combines controller outputs into one command per group. Commands without a
/// grant, or exceeding their grant on an additive group, are dropped and
/// reported.
pub fn merge_commands(
    outputs: &[TaskCommand],
    allocation: &Allocation,
    groups: &[ActuatorGroup],
    time: f64,
) -> Merged {
    let mut merged = Merged::default();
    for g in groups {
        let (lo, hi) = g.range();
        let mut accepted: Vec<&TaskCommand> = Vec::new();
        for out in outputs.iter().filter(|o| o.command.group == g.id) {
            let grant = allocation.granted(&out.task, &g.id);
            let reason = if grant <= EPS {
                Some("command without grant")
            } else if g.semantics == GroupSemantics::Additive
                && out.command.value.abs() > grant + 1e-9
            {
                Some("command exceeds grant")
            } else {
                None
            };
            match reason {
                Some(reason) => merged.violations.push(Violation {
                    task: out.task.clone(),
                    group: g.id.clone(),
                    reason,
                }),
                None => accepted.push(out),
            }
        }
        let raw = match g.semantics {
            GroupSemantics::Additive => accepted.iter().fold(0.0, |acc, o| acc + o.command.value),
            GroupSemantics::Exclusive => accepted
                .iter()
                .min_by(|a, b| a.priority.cmp(&b.priority).then_with(|| a.task.cmp(&b.task)))
                .map_or(lo.max(0.0).min(hi), |o| o.command.value),
        };
        merged.commands.push(ActuatorCommand {
            group: g.id.clone(),
            value: raw.clamp(lo, hi),
            time,
        });
    }
    merged
}

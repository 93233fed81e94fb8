//! Supervisor: per-event danger and reaction state machines, the mapping from
//! the tuple of reaction levels to a scenario, and task activation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::monitor::EventState;
use crate::state::{ControlTask, DangerLevel, ReactionLevel, Scenario, ScenarioKind};

/// Event level to danger level, indexed by event level.
#[derive(Debug, Clone, PartialEq)]
pub struct DangerFsm {
    pub one: String,
    pub mapping: Vec<DangerLevel>,
}

/// Classifies an event level. The mapping is memoryless; hysteresis lives in
/// the monitor.
pub fn danger_step(event: &EventState, fsm: &DangerFsm) -> Result<DangerLevel, ConfigError> {
    fsm.mapping
        .get(event.level as usize)
        .copied()
        .ok_or_else(|| ConfigError::LevelOutOfDomain {
            one: fsm.one.clone(),
            level: event.level,
            max: fsm.mapping.len().saturating_sub(1) as u8,
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionFsm {
    mapping: [ReactionLevel; 5],
    irreversible: Vec<ReactionLevel>,
}

impl ReactionFsm {
    /// Fails unless `mapping` has a row for every danger level.
    pub fn new(
        one: &str,
        mapping: &BTreeMap<DangerLevel, ReactionLevel>,
        irreversible: Vec<ReactionLevel>,
    ) -> Result<Self, ConfigError> {
        let mut rows = [ReactionLevel::NONE; 5];
        for d in DangerLevel::ALL {
            rows[d.index() as usize] = *mapping.get(&d).ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "reaction map of `{one}` is non-total: no row for danger `{d}`"
                ))
            })?;
        }
        Ok(Self {
            mapping: rows,
            irreversible,
        })
    }

    pub fn candidate(&self, danger: DangerLevel) -> ReactionLevel {
        self.mapping[danger.index() as usize]
    }

    pub fn is_irreversible(&self, level: ReactionLevel) -> bool {
        self.irreversible.contains(&level)
    }
}

/// Reaction memory of one event: the current level and the latch floor, the
/// highest irreversible level returned so far.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactionState {
    pub level: ReactionLevel,
    pub floor: ReactionLevel,
}

impl ReactionState {
    /// State after `level` was returned, assuming no higher irreversible level
    /// was visited before.
    pub fn at(level: ReactionLevel, fsm: &ReactionFsm) -> Self {
        Self {
            level,
            floor: if fsm.is_irreversible(level) {
                level
            } else {
                ReactionLevel::NONE
            },
        }
    }
}

/// Next reaction level. Never drops below an irreversible level once one has
/// been returned, but may still escalate past it.
pub fn reaction_step(danger: DangerLevel, fsm: &ReactionFsm, prev: ReactionState) -> ReactionState {
    let level = fsm.candidate(danger).max(prev.floor);
    let floor = if fsm.is_irreversible(level) {
        level.max(prev.floor)
    } else {
        prev.floor
    };
    ReactionState { level, floor }
}

/// One position of an OS-mapping row: a concrete level or `"*"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelPattern {
    Any,
    Level(ReactionLevel),
}

impl LevelPattern {
    pub fn matches(self, level: ReactionLevel) -> bool {
        match self {
            LevelPattern::Any => true,
            LevelPattern::Level(l) => l == level,
        }
    }
}

impl Serialize for LevelPattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LevelPattern::Any => s.serialize_str("*"),
            LevelPattern::Level(l) => s.serialize_u8(l.get()),
        }
    }
}

impl<'de> Deserialize<'de> for LevelPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Str(s) if s == "*" => Ok(LevelPattern::Any),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a reaction level or \"*\", got \"{s}\""
            ))),
            Raw::Int(i) => u8::try_from(i)
                .ok()
                .and_then(ReactionLevel::new)
                .map(LevelPattern::Level)
                .ok_or_else(|| serde::de::Error::custom(format!("reaction level {i} outside 0..=4"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsRow {
    pub reactions: Vec<LevelPattern>,
    pub scenario: String,
}

impl OsRow {
    pub fn matches(&self, reactions: &[ReactionLevel]) -> bool {
        self.reactions.len() == reactions.len()
            && self.reactions.iter().zip(reactions).all(|(p, &l)| p.matches(l))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsMapping {
    /// Normal-type scenario used when nothing needs a reaction.
    pub default: String,
    #[serde(default)]
    pub rows: Vec<OsRow>,
}

/// How a scenario was picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingRoute {
    Row(usize),
    Fallback,
}

/// Picks the scenario for a reaction tuple: first matching row, otherwise the
/// severity fallback (see [`fallback_scenario`]).
pub fn map_scenario(
    reactions: &[ReactionLevel],
    mapping: &OsMapping,
    scenarios: &[Scenario],
    arity: usize,
) -> Result<(String, MappingRoute), ConfigError> {
    if reactions.len() != arity {
        return Err(ConfigError::ArityMismatch {
            expected: arity,
            found: reactions.len(),
        });
    }
    if let Some(i) = mapping.rows.iter().position(|r| r.matches(reactions)) {
        return Ok((mapping.rows[i].scenario.clone(), MappingRoute::Row(i)));
    }
    Ok((
        fallback_scenario(reactions, mapping, scenarios),
        MappingRoute::Fallback,
    ))
}

/// Scenario of the kind answering the highest reaction level, lowest id first.
/// When no scenario of that kind exists the next more severe kind is tried,
/// then less severe ones; level 0 and an empty search give the default.
pub fn fallback_scenario(
    reactions: &[ReactionLevel],
    mapping: &OsMapping,
    scenarios: &[Scenario],
) -> String {
    let top = reactions.iter().copied().max().unwrap_or_default();
    if top == ReactionLevel::NONE {
        return mapping.default.clone();
    }
    let want = ScenarioKind::for_reaction(top).severity();
    let order = (want..=4).chain((1..want).rev());
    for sev in order {
        let kind = ScenarioKind::ALL[sev as usize];
        if let Some(s) = scenarios
            .iter()
            .filter(|s| s.kind == kind)
            .map(|s| &s.id)
            .min()
        {
            return s.clone();
        }
    }
    mapping.default.clone()
}

/// Tasks of `scenario` whose activation condition holds, by priority.
pub fn activate_tasks(scenario: &Scenario, time: f64, events: &[EventState]) -> Vec<ControlTask> {
    let mut active: Vec<ControlTask> = scenario
        .tasks
        .iter()
        .filter(|t| {
            let a = &t.activation;
            a.from.is_none_or(|from| time >= from)
                && a.until.is_none_or(|until| time < until)
                && a.when.as_ref().is_none_or(|w| {
                    events
                        .iter()
                        .find(|e| e.one == w.one)
                        .is_some_and(|e| w.holds(e.level))
                })
        })
        .cloned()
        .collect();
    active.sort_by(|a, b| a.priority.cmp(&b.priority).then_with(|| a.id.cmp(&b.id)));
    active
}

/// Danger and reaction machines of one event.
#[derive(Debug, Clone, PartialEq)]
pub struct OneFsm {
    pub id: String,
    pub danger: DangerFsm,
    pub reaction: ReactionFsm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SupervisorState {
    pub danger: Vec<DangerLevel>,
    pub reaction: Vec<ReactionState>,
    pub scenario: Option<String>,
}

impl SupervisorState {
    pub fn initial(ones: usize) -> Self {
        Self {
            danger: vec![DangerLevel::No; ones],
            reaction: vec![ReactionState::default(); ones],
            scenario: None,
        }
    }
}

/// Output of one supervisor tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub route: MappingRoute,
    pub tasks: Vec<ControlTask>,
    pub danger: Vec<DangerLevel>,
    pub reaction: Vec<ReactionLevel>,
}

impl Decision {
    pub fn task_ids(&self) -> Vec<&str> {
        self.tasks.iter().map(|t| t.id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Supervisor {
    pub ones: Vec<OneFsm>,
    pub os_mapping: OsMapping,
    pub scenarios: Vec<Scenario>,
}

impl Supervisor {
    pub fn new(
        ones: Vec<OneFsm>,
        os_mapping: OsMapping,
        scenarios: Vec<Scenario>,
    ) -> Result<Self, ConfigError> {
        let known = |id: &str| scenarios.iter().any(|s| s.id == id);
        if !known(&os_mapping.default) {
            return Err(ConfigError::UnknownScenario(os_mapping.default.clone()));
        }
        if let Some(row) = os_mapping.rows.iter().find(|r| !known(&r.scenario)) {
            return Err(ConfigError::UnknownScenario(row.scenario.clone()));
        }
        Ok(Self {
            ones,
            os_mapping,
            scenarios,
        })
    }

    pub fn initial_state(&self) -> SupervisorState {
        SupervisorState::initial(self.ones.len())
    }

    pub fn scenario(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    /// danger -> reaction per event, then scenario mapping and task activation.
    pub fn step(
        &self,
        events: &[EventState],
        state: &SupervisorState,
    ) -> Result<(Decision, SupervisorState), ConfigError> {
        let n = self.ones.len();
        if state.danger.len() != n || state.reaction.len() != n {
            return Err(ConfigError::ArityMismatch {
                expected: n,
                found: state.reaction.len(),
            });
        }
        let time = events.iter().map(|e| e.time).fold(0.0, f64::max);
        let mut danger = Vec::with_capacity(n);
        let mut reaction = Vec::with_capacity(n);
        for (i, one) in self.ones.iter().enumerate() {
            let ev = events
                .iter()
                .find(|e| e.one == one.id)
                .ok_or_else(|| ConfigError::MissingInput {
                    one: "supervisor".to_string(),
                    input: one.id.clone(),
                })?;
            let d = danger_step(ev, &one.danger)?;
            danger.push(d);
            reaction.push(reaction_step(d, &one.reaction, state.reaction[i]));
        }
        let levels: Vec<ReactionLevel> = reaction.iter().map(|r| r.level).collect();
        let (scenario_id, route) = map_scenario(&levels, &self.os_mapping, &self.scenarios, n)?;
        let scenario = self
            .scenario(&scenario_id)
            .ok_or_else(|| ConfigError::UnknownScenario(scenario_id.clone()))?;
        let tasks = activate_tasks(scenario, time, events);
        let decision = Decision {
            scenario: scenario_id.clone(),
            kind: scenario.kind,
            route,
            tasks,
            danger: danger.clone(),
            reaction: levels,
        };
        let next = SupervisorState {
            danger,
            reaction,
            scenario: Some(scenario_id),
        };
        Ok((decision, next))
    }
}

//! The pulse schedule: a TOML document describing events, state-machine
//! tables, the scenario mapping, scenarios with their tasks, controllers,
//! actuator groups, the surrogate plant and the run settings.
//!
//! Parsing is strict (unknown keys are rejected). [`validate`] performs the
//! cross-reference and table checks and reports errors and warnings without
//! failing; a schedule with zero errors builds runtime components that never
//! raise a [`ConfigError`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::actuator::ActuatorGroup;
use crate::controllers::{DaGasMode, DaPowerMode, PidGains};
use crate::error::{ConfigError, PcsError};
use crate::monitor::{Direction, EventSource, EventSpec, ThresholdTable, VirtualOneRule};
use crate::plant::PlantParams;
use crate::state::{DangerLevel, ReactionLevel, Scenario, ScenarioKind};
use crate::supervisor::{
    fallback_scenario, DangerFsm, OneFsm, OsMapping, ReactionFsm, Supervisor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Control period, s.
    #[serde(deserialize_with = "crate::units::seconds")]
    pub dt: f64,
    /// Discharge length, s.
    #[serde(deserialize_with = "crate::units::seconds")]
    pub duration: f64,
    /// Time kept running after a disruption, s.
    #[serde(default, deserialize_with = "crate::units::seconds")]
    pub post_roll: f64,
}

impl RunConfig {
    /// Number of ticks in a full-length run.
    pub fn ticks(&self, until: Option<f64>) -> u64 {
        let end = until.map_or(self.duration, |u| u.min(self.duration));
        (end / self.dt + 1e-9).floor().max(0.0) as u64
    }
}

/// One off-normal event: its source, danger map and reaction machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneConfig {
    pub id: String,
    /// Monitored signal for threshold-based events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hysteresis: Vec<f64>,
    /// Combination of base events.
    #[serde(
        rename = "virtual",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub virtual_rule: Option<VirtualOneRule>,
    /// Raised while any monitored signal is non-finite.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub plant_failure: bool,
    /// Danger level per event level.
    pub danger: Vec<DangerLevel>,
    pub reaction: BTreeMap<DangerLevel, ReactionLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irreversible: Option<Vec<ReactionLevel>>,
}

impl OneConfig {
    fn source(&self) -> Result<EventSource, String> {
        let n = usize::from(self.signal.is_some())
            + usize::from(self.virtual_rule.is_some())
            + usize::from(self.plant_failure);
        if n != 1 {
            return Err(
                "exactly one of `signal`, `virtual` or `plant_failure` must be given".into(),
            );
        }
        if let Some(signal) = &self.signal {
            let direction = self
                .direction
                .ok_or("`direction` is required with `signal`")?;
            return Ok(EventSource::Signal(ThresholdTable {
                signal: signal.clone(),
                direction,
                thresholds: self.thresholds.clone(),
                hysteresis: self.hysteresis.clone(),
            }));
        }
        if !self.thresholds.is_empty() || !self.hysteresis.is_empty() || self.direction.is_some()
        {
            return Err("thresholds only apply to signal events".into());
        }
        Ok(match &self.virtual_rule {
            Some(rule) => EventSource::Virtual(rule.clone()),
            None => EventSource::PlantFailure,
        })
    }

    pub fn irreversible_set(&self) -> Vec<ReactionLevel> {
        self.irreversible
            .clone()
            .unwrap_or_else(ReactionLevel::default_irreversible)
    }
}

/// Controller bindings referenced by tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerConfig {
    /// Plays the task reference back as the command.
    Feedforward {
        group: String,
        #[serde(default)]
        min_request: f64,
    },
    /// Tracks the task reference with a measured signal.
    Pid {
        group: String,
        measurement: String,
        #[serde(flatten)]
        gains: PidGains,
    },
    /// Disruption-avoidance heating.
    DaPower {
        group: String,
        distance_signal: String,
        d_critical1: f64,
        gain: f64,
        #[serde(deserialize_with = "crate::units::megawatts")]
        p_max: f64,
        mode: DaPowerMode,
    },
    /// Disruption-avoidance fueling; the task reference is the base ramp.
    DaGas { group: String, mode: DaGasMode },
    /// NTM stabilization with EC power and launcher aiming.
    Ntm {
        power_group: String,
        aiming_group: String,
        position_signal: String,
        #[serde(deserialize_with = "crate::units::megawatts")]
        max_power: f64,
    },
}

impl ControllerConfig {
    pub fn groups(&self) -> Vec<&str> {
        match self {
            ControllerConfig::Feedforward { group, .. }
            | ControllerConfig::Pid { group, .. }
            | ControllerConfig::DaPower { group, .. }
            | ControllerConfig::DaGas { group, .. } => vec![group],
            ControllerConfig::Ntm {
                power_group,
                aiming_group,
                ..
            } => vec![power_group, aiming_group],
        }
    }

    pub fn signals(&self) -> Vec<&str> {
        match self {
            ControllerConfig::Pid { measurement, .. } => vec![measurement],
            ControllerConfig::DaPower {
                distance_signal, ..
            } => vec![distance_signal],
            ControllerConfig::Ntm {
                position_signal, ..
            } => vec![position_signal],
            _ => vec![],
        }
    }

    pub fn needs_reference(&self) -> bool {
        matches!(
            self,
            ControllerConfig::Feedforward { .. }
                | ControllerConfig::Pid { .. }
                | ControllerConfig::DaGas { .. }
        )
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            ControllerConfig::Feedforward { min_request, .. } => {
                if !(min_request.is_finite() && *min_request >= 0.0) {
                    out.push("min_request must be finite and non-negative".into());
                }
            }
            ControllerConfig::Pid { gains, .. } => {
                let [lo, hi] = gains.limits;
                if ![gains.kp, gains.ki, gains.kd, lo, hi].iter().all(|x| x.is_finite()) {
                    out.push("PID gains and limits must be finite".into());
                } else if lo > hi {
                    out.push("PID limits must satisfy lo <= hi".into());
                }
                if gains.ki < 0.0 {
                    out.push("ki must be non-negative".into());
                }
            }
            ControllerConfig::DaPower {
                d_critical1,
                gain,
                p_max,
                ..
            } => {
                if !(d_critical1.is_finite() && gain.is_finite() && *gain >= 0.0) {
                    out.push("d_critical1 and gain must be finite, gain non-negative".into());
                }
                if !(p_max.is_finite() && *p_max > 0.0) {
                    out.push("p_max must be positive".into());
                }
            }
            ControllerConfig::DaGas { mode, .. } => match mode {
                DaGasMode::SlowRamp { factor } if !(0.0..=1.0).contains(factor) => {
                    out.push("slow_ramp factor must lie in [0, 1]".into());
                }
                DaGasMode::Cutoff { ramp_down } if !(ramp_down.is_finite() && *ramp_down >= 0.0) => {
                    out.push("cutoff ramp_down must be non-negative".into());
                }
                _ => {}
            },
            ControllerConfig::Ntm { max_power, .. } => {
                if !(max_power.is_finite() && *max_power >= 0.0) {
                    out.push("max_power must be non-negative".into());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSchedule {
    pub run: RunConfig,
    #[serde(default)]
    pub ones: Vec<OneConfig>,
    pub os_mapping: OsMapping,
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub controllers: BTreeMap<String, ControllerConfig>,
    #[serde(default)]
    pub actuator_groups: Vec<ActuatorGroup>,
    pub plant: PlantParams,
}

/// Parses a schedule document. Errors carry the key path and the line.
pub fn parse(text: &str) -> Result<PulseSchedule, PcsError> {
    let de = toml::Deserializer::parse(text).map_err(|e| PcsError::Parse(e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        PcsError::Parse(if path.is_empty() || path == "." {
            inner
        } else {
            format!("at `{path}`: {inner}")
        })
    })
}

/// Serializes a schedule back to TOML.
pub fn to_toml(schedule: &PulseSchedule) -> Result<String, PcsError> {
    toml::to_string_pretty(schedule).map_err(|e| PcsError::Parse(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.path, self.message)
    }
}

#[derive(Default)]
struct Report(Vec<Diagnostic>);

impl Report {
    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity: Severity::Warning,
            path: path.into(),
            message: message.into(),
        });
    }
}

pub fn errors(diags: &[Diagnostic]) -> impl Iterator<Item = &Diagnostic> {
    diags.iter().filter(|d| d.severity == Severity::Error)
}

/// Above this many reaction tuples the fallback-reliance scan is skipped.
const MAX_TUPLES: usize = 1 << 20;

/// Static checks over a parsed schedule.
pub fn validate(ps: &PulseSchedule) -> Vec<Diagnostic> {
    let mut r = Report::default();
    let run = &ps.run;
    if !(run.dt.is_finite() && run.dt > 0.0) {
        r.error("run.dt", "must be positive");
    }
    if !(run.duration.is_finite() && run.duration >= 0.0) {
        r.error("run.duration", "must be non-negative");
    }
    if !(run.post_roll.is_finite() && run.post_roll >= 0.0) {
        r.error("run.post_roll", "must be non-negative");
    }

    let signals: BTreeSet<String> = ps.plant.signal_names().into_iter().collect();
    let groups: BTreeMap<&str, &ActuatorGroup> = ps
        .actuator_groups
        .iter()
        .map(|g| (g.id.as_str(), g))
        .collect();

    // Events.
    let mut ids = BTreeSet::new();
    let mut max_levels: BTreeMap<&str, u8> = BTreeMap::new();
    let mut sources = Vec::new();
    for (i, one) in ps.ones.iter().enumerate() {
        let path = format!("ones[{i}] ({})", one.id);
        if one.id.is_empty() {
            r.error(&path, "empty id");
        }
        if !ids.insert(one.id.as_str()) {
            r.error(&path, format!("duplicate event id `{}`", one.id));
        }
        match one.source() {
            Ok(src) => {
                if let EventSource::Signal(t) = &src {
                    for p in t.problems() {
                        r.error(&path, p);
                    }
                    if !signals.contains(&t.signal) {
                        r.error(&path, format!("unknown signal `{}`", t.signal));
                    }
                }
                let spec = EventSpec {
                    id: one.id.clone(),
                    source: src,
                };
                max_levels.insert(one.id.as_str(), spec.max_level());
                sources.push(Some(spec));
            }
            Err(e) => {
                r.error(&path, e);
                sources.push(None);
            }
        }
    }
    for (i, one) in ps.ones.iter().enumerate() {
        let path = format!("ones[{i}] ({})", one.id);
        if let Some(rule) = &one.virtual_rule {
            check_virtual(&mut r, &path, rule, ps, &max_levels);
        }
        if let Some(max) = max_levels.get(one.id.as_str()) {
            let want = *max as usize + 1;
            if one.danger.len() != want {
                r.error(
                    format!("{path}.danger"),
                    format!(
                        "non-total mapping: {} entries for {want} event levels",
                        one.danger.len()
                    ),
                );
            }
        }
        for d in DangerLevel::ALL {
            if !one.reaction.contains_key(&d) {
                r.error(
                    format!("{path}.reaction"),
                    format!("non-total mapping: no row for danger `{d}`"),
                );
            }
        }
        let irr = one.irreversible_set();
        for l in [3, 4] {
            if !irr.iter().any(|x| x.get() == l) {
                r.warn(
                    format!("{path}.irreversible"),
                    format!("reaction level {l} is not irreversible"),
                );
            }
        }
    }

    // Scenarios and tasks.
    let mut scen_ids = BTreeSet::new();
    for (i, s) in ps.scenarios.iter().enumerate() {
        let path = format!("scenarios[{i}] ({})", s.id);
        if !scen_ids.insert(s.id.as_str()) {
            r.error(&path, format!("duplicate scenario id `{}`", s.id));
        }
        let mut prios = BTreeSet::new();
        let mut task_ids = BTreeSet::new();
        let mut bound = BTreeSet::new();
        for (j, t) in s.tasks.iter().enumerate() {
            let tpath = format!("{path}.tasks[{j}] ({})", t.id);
            if t.priority == 0 {
                r.error(&tpath, "priority must be >= 1");
            }
            if !prios.insert(t.priority) {
                r.error(&tpath, format!("duplicate priority {}", t.priority));
            }
            if !task_ids.insert(t.id.as_str()) {
                r.error(&tpath, format!("duplicate task id `{}`", t.id));
            }
            if !bound.insert(t.controller.as_str()) {
                r.error(
                    &tpath,
                    format!("controller `{}` bound twice in one scenario", t.controller),
                );
            }
            match ps.controllers.get(&t.controller) {
                None => r.error(&tpath, format!("unknown controller `{}`", t.controller)),
                Some(c) if c.needs_reference() && t.reference.is_none() => {
                    r.error(&tpath, "controller needs a reference")
                }
                _ => {}
            }
            if let Some(reference) = &t.reference {
                for p in reference.problems() {
                    r.error(format!("{tpath}.reference"), p);
                }
            }
            let a = &t.activation;
            if a.from.is_some_and(|x| !x.is_finite()) || a.until.is_some_and(|x| !x.is_finite()) {
                r.error(&tpath, "activation window must be finite");
            }
            if let Some(w) = &a.when {
                match max_levels.get(w.one.as_str()) {
                    None => r.error(&tpath, format!("trigger on unknown event `{}`", w.one)),
                    Some(&m) if w.min_level > m => r.warn(
                        &tpath,
                        format!("trigger level {} is never reached (max {m})", w.min_level),
                    ),
                    _ => {}
                }
            }
        }
    }

    // Scenario mapping.
    let os = &ps.os_mapping;
    match ps.scenarios.iter().find(|s| s.id == os.default) {
        None => r.error("os_mapping.default", format!("unknown scenario `{}`", os.default)),
        Some(s) if s.kind != ScenarioKind::Normal => r.error(
            "os_mapping.default",
            format!("default scenario `{}` is not of kind normal", s.id),
        ),
        _ => {}
    }
    for (i, row) in os.rows.iter().enumerate() {
        let path = format!("os_mapping.rows[{i}]");
        if row.reactions.len() != ps.ones.len() {
            r.error(
                &path,
                format!(
                    "{} reaction levels for {} events",
                    row.reactions.len(),
                    ps.ones.len()
                ),
            );
        }
        if !scen_ids.contains(row.scenario.as_str()) {
            r.error(&path, format!("unknown scenario `{}`", row.scenario));
        }
    }
    let zeros = vec![ReactionLevel::NONE; ps.ones.len()];
    let zero_pick = os
        .rows
        .iter()
        .find(|row| row.matches(&zeros))
        .map(|row| row.scenario.clone())
        .unwrap_or_else(|| os.default.clone());
    if let Some(s) = ps.scenarios.iter().find(|s| s.id == zero_pick) {
        if s.kind != ScenarioKind::Normal {
            r.error(
                "os_mapping",
                format!("the all-zero reaction tuple maps to `{}`, not a normal scenario", s.id),
            );
        }
    }
    check_fallback_reliance(&mut r, ps, &max_levels);

    // Controllers.
    for (id, c) in &ps.controllers {
        let path = format!("controllers.{id}");
        for g in c.groups() {
            if !groups.contains_key(g) {
                r.error(&path, format!("unknown actuator group `{g}`"));
            }
        }
        for s in c.signals() {
            if !signals.contains(s) {
                r.error(&path, format!("unknown signal `{s}`"));
            }
        }
        for p in c.problems() {
            r.error(&path, p);
        }
    }

    // Actuator groups.
    let mut gids = BTreeSet::new();
    for (i, g) in ps.actuator_groups.iter().enumerate() {
        let path = format!("actuator_groups[{i}] ({})", g.id);
        if !gids.insert(g.id.as_str()) {
            r.error(&path, format!("duplicate group id `{}`", g.id));
        }
        if !(g.capacity.is_finite() && g.capacity >= 0.0) {
            r.error(&path, "capacity must be finite and non-negative");
        }
        if let Some(a) = g.availability {
            if !(a.is_finite() && (0.0..=g.capacity).contains(&a)) {
                r.error(&path, "availability must lie in [0, capacity]");
            }
        }
        if let Some([lo, hi]) = g.command_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                r.error(&path, "command_range must be finite with lo <= hi");
            }
        }
    }

    // Plant.
    for p in ps.plant.problems() {
        r.error("plant", p);
    }
    for (key, g) in [
        ("plant.nbi_group", Some(&ps.plant.nbi_group)),
        ("plant.gas_group", Some(&ps.plant.gas_group)),
        ("plant.ec_group", ps.plant.ec_group.as_ref()),
    ] {
        if let Some(g) = g {
            if !groups.contains_key(g.as_str()) {
                r.error(key, format!("unknown actuator group `{g}`"));
            }
        }
    }
    r.0
}

fn check_virtual(
    r: &mut Report,
    path: &str,
    rule: &VirtualOneRule,
    ps: &PulseSchedule,
    max_levels: &BTreeMap<&str, u8>,
) {
    let mut ranges = Vec::new();
    for input in &rule.inputs {
        match ps.ones.iter().find(|o| &o.id == input) {
            None => r.error(path, format!("virtual input `{input}` is not an event")),
            Some(o) if o.signal.is_none() => {
                r.error(path, format!("virtual input `{input}` is not a base event"))
            }
            Some(_) => ranges.push(max_levels.get(input.as_str()).copied().unwrap_or(0)),
        }
    }
    if ranges.len() != rule.inputs.len() {
        return;
    }
    for (k, row) in rule.rows.iter().enumerate() {
        if row.when.len() != rule.inputs.len() {
            r.error(
                format!("{path}.virtual.rows[{k}]"),
                format!("{} levels for {} inputs", row.when.len(), rule.inputs.len()),
            );
        }
    }
    if rule.default.is_some() {
        return;
    }
    let total: usize = ranges.iter().map(|&m| m as usize + 1).product();
    if total > MAX_TUPLES {
        r.error(path, "combiner domain too large; give a `default`");
        return;
    }
    let mut missing = Vec::new();
    for tuple in tuples(&ranges) {
        if !rule.rows.iter().any(|row| row.when == tuple) {
            missing.push(tuple);
        }
    }
    if !missing.is_empty() {
        r.error(
            format!("{path}.virtual"),
            format!(
                "missing combiner entries for {} tuple(s), first {:?}",
                missing.len(),
                missing[0]
            ),
        );
    }
}

/// All tuples with entry `i` in `0..=ranges[i]`, in lexicographic order.
fn tuples(ranges: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    for &m in ranges {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..=m).map(move |l| {
                    let mut t = t.clone();
                    t.push(l);
                    t
                })
            })
            .collect();
    }
    out
}

/// Reaction levels each event can reach given its tables.
pub fn reachable_reactions(ps: &PulseSchedule) -> Option<Vec<Vec<ReactionLevel>>> {
    let mut out = Vec::new();
    for one in &ps.ones {
        let dangers: BTreeSet<DangerLevel> = one.danger.iter().copied().collect();
        let mut levels: BTreeSet<ReactionLevel> =
            dangers.iter().filter_map(|d| one.reaction.get(d).copied()).collect();
        // Before the first tick every event sits at reaction 0.
        levels.insert(ReactionLevel::NONE);
        if levels.len() < 1 {
            return None;
        }
        out.push(levels.into_iter().collect());
    }
    Some(out)
}

fn check_fallback_reliance(r: &mut Report, ps: &PulseSchedule, max_levels: &BTreeMap<&str, u8>) {
    if max_levels.len() != ps.ones.len() {
        return;
    }
    let Some(reach) = reachable_reactions(ps) else {
        return;
    };
    let count: usize = reach.iter().map(Vec::len).product();
    if count > MAX_TUPLES {
        return;
    }
    let ranges: Vec<u8> = reach.iter().map(|v| (v.len() - 1) as u8).collect();
    let mut uncovered = Vec::new();
    for idx in tuples(&ranges) {
        let tuple: Vec<ReactionLevel> = idx
            .iter()
            .zip(&reach)
            .map(|(&i, levels)| levels[i as usize])
            .collect();
        if !ps.os_mapping.rows.iter().any(|row| row.matches(&tuple)) {
            uncovered.push(tuple);
        }
    }
    if let Some(first) = uncovered.first() {
        let pick = fallback_scenario(first, &ps.os_mapping, &ps.scenarios);
        r.warn(
            "os_mapping",
            format!(
                "{} reachable reaction tuple(s) have no row and rely on the severity fallback \
                 (highest reaction level selects the scenario kind, lowest id first); \
                 first {:?} -> `{pick}`",
                uncovered.len(),
                first.iter().map(|l| l.get()).collect::<Vec<_>>()
            ),
        );
    }
}

impl PulseSchedule {
    /// Monitor specs in declaration order.
    pub fn event_specs(&self) -> Result<Vec<EventSpec>, ConfigError> {
        self.ones
            .iter()
            .map(|o| {
                Ok(EventSpec {
                    id: o.id.clone(),
                    source: o.source().map_err(ConfigError::Invalid)?,
                })
            })
            .collect()
    }

    pub fn supervisor(&self) -> Result<Supervisor, ConfigError> {
        let ones = self
            .ones
            .iter()
            .map(|o| {
                Ok(OneFsm {
                    id: o.id.clone(),
                    danger: DangerFsm {
                        one: o.id.clone(),
                        mapping: o.danger.clone(),
                    },
                    reaction: ReactionFsm::new(&o.id, &o.reaction, o.irreversible_set())?,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Supervisor::new(ones, self.os_mapping.clone(), self.scenarios.clone())
    }

    /// Priority of each task id, per scenario.
    pub fn group(&self, id: &str) -> Option<&ActuatorGroup> {
        self.actuator_groups.iter().find(|g| g.id == id)
    }

    /// Applies a `key=value` override. Supported keys: `run.dt`,
    /// `run.duration`, `run.post_roll`, `plant.<number field>`,
    /// `controllers.<id>.<number field>` and `actuator_groups.<id>.capacity`
    /// / `.availability`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), String> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| format!("override `{assignment}` is not key=value"))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |unit: &str| {
            crate::units::parse_in(value, unit)
                .ok_or_else(|| format!("cannot read `{value}` for `{key}`"))
        };
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["run", "dt"] => self.run.dt = num("s")?,
            ["run", "duration"] => self.run.duration = num("s")?,
            ["run", "post_roll"] => self.run.post_roll = num("s")?,
            ["plant", field] => {
                let p = &mut self.plant;
                match *field {
                    "tau_e" => p.tau_e = num("s")?,
                    "tau_98" => p.tau_98 = num("s")?,
                    "tau_n" => p.tau_n = num("s")?,
                    "k_gas" => p.k_gas = num("")?,
                    "p_ohmic" => p.p_ohmic = num("MW")?,
                    "nbi_energy_limit" => p.nbi_energy_limit = num("MJ")?,
                    "disruption_margin" => p.disruption_margin = num("")?,
                    _ => return Err(format!("unknown override key `{key}`")),
                }
            }
            ["actuator_groups", id, field] => {
                let g = self
                    .actuator_groups
                    .iter_mut()
                    .find(|g| g.id == *id)
                    .ok_or_else(|| format!("unknown actuator group `{id}`"))?;
                match *field {
                    "capacity" => g.capacity = num("")?,
                    "availability" => g.availability = Some(num("")?),
                    _ => return Err(format!("unknown override key `{key}`")),
                }
            }
            ["controllers", id, field] => {
                let c = self
                    .controllers
                    .get_mut(*id)
                    .ok_or_else(|| format!("unknown controller `{id}`"))?;
                let v = num(if *field == "p_max" || *field == "max_power" {
                    "MW"
                } else {
                    ""
                })?;
                let slot: &mut f64 = match (c, *field) {
                    (ControllerConfig::Feedforward { min_request, .. }, "min_request") => {
                        min_request
                    }
                    (ControllerConfig::Pid { gains, .. }, "kp") => &mut gains.kp,
                    (ControllerConfig::Pid { gains, .. }, "ki") => &mut gains.ki,
                    (ControllerConfig::Pid { gains, .. }, "kd") => &mut gains.kd,
                    (ControllerConfig::DaPower { d_critical1, .. }, "d_critical1") => d_critical1,
                    (ControllerConfig::DaPower { gain, .. }, "gain") => gain,
                    (ControllerConfig::DaPower { p_max, .. }, "p_max") => p_max,
                    (ControllerConfig::Ntm { max_power, .. }, "max_power") => max_power,
                    (
                        ControllerConfig::DaGas {
                            mode: DaGasMode::SlowRamp { factor },
                            ..
                        },
                        "factor",
                    ) => factor,
                    (
                        ControllerConfig::DaGas {
                            mode: DaGasMode::Cutoff { ramp_down },
                            ..
                        },
                        "ramp_down",
                    ) => ramp_down,
                    _ => return Err(format!("unknown override key `{key}`")),
                };
                *slot = v;
            }
            _ => return Err(format!("unknown override key `{key}`")),
        }
        Ok(())
    }
}

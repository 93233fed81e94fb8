//! Event monitor: turns continuous signals into discrete per-event levels.
//!
//! Each base event owns a [`ThresholdTable`]. Levels escalate as soon as the
//! signal reaches a threshold in the worse direction and de-escalate only once
//! the signal has moved back past `threshold - hysteresis` (in the worse
//! direction's coordinates). Virtual events combine the levels of base events
//! through a lookup table and are evaluated after every base event.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, MonitorFault};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Larger values are more dangerous; thresholds increase.
    #[serde(rename = "rising")]
    RisingIsWorse,
    /// Smaller values are more dangerous; thresholds decrease.
    #[serde(rename = "falling")]
    FallingIsWorse,
}

impl Direction {
    /// Maps a value onto an axis where larger is always worse.
    fn severity(self, v: f64) -> f64 {
        match self {
            Direction::RisingIsWorse => v,
            Direction::FallingIsWorse => -v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdTable {
    pub signal: String,
    pub direction: Direction,
    /// Ordered from the first (mildest) crossing to the last.
    pub thresholds: Vec<f64>,
    /// One band per threshold; empty means no hysteresis.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hysteresis: Vec<f64>,
}

impl ThresholdTable {
    pub fn new(signal: impl Into<String>, direction: Direction, thresholds: Vec<f64>) -> Self {
        Self {
            signal: signal.into(),
            direction,
            thresholds,
            hysteresis: Vec::new(),
        }
    }

    pub fn with_hysteresis(mut self, bands: Vec<f64>) -> Self {
        self.hysteresis = bands;
        self
    }

    /// Highest reachable level.
    pub fn max_level(&self) -> u8 {
        self.thresholds.len() as u8
    }

    fn band(&self, i: usize) -> f64 {
        self.hysteresis.get(i).copied().unwrap_or(0.0)
    }

    /// Number of thresholds reached, ignoring history.
    pub fn bucket(&self, value: f64) -> u8 {
        let x = self.direction.severity(value);
        self.thresholds
            .iter()
            .take_while(|&&t| x >= self.direction.severity(t))
            .count() as u8
    }

    /// Static problems with the table, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.thresholds.iter().any(|t| !t.is_finite()) {
            out.push("thresholds must be finite".to_string());
        }
        if !self.hysteresis.is_empty() && self.hysteresis.len() != self.thresholds.len() {
            out.push(format!(
                "{} hysteresis bands for {} thresholds",
                self.hysteresis.len(),
                self.thresholds.len()
            ));
        }
        if self.hysteresis.iter().any(|h| !h.is_finite() || *h < 0.0) {
            out.push("hysteresis bands must be finite and non-negative".to_string());
        }
        let sev: Vec<f64> = self
            .thresholds
            .iter()
            .map(|&t| self.direction.severity(t))
            .collect();
        for i in 1..sev.len() {
            if sev[i] <= sev[i - 1] {
                out.push(format!(
                    "thresholds not strictly monotone in the {} direction at index {i}",
                    match self.direction {
                        Direction::RisingIsWorse => "rising",
                        Direction::FallingIsWorse => "falling",
                    }
                ));
            } else if sev[i - 1] + self.band(i - 1) >= sev[i] - self.band(i) {
                out.push(format!(
                    "hysteresis bands of thresholds {} and {} overlap",
                    i - 1,
                    i
                ));
            }
        }
        if self.thresholds.len() > u8::MAX as usize {
            out.push("too many thresholds".to_string());
        }
        out
    }

    /// Next level given the previous one. Assumes a finite value.
    fn step(&self, value: f64, previous: u8) -> u8 {
        let x = self.direction.severity(value);
        let raised = self.bucket(value);
        // Highest previously held level whose release point has not been passed.
        let held = (1..=previous.min(self.max_level()))
            .rev()
            .find(|&l| {
                let i = (l - 1) as usize;
                x >= self.direction.severity(self.thresholds[i]) - self.band(i)
            })
            .unwrap_or(0);
        raised.max(held)
    }
}

/// Borrowed raw sample; the value may be non-finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub name: &'a str,
    pub value: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventState {
    pub one: String,
    pub level: u8,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiscretizeError {
    Fault(MonitorFault),
    Config(ConfigError),
}

/// Discretizes one sample against `table`, given the previous level.
pub fn discretize(
    one: &str,
    sample: Sample<'_>,
    table: &ThresholdTable,
    previous: u8,
) -> Result<EventState, DiscretizeError> {
    if sample.name != table.signal {
        return Err(DiscretizeError::Config(ConfigError::SignalMismatch {
            expected: table.signal.clone(),
            found: sample.name.to_string(),
        }));
    }
    if previous > table.max_level() {
        return Err(DiscretizeError::Config(ConfigError::LevelOutOfDomain {
            one: one.to_string(),
            level: previous,
            max: table.max_level(),
        }));
    }
    if !sample.value.is_finite() {
        return Err(DiscretizeError::Fault(MonitorFault {
            signal: sample.name.to_string(),
            value: sample.value,
            time: sample.time,
        }));
    }
    Ok(EventState {
        one: one.to_string(),
        level: table.step(sample.value, previous),
        time: sample.time,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombinerRow {
    pub when: Vec<u8>,
    pub level: u8,
}

/// A virtual event computed from the levels of base events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualOneRule {
    pub inputs: Vec<String>,
    pub rows: Vec<CombinerRow>,
    /// Level for tuples without a row. Without it the rows must be total.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<u8>,
}

impl VirtualOneRule {
    pub fn lookup(&self, tuple: &[u8]) -> Option<u8> {
        self.rows
            .iter()
            .find(|r| r.when == tuple)
            .map(|r| r.level)
            .or(self.default)
    }

    pub fn max_level(&self) -> u8 {
        self.rows
            .iter()
            .map(|r| r.level)
            .chain(self.default)
            .max()
            .unwrap_or(0)
    }
}

/// Combines input events through `rule`. Inputs may come in any order.
pub fn compose_virtual(
    one: &str,
    inputs: &[EventState],
    rule: &VirtualOneRule,
) -> Result<EventState, ConfigError> {
    let mut tuple = Vec::with_capacity(rule.inputs.len());
    let mut time = 0.0f64;
    for name in &rule.inputs {
        let ev = inputs
            .iter()
            .find(|e| &e.one == name)
            .ok_or_else(|| ConfigError::MissingInput {
                one: one.to_string(),
                input: name.clone(),
            })?;
        tuple.push(ev.level);
        time = time.max(ev.time);
    }
    let level = rule
        .lookup(&tuple)
        .ok_or_else(|| ConfigError::CombinerGap {
            one: one.to_string(),
            tuple: tuple.clone(),
        })?;
    Ok(EventState {
        one: one.to_string(),
        level,
        time,
    })
}

/// Where an event's level comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum EventSource {
    Signal(ThresholdTable),
    Virtual(VirtualOneRule),
    /// Level 1 while any monitored signal is faulted, else 0.
    PlantFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub id: String,
    pub source: EventSource,
}

impl EventSpec {
    pub fn max_level(&self) -> u8 {
        match &self.source {
            EventSource::Signal(t) => t.max_level(),
            EventSource::Virtual(r) => r.max_level(),
            EventSource::PlantFailure => 1,
        }
    }

    pub fn is_base(&self) -> bool {
        matches!(self.source, EventSource::Signal(_))
    }
}

/// Values of every named signal at one instant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SignalFrame {
    pub time: f64,
    pub values: BTreeMap<String, f64>,
}

impl SignalFrame {
    pub fn new(time: f64) -> Self {
        Self {
            time,
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorOutput {
    /// One state per spec, in spec order.
    pub events: Vec<EventState>,
    pub faults: Vec<MonitorFault>,
}

/// One monitor tick. `previous` is either empty (first tick) or aligned with
/// `specs`. Faulted signals hold their event at the previous level.
pub fn monitor_step(
    frame: &SignalFrame,
    specs: &[EventSpec],
    previous: &[EventState],
) -> Result<MonitorOutput, ConfigError> {
    if !previous.is_empty() && previous.len() != specs.len() {
        return Err(ConfigError::ArityMismatch {
            expected: specs.len(),
            found: previous.len(),
        });
    }
    let prev_level = |i: usize| previous.get(i).map_or(0, |e| e.level);

    let mut slots: Vec<Option<EventState>> = vec![None; specs.len()];
    let mut faults = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let EventSource::Signal(table) = &spec.source else {
            continue;
        };
        let value = frame
            .get(&table.signal)
            .ok_or_else(|| ConfigError::UnknownSignal(table.signal.clone()))?;
        let sample = Sample {
            name: &table.signal,
            value,
            time: frame.time,
        };
        let state = match discretize(&spec.id, sample, table, prev_level(i)) {
            Ok(s) => s,
            Err(DiscretizeError::Fault(f)) => {
                faults.push(f);
                EventState {
                    one: spec.id.clone(),
                    level: prev_level(i),
                    time: frame.time,
                }
            }
            Err(DiscretizeError::Config(e)) => return Err(e),
        };
        slots[i] = Some(state);
    }

    let bases: Vec<EventState> = slots.iter().flatten().cloned().collect();
    for (i, spec) in specs.iter().enumerate() {
        let state = match &spec.source {
            EventSource::Signal(_) => continue,
            EventSource::Virtual(rule) => {
                let mut ev = compose_virtual(&spec.id, &bases, rule)?;
                ev.time = frame.time;
                ev
            }
            EventSource::PlantFailure => EventState {
                one: spec.id.clone(),
                level: u8::from(!faults.is_empty()),
                time: frame.time,
            },
        };
        slots[i] = Some(state);
    }

    Ok(MonitorOutput {
        events: slots.into_iter().map(|s| s.expect("every slot filled")).collect(),
        faults,
    })
}

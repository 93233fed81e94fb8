//! Fixed-period control loop: monitor → supervisor → actuator manager →
//! controllers → plant.
//!
//! Requests and commands are both computed inside a tick, from the signals
//! read at its start; the merged commands drive the plant over the following
//! period, so they first show up in the signals of the next tick.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::actuator::{allocate, merge_commands, ActuatorCommand, GroupSemantics, Merged, TaskCommand, EPS};
use crate::controllers::{
    da_gas_step, da_power_step, ntm_step, pid_step, DaGasEntry, PidState,
};
use crate::error::{ConfigError, MonitorFault, PcsError};
use crate::monitor::{monitor_step, EventSource, EventSpec, EventState, SignalFrame};
use crate::plant::{plant_step, signal, PlantState};
use crate::schedule::{errors, validate, ControllerConfig, PulseSchedule};
use crate::state::{Allocation, ControlTask, ResourceRequest, ScenarioKind};
use crate::supervisor::{Decision, Supervisor, SupervisorState};
use crate::trace::TraceWriter;

/// How a run ended; maps onto the process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    Disrupted,
    SoftShutdown,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Clean => 0,
            Outcome::Disrupted => 2,
            Outcome::SoftShutdown => 3,
        }
    }
}

#[derive(Debug, Clone)]
enum Memory {
    Stateless,
    Pid(PidState),
    Gas(DaGasEntry),
}

#[derive(Debug, Clone)]
struct Binding {
    activated_at: f64,
    memory: Memory,
}

/// Everything that happened in one tick.
#[derive(Debug, Clone)]
pub struct TickRecord {
    pub time: f64,
    /// Raw monitored value per event (signal events only).
    pub signals: Vec<Option<f64>>,
    pub events: Vec<EventState>,
    pub decision: Decision,
    pub allocation: Allocation,
    /// Command emitted by each task, per group.
    pub task_commands: BTreeMap<String, BTreeMap<String, f64>>,
    pub merged: Merged,
    pub faults: Vec<MonitorFault>,
    /// Plant state the tick read its signals from.
    pub plant: PlantState,
}

impl TickRecord {
    pub fn command(&self, group: &str) -> f64 {
        self.merged
            .commands
            .iter()
            .find(|c| c.group == group)
            .map_or(0.0, |c| c.value)
    }
}

/// The control chain plus the surrogate plant, stepped one tick at a time.
pub struct Simulation<'a> {
    ps: &'a PulseSchedule,
    specs: Vec<EventSpec>,
    supervisor: Supervisor,
    events: Vec<EventState>,
    sup_state: SupervisorState,
    bindings: BTreeMap<(String, String), Binding>,
    plant: PlantState,
    tick: u64,
}

impl<'a> Simulation<'a> {
    /// Builds the runtime components. The schedule should have passed
    /// [`validate`]; [`run`] checks that.
    pub fn new(ps: &'a PulseSchedule) -> Result<Self, PcsError> {
        let specs = ps.event_specs()?;
        let supervisor = ps.supervisor()?;
        let sup_state = supervisor.initial_state();
        Ok(Self {
            ps,
            specs,
            supervisor,
            events: Vec::new(),
            sup_state,
            bindings: BTreeMap::new(),
            plant: PlantState::initial(&ps.plant),
            tick: 0,
        })
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    pub fn specs(&self) -> &[EventSpec] {
        &self.specs
    }

    /// One full tick: read the plant, decide, then advance the plant.
    pub fn step(&mut self) -> Result<TickRecord, PcsError> {
        let frame = self.plant.signals(&self.ps.plant);
        let mut record = self.control_step(&frame)?;
        record.plant = self.plant.clone();
        let mut next = plant_step(
            &record.merged.commands,
            &self.plant,
            self.ps.run.dt,
            &self.ps.plant,
        )?;
        self.tick += 1;
        next.time = self.tick as f64 * self.ps.run.dt;
        self.plant = next;
        Ok(record)
    }

    /// The control chain alone, driven by an arbitrary signal frame. The plant
    /// is neither read nor advanced.
    pub fn control_step(&mut self, frame: &SignalFrame) -> Result<TickRecord, PcsError> {
        let time = frame.time;
        let mon = monitor_step(frame, &self.specs, &self.events)?;
        let (decision, sup_state) = self.supervisor.step(&mon.events, &self.sup_state)?;

        self.refresh_bindings(&decision, frame)?;
        let plans = self.plan(&decision, frame)?;

        let requests: Vec<ResourceRequest> = plans
            .iter()
            .flat_map(|p| p.outputs.iter().map(move |o| (p, o)))
            .filter(|(_, o)| o.request > EPS)
            .map(|(p, o)| {
                ResourceRequest::new(&p.task.id, &o.group, o.request)
                    .with_minimum(o.minimum.min(o.request))
            })
            .collect();
        let priority: BTreeMap<String, u32> = decision
            .tasks
            .iter()
            .map(|t| (t.id.clone(), t.priority))
            .collect();
        let allocation = allocate(&requests, &self.ps.actuator_groups, &priority)?;

        let mut outputs = Vec::new();
        let mut task_commands: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for plan in &plans {
            for o in &plan.outputs {
                let grant = allocation.granted(&plan.task.id, &o.group);
                if grant <= EPS {
                    continue;
                }
                let group = self
                    .ps
                    .group(&o.group)
                    .ok_or_else(|| ConfigError::UnknownGroup(o.group.clone()))?;
                let value = match (o.command, group.semantics) {
                    (Command::UseGrant, _) => grant,
                    (Command::Value(v), GroupSemantics::Additive) => v.clamp(-grant, grant),
                    (Command::Value(v), GroupSemantics::Exclusive) => {
                        let (lo, hi) = group.range();
                        v.clamp(lo, hi)
                    }
                };
                task_commands
                    .entry(plan.task.id.clone())
                    .or_default()
                    .insert(o.group.clone(), value);
                outputs.push(TaskCommand {
                    task: plan.task.id.clone(),
                    priority: plan.task.priority,
                    command: ActuatorCommand {
                        group: o.group.clone(),
                        value,
                        time,
                    },
                });
            }
        }
        let merged = merge_commands(&outputs, &allocation, &self.ps.actuator_groups, time);

        for plan in plans {
            if let Some(memory) = plan.memory {
                let key = (decision.scenario.clone(), plan.task.id.clone());
                if let Some(b) = self.bindings.get_mut(&key) {
                    b.memory = memory;
                }
            }
        }

        let signals = self
            .specs
            .iter()
            .map(|s| match &s.source {
                EventSource::Signal(t) => frame.get(&t.signal),
                _ => None,
            })
            .collect();
        self.events = mon.events.clone();
        self.sup_state = sup_state;
        Ok(TickRecord {
            time,
            signals,
            events: mon.events,
            decision,
            allocation,
            task_commands,
            merged,
            faults: mon.faults,
            plant: self.plant.clone(),
        })
    }

    /// Drops controller memory of tasks that went inactive and initializes it
    /// for tasks that just became active.
    fn refresh_bindings(&mut self, decision: &Decision, frame: &SignalFrame) -> Result<(), PcsError> {
        let active: BTreeSet<(String, String)> = decision
            .tasks
            .iter()
            .map(|t| (decision.scenario.clone(), t.id.clone()))
            .collect();
        self.bindings.retain(|k, _| active.contains(k));
        for task in &decision.tasks {
            let key = (decision.scenario.clone(), task.id.clone());
            if self.bindings.contains_key(&key) {
                continue;
            }
            let controller = self.controller(task)?;
            let memory = match controller {
                ControllerConfig::Pid { .. } => Memory::Pid(PidState::default()),
                ControllerConfig::DaGas { .. } => {
                    let flux = frame.get(signal::GAS_FLUX).filter(|v| v.is_finite());
                    let base = self.reference(task, frame.time, frame.time)?;
                    Memory::Gas(DaGasEntry {
                        time: frame.time,
                        flux: flux.unwrap_or(0.0),
                        base,
                    })
                }
                _ => Memory::Stateless,
            };
            self.bindings.insert(
                key,
                Binding {
                    activated_at: frame.time,
                    memory,
                },
            );
        }
        Ok(())
    }

    fn controller(&self, task: &ControlTask) -> Result<&'a ControllerConfig, ConfigError> {
        self.ps
            .controllers
            .get(&task.controller)
            .ok_or_else(|| ConfigError::UnknownController(task.controller.clone()))
    }

    fn reference(&self, task: &ControlTask, time: f64, activated_at: f64) -> Result<f64, ConfigError> {
        match &task.reference {
            Some(r) => r.eval(time, activated_at),
            None => Err(ConfigError::Invalid(format!(
                "task `{}` has no reference",
                task.id
            ))),
        }
    }

    fn plan(&self, decision: &Decision, frame: &SignalFrame) -> Result<Vec<Plan>, PcsError> {
        let time = frame.time;
        let measure = |name: &str| {
            frame
                .get(name)
                .ok_or_else(|| ConfigError::UnknownSignal(name.to_string()))
        };
        let mut plans = Vec::with_capacity(decision.tasks.len());
        for task in &decision.tasks {
            let key = (decision.scenario.clone(), task.id.clone());
            let binding = self
                .bindings
                .get(&key)
                .expect("bindings refreshed for active tasks");
            let since = binding.activated_at;
            let mut memory = None;
            let outputs = match self.controller(task)? {
                ControllerConfig::Feedforward { group, min_request } => {
                    let v = self.reference(task, time, since)?;
                    vec![Output::value(group, v).with_minimum(*min_request)]
                }
                ControllerConfig::Pid {
                    group,
                    measurement,
                    gains,
                } => {
                    let prev = match binding.memory {
                        Memory::Pid(s) => s,
                        _ => PidState::default(),
                    };
                    let r = self.reference(task, time, since)?;
                    let (rc, next) = pid_step(r, measure(measurement)?, gains, prev, self.ps.run.dt);
                    memory = Some(Memory::Pid(next));
                    vec![Output::value(group, rc.command)]
                }
                ControllerConfig::DaPower {
                    group,
                    distance_signal,
                    d_critical1,
                    gain,
                    p_max,
                    mode,
                } => {
                    let d = measure(distance_signal)?;
                    let rc = if d.is_finite() {
                        da_power_step(d, *d_critical1, *gain, *p_max, *mode)
                    } else {
                        da_power_step(f64::INFINITY, *d_critical1, *gain, *p_max, *mode)
                    };
                    vec![Output::value(group, rc.command)]
                }
                ControllerConfig::DaGas { group, mode } => {
                    let entry = match binding.memory {
                        Memory::Gas(e) => e,
                        _ => DaGasEntry {
                            time: since,
                            flux: 0.0,
                            base: 0.0,
                        },
                    };
                    let base = self.reference(task, time, since)?;
                    vec![Output::value(group, da_gas_step(base, *mode, &entry, time))]
                }
                ControllerConfig::Ntm {
                    power_group,
                    aiming_group,
                    position_signal,
                    max_power,
                } => {
                    let rho = measure(position_signal)?;
                    let (target, _) = ntm_step(if rho.is_finite() { rho } else { 0.0 }, 0.0);
                    vec![
                        Output {
                            group: power_group.clone(),
                            request: *max_power,
                            minimum: 0.0,
                            command: Command::UseGrant,
                        },
                        Output {
                            group: aiming_group.clone(),
                            request: 1.0,
                            minimum: 0.0,
                            command: Command::Value(target),
                        },
                    ]
                }
            };
            plans.push(Plan {
                task: task.clone(),
                outputs,
                memory,
            });
        }
        Ok(plans)
    }
}

#[derive(Debug, Clone, Copy)]
enum Command {
    Value(f64),
    /// Command whatever was granted.
    UseGrant,
}

#[derive(Debug, Clone)]
struct Output {
    group: String,
    request: f64,
    minimum: f64,
    command: Command,
}

impl Output {
    fn value(group: &str, v: f64) -> Self {
        let v = if v.is_finite() { v } else { 0.0 };
        Self {
            group: group.to_string(),
            request: v.abs(),
            minimum: 0.0,
            command: Command::Value(v),
        }
    }

    fn with_minimum(mut self, minimum: f64) -> Self {
        self.minimum = minimum;
        self
    }
}

struct Plan {
    task: ControlTask,
    outputs: Vec<Output>,
    memory: Option<Memory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub rows: u64,
    pub disrupted_at: Option<f64>,
}

/// Validates the schedule, runs it and writes the trace to `out`.
pub fn run<W: Write>(ps: &PulseSchedule, until: Option<f64>, out: W) -> Result<RunSummary, PcsError> {
    let diags = validate(ps);
    let errs: Vec<String> = errors(&diags).map(|d| d.to_string()).collect();
    if !errs.is_empty() {
        return Err(PcsError::Validation(errs));
    }
    let mut sim = Simulation::new(ps)?;
    let mut writer = TraceWriter::new(ps, out)?;
    let dt = ps.run.dt;
    let ticks = ps.run.ticks(None);
    let cap = until.map(|u| (u.max(0.0) / dt + 1e-9).floor() as u64);
    let post = (ps.run.post_roll / dt).round() as u64;

    let mut disrupted: Option<(u64, f64)> = None;
    let mut outcome = Outcome::Clean;
    let mut k = 0u64;
    loop {
        let done = match disrupted {
            Some((d, _)) => k > d + post,
            None => k >= ticks,
        };
        if done || cap.is_some_and(|c| k >= c) {
            break;
        }
        let rec = sim.step()?;
        writer.write(&rec)?;
        k += 1;
        if rec.plant.disrupted {
            if disrupted.is_none() {
                disrupted = Some((k - 1, rec.time));
            }
            outcome = Outcome::Disrupted;
            continue;
        }
        if rec.decision.kind == ScenarioKind::SoftShutdown
            && rec.merged.commands.iter().all(|c| c.value == 0.0)
        {
            outcome = Outcome::SoftShutdown;
            break;
        }
    }
    writer.finish()?;
    Ok(RunSummary {
        outcome,
        rows: k,
        disrupted_at: disrupted.map(|(_, t)| t),
    })
}

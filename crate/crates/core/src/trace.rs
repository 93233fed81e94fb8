//! CSV trace files and supervisor-only replay.
//!
//! Columns, in order: `time`; per event `<id>.signal`, `<id>.event`,
//! `<id>.danger`, `<id>.reaction`; `scenario`, `tasks` (`;`-separated, by
//! priority), `starved`; per group `grant.<group>` then `cmd.<group>`; per
//! task binding `task.<task>.<group>`; the plant state; `violations` and
//! `faults`. Floats use Rust's shortest round-trip formatting.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use crate::error::PcsError;
use crate::harness::TickRecord;
use crate::monitor::EventState;
use crate::schedule::PulseSchedule;
use crate::supervisor::Decision;

const PLANT_COLUMNS: [&str; 9] = [
    "h98y2",
    "ne_edge_norm",
    "stored_energy",
    "nbi_power",
    "nbi_energy",
    "gas_flux",
    "ec_power",
    "d_ne_edge",
    "disrupted",
];

/// `(task, group)` pairs across all scenarios, sorted.
fn task_columns(ps: &PulseSchedule) -> Vec<(String, String)> {
    let mut out = BTreeSet::new();
    for s in &ps.scenarios {
        for t in &s.tasks {
            if let Some(c) = ps.controllers.get(&t.controller) {
                for g in c.groups() {
                    out.insert((t.id.clone(), g.to_string()));
                }
            }
        }
    }
    out.into_iter().collect()
}

pub fn header(ps: &PulseSchedule) -> Vec<String> {
    let mut h = vec!["time".to_string()];
    for one in &ps.ones {
        for suffix in ["signal", "event", "danger", "reaction"] {
            h.push(format!("{}.{suffix}", one.id));
        }
    }
    h.extend(["scenario", "tasks", "starved"].map(String::from));
    for g in &ps.actuator_groups {
        h.push(format!("grant.{}", g.id));
        h.push(format!("cmd.{}", g.id));
    }
    for (task, group) in task_columns(ps) {
        h.push(format!("task.{task}.{group}"));
    }
    h.extend(PLANT_COLUMNS.map(String::from));
    h.extend(["violations", "faults"].map(String::from));
    h
}

/// Columns holding supervisor decisions, as compared by replay.
pub fn decision_header(ps: &PulseSchedule) -> Vec<String> {
    let mut h = vec!["time".to_string()];
    for one in &ps.ones {
        h.push(format!("{}.danger", one.id));
        h.push(format!("{}.reaction", one.id));
    }
    h.push("scenario".into());
    h.push("tasks".into());
    h
}

fn decision_fields(time: f64, d: &Decision) -> Vec<String> {
    let mut row = vec![time.to_string()];
    for (danger, reaction) in d.danger.iter().zip(&d.reaction) {
        row.push(danger.name().to_string());
        row.push(reaction.to_string());
    }
    row.push(d.scenario.clone());
    row.push(d.task_ids().join(";"));
    row
}

pub struct TraceWriter<'a, W: Write> {
    ps: &'a PulseSchedule,
    tasks: Vec<(String, String)>,
    out: csv::Writer<W>,
}

impl<'a, W: Write> TraceWriter<'a, W> {
    pub fn new(ps: &'a PulseSchedule, out: W) -> Result<Self, PcsError> {
        let mut out = csv::Writer::from_writer(out);
        out.write_record(header(ps))?;
        Ok(Self {
            ps,
            tasks: task_columns(ps),
            out,
        })
    }

    pub fn write(&mut self, rec: &TickRecord) -> Result<(), PcsError> {
        let mut row = vec![rec.time.to_string()];
        let d = &rec.decision;
        for (i, ev) in rec.events.iter().enumerate() {
            row.push(rec.signals[i].map_or(String::new(), |v| v.to_string()));
            row.push(ev.level.to_string());
            row.push(d.danger[i].name().to_string());
            row.push(d.reaction[i].to_string());
        }
        row.push(d.scenario.clone());
        row.push(d.task_ids().join(";"));
        row.push(rec.allocation.starved.join(";"));
        for g in &self.ps.actuator_groups {
            row.push(rec.allocation.group_total(&g.id).to_string());
            row.push(rec.command(&g.id).to_string());
        }
        for (task, group) in &self.tasks {
            row.push(
                rec.task_commands
                    .get(task)
                    .and_then(|m| m.get(group))
                    .map_or(String::new(), |v| v.to_string()),
            );
        }
        let p = &rec.plant;
        for v in [
            p.h98y2,
            p.ne_edge_norm,
            p.stored_energy,
            p.nbi_power,
            p.nbi_energy,
            p.gas_flux,
            p.ec_power,
            p.d_ne_edge,
        ] {
            row.push(v.to_string());
        }
        row.push(u8::from(p.disrupted).to_string());
        row.push(
            rec.merged
                .violations
                .iter()
                .map(|v| format!("{}@{}: {}", v.task, v.group, v.reason))
                .collect::<Vec<_>>()
                .join(";"),
        );
        row.push(
            rec.faults
                .iter()
                .map(|f| f.signal.clone())
                .collect::<Vec<_>>()
                .join(";"),
        );
        self.out.write_record(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), PcsError> {
        self.out.flush()?;
        Ok(())
    }
}

/// A trace loaded as text: header plus rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read<R: Read>(input: R) -> Result<Self, PcsError> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.iter().map(String::from).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Values of one column, or an error naming it.
    pub fn values(&self, name: &str) -> Result<Vec<&str>, PcsError> {
        let i = self
            .column(name)
            .ok_or_else(|| PcsError::Trace(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>, PcsError> {
        self.values(name)?
            .into_iter()
            .map(|v| {
                v.parse()
                    .map_err(|_| PcsError::Trace(format!("bad number `{v}` in `{name}`")))
            })
            .collect()
    }

    /// Restriction to the named columns, in that order.
    pub fn select(&self, names: &[String]) -> Result<Table, PcsError> {
        let idx = names
            .iter()
            .map(|n| {
                self.column(n)
                    .ok_or_else(|| PcsError::Trace(format!("missing column `{n}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Table {
            header: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
                .collect(),
        })
    }

    pub fn to_csv(&self) -> Result<String, PcsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| PcsError::Trace(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| PcsError::Trace(e.to_string()))
    }
}

/// Re-runs the supervisor over the recorded event levels of `trace` and
/// returns the decision columns (see [`decision_header`]).
pub fn replay(trace: &Table, ps: &PulseSchedule) -> Result<Table, PcsError> {
    let recorded: BTreeSet<&str> = trace
        .header
        .iter()
        .filter_map(|h| h.strip_suffix(".event"))
        .collect();
    let expected: BTreeSet<&str> = ps.ones.iter().map(|o| o.id.as_str()).collect();
    if recorded != expected {
        return Err(PcsError::Trace(format!(
            "event columns {recorded:?} do not match the schedule's events {expected:?}"
        )));
    }
    let times = trace.floats("time")?;
    if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(PcsError::Trace(format!(
            "time not strictly increasing at row {}",
            i + 2
        )));
    }
    let columns: Vec<Vec<&str>> = ps
        .ones
        .iter()
        .map(|o| trace.values(&format!("{}.event", o.id)))
        .collect::<Result<_, _>>()?;
    let supervisor = ps.supervisor()?;
    let mut state = supervisor.initial_state();
    let mut rows = Vec::with_capacity(times.len());
    for (r, &time) in times.iter().enumerate() {
        let events = ps
            .ones
            .iter()
            .zip(&columns)
            .map(|(o, col)| {
                let level = col[r].parse::<u8>().map_err(|_| {
                    PcsError::Trace(format!("bad event level `{}` at row {}", col[r], r + 2))
                })?;
                Ok(EventState {
                    one: o.id.clone(),
                    level,
                    time,
                })
            })
            .collect::<Result<Vec<_>, PcsError>>()?;
        let (decision, next) = supervisor.step(&events, &state)?;
        rows.push(decision_fields(time, &decision));
        state = next;
    }
    Ok(Table {
        header: decision_header(ps),
        rows,
    })
}

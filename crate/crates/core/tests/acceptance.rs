//! Acceptance checks, one printed PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`. Exits non-zero if any criterion
//! fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use pcs_core::actuator::{allocate, ActuatorGroup};
use pcs_core::controllers::{pid_step, PidGains, PidState};
use pcs_core::error::PcsError;
use pcs_core::harness::{self, Outcome, Simulation};
use pcs_core::monitor::{EventState, SignalFrame};
use pcs_core::plant::{distance, plant_step, DisruptionBoundary, PlantState};
use pcs_core::schedule::{self, errors, PulseSchedule};
use pcs_core::state::{
    Activation, ControlTask, DangerLevel, EventTrigger, ReactionLevel, ResourceRequest, Scenario,
    ScenarioKind,
};
use pcs_core::supervisor::{
    DangerFsm, LevelPattern, OneFsm, OsMapping, OsRow, ReactionFsm, Supervisor,
};
use pcs_core::trace::{decision_header, replay, Table};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../schedules")
        .join(name)
}

fn load(name: &str) -> PulseSchedule {
    let text = std::fs::read_to_string(shipped(name)).expect("shipped schedule");
    schedule::parse(&text).expect("shipped schedule parses")
}

fn run_to_table(ps: &PulseSchedule) -> Result<(Table, harness::RunSummary, Vec<u8>), PcsError> {
    let mut buf = Vec::new();
    let summary = harness::run(ps, None, &mut buf)?;
    let table = Table::read(buf.as_slice())?;
    Ok((table, summary, buf))
}

fn e(err: PcsError) -> String {
    err.to_string()
}

// 1 ------------------------------------------------------------------------

fn density_limit_timeline() -> Check {
    let start = Instant::now();
    let ps = load("density_limit.toml");
    let (t, summary, _) = run_to_table(&ps).map_err(e)?;
    let elapsed = start.elapsed().as_secs_f64();

    let dc = &ps.ones[0].thresholds;
    let (dc1, dc2, dc3) = (dc[0], dc[1], dc[2]);
    let time = t.floats("time").map_err(e)?;
    let d = t.floats("d_ne_edge.signal").map_err(e)?;
    let scen = t.values("scenario").map_err(e)?;
    let tasks = t.values("tasks").map_err(e)?;
    let gas = t.floats("cmd.gas").map_err(e)?;
    let nbi = t.floats("cmd.nbi").map_err(e)?;
    let disrupted = t.values("disrupted").map_err(e)?;
    let ff_nor = t.values("task.FF_power.nor.nbi").map_err(e)?;
    let ff_rec = t.values("task.FF_power.rec.nbi").map_err(e)?;
    let n = time.len();

    let i1 = d.iter().position(|&x| x < dc1).ok_or("d never below d_critical1")?;
    let i2 = d.iter().position(|&x| x < dc2).ok_or("d never below d_critical2")?;
    let da_first = tasks
        .iter()
        .position(|t| t.contains("DA_"))
        .ok_or("DA tasks never active")?;
    ensure(da_first == i1, || {
        format!("DA tasks first active at t={} but d < d_critical1 from t={}", time[da_first], time[i1])
    })?;
    ensure(tasks[..i1].iter().all(|t| *t == "FF_power.nor;FF_gas.nor"), || {
        "normal tasks before d_critical1 are not {FF_power.nor, FF_gas.nor}".into()
    })?;
    ensure(
        tasks[i1..i2]
            .iter()
            .all(|t| *t == "FF_power.nor;DA_gas.nor;FF_gas.nor;DA_power.nor"),
        || "normal scenario between the thresholds lacks its DA tasks".into(),
    )?;
    ensure(scen[..i2].iter().all(|s| *s == "normal"), || "scenario left normal before d_critical2".into())?;
    ensure(scen[i2..].iter().all(|s| *s == "recovery"), || {
        format!("scenario did not switch to recovery at t={}", time[i2])
    })?;

    // Gas flux: fast ramp, reduced ramp, frozen.
    let rate = |a: usize, b: usize| -> Vec<f64> {
        (a.max(1)..b).map(|k| (gas[k] - gas[k - 1]) / ps.run.dt).collect()
    };
    let uniform = |r: &[f64]| -> Option<f64> {
        let m = *r.first()?;
        r.iter().all(|x| (x - m).abs() <= 1e-6 * m.abs().max(1.0)).then_some(m)
    };
    let r1 = uniform(&rate(1, i1)).ok_or("gas ramp before ① is not uniform")?;
    let r2 = uniform(&rate(i1 + 1, i2)).ok_or("gas ramp between ① and ② is not uniform")?;
    let r3 = rate(i2, n);
    ensure(r3.iter().all(|&x| x == 0.0), || "gas flux not frozen after ②".into())?;
    ensure(r1 > r2 && r2 > 0.0, || format!("gas ramp rates {r1} then {r2} are not fast then slow"))?;

    // NBI: feedforward constant, total reaching and pinned at 1.3 MW.
    for k in 0..n {
        let ff: Vec<&str> = [ff_nor[k], ff_rec[k]].into_iter().filter(|v| !v.is_empty()).collect();
        ensure(ff == ["0.65"], || format!("feedforward power at t={} is {ff:?}", time[k]))?;
    }
    let pin = nbi
        .iter()
        .position(|&p| (p - 1.3).abs() < 1e-9)
        .ok_or("NBI command never reaches 1.3 MW")?;
    ensure(nbi[pin..].iter().all(|&p| (p - 1.3).abs() < 1e-9), || "NBI command leaves 1.3 MW after reaching it".into())?;
    ensure(nbi.windows(2).all(|w| w[1] >= w[0] - 1e-12), || "NBI command decreases".into())?;
    ensure(pin > i1 && pin <= i2, || "NBI pin outside the DA phase".into())?;

    let k = disrupted.iter().position(|v| *v == "1").ok_or("no disruption")?;
    ensure(k > i2, || "disruption before the recovery switch".into())?;
    ensure(d[k] > dc3, || "d_critical3 reached before the disruption".into())?;
    ensure(summary.outcome == Outcome::Disrupted, || format!("outcome {:?}", summary.outcome))?;
    ensure(elapsed < 5.0, || format!("runtime {elapsed:.2} s"))?;
    Ok(format!(
        "①={:.3} s, ②={:.3} s, ③={:.3} s; gas rate {r1:.2} -> {r2:.2} -> 0; NBI pinned from {:.3} s; runtime {elapsed:.3} s",
        time[i1], time[i2], time[k], time[pin]
    ))
}

// 2 ------------------------------------------------------------------------

fn dual_ntm_replay() -> Check {
    let start = Instant::now();
    let ps = load("dual_ntm.toml");
    let (t, _, _) = run_to_table(&ps).map_err(e)?;
    let decisions = replay(&t, &ps).map_err(e)?;
    let time = decisions.floats("time").map_err(e)?;
    let scen = decisions.values("scenario").map_err(e)?;
    let tasks = decisions.values("tasks").map_err(e)?;
    let want = "ntm21_stabilization;beta_control;heating_ff";
    let mut s1 = 0;
    let mut s2 = 0;
    for k in 0..time.len() {
        if (0.2..0.35).contains(&time[k]) {
            ensure(scen[k] == "backup1" && tasks[k] == want, || {
                format!("situation 1 at t={}: {} [{}]", time[k], scen[k], tasks[k])
            })?;
            s1 += 1;
        }
        if time[k] >= 0.45 {
            ensure(scen[k] == "mitigation", || format!("situation 2 at t={}: {}", time[k], scen[k]))?;
            s2 += 1;
        }
    }
    ensure(s1 > 0 && s2 > 0, || "trace does not cover both situations".into())?;

    // Hand-written event trace: the two situations directly.
    let text = "time,NTM21.event,NTM43.event\n0,0,0\n0.1,2,2\n0.2,2,1\n0.3,4,2\n0.4,1,0\n";
    let hand = replay(&Table::read(text.as_bytes()).map_err(e)?, &ps).map_err(e)?;
    let got: Vec<&str> = hand.values("scenario").map_err(e)?;
    ensure(
        got == ["normal", "backup1", "backup1", "mitigation", "mitigation"],
        || format!("hand-written replay gave {got:?}"),
    )?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 1.0, || format!("runtime {elapsed:.2} s"))?;
    Ok(format!(
        "backup1 with {{{want}}} on {s1} rows, mitigation on {s2} rows; runtime {elapsed:.3} s"
    ))
}

// 3 ------------------------------------------------------------------------

fn rl(l: u8) -> ReactionLevel {
    ReactionLevel::new(l).unwrap()
}

fn reaction_map(levels: [u8; 5]) -> BTreeMap<DangerLevel, ReactionLevel> {
    DangerLevel::ALL.into_iter().zip(levels).map(|(d, l)| (d, rl(l))).collect()
}

fn kind_scenarios() -> Vec<Scenario> {
    ScenarioKind::ALL
        .iter()
        .enumerate()
        .map(|(i, &kind)| Scenario {
            id: format!("s{i}"),
            kind,
            tasks: vec![],
        })
        .collect()
}

fn irreversibility_latch() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut steps = 0u64;
    let mut latched = 0u64;
    for seq in 0..10_000 {
        let n = rng.gen_range(2..=4);
        let mut ones = Vec::new();
        let mut maxes = Vec::new();
        let mut irr_sets = Vec::new();
        for i in 0..n {
            let max = rng.gen_range(1..=4u8);
            let danger = (0..=max)
                .map(|_| DangerLevel::from_index(rng.gen_range(0..5)).unwrap())
                .collect();
            let map = reaction_map(std::array::from_fn(|_| rng.gen_range(0..5)));
            let irr: Vec<ReactionLevel> = if rng.gen_bool(0.5) {
                ReactionLevel::default_irreversible()
            } else {
                ReactionLevel::all().filter(|_| rng.gen_bool(0.4)).collect()
            };
            irr_sets.push(irr.clone());
            ones.push(OneFsm {
                id: format!("e{i}"),
                danger: DangerFsm {
                    one: format!("e{i}"),
                    mapping: danger,
                },
                reaction: ReactionFsm::new("e", &map, irr).unwrap(),
            });
            maxes.push(max);
        }
        let sup = Supervisor::new(
            ones,
            OsMapping {
                default: "s0".into(),
                rows: vec![],
            },
            kind_scenarios(),
        )
        .unwrap();
        let mut state = sup.initial_state();
        let mut floor: Vec<Option<u8>> = vec![None; n];
        for k in 0..50 {
            let events: Vec<EventState> = (0..n)
                .map(|i| EventState {
                    one: format!("e{i}"),
                    level: rng.gen_range(0..=maxes[i]),
                    time: k as f64,
                })
                .collect();
            let (dec, next) = sup.step(&events, &state).map_err(|x| x.to_string())?;
            for i in 0..n {
                let l = dec.reaction[i].get();
                if let Some(f) = floor[i] {
                    ensure(l >= f, || format!("sequence {seq}, step {k}: event {i} dropped from {f} to {l}"))?;
                }
                if irr_sets[i].contains(&dec.reaction[i]) {
                    latched += u64::from(floor[i].is_none());
                    floor[i] = Some(floor[i].map_or(l, |f| f.max(l)));
                }
            }
            state = next;
            steps += 1;
        }
    }
    Ok(format!("10000 sequences, {steps} steps, {latched} latch entries, 0 violations"))
}

// 4 ------------------------------------------------------------------------

/// Plain-data supervisor configuration for the table interpreter.
#[derive(Debug, Clone)]
struct TableConfig {
    levels: Vec<u8>,
    danger: Vec<Vec<u8>>,
    reaction: Vec<[u8; 5]>,
    /// Irreversible levels are `lowest..=4`.
    irreversible_from: Vec<u8>,
    rows: Vec<(Vec<Option<u8>>, usize)>,
    kinds: Vec<u8>,
    default: usize,
    /// Per scenario: (id, priority, trigger (event, min, max), window).
    tasks: Vec<Vec<(String, u32, Option<(usize, u8, Option<u8>)>, (Option<f64>, Option<f64>))>>,
}

fn random_table(rng: &mut ChaCha8Rng, levels: Vec<u8>) -> TableConfig {
    let n = levels.len();
    let danger = levels
        .iter()
        .map(|&m| (0..=m).map(|_| rng.gen_range(0..5)).collect())
        .collect();
    let reaction = (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(0..5))).collect();
    let irreversible_from = (0..n)
        .map(|_| if rng.gen_bool(0.5) { 3 } else { rng.gen_range(0..=5) })
        .collect();
    let mut kinds: Vec<u8> = vec![0];
    for _ in 0..rng.gen_range(0..5) {
        kinds.push(rng.gen_range(0..5));
    }
    kinds.shuffle(rng);
    let default = kinds.iter().position(|&k| k == 0).unwrap();
    let rows = (0..rng.gen_range(0..6))
        .map(|_| {
            let pat = (0..n)
                .map(|_| if rng.gen_bool(0.3) { None } else { Some(rng.gen_range(0..5)) })
                .collect();
            (pat, rng.gen_range(0..kinds.len()))
        })
        .collect();
    let windows = [None, Some(0.1), Some(0.2)];
    let tasks = kinds
        .iter()
        .map(|_| {
            let mut prios: Vec<u32> = (1..=4).collect();
            prios.shuffle(rng);
            (0..rng.gen_range(0..4))
                .map(|j| {
                    let trigger = rng.gen_bool(0.5).then(|| {
                        let ev = rng.gen_range(0..n);
                        let min = rng.gen_range(0..=levels[ev]);
                        let max = rng.gen_bool(0.5).then(|| rng.gen_range(min..=levels[ev]));
                        (ev, min, max)
                    });
                    let w = (*windows.choose(rng).unwrap(), *windows.choose(rng).unwrap());
                    (format!("t{j}"), prios[j], trigger, w)
                })
                .collect()
        })
        .collect();
    TableConfig {
        levels,
        danger,
        reaction,
        irreversible_from,
        rows,
        kinds,
        default,
        tasks,
    }
}

fn build_supervisor(c: &TableConfig) -> Supervisor {
    let ones = (0..c.levels.len())
        .map(|i| OneFsm {
            id: format!("e{i}"),
            danger: DangerFsm {
                one: format!("e{i}"),
                mapping: c.danger[i].iter().map(|&d| DangerLevel::from_index(d).unwrap()).collect(),
            },
            reaction: ReactionFsm::new(
                "e",
                &reaction_map(c.reaction[i]),
                (c.irreversible_from[i]..=4).map(rl).collect(),
            )
            .unwrap(),
        })
        .collect();
    let scenarios = c
        .kinds
        .iter()
        .enumerate()
        .map(|(s, &k)| Scenario {
            id: format!("sc{s}"),
            kind: ScenarioKind::ALL[k as usize],
            tasks: c.tasks[s]
                .iter()
                .map(|(id, prio, trig, (from, until))| ControlTask {
                    id: id.clone(),
                    priority: *prio,
                    controller: "c".into(),
                    reference: None,
                    activation: Activation {
                        from: *from,
                        until: *until,
                        when: trig.map(|(ev, min, max)| EventTrigger {
                            one: format!("e{ev}"),
                            min_level: min,
                            max_level: max,
                        }),
                    },
                })
                .collect(),
        })
        .collect();
    let rows = c
        .rows
        .iter()
        .map(|(pat, s)| OsRow {
            reactions: pat
                .iter()
                .map(|p| p.map_or(LevelPattern::Any, |l| LevelPattern::Level(rl(l))))
                .collect(),
            scenario: format!("sc{s}"),
        })
        .collect();
    Supervisor::new(
        ones,
        OsMapping {
            default: format!("sc{}", c.default),
            rows,
        },
        scenarios,
    )
    .unwrap()
}

/// Table interpreter written directly from the rule text: danger lookup,
/// reaction lookup with `max(previous, candidate)` while the previous level is
/// irreversible, first matching row, else the scenario whose kind is nearest
/// the top reaction level (equal, then more severe, then less), lowest id.
fn oracle_step(c: &TableConfig, levels: &[u8], prev: &[u8], time: f64) -> (Vec<u8>, usize, Vec<String>) {
    let mut reactions = Vec::new();
    for i in 0..levels.len() {
        let danger = c.danger[i][levels[i] as usize];
        let candidate = c.reaction[i][danger as usize];
        let r = if prev[i] >= c.irreversible_from[i] {
            prev[i].max(candidate)
        } else {
            candidate
        };
        reactions.push(r);
    }
    let row = c.rows.iter().find(|(pat, _)| {
        pat.iter().zip(&reactions).all(|(p, &r)| p.is_none_or(|l| l == r))
    });
    let scenario = match row {
        Some((_, s)) => *s,
        None => {
            let top = *reactions.iter().max().unwrap();
            if top == 0 {
                c.default
            } else {
                let rank = |k: u8| if k >= top { (k - top) as u32 } else { 10 + (top - k) as u32 };
                let best = c.kinds.iter().map(|&k| rank(k)).min().unwrap();
                let mut ids: Vec<String> = (0..c.kinds.len())
                    .filter(|&s| rank(c.kinds[s]) == best)
                    .map(|s| format!("sc{s}"))
                    .collect();
                ids.sort();
                ids[0][2..].parse().unwrap()
            }
        }
    };
    let mut active: Vec<(u32, String)> = c.tasks[scenario]
        .iter()
        .filter(|(_, _, trig, (from, until))| {
            from.is_none_or(|f| time >= f)
                && until.is_none_or(|u| time < u)
                && trig.is_none_or(|(ev, min, max)| {
                    levels[ev] >= min && max.is_none_or(|m| levels[ev] <= m)
                })
        })
        .map(|(id, p, _, _)| (*p, id.clone()))
        .collect();
    active.sort();
    (reactions, scenario, active.into_iter().map(|(_, id)| id).collect())
}

struct Dfs<'a> {
    c: &'a TableConfig,
    sup: &'a Supervisor,
    tuples: Vec<Vec<u8>>,
    checked: u64,
}

impl Dfs<'_> {
    fn walk(
        &mut self,
        depth: usize,
        state: &pcs_core::supervisor::SupervisorState,
        prev: &[u8],
    ) -> Result<(), String> {
        if depth == 4 {
            return Ok(());
        }
        let time = depth as f64 * 0.1;
        for t in 0..self.tuples.len() {
            let levels = self.tuples[t].clone();
            let events: Vec<EventState> = levels
                .iter()
                .enumerate()
                .map(|(i, &l)| EventState {
                    one: format!("e{i}"),
                    level: l,
                    time,
                })
                .collect();
            let (dec, next) = self.sup.step(&events, state).map_err(|x| x.to_string())?;
            let (reactions, scenario, tasks) = oracle_step(self.c, &levels, prev, time);
            let got: Vec<u8> = dec.reaction.iter().map(|r| r.get()).collect();
            if got != reactions || dec.scenario != format!("sc{scenario}") || dec.task_ids() != tasks {
                return Err(format!(
                    "mismatch at depth {depth} levels {levels:?}: got ({got:?}, {}, {:?}), oracle ({reactions:?}, sc{scenario}, {tasks:?}) for {:?}",
                    dec.scenario,
                    dec.task_ids(),
                    self.c
                ));
            }
            self.checked += 1;
            self.walk(depth + 1, &next, &reactions)?;
        }
        Ok(())
    }
}

fn os_mapping_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut shapes = Vec::new();
    for a in 0..3u8 {
        shapes.push(vec![a]);
        for b in 0..3u8 {
            shapes.push(vec![a, b]);
        }
    }
    let per_shape = 40;
    let mut configs = 0;
    let mut checked = 0;
    for shape in &shapes {
        for _ in 0..per_shape {
            let c = random_table(&mut rng, shape.clone());
            let sup = build_supervisor(&c);
            let mut tuples = vec![vec![]];
            for &m in &c.levels {
                tuples = tuples
                    .into_iter()
                    .flat_map(|t: Vec<u8>| {
                        (0..=m).map(move |l| {
                            let mut t = t.clone();
                            t.push(l);
                            t
                        })
                    })
                    .collect();
            }
            let mut dfs = Dfs {
                c: &c,
                sup: &sup,
                tuples,
                checked: 0,
            };
            dfs.walk(0, &sup.initial_state(), &vec![0; c.levels.len()])?;
            checked += dfs.checked;
            configs += 1;
        }
    }
    Ok(format!(
        "{configs} random table sets over {} shapes (1-2 events, 1-3 levels), {checked} sequence prefixes of length 1-4 checked, all equal",
        shapes.len()
    ))
}

// 5 ------------------------------------------------------------------------

/// Brute-force priority-lexicographic optimum on a grid of 0.05 units.
/// `reqs` are (priority, group, amount, minimum) in grid units.
fn lex_optimum(reqs: &[(u32, usize, u32, u32)], avail: &[u32]) -> Vec<u32> {
    let choices: Vec<Vec<u32>> = reqs
        .iter()
        .map(|&(_, _, a, m)| {
            let mut v = vec![0];
            v.extend((m.max(1)..=a).filter(|&g| g >= m));
            v
        })
        .collect();
    let mut order: Vec<usize> = (0..reqs.len()).collect();
    order.sort_by_key(|&i| reqs[i].0);
    let mut best: Option<Vec<u32>> = None;
    let mut grant = vec![0u32; reqs.len()];
    fn rec(
        i: usize,
        grant: &mut Vec<u32>,
        choices: &[Vec<u32>],
        reqs: &[(u32, usize, u32, u32)],
        avail: &[u32],
        order: &[usize],
        best: &mut Option<Vec<u32>>,
    ) {
        if i == grant.len() {
            let key: Vec<u32> = order.iter().map(|&k| grant[k]).collect();
            let better = match best {
                None => true,
                Some(b) => key > order.iter().map(|&k| b[k]).collect::<Vec<_>>(),
            };
            if better {
                *best = Some(grant.clone());
            }
            return;
        }
        for &g in &choices[i] {
            grant[i] = g;
            let used: u32 = (0..=i).filter(|&k| reqs[k].1 == reqs[i].1).map(|k| grant[k]).sum();
            if used <= avail[reqs[i].1] {
                rec(i + 1, grant, choices, reqs, avail, order, best);
            }
        }
        grant[i] = 0;
    }
    rec(0, &mut grant, &choices, reqs, avail, &order, &mut best);
    best.unwrap()
}

fn allocator_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let unit = 0.05;
    let oracle_instances = 20_000;
    for inst in 0..oracle_instances {
        let ngroups = rng.gen_range(1..=2);
        let ntasks = rng.gen_range(1..=3);
        let avail: Vec<u32> = (0..ngroups).map(|_| rng.gen_range(0..=30)).collect();
        let groups: Vec<ActuatorGroup> = avail
            .iter()
            .enumerate()
            .map(|(g, &a)| {
                let mut grp = ActuatorGroup::new(format!("g{g}"), 40.0 * unit);
                grp.availability = Some(a as f64 * unit);
                grp
            })
            .collect();
        let mut prios: Vec<u32> = (1..=ntasks as u32).collect();
        prios.shuffle(&mut rng);
        let mut reqs = Vec::new();
        let mut requests = Vec::new();
        for t in 0..ntasks {
            for g in 0..ngroups {
                if ngroups > 1 && rng.gen_bool(0.3) {
                    continue;
                }
                let a = rng.gen_range(0..=25);
                let m = if rng.gen_bool(0.5) { 0 } else { rng.gen_range(0..=a) };
                reqs.push((prios[t], g, a, m));
                requests.push(
                    ResourceRequest::new(format!("t{t}"), format!("g{g}"), a as f64 * unit)
                        .with_minimum(m as f64 * unit),
                );
            }
        }
        let priority: BTreeMap<String, u32> =
            (0..ntasks).map(|t| (format!("t{t}"), prios[t])).collect();
        let alloc = allocate(&requests, &groups, &priority).map_err(|x| x.to_string())?;
        let best = lex_optimum(&reqs, &avail);
        for (r, want) in requests.iter().zip(&best) {
            let got = alloc.granted(&r.task, &r.group);
            ensure((got - *want as f64 * unit).abs() < 1e-9, || {
                format!("instance {inst}: {} on {} granted {got}, optimum {}", r.task, r.group, *want as f64 * unit)
            })?;
        }
    }

    let feasibility_instances = 100_000;
    for inst in 0..feasibility_instances {
        let ngroups = rng.gen_range(1..=3);
        let groups: Vec<ActuatorGroup> = (0..ngroups)
            .map(|g| {
                let cap = rng.gen_range(0.0..3.0);
                let mut grp = ActuatorGroup::new(format!("g{g}"), cap);
                grp.availability = Some(rng.gen_range(0.0..=cap));
                grp
            })
            .collect();
        let ntasks = rng.gen_range(1..=6);
        let mut requests = Vec::new();
        for t in 0..ntasks {
            for g in 0..ngroups {
                if rng.gen_bool(0.5) {
                    let a: f64 = rng.gen_range(0.0..2.0);
                    let m = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..=a) };
                    requests.push(ResourceRequest::new(format!("t{t}"), format!("g{g}"), a).with_minimum(m));
                }
            }
        }
        let priority: BTreeMap<String, u32> = (0..ntasks).map(|t| (format!("t{t}"), rng.gen_range(1..4))).collect();
        let alloc = allocate(&requests, &groups, &priority).map_err(|x| x.to_string())?;
        for g in &groups {
            let total: f64 = requests
                .iter()
                .filter(|r| r.group == g.id)
                .map(|r| alloc.granted(&r.task, &g.id))
                .sum();
            ensure(total <= g.available() + 1e-12, || {
                format!("instance {inst}: group {} granted {total} of {}", g.id, g.available())
            })?;
        }
        for r in &requests {
            let x = alloc.granted(&r.task, &r.group);
            ensure(x == 0.0 || (x + 1e-12 >= r.minimum && x <= r.amount), || {
                format!("instance {inst}: grant {x} for request {r:?}")
            })?;
        }
    }
    Ok(format!(
        "{oracle_instances} grid instances equal the brute-force optimum; {feasibility_instances} random instances feasible"
    ))
}

// 6 ------------------------------------------------------------------------

fn pid_vs_continuous() -> Result<f64, String> {
    let (tau, dt) = (0.1, 1e-4);
    let gains = PidGains {
        kp: 2.0,
        ki: 20.0,
        kd: 0.02,
        limits: [-100.0, 100.0],
        anti_windup: true,
    };
    let r = 1.0;
    let steps = (10.0 * tau / dt) as usize;

    // Discrete loop, plant held over each period.
    let mut y = 0.0;
    let mut st = PidState::default();
    let mut disc = Vec::with_capacity(steps + 1);
    disc.push(y);
    for _ in 0..steps {
        let (rc, next) = pid_step(r, y, &gains, st, dt);
        st = next;
        let u = rc.command;
        y = u + (y - u) * (-dt / tau).exp();
        disc.push(y);
    }

    // Continuous PID on y' = (u - y)/tau, RK4 at dt/100. The derivative on the
    // measurement makes u implicit: u(1 + kd/tau) = kp e + ki I + kd y / tau.
    let h = dt / 100.0;
    let u_of = |y: f64, i: f64| (gains.kp * (r - y) + gains.ki * i + gains.kd * y / tau) / (1.0 + gains.kd / tau);
    let f = |y: f64, i: f64| ((u_of(y, i) - y) / tau, r - y);
    let (mut yc, mut ic) = (0.0f64, 0.0f64);
    let mut worst = 0.0f64;
    for k in 1..=steps {
        for _ in 0..100 {
            let k1 = f(yc, ic);
            let k2 = f(yc + 0.5 * h * k1.0, ic + 0.5 * h * k1.1);
            let k3 = f(yc + 0.5 * h * k2.0, ic + 0.5 * h * k2.1);
            let k4 = f(yc + h * k3.0, ic + h * k3.1);
            yc += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            ic += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        worst = worst.max((disc[k] - yc).abs() / r);
    }
    Ok(worst)
}

fn lag_vs_closed_form() -> Result<f64, String> {
    let ps = load("density_limit.toml");
    let mut params = ps.plant.clone();
    params.initial.ne_edge_norm = 0.2;
    let tau = params.tau_n;
    let dt = tau / 100.0;
    let flux = 14.0;
    let target = params.k_gas * flux;
    let cmds = vec![pcs_core::actuator::ActuatorCommand {
        group: params.gas_group.clone(),
        value: flux,
        time: 0.0,
    }];
    // Keep the state away from the boundary so the lag runs freely.
    params.disruption_margin = -1e9;
    let mut s = PlantState::initial(&params);
    let mut worst = 0.0f64;
    for k in 1..=500 {
        s = plant_step(&cmds, &s, dt, &params).map_err(|x| x.to_string())?;
        let t = k as f64 * dt;
        let exact = target + (0.2 - target) * (-t / tau).exp();
        worst = worst.max(((s.ne_edge_norm - exact) / exact).abs());
    }
    Ok(worst)
}

/// Nearest distance to segment `a`–`b` (or the ray from `a` through `b` when
/// `ray`), by dense sampling refined around the best sample.
fn sampled_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2], ray: bool) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let dist = |s: f64| (p[0] - a[0] - s * dx).hypot(p[1] - a[1] - s * dy);
    let (mut lo, mut hi) = (0.0, if ray { 100.0 } else { 1.0 });
    let n = 400;
    let mut best = f64::INFINITY;
    for _ in 0..12 {
        let step = (hi - lo) / n as f64;
        let (mut bi, mut bd) = (0, f64::INFINITY);
        for i in 0..=n {
            let d = dist(lo + i as f64 * step);
            if d < bd {
                bd = d;
                bi = i;
            }
        }
        best = best.min(bd);
        let c = lo + bi as f64 * step;
        lo = (c - step).max(0.0);
        hi = if ray { c + step } else { (c + step).min(1.0) };
    }
    best
}

fn sampled_distance(h98: f64, ne: f64, v: &[[f64; 2]]) -> f64 {
    let p = [ne, h98];
    let n = v.len();
    let mut d = v
        .windows(2)
        .map(|w| sampled_segment(p, w[0], w[1], false))
        .fold(f64::INFINITY, f64::min);
    let back = [2.0 * v[0][0] - v[1][0], 2.0 * v[0][1] - v[1][1]];
    let fwd = [2.0 * v[n - 1][0] - v[n - 2][0], 2.0 * v[n - 1][1] - v[n - 2][1]];
    d = d.min(sampled_segment(p, v[0], back, true));
    d = d.min(sampled_segment(p, v[n - 1], fwd, true));
    // Stable side: above the curve, extended linearly at both ends.
    let seg = (1..n - 1).find(|&i| ne < v[i][0]).unwrap_or(n - 1);
    let (a, b) = (v[seg - 1], v[seg]);
    let height = a[1] + (b[1] - a[1]) * (ne - a[0]) / (b[0] - a[0]);
    if h98 >= height {
        d
    } else {
        -d
    }
}

fn distance_vs_sampling() -> Result<(f64, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut points = 0;
    for b in 0..200 {
        let vertices: Vec<[f64; 2]> = if b == 0 {
            vec![[0.6, 0.0], [0.9, 1.5]]
        } else {
            let mut x = rng.gen_range(0.0..0.5);
            (0..rng.gen_range(2..6))
                .map(|_| {
                    x += rng.gen_range(0.05..0.4);
                    [x, rng.gen_range(-0.5..2.0)]
                })
                .collect()
        };
        let boundary = DisruptionBoundary::new(vertices.clone());
        for _ in 0..25 {
            let (h, ne) = (rng.gen_range(-1.0..2.5), rng.gen_range(-0.5..2.0));
            let got = distance(h, ne, &boundary);
            let want = sampled_distance(h, ne, &vertices);
            worst = worst.max((got - want).abs());
            points += 1;
        }
    }
    Ok((worst, points))
}

fn nbi_energy_accounting() -> Result<f64, String> {
    let ps = load("density_limit.toml");
    let (t, _, _) = run_to_table(&ps).map_err(e)?;
    let p = t.floats("nbi_power").map_err(e)?;
    let energy = t.floats("nbi_energy").map_err(e)?;
    let disrupted = t.values("disrupted").map_err(e)?;
    let end = disrupted.iter().position(|v| *v == "1").unwrap_or(p.len() - 1);
    let mut sum = 0.0;
    let mut worst = 0.0f64;
    for k in 1..=end {
        sum += ps.run.dt * p[k];
        worst = worst.max((energy[k] - sum).abs() / sum.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

fn numerical_checks() -> Check {
    let pid = pid_vs_continuous()?;
    let lag = lag_vs_closed_form()?;
    let (dist, points) = distance_vs_sampling()?;
    let nbi = nbi_energy_accounting()?;
    let msg = format!(
        "PID max error {:.3}% (tol 1%); density lag max rel. error {lag:.2e} (tol 1e-3); distance max error {dist:.2e} over {points} points (tol 1e-6); NBI energy rel. error {nbi:.2e} (tol 1e-9)",
        pid * 100.0
    );
    if pid <= 0.01 && lag <= 1e-3 && dist <= 1e-6 && nbi <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 7 ------------------------------------------------------------------------

fn determinism() -> Check {
    let mut notes = Vec::new();
    for name in ["density_limit.toml", "dual_ntm.toml"] {
        let ps = load(name);
        let (t, _, a) = run_to_table(&ps).map_err(e)?;
        let (_, _, b) = run_to_table(&ps).map_err(e)?;
        ensure(a == b, || format!("{name}: two runs differ"))?;
        let recorded = t.select(&decision_header(&ps)).map_err(e)?.to_csv().map_err(e)?;
        let replayed = replay(&t, &ps).map_err(e)?.to_csv().map_err(e)?;
        ensure(recorded == replayed, || format!("{name}: replay differs from the recorded decisions"))?;
        notes.push(format!("{name} {} bytes", a.len()));
    }
    Ok(format!("identical reruns and self-replay: {}", notes.join(", ")))
}

// 8 ------------------------------------------------------------------------

fn fuzz_frames(
    ps: &PulseSchedule,
    rng: &mut ChaCha8Rng,
    traces: usize,
    len: usize,
) -> Result<u64, String> {
    let names = ps.plant.signal_names();
    let mut steps = 0;
    for _ in 0..traces {
        let mut sim = Simulation::new(ps).map_err(e)?;
        let scale: f64 = rng.gen_range(0.1..10.0);
        for k in 0..len {
            let mut frame = SignalFrame::new(k as f64 * ps.run.dt);
            for n in &names {
                let v = match rng.gen_range(0..100) {
                    0 => f64::NAN,
                    1 => f64::INFINITY,
                    2 => f64::NEG_INFINITY,
                    _ => rng.gen_range(-scale..scale),
                };
                frame = frame.with(n, v);
            }
            sim.control_step(&frame)
                .map_err(|x| format!("runtime error after zero validation errors: {x}"))?;
            steps += 1;
        }
    }
    Ok(steps)
}

fn mutate(ps: &mut PulseSchedule, rng: &mut ChaCha8Rng) {
    let ids: Vec<String> = ps.scenarios.iter().map(|s| s.id.clone()).collect();
    let ctls: Vec<String> = ps.controllers.keys().cloned().collect();
    match rng.gen_range(0..10) {
        0 if !ps.os_mapping.rows.is_empty() => {
            let i = rng.gen_range(0..ps.os_mapping.rows.len());
            ps.os_mapping.rows.remove(i);
        }
        1 if !ps.os_mapping.rows.is_empty() => {
            let i = rng.gen_range(0..ps.os_mapping.rows.len());
            ps.os_mapping.rows[i].scenario = if rng.gen_bool(0.8) {
                ids.choose(rng).unwrap().clone()
            } else {
                "nowhere".into()
            };
        }
        2 => {
            let one = ps.ones.choose_mut(rng).unwrap();
            let d = DangerLevel::from_index(rng.gen_range(0..5)).unwrap();
            if rng.gen_bool(0.3) {
                one.reaction.remove(&d);
            } else {
                one.reaction.insert(d, rl(rng.gen_range(0..5)));
            }
        }
        3 => {
            let one = ps.ones.choose_mut(rng).unwrap();
            if rng.gen_bool(0.3) {
                one.danger.pop();
            } else if let Some(x) = one.danger.choose_mut(rng) {
                *x = DangerLevel::from_index(rng.gen_range(0..5)).unwrap();
            }
        }
        4 => {
            let one = ps.ones.choose_mut(rng).unwrap();
            if rng.gen_bool(0.5) {
                one.thresholds.pop();
            } else if let Some(x) = one.thresholds.choose_mut(rng) {
                *x += rng.gen_range(-1.0..1.0);
            }
        }
        5 if ps.scenarios.len() > 1 => {
            let i = rng.gen_range(0..ps.scenarios.len());
            ps.scenarios.remove(i);
        }
        6 => {
            let s = ps.scenarios.choose_mut(rng).unwrap();
            if let Some(t) = s.tasks.choose_mut(rng) {
                t.controller = if rng.gen_bool(0.8) {
                    ctls.choose(rng).unwrap().clone()
                } else {
                    "missing".into()
                };
            }
        }
        7 => {
            let s = ps.scenarios.choose_mut(rng).unwrap();
            if let Some(t) = s.tasks.choose_mut(rng) {
                t.priority = rng.gen_range(0..5);
            }
        }
        8 => {
            let s = ps.scenarios.choose_mut(rng).unwrap();
            if let Some(t) = s.tasks.choose_mut(rng) {
                let one = ps.ones.choose(rng).unwrap().id.clone();
                t.activation.when = Some(EventTrigger {
                    one,
                    min_level: rng.gen_range(0..6),
                    max_level: None,
                });
            }
        }
        _ => {
            let one = ps.ones.choose_mut(rng).unwrap();
            one.irreversible = Some(ReactionLevel::all().filter(|_| rng.gen_bool(0.4)).collect());
        }
    }
}

fn validation_soundness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut steps = 0;
    let mut valid_mutants = 0;
    let mut rejected_mutants = 0;
    for name in ["density_limit.toml", "dual_ntm.toml"] {
        let ps = load(name);
        ensure(errors(&schedule::validate(&ps)).count() == 0, || format!("{name} has validation errors"))?;
        steps += fuzz_frames(&ps, &mut rng, 1000, 60)?;
        for _ in 0..300 {
            let mut m = ps.clone();
            for _ in 0..rng.gen_range(1..4) {
                mutate(&mut m, &mut rng);
            }
            if errors(&schedule::validate(&m)).count() == 0 {
                valid_mutants += 1;
                steps += fuzz_frames(&m, &mut rng, 1000, 5)?;
            } else {
                rejected_mutants += 1;
            }
        }
    }
    Ok(format!(
        "2 shipped + {valid_mutants} mutated schedules with zero errors ({rejected_mutants} mutants rejected), 1000 fuzzed traces each, {steps} control steps, 0 runtime errors"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("density-limit timeline", density_limit_timeline),
        ("dual-NTM scenarios via replay", dual_ntm_replay),
        ("irreversibility latch", irreversibility_latch),
        ("OS-mapping brute-force equivalence", os_mapping_equivalence),
        ("allocator oracle equivalence", allocator_oracle),
        ("numerical checks", numerical_checks),
        ("determinism and self-replay", determinism),
        ("validation soundness", validation_soundness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(msg) => println!("PASS {}: {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {}: {name}: {msg}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

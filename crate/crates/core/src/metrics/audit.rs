//! Independent replay of a canonical event log.
//!
//! Works from the text alone plus the scenario inputs, so it checks what a
//! run wrote rather than what the simulator believed. Every broken rule
//! becomes one violation string.

use std::collections::HashMap;

use crate::allocation::{admitted_category, Flow};
use crate::des::{SimTime, LOG_HEADER};
use crate::terminal::{ContainerClass, SimSetup};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub events: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Phase {
    Arrived,
    Berthed,
    Departed,
}

struct Ship {
    arrived_at: SimTime,
    phase: Phase,
    start_m: u32,
    end_m: u32,
    qcs: u32,
    qcs_busy: u32,
    discharge: Vec<ContainerClass>,
    load: Vec<ContainerClass>,
    /// Lifecycle step reached by each box.
    d_step: Vec<u8>,
    l_step: Vec<u8>,
    d_block: Vec<Option<usize>>,
    /// Discharge box still on the quay crane that lifted it.
    d_held: Vec<bool>,
    l_block: Vec<Option<usize>>,
}

const D_DONE: u8 = 7;
const L_DONE: u8 = 8;

struct Replay<'a> {
    setup: &'a SimSetup,
    ids: HashMap<&'a str, usize>,
    blocks: HashMap<&'a str, usize>,
    ships: Vec<Ship>,
    occupancy: Vec<u64>,
    trucks_busy: u32,
    ycs_busy: u32,
    qcs_busy: u32,
    arrival_order: Vec<usize>,
    berth_order: Vec<usize>,
    violations: Vec<String>,
}

fn kv<'d>(detail: &'d str, key: &str) -> Option<&'d str> {
    detail
        .split(';')
        .filter_map(|p| p.split_once('='))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v)
}

impl<'a> Replay<'a> {
    fn new(setup: &'a SimSetup) -> Self {
        Self {
            setup,
            ids: setup
                .vessels
                .iter()
                .enumerate()
                .map(|(i, v)| (v.id.as_str(), i))
                .collect(),
            blocks: setup
                .yard
                .iter()
                .enumerate()
                .map(|(i, b)| (b.name.as_str(), i))
                .collect(),
            ships: setup
                .vessels
                .iter()
                .map(|v| {
                    let discharge = v.discharge.expand();
                    let load = v.load.expand();
                    Ship {
                        arrived_at: SimTime::ZERO,
                        phase: Phase::Arrived,
                        start_m: 0,
                        end_m: 0,
                        qcs: 0,
                        qcs_busy: 0,
                        d_step: vec![0; discharge.len()],
                        l_step: vec![0; load.len()],
                        d_block: vec![None; discharge.len()],
                        d_held: vec![false; discharge.len()],
                        l_block: vec![None; load.len()],
                        discharge,
                        load,
                    }
                })
                .collect(),
            occupancy: setup.yard.iter().map(|b| b.occupancy_teu).collect(),
            trucks_busy: 0,
            ycs_busy: 0,
            qcs_busy: 0,
            arrival_order: Vec::new(),
            berth_order: Vec::new(),
            violations: Vec::new(),
        }
    }

    fn fail(&mut self, line: usize, msg: impl Into<String>) {
        self.violations.push(format!("line {line}: {}", msg.into()));
    }

    fn vessel_event(&mut self, line: usize, t: SimTime, kind: &str, v: usize, detail: &str) {
        let eq = self.setup.equipment;
        let clearance = self.setup.service.berth_clearance_m;
        let seen = self.arrival_order.contains(&v);
        match kind {
            "arrive" => {
                if seen {
                    self.fail(line, "vessel arrives twice");
                }
                if t != self.setup.vessels[v].arrival {
                    self.fail(
                        line,
                        format!("arrive at {t}, scheduled {}", self.setup.vessels[v].arrival),
                    );
                }
                self.ships[v].arrived_at = t;
                self.arrival_order.push(v);
            }
            "berth" => {
                if !seen || self.ships[v].phase != Phase::Arrived || self.berth_order.contains(&v) {
                    self.fail(line, "berth without a pending arrival");
                    return;
                }
                let expected = self.arrival_order.get(self.berth_order.len()).copied();
                if expected != Some(v) {
                    self.fail(line, "FCFS: vessel berths ahead of an earlier arrival");
                }
                self.berth_order.push(v);
                if t < self.ships[v].arrived_at {
                    self.fail(line, "berth before arrival");
                }
                let parsed = (
                    kv(detail, "start_m").and_then(|s| s.parse::<u32>().ok()),
                    kv(detail, "end_m").and_then(|s| s.parse::<u32>().ok()),
                    kv(detail, "qcs").and_then(|s| s.parse::<u32>().ok()),
                );
                let (Some(start), Some(end), Some(qcs)) = parsed else {
                    self.fail(line, format!("malformed berth detail {detail:?}"));
                    return;
                };
                let need = self.setup.vessels[v].length_m + clearance;
                if end.checked_sub(start) != Some(need) {
                    self.fail(
                        line,
                        format!("berth interval {start}-{end} is not {need} m"),
                    );
                }
                if end > eq.quay_length_m {
                    self.fail(
                        line,
                        format!(
                            "berth ends at {end} m beyond the {} m quay",
                            eq.quay_length_m
                        ),
                    );
                }
                let overlap = self.ships.iter().enumerate().any(|(i, s)| {
                    i != v && s.phase == Phase::Berthed && start < s.end_m && s.start_m < end
                });
                if overlap {
                    self.fail(line, "berth overlaps a berthed vessel");
                }
                let held: u32 = self
                    .ships
                    .iter()
                    .filter(|s| s.phase == Phase::Berthed)
                    .map(|s| s.qcs)
                    .sum();
                if qcs == 0 || held + qcs > eq.quay_cranes {
                    self.fail(
                        line,
                        format!(
                            "{qcs} quay crane(s) granted with {held} of {} held",
                            eq.quay_cranes
                        ),
                    );
                }
                let s = &mut self.ships[v];
                s.phase = Phase::Berthed;
                (s.start_m, s.end_m, s.qcs) = (start, end, qcs);
            }
            "depart" => {
                let s = &self.ships[v];
                let done =
                    s.d_step.iter().all(|&x| x == D_DONE) && s.l_step.iter().all(|&x| x == L_DONE);
                let (phase, busy) = (s.phase, s.qcs_busy);
                if phase != Phase::Berthed {
                    self.fail(line, "depart without berth");
                } else if !done {
                    self.fail(line, "vessel departs with boxes unhandled");
                }
                if busy != 0 {
                    self.fail(line, "vessel departs while its quay cranes are busy");
                }
                self.ships[v].phase = Phase::Departed;
            }
            other => self.fail(line, format!("unknown vessel-level kind {other:?}")),
        }
    }

    fn block_detail(&mut self, line: usize, detail: &str, class: ContainerClass) -> Option<usize> {
        let Some(name) = kv(detail, "block") else {
            self.fail(line, format!("missing block in {detail:?}"));
            return None;
        };
        let Some(&b) = self.blocks.get(name) else {
            self.fail(line, format!("unknown block {name:?}"));
            return None;
        };
        if kv(detail, "teu") != Some(class.teu().to_string().as_str()) {
            self.fail(line, format!("teu in {detail:?} does not match {class}"));
        }
        Some(b)
    }

    fn commit(&mut self, line: usize, b: usize, class: ContainerClass, flow: Flow) {
        let block = &self.setup.yard[b];
        if block.category != admitted_category(class, flow) {
            self.fail(
                line,
                format!("{class} placed in {} block {}", block.category, block.name),
            );
        }
        self.occupancy[b] += class.teu();
        if self.occupancy[b] > block.capacity_teu {
            self.fail(
                line,
                format!(
                    "block {} holds {} TEU over capacity {}",
                    block.name, self.occupancy[b], block.capacity_teu
                ),
            );
        }
    }

    fn box_event(
        &mut self,
        line: usize,
        kind: &str,
        v: usize,
        load: bool,
        item: usize,
        detail: &str,
    ) {
        let s = &self.ships[v];
        let classes = if load { &s.load } else { &s.discharge };
        let Some(&class) = classes.get(item) else {
            self.fail(line, format!("box index {item} beyond manifest"));
            return;
        };
        let phase = s.phase;
        let step = if load { s.l_step[item] } else { s.d_step[item] };
        let assigned = if load {
            s.l_block[item]
        } else {
            s.d_block[item]
        };
        let yard_full = detail.starts_with("yard_full=");
        let eq = self.setup.equipment;

        let needs_berth = !matches!(kind, "stage");
        if needs_berth && phase != Phase::Berthed {
            self.fail(line, format!("{kind} while vessel is {phase:?}"));
        }
        if !self.arrival_order.contains(&v) {
            self.fail(line, format!("{kind} before vessel arrival"));
        }

        // (allowed from-steps, next step)
        let (from, to): (&[u8], u8) = match (load, kind) {
            (false, "qc_lift") => (&[0], 1),
            (false, "qc_lift_done") => (&[1], if yard_full { 2 } else { 3 }),
            (false, "place") => (&[2], if yard_full { 2 } else { 3 }),
            (false, "truck_depart") => (&[3], 4),
            (false, "truck_arrive") => (&[4], 5),
            (false, "yc_begin") => (&[5], 6),
            (false, "yc_stack") => (&[6], D_DONE),
            (true, "stage") => (&[0, 1], if yard_full { 1 } else { 2 }),
            (true, "yc_retrieve") => (&[2], 3),
            (true, "yc_retrieve_done") => (&[3], 4),
            (true, "truck_depart") => (&[4], 5),
            (true, "truck_arrive") => (&[5], 6),
            (true, "qc_load_begin") => (&[6], 7),
            (true, "qc_load") => (&[7], L_DONE),
            _ => {
                self.fail(line, format!("kind {kind:?} not valid for this box"));
                return;
            }
        };
        if !from.contains(&step) {
            self.fail(line, format!("{kind} out of order (box at step {step})"));
        }
        if load {
            self.ships[v].l_step[item] = to;
        } else {
            self.ships[v].d_step[item] = to;
        }

        if matches!(kind, "qc_lift" | "qc_load_begin" | "qc_load")
            && kv(detail, "class") != Some(class.tag())
        {
            self.fail(line, format!("class in {detail:?} is not {class}"));
        }

        let flow = if load { Flow::Export } else { Flow::Import };
        match kind {
            "qc_lift_done" | "place" | "stage" if !yard_full => {
                if let Some(b) = self.block_detail(line, detail, class) {
                    self.commit(line, b, class, flow);
                    if load {
                        self.ships[v].l_block[item] = Some(b);
                    } else {
                        self.ships[v].d_block[item] = Some(b);
                    }
                }
            }
            "truck_depart" | "yc_begin" | "yc_stack" | "yc_retrieve" => {
                let b = self.block_detail(line, detail, class);
                if b.is_some() && b != assigned {
                    self.fail(
                        line,
                        format!("{kind} names a block other than the assigned one"),
                    );
                }
                if let (Some(b), "yc_retrieve") = (b, kind) {
                    match self.occupancy[b].checked_sub(class.teu()) {
                        Some(o) => self.occupancy[b] = o,
                        None => self.fail(line, "retrieve from a block holding less than the box"),
                    }
                }
            }
            _ => {}
        }

        // Equipment: acquire and release in log order.
        let vessel_qcs = self.ships[v].qcs;
        let mut qc_delta: i32 = 0;
        match (load, kind) {
            (false, "qc_lift") | (true, "qc_load_begin") => qc_delta = 1,
            (false, "qc_lift_done") if yard_full => qc_delta = -1,
            (false, "qc_lift_done") => self.ships[v].d_held[item] = true,
            (false, "truck_depart") if std::mem::take(&mut self.ships[v].d_held[item]) => {
                qc_delta = -1
            }
            (true, "qc_load") => qc_delta = -1,
            _ => {}
        }
        if qc_delta > 0 {
            self.ships[v].qcs_busy += 1;
            self.qcs_busy += 1;
            if self.ships[v].qcs_busy > vessel_qcs {
                self.fail(
                    line,
                    format!("vessel uses more than its {vessel_qcs} quay crane(s)"),
                );
            }
            if self.qcs_busy > eq.quay_cranes {
                self.fail(line, "quay crane pool exceeded");
            }
        } else if qc_delta < 0 {
            self.ships[v].qcs_busy -= 1;
            self.qcs_busy -= 1;
        }

        match kind {
            "truck_depart" => {
                self.trucks_busy += 1;
                if self.trucks_busy > eq.trucks {
                    self.fail(line, "truck pool exceeded");
                }
                if load {
                    self.release_yc(line);
                }
            }
            "truck_arrive" => match self.trucks_busy.checked_sub(1) {
                Some(n) => self.trucks_busy = n,
                None => self.fail(line, "truck released that was never taken"),
            },
            "yc_begin" | "yc_retrieve" => {
                self.ycs_busy += 1;
                if self.ycs_busy > eq.yard_cranes {
                    self.fail(line, "yard crane pool exceeded");
                }
            }
            "yc_stack" => self.release_yc(line),
            _ => {}
        }
    }

    fn release_yc(&mut self, line: usize) {
        match self.ycs_busy.checked_sub(1) {
            Some(n) => self.ycs_busy = n,
            None => self.fail(line, "yard crane released that was never taken"),
        }
    }
}

/// Replays `log` (canonical text) against the inputs in `setup`.
///
/// Checks container conservation, block capacity and admissibility,
/// equipment pool bounds, quay geometry and first-come-first-served berthing.
pub fn audit_log(setup: &SimSetup, log: &str) -> AuditReport {
    let mut r = Replay::new(setup);
    let mut lines = log.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == LOG_HEADER => {}
        other => r.fail(1, format!("bad header {:?}", other.map(|(_, h)| h))),
    }
    let mut last = SimTime::ZERO;
    let mut events = 0;
    for (i, text) in lines {
        let line = i + 1;
        events += 1;
        let f: Vec<&str> = text.split(',').collect();
        if f.len() != 5 {
            r.fail(line, format!("expected 5 fields, found {}", f.len()));
            continue;
        }
        let (Some(t), Ok(_seq)) = (SimTime::parse_iso(f[0]), f[1].parse::<u64>()) else {
            r.fail(line, "bad time or seq");
            continue;
        };
        if t < last {
            r.fail(line, "time goes backwards");
        }
        last = t;
        let (kind, entity, detail) = (f[2], f[3], f[4]);
        match entity.split_once(':') {
            None => match r.ids.get(entity) {
                Some(&v) => r.vessel_event(line, t, kind, v, detail),
                None => r.fail(line, format!("unknown vessel {entity:?}")),
            },
            Some((id, b)) => {
                let v = r.ids.get(id).copied();
                let parsed = match (b.get(..1), b.get(1..).and_then(|n| n.parse::<usize>().ok())) {
                    (Some("d"), Some(n)) => Some((false, n)),
                    (Some("l"), Some(n)) => Some((true, n)),
                    _ => None,
                };
                match (v, parsed) {
                    (Some(v), Some((load, n))) => r.box_event(line, kind, v, load, n, detail),
                    _ => r.fail(line, format!("bad box entity {entity:?}")),
                }
            }
        }
    }

    for (v, s) in r.ships.iter().enumerate() {
        if s.phase != Phase::Departed {
            r.violations
                .push(format!("vessel {} never departs", setup.vessels[v].id));
        }
    }
    if r.trucks_busy != 0 || r.ycs_busy != 0 || r.qcs_busy != 0 {
        r.violations.push(format!(
            "equipment still busy at end: {} truck(s), {} yard crane(s), {} quay crane(s)",
            r.trucks_busy, r.ycs_busy, r.qcs_busy
        ));
    }
    let expected: u64 = setup.yard.iter().map(|b| b.occupancy_teu).sum::<u64>()
        + setup
            .vessels
            .iter()
            .map(|v| crate::terminal::teu(&v.discharge))
            .sum::<u64>();
    let held: u64 = r.occupancy.iter().sum();
    if held != expected {
        r.violations
            .push(format!("yard ends with {held} TEU, expected {expected}"));
    }
    AuditReport {
        events,
        violations: r.violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::alexandria;
    use crate::terminal::simulate;

    fn run() -> (SimSetup, String) {
        let setup = alexandria::bundle().setup().unwrap();
        let log = simulate(&setup).unwrap().canonical_log();
        (setup, log)
    }

    #[test]
    fn alexandria_log_is_clean() {
        let (setup, log) = run();
        let report = audit_log(&setup, &log);
        assert!(
            report.is_clean(),
            "{:?}",
            &report.violations[..report.violations.len().min(5)]
        );
        assert_eq!(report.events, log.lines().count() - 1);
    }

    #[test]
    fn dropped_stack_breaks_conservation() {
        let (setup, log) = run();
        let victim = log.lines().position(|l| l.contains(",yc_stack,")).unwrap();
        let cut: Vec<&str> = log
            .lines()
            .enumerate()
            .filter(|(i, _)| *i != victim)
            .map(|(_, l)| l)
            .collect();
        let report = audit_log(&setup, &cut.join("\n"));
        assert!(
            report.violations.iter().any(|v| v.contains("unhandled")),
            "{:?}",
            report.violations
        );
    }

    #[test]
    fn shrunk_block_overflows() {
        let (mut setup, log) = run();
        let c = setup.yard.iter().position(|b| b.name == "C").unwrap();
        setup.yard[c].capacity_teu = 10;
        let report = audit_log(&setup, &log);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("over capacity")));
    }

    #[test]
    fn fewer_trucks_than_used_is_flagged() {
        let (mut setup, log) = run();
        setup.equipment.trucks = 1;
        let report = audit_log(&setup, &log);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("truck pool exceeded")));
    }

    #[test]
    fn swapped_berths_break_fcfs() {
        let (setup, log) = run();
        let lines: Vec<String> = log.lines().map(str::to_string).collect();
        let berths: Vec<usize> = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.contains(",berth,"))
            .map(|(i, _)| i)
            .take(2)
            .collect();
        let mut swapped = lines.clone();
        let entity = |l: &str| l.split(',').nth(3).unwrap().to_string();
        let (a, b) = (entity(&lines[berths[0]]), entity(&lines[berths[1]]));
        swapped[berths[0]] =
            lines[berths[0]].replace(&format!(",berth,{a},"), &format!(",berth,{b},"));
        swapped[berths[1]] =
            lines[berths[1]].replace(&format!(",berth,{b},"), &format!(",berth,{a},"));
        let report = audit_log(&setup, &swapped.join("\n"));
        assert!(
            report.violations.iter().any(|v| v.contains("FCFS")),
            "{:?}",
            report.violations
        );
    }
}

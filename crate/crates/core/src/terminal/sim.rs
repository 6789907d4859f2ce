//! Event handlers for the quay -> truck -> yard lifecycle.
//!
//! Discharge, per box: a quay crane lifts it (`qc_lift` at the start of the
//! lift, `qc_lift_done` at the end, when the yard block is chosen), holds it
//! until a truck is free (`truck_depart`), the truck drives to the block and
//! is released (`truck_arrive`), and a yard crane stacks it (`yc_begin`,
//! `yc_stack` at completion). Load mirrors this: `yc_retrieve` at the start
//! of the retrieve, the crane holds the box until a truck takes it, and a
//! quay crane puts it aboard between `qc_load_begin` and `qc_load`. A vessel
//! loads only after every discharge box has left its cranes, and departs
//! once all discharge boxes are stacked and all load boxes are aboard.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{
    id_order, ContainerClass, EquipmentPool, ServiceTimes, Vessel, YardBlock, YardCategory,
};
use crate::allocation::{self, admitted_category, BlockPolicy, Flow, QuayState};
use crate::des::{Engine, Event, RecordFields, RngState, RunError, SimTime, SimulationLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    #[default]
    Deterministic,
    Stochastic,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Deterministic => "deterministic",
            Mode::Stochastic => "stochastic",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(Mode::Deterministic),
            "stochastic" => Ok(Mode::Stochastic),
            other => Err(format!("unknown mode {other:?} (deterministic|stochastic)")),
        }
    }
}

/// Everything one run needs. Owned so runs can be fanned out across threads.
#[derive(Clone)]
pub struct SimSetup {
    pub vessels: Vec<Vessel>,
    pub yard: Vec<YardBlock>,
    pub equipment: EquipmentPool,
    pub service: ServiceTimes,
    pub policy: &'static dyn BlockPolicy,
    pub mode: Mode,
    pub seed: u64,
    pub horizon: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    Discharge,
    Load,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EvKind {
    Arrive,
    Stage,
    Berth,
    QcLift,
    QcLiftDone,
    Place,
    TruckDepart,
    TruckArrive,
    YcBegin,
    YcStack,
    YcRetrieve,
    YcRetrieveDone,
    QcLoadBegin,
    QcLoad,
    Depart,
}

impl EvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EvKind::Arrive => "arrive",
            EvKind::Stage => "stage",
            EvKind::Berth => "berth",
            EvKind::QcLift => "qc_lift",
            EvKind::QcLiftDone => "qc_lift_done",
            EvKind::Place => "place",
            EvKind::TruckDepart => "truck_depart",
            EvKind::TruckArrive => "truck_arrive",
            EvKind::YcBegin => "yc_begin",
            EvKind::YcStack => "yc_stack",
            EvKind::YcRetrieve => "yc_retrieve",
            EvKind::YcRetrieveDone => "yc_retrieve_done",
            EvKind::QcLoadBegin => "qc_load_begin",
            EvKind::QcLoad => "qc_load",
            EvKind::Depart => "depart",
        }
    }

    fn is_vessel_level(self) -> bool {
        matches!(self, EvKind::Arrive | EvKind::Berth | EvKind::Depart)
    }
}

/// Event body: what happens, to which vessel, and which box when relevant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ev {
    pub kind: EvKind,
    pub vessel: u32,
    pub dir: Dir,
    pub item: u32,
}

impl Ev {
    fn vessel(kind: EvKind, vessel: usize) -> Self {
        Self {
            kind,
            vessel: vessel as u32,
            dir: Dir::Discharge,
            item: 0,
        }
    }

    fn boxed(kind: EvKind, key: BoxKey) -> Self {
        Self {
            kind,
            vessel: key.vessel,
            dir: key.dir,
            item: key.item,
        }
    }

    fn key(&self) -> BoxKey {
        BoxKey {
            vessel: self.vessel,
            dir: self.dir,
            item: self.item,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detail {
    None,
    Arrive { length_m: u32 },
    Berth { start_m: u32, end_m: u32, qcs: u32 },
    Class(ContainerClass),
    Block { block: u16, teu: u8 },
    YardFull(YardCategory),
}

pub type TerminalLog = SimulationLog<Ev, Detail>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("deadlock with {} vessel(s) unfinished ({}); starved: {}", .unfinished.len(), .unfinished.join(" "), .starved.join("; "))]
    Deadlock {
        unfinished: Vec<String>,
        starved: Vec<String>,
    },
    #[error("horizon {horizon} reached with vessel(s) unfinished: {}", .unfinished.join(" "))]
    HorizonExceeded {
        horizon: SimTime,
        unfinished: Vec<String>,
    },
    #[error("policy placed {container} in block {block}, which is inadmissible or over capacity")]
    PolicyViolation { container: String, block: String },
    #[error("run end precedes start: {0}")]
    Setup(String),
}

/// A finished run: the event log plus the names needed to render it.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub log: TerminalLog,
    pub start: SimTime,
    pub horizon: SimTime,
    pub vessel_ids: Vec<String>,
    pub block_names: Vec<String>,
}

impl SimOutcome {
    pub fn entity(&self, ev: &Ev) -> String {
        let id = &self.vessel_ids[ev.vessel as usize];
        if ev.kind.is_vessel_level() {
            id.clone()
        } else {
            let d = match ev.dir {
                Dir::Discharge => 'd',
                Dir::Load => 'l',
            };
            format!("{id}:{d}{}", ev.item)
        }
    }

    pub fn detail(&self, detail: &Detail) -> String {
        match *detail {
            Detail::None => String::new(),
            Detail::Arrive { length_m } => format!("length_m={length_m}"),
            Detail::Berth {
                start_m,
                end_m,
                qcs,
            } => {
                format!("start_m={start_m};end_m={end_m};qcs={qcs}")
            }
            Detail::Class(c) => format!("class={c}"),
            Detail::Block { block, teu } => {
                format!("block={};teu={teu}", self.block_names[block as usize])
            }
            Detail::YardFull(cat) => format!("yard_full={cat}"),
        }
    }

    /// Canonical text form; byte-identical for identical runs.
    pub fn canonical_log(&self) -> String {
        self.log.to_canonical_string(|r| RecordFields {
            kind: r.event.body.kind.as_str(),
            entity: self.entity(&r.event.body),
            detail: self.detail(&r.detail),
        })
    }

    pub fn write_log<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        self.log.write_canonical(w, |r| RecordFields {
            kind: r.event.body.kind.as_str(),
            entity: self.entity(&r.event.body),
            detail: self.detail(&r.detail),
        })
    }
}

const NO_BLOCK: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BoxKey {
    vessel: u32,
    dir: Dir,
    item: u32,
}

#[derive(Debug, Clone, Copy)]
enum YcJob {
    Stack(BoxKey),
    Retrieve(BoxKey),
}

struct VesselRt {
    discharge: Vec<ContainerClass>,
    load: Vec<ContainerClass>,
    d_block: Vec<u16>,
    /// Discharge box is still on its quay crane's spreader.
    d_held: Vec<bool>,
    l_block: Vec<u16>,
    qcs: u32,
    qcs_idle: u32,
    window: u32,
    berthed: bool,
    next_lift: u32,
    handed: u32,
    stacked: u32,
    load_started: bool,
    next_request: u32,
    outstanding: u32,
    loaded: u32,
    load_buffer: VecDeque<u32>,
    depart_scheduled: bool,
    departed: bool,
}

impl VesselRt {
    fn new(v: &Vessel) -> Self {
        let discharge = v.discharge.expand();
        let load = v.load.expand();
        Self {
            d_block: vec![NO_BLOCK; discharge.len()],
            d_held: vec![false; discharge.len()],
            l_block: vec![NO_BLOCK; load.len()],
            discharge,
            load,
            qcs: 0,
            qcs_idle: 0,
            window: 0,
            berthed: false,
            next_lift: 0,
            handed: 0,
            stacked: 0,
            load_started: false,
            next_request: 0,
            outstanding: 0,
            loaded: 0,
            load_buffer: VecDeque::new(),
            depart_scheduled: false,
            departed: false,
        }
    }

    fn n_discharge(&self) -> u32 {
        self.discharge.len() as u32
    }

    fn n_load(&self) -> u32 {
        self.load.len() as u32
    }
}

struct Terminal<'a> {
    setup: &'a SimSetup,
    yard: Vec<YardBlock>,
    vessels: Vec<VesselRt>,
    waiting: VecDeque<usize>,
    quay: QuayState,
    trucks_free: u32,
    truck_queue: VecDeque<BoxKey>,
    ycs_free: u32,
    yc_queue: VecDeque<YcJob>,
    stage_buffer: VecDeque<BoxKey>,
    quay_buffer: VecDeque<BoxKey>,
    rng: Option<RngState>,
    unfinished: usize,
}

type Eng = Engine<Ev>;

impl<'a> Terminal<'a> {
    fn new(setup: &'a SimSetup) -> Self {
        let eq = setup.equipment;
        Self {
            setup,
            yard: setup.yard.clone(),
            vessels: setup.vessels.iter().map(VesselRt::new).collect(),
            waiting: VecDeque::new(),
            quay: QuayState::new(
                eq.quay_length_m,
                setup.service.berth_clearance_m,
                eq.quay_cranes,
            ),
            trucks_free: eq.trucks,
            truck_queue: VecDeque::new(),
            ycs_free: eq.yard_cranes,
            yc_queue: VecDeque::new(),
            stage_buffer: VecDeque::new(),
            quay_buffer: VecDeque::new(),
            rng: match setup.mode {
                Mode::Deterministic => None,
                Mode::Stochastic => Some(RngState::new(setup.seed)),
            },
            unfinished: setup.vessels.len(),
        }
    }

    fn class(&self, k: BoxKey) -> ContainerClass {
        let v = &self.vessels[k.vessel as usize];
        match k.dir {
            Dir::Discharge => v.discharge[k.item as usize],
            Dir::Load => v.load[k.item as usize],
        }
    }

    fn draw(&mut self, base: u64) -> u64 {
        match &mut self.rng {
            None => base,
            Some(rng) => rng
                .uniform_inclusive(base - base / 2, base + base / 2)
                .max(1),
        }
    }

    /// Yard-crane move time at `block`, where `others_teu` is what the block
    /// holds apart from the box being moved.
    fn yc_duration(&mut self, block: usize, others_teu: u64) -> u64 {
        let base = self.draw(self.setup.service.yc_cycle_s);
        let cap = self.yard[block].capacity_teu.max(1);
        let pct = self.setup.service.yc_fill_penalty_pct;
        base + base * pct * others_teu / (100 * cap)
    }

    fn place(&mut self, k: BoxKey, flow: Flow) -> Result<Result<u16, YardCategory>, SimError> {
        let class = self.class(k);
        match self.setup.policy.choose(class, flow, &self.yard) {
            Ok(b) => {
                let block = &self.yard[b];
                if block.category != admitted_category(class, flow)
                    || block.free_teu() < class.teu()
                {
                    return Err(SimError::PolicyViolation {
                        container: self.box_name(k),
                        block: block.name.clone(),
                    });
                }
                self.yard[b].occupancy_teu += class.teu();
                Ok(Ok(b as u16))
            }
            Err(allocation::AllocationError::YardFull(cat)) => Ok(Err(cat)),
        }
    }

    fn box_name(&self, k: BoxKey) -> String {
        let d = if k.dir == Dir::Discharge { 'd' } else { 'l' };
        format!("{}:{d}{}", self.setup.vessels[k.vessel as usize].id, k.item)
    }

    fn handle(&mut self, eng: &mut Eng, ev: &Event<Ev>) -> Result<Detail, SimError> {
        let body = ev.body;
        let v = body.vessel as usize;
        let k = body.key();
        let detail = match body.kind {
            EvKind::Arrive => {
                self.waiting.push_back(v);
                for i in 0..self.vessels[v].n_load() {
                    eng.schedule_in(
                        0,
                        Ev::boxed(
                            EvKind::Stage,
                            BoxKey {
                                vessel: v as u32,
                                dir: Dir::Load,
                                item: i,
                            },
                        ),
                    );
                }
                self.try_berth(eng);
                Detail::Arrive {
                    length_m: self.setup.vessels[v].length_m,
                }
            }
            EvKind::Stage => match self.place(k, Flow::Export)? {
                Ok(b) => {
                    self.vessels[v].l_block[k.item as usize] = b;
                    if self.vessels[v].load_started {
                        self.pump_load(eng, v);
                    }
                    Detail::Block {
                        block: b,
                        teu: self.class(k).teu() as u8,
                    }
                }
                Err(cat) => {
                    self.stage_buffer.push_back(k);
                    Detail::YardFull(cat)
                }
            },
            EvKind::Berth => {
                let (start_m, end_m) = self
                    .quay
                    .occupied()
                    .iter()
                    .find(|&&(_, _, key)| key == v)
                    .map(|&(s, e, _)| (s, e))
                    .expect("berthed vessel holds an interval");
                let qcs = self.vessels[v].qcs;
                let nd = self.vessels[v].n_discharge();
                for _ in 0..qcs.min(nd) {
                    self.start_lift(eng, v);
                }
                if nd == 0 {
                    self.begin_load(eng, v);
                }
                self.check_depart(eng, v);
                Detail::Berth {
                    start_m,
                    end_m,
                    qcs,
                }
            }
            EvKind::QcLift => {
                let dur = self.draw(self.setup.service.qc_cycle_s);
                eng.schedule_in(dur, Ev::boxed(EvKind::QcLiftDone, k));
                Detail::Class(self.class(k))
            }
            EvKind::QcLiftDone => match self.place(k, Flow::Import)? {
                Ok(b) => {
                    let vr = &mut self.vessels[v];
                    vr.d_block[k.item as usize] = b;
                    vr.d_held[k.item as usize] = true;
                    self.truck_queue.push_back(k);
                    self.dispatch_trucks(eng);
                    Detail::Block {
                        block: b,
                        teu: self.class(k).teu() as u8,
                    }
                }
                Err(cat) => {
                    self.quay_buffer.push_back(k);
                    self.qc_freed(eng, v);
                    Detail::YardFull(cat)
                }
            },
            EvKind::Place => match self.place(k, Flow::Import)? {
                Ok(b) => {
                    self.vessels[v].d_block[k.item as usize] = b;
                    self.truck_queue.push_back(k);
                    self.dispatch_trucks(eng);
                    Detail::Block {
                        block: b,
                        teu: self.class(k).teu() as u8,
                    }
                }
                Err(cat) => {
                    self.quay_buffer.push_back(k);
                    Detail::YardFull(cat)
                }
            },
            EvKind::TruckDepart => {
                let dur = self.draw(self.setup.service.truck_cycle_s);
                eng.schedule_in(dur, Ev::boxed(EvKind::TruckArrive, k));
                let teu = self.class(k).teu() as u8;
                match k.dir {
                    Dir::Discharge => {
                        let i = k.item as usize;
                        let block = self.vessels[v].d_block[i];
                        self.vessels[v].handed += 1;
                        if std::mem::take(&mut self.vessels[v].d_held[i]) {
                            self.qc_freed(eng, v);
                        }
                        if self.vessels[v].handed == self.vessels[v].n_discharge() {
                            self.begin_load(eng, v);
                        }
                        Detail::Block { block, teu }
                    }
                    Dir::Load => {
                        self.ycs_free += 1;
                        self.dispatch_ycs(eng);
                        Detail::Block {
                            block: self.vessels[v].l_block[k.item as usize],
                            teu,
                        }
                    }
                }
            }
            EvKind::TruckArrive => {
                self.trucks_free += 1;
                self.dispatch_trucks(eng);
                match k.dir {
                    Dir::Discharge => {
                        self.yc_queue.push_back(YcJob::Stack(k));
                        self.dispatch_ycs(eng);
                    }
                    Dir::Load => {
                        self.vessels[v].load_buffer.push_back(k.item);
                        self.start_loads(eng, v);
                    }
                }
                Detail::None
            }
            EvKind::YcBegin => {
                let b = self.vessels[v].d_block[k.item as usize];
                let teu = self.class(k).teu();
                let others = self.yard[b as usize].occupancy_teu - teu;
                let dur = self.yc_duration(b as usize, others);
                eng.schedule_in(dur, Ev::boxed(EvKind::YcStack, k));
                Detail::Block {
                    block: b,
                    teu: teu as u8,
                }
            }
            EvKind::YcStack => {
                let b = self.vessels[v].d_block[k.item as usize];
                self.vessels[v].stacked += 1;
                self.ycs_free += 1;
                self.dispatch_ycs(eng);
                self.check_depart(eng, v);
                Detail::Block {
                    block: b,
                    teu: self.class(k).teu() as u8,
                }
            }
            EvKind::YcRetrieve => {
                let b = self.vessels[v].l_block[k.item as usize];
                let teu = self.class(k).teu();
                let others = self.yard[b as usize].occupancy_teu - teu;
                let dur = self.yc_duration(b as usize, others);
                self.yard[b as usize].occupancy_teu -= teu;
                eng.schedule_in(dur, Ev::boxed(EvKind::YcRetrieveDone, k));
                self.retry_buffers(eng, self.yard[b as usize].category);
                Detail::Block {
                    block: b,
                    teu: teu as u8,
                }
            }
            EvKind::YcRetrieveDone => {
                self.truck_queue.push_back(k);
                self.dispatch_trucks(eng);
                Detail::None
            }
            EvKind::QcLoadBegin => {
                let dur = self.draw(self.setup.service.qc_cycle_s);
                eng.schedule_in(dur, Ev::boxed(EvKind::QcLoad, k));
                Detail::Class(self.class(k))
            }
            EvKind::QcLoad => {
                let vr = &mut self.vessels[v];
                vr.loaded += 1;
                vr.outstanding -= 1;
                vr.qcs_idle += 1;
                self.start_loads(eng, v);
                self.pump_load(eng, v);
                self.check_depart(eng, v);
                Detail::Class(self.class(k))
            }
            EvKind::Depart => {
                let vr = &mut self.vessels[v];
                vr.departed = true;
                self.quay.release(v, vr.qcs);
                self.unfinished -= 1;
                self.try_berth(eng);
                Detail::None
            }
        };
        Ok(detail)
    }

    fn try_berth(&mut self, eng: &mut Eng) {
        if self.waiting.is_empty() {
            return;
        }
        let vessels = &self.setup.vessels;
        let queue: Vec<_> = self.waiting.iter().map(|&i| (i, &vessels[i])).collect();
        let plans = allocation::fcfs_berth(&queue, &mut self.quay, eng.clock());
        for plan in plans {
            let front = self.waiting.pop_front();
            debug_assert_eq!(front, Some(plan.vessel));
            let vr = &mut self.vessels[plan.vessel];
            vr.berthed = true;
            vr.qcs = plan.qcs;
            vr.qcs_idle = plan.qcs;
            let s = &self.setup.service;
            let pipeline = s.yc_cycle_s + s.truck_cycle_s + s.qc_cycle_s;
            vr.window = plan.qcs * pipeline.div_ceil(s.qc_cycle_s.max(1)) as u32;
            eng.schedule_in(0, Ev::vessel(EvKind::Berth, plan.vessel));
        }
    }

    fn start_lift(&mut self, eng: &mut Eng, v: usize) {
        let vr = &mut self.vessels[v];
        let item = vr.next_lift;
        vr.next_lift += 1;
        vr.qcs_idle -= 1;
        let key = BoxKey {
            vessel: v as u32,
            dir: Dir::Discharge,
            item,
        };
        eng.schedule_in(0, Ev::boxed(EvKind::QcLift, key));
    }

    fn qc_freed(&mut self, eng: &mut Eng, v: usize) {
        let vr = &mut self.vessels[v];
        vr.qcs_idle += 1;
        if vr.next_lift < vr.n_discharge() {
            self.start_lift(eng, v);
        }
    }

    fn begin_load(&mut self, eng: &mut Eng, v: usize) {
        self.vessels[v].load_started = true;
        if self.vessels[v].n_load() == 0 {
            self.check_depart(eng, v);
        } else {
            self.pump_load(eng, v);
        }
    }

    /// Issues retrieve requests for staged boxes, in manifest order, up to the window.
    fn pump_load(&mut self, eng: &mut Eng, v: usize) {
        let vr = &mut self.vessels[v];
        let mut issued = false;
        while vr.outstanding < vr.window
            && vr.next_request < vr.n_load()
            && vr.l_block[vr.next_request as usize] != NO_BLOCK
        {
            let key = BoxKey {
                vessel: v as u32,
                dir: Dir::Load,
                item: vr.next_request,
            };
            self.yc_queue.push_back(YcJob::Retrieve(key));
            vr.next_request += 1;
            vr.outstanding += 1;
            issued = true;
        }
        if issued {
            self.dispatch_ycs(eng);
        }
    }

    fn start_loads(&mut self, eng: &mut Eng, v: usize) {
        while self.vessels[v].qcs_idle > 0 {
            let Some(item) = self.vessels[v].load_buffer.pop_front() else {
                break;
            };
            self.vessels[v].qcs_idle -= 1;
            let key = BoxKey {
                vessel: v as u32,
                dir: Dir::Load,
                item,
            };
            eng.schedule_in(0, Ev::boxed(EvKind::QcLoadBegin, key));
        }
    }

    fn dispatch_trucks(&mut self, eng: &mut Eng) {
        while self.trucks_free > 0 {
            let Some(k) = self.truck_queue.pop_front() else {
                break;
            };
            self.trucks_free -= 1;
            eng.schedule_in(0, Ev::boxed(EvKind::TruckDepart, k));
        }
    }

    fn dispatch_ycs(&mut self, eng: &mut Eng) {
        while self.ycs_free > 0 {
            let Some(job) = self.yc_queue.pop_front() else {
                break;
            };
            self.ycs_free -= 1;
            let ev = match job {
                YcJob::Stack(k) => Ev::boxed(EvKind::YcBegin, k),
                YcJob::Retrieve(k) => Ev::boxed(EvKind::YcRetrieve, k),
            };
            eng.schedule_in(0, ev);
        }
    }

    /// Re-attempts placement of waiting boxes that could use the freed category.
    fn retry_buffers(&mut self, eng: &mut Eng, freed: YardCategory) {
        for (buffer, kind, flow) in [
            (&mut self.stage_buffer, EvKind::Stage, Flow::Export),
            (&mut self.quay_buffer, EvKind::Place, Flow::Import),
        ] {
            let mut keep = VecDeque::new();
            while let Some(k) = buffer.pop_front() {
                let v = &self.vessels[k.vessel as usize];
                let class = match k.dir {
                    Dir::Discharge => v.discharge[k.item as usize],
                    Dir::Load => v.load[k.item as usize],
                };
                if admitted_category(class, flow) == freed {
                    eng.schedule_in(0, Ev::boxed(kind, k));
                } else {
                    keep.push_back(k);
                }
            }
            *buffer = keep;
        }
    }

    fn check_depart(&mut self, eng: &mut Eng, v: usize) {
        let vr = &mut self.vessels[v];
        if vr.berthed
            && !vr.depart_scheduled
            && vr.load_started
            && vr.stacked == vr.n_discharge()
            && vr.loaded == vr.n_load()
        {
            vr.depart_scheduled = true;
            eng.schedule_in(0, Ev::vessel(EvKind::Depart, v));
        }
    }

    fn starvation(&self) -> Vec<String> {
        let mut starved = Vec::new();
        let mut cats: Vec<(YardCategory, usize, String)> = Vec::new();
        for (buffer, flow) in [
            (&self.quay_buffer, Flow::Import),
            (&self.stage_buffer, Flow::Export),
        ] {
            for &k in buffer {
                let cat = admitted_category(self.class(k), flow);
                match cats.iter_mut().find(|(c, _, _)| *c == cat) {
                    Some(entry) => entry.1 += 1,
                    None => cats.push((cat, 1, self.box_name(k))),
                }
            }
        }
        cats.sort_by_key(|(c, _, _)| *c);
        for (cat, n, first) in cats {
            let have = self.yard.iter().any(|b| b.category == cat);
            let why = if have {
                "blocks full"
            } else {
                "no block of this category"
            };
            starved.push(format!(
                "{cat} category ({why}; {n} box(es) waiting, first {first})"
            ));
        }
        if !self.truck_queue.is_empty() {
            starved.push(format!(
                "trucks ({} box(es) waiting)",
                self.truck_queue.len()
            ));
        }
        if !self.yc_queue.is_empty() {
            starved.push(format!(
                "yard cranes ({} job(s) waiting)",
                self.yc_queue.len()
            ));
        }
        if let Some(&head) = self.waiting.front() {
            let v = &self.setup.vessels[head];
            let reason = if self.setup.equipment.quay_cranes == 0 {
                "quay cranes (pool is empty)".to_string()
            } else {
                format!(
                    "quay (vessel {} needs {} m of {} m)",
                    v.id,
                    v.length_m + self.quay.clearance_m,
                    self.quay.length_m
                )
            };
            starved.push(reason);
        }
        starved
    }

    fn unfinished_ids(&self) -> Vec<String> {
        self.vessels
            .iter()
            .zip(&self.setup.vessels)
            .filter(|(rt, _)| !rt.departed)
            .map(|(_, v)| v.id.clone())
            .collect()
    }
}

/// Runs one scenario to the horizon.
///
/// Fails if any vessel has not departed by then: `Deadlock` when no event
/// is left that could make progress, `HorizonExceeded` otherwise.
pub fn simulate(setup: &SimSetup) -> Result<SimOutcome, SimError> {
    let start = setup
        .vessels
        .iter()
        .map(|v| v.arrival)
        .min()
        .unwrap_or(setup.horizon)
        .min(setup.horizon);
    let mut eng = Engine::new(start);
    let mut order: Vec<usize> = (0..setup.vessels.len()).collect();
    order.sort_by(|&a, &b| {
        let (va, vb) = (&setup.vessels[a], &setup.vessels[b]);
        va.arrival
            .cmp(&vb.arrival)
            .then_with(|| id_order(&va.id, &vb.id))
    });
    for i in order {
        eng.schedule(setup.vessels[i].arrival, Ev::vessel(EvKind::Arrive, i))
            .map_err(|e| SimError::Setup(e.to_string()))?;
    }

    let mut term = Terminal::new(setup);
    let log = match eng.run_until(setup.horizon, |eng, ev| term.handle(eng, ev)) {
        Ok(log) => log,
        Err(RunError::Handler { source, .. }) => return Err(source),
        Err(e @ RunError::EndInPast { .. }) => return Err(SimError::Setup(e.to_string())),
    };

    if term.unfinished > 0 {
        let unfinished = term.unfinished_ids();
        return Err(if eng.pending() == 0 {
            SimError::Deadlock {
                unfinished,
                starved: term.starvation(),
            }
        } else {
            SimError::HorizonExceeded {
                horizon: setup.horizon,
                unfinished,
            }
        });
    }

    Ok(SimOutcome {
        log,
        start,
        horizon: setup.horizon,
        vessel_ids: setup.vessels.iter().map(|v| v.id.clone()).collect(),
        block_names: term.yard.iter().map(|b| b.name.clone()).collect(),
    })
}

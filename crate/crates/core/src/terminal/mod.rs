//! Terminal domain model: container classes, manifests, vessels, yard blocks,
//! equipment and service times. The event-driven lifecycle lives in [`sim`].

mod sim;

use std::fmt;
use std::str::FromStr;

use crate::des::SimTime;

pub use sim::{
    simulate, Detail, Dir, Ev, EvKind, Mode, SimError, SimOutcome, SimSetup, TerminalLog,
};

/// Size in TEU terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Size {
    S20,
    S40,
}

impl Size {
    pub const fn teu(self) -> u64 {
        match self {
            Size::S20 => 1,
            Size::S40 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cargo {
    Full,
    Hazardous,
    Reefer,
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContainerClass {
    pub size: Size,
    pub cargo: Cargo,
}

impl ContainerClass {
    /// The eight classes in manifest column order: cargo-major, 20 ft before 40 ft.
    pub const ALL: [ContainerClass; 8] = [
        ContainerClass::new(Size::S20, Cargo::Full),
        ContainerClass::new(Size::S40, Cargo::Full),
        ContainerClass::new(Size::S20, Cargo::Hazardous),
        ContainerClass::new(Size::S40, Cargo::Hazardous),
        ContainerClass::new(Size::S20, Cargo::Reefer),
        ContainerClass::new(Size::S40, Cargo::Reefer),
        ContainerClass::new(Size::S20, Cargo::Empty),
        ContainerClass::new(Size::S40, Cargo::Empty),
    ];

    pub const fn new(size: Size, cargo: Cargo) -> Self {
        Self { size, cargo }
    }

    pub const fn teu(self) -> u64 {
        self.size.teu()
    }

    pub fn index(self) -> usize {
        let cargo = match self.cargo {
            Cargo::Full => 0,
            Cargo::Hazardous => 1,
            Cargo::Reefer => 2,
            Cargo::Empty => 3,
        };
        cargo * 2 + usize::from(self.size == Size::S40)
    }

    /// Short tag used in file columns and log details (`full20`, `reefer40`, ...).
    pub fn tag(self) -> &'static str {
        [
            "full20", "full40", "haz20", "haz40", "reefer20", "reefer40", "empty20", "empty40",
        ][self.index()]
    }
}

impl fmt::Display for ContainerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Box counts per container class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Manifest {
    counts: [u32; 8],
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts in [`ContainerClass::ALL`] order.
    pub fn from_counts(counts: [u32; 8]) -> Self {
        Self { counts }
    }

    pub fn with(mut self, class: ContainerClass, n: u32) -> Self {
        self.counts[class.index()] = n;
        self
    }

    pub fn counts(&self) -> &[u32; 8] {
        &self.counts
    }

    pub fn count(&self, class: ContainerClass) -> u32 {
        self.counts[class.index()]
    }

    pub fn boxes(&self) -> u64 {
        self.counts.iter().map(|&n| u64::from(n)).sum()
    }

    pub fn twenties(&self) -> u64 {
        self.size_total(Size::S20)
    }

    pub fn forties(&self) -> u64 {
        self.size_total(Size::S40)
    }

    fn size_total(&self, size: Size) -> u64 {
        ContainerClass::ALL
            .iter()
            .filter(|c| c.size == size)
            .map(|&c| u64::from(self.count(c)))
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes() == 0
    }

    /// One class per box, in class order.
    pub fn expand(&self) -> Vec<ContainerClass> {
        ContainerClass::ALL
            .iter()
            .flat_map(|&c| std::iter::repeat_n(c, self.count(c) as usize))
            .collect()
    }
}

/// TEU of a manifest: each 20 ft box counts 1, each 40 ft box counts 2.
pub fn teu(m: &Manifest) -> u64 {
    ContainerClass::ALL
        .iter()
        .map(|&c| u64::from(m.count(c)) * c.teu())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vessel {
    pub id: String,
    pub length_m: u32,
    pub arrival: SimTime,
    pub discharge: Manifest,
    pub load: Manifest,
    pub actual_start: SimTime,
    pub actual_end: SimTime,
}

impl Vessel {
    /// Recorded operation time, whole minutes between the start and end stamps.
    pub fn actual_minutes(&self) -> u64 {
        self.actual_end.since(self.actual_start) / 60
    }
}

/// Orders vessel ids naturally: numeric ids by value, before any non-numeric id.
pub fn id_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum YardCategory {
    Export,
    Import,
    Hazardous,
    Reefer,
    Empty,
}

impl YardCategory {
    pub const ALL: [YardCategory; 5] = [
        YardCategory::Export,
        YardCategory::Import,
        YardCategory::Hazardous,
        YardCategory::Reefer,
        YardCategory::Empty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            YardCategory::Export => "Export",
            YardCategory::Import => "Import",
            YardCategory::Hazardous => "Hazardous",
            YardCategory::Reefer => "Reefer",
            YardCategory::Empty => "Empty",
        }
    }
}

impl fmt::Display for YardCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for YardCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        YardCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown yard category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YardBlock {
    pub name: String,
    pub category: YardCategory,
    pub capacity_teu: u64,
    /// Committed TEU: boxes stored plus boxes already assigned and inbound.
    pub occupancy_teu: u64,
}

impl YardBlock {
    pub fn new(name: impl Into<String>, category: YardCategory, capacity_teu: u64) -> Self {
        Self {
            name: name.into(),
            category,
            capacity_teu,
            occupancy_teu: 0,
        }
    }

    pub fn free_teu(&self) -> u64 {
        self.capacity_teu.saturating_sub(self.occupancy_teu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquipmentPool {
    pub quay_cranes: u32,
    pub yard_cranes: u32,
    pub trucks: u32,
    pub quay_length_m: u32,
}

impl Default for EquipmentPool {
    fn default() -> Self {
        Self {
            quay_cranes: 5,
            yard_cranes: 8,
            trucks: 25,
            quay_length_m: 530,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ServiceTimes {
    pub qc_cycle_s: u64,
    pub truck_cycle_s: u64,
    pub yc_cycle_s: u64,
    pub berth_clearance_m: u32,
    /// Extra yard-crane time at a completely full block, in percent of `yc_cycle_s`.
    pub yc_fill_penalty_pct: u64,
}

impl Default for ServiceTimes {
    fn default() -> Self {
        Self {
            qc_cycle_s: 120,
            truck_cycle_s: 300,
            yc_cycle_s: 90,
            berth_clearance_m: 15,
            yc_fill_penalty_pct: 100,
        }
    }
}

impl ServiceTimes {
    pub fn all_positive(&self) -> bool {
        self.qc_cycle_s > 0
            && self.truck_cycle_s > 0
            && self.yc_cycle_s > 0
            && self.berth_clearance_m > 0
    }
}

/// Quay cranes granted to a vessel: one per 90 m of hull, at least one,
/// never more than are free.
pub fn assign_qcs(v: &Vessel, available: u32) -> u32 {
    available.min((v.length_m / 90).max(1))
}

//! Berth and yard-block allocation policies.
//!
//! Berths are granted first-come-first-served on a continuous quay at the
//! lowest offset that fits. Yard blocks are chosen by a named
//! [`BlockPolicy`]; policies are pure functions of a yard snapshot.

use thiserror::Error;

use crate::des::SimTime;
use crate::metrics::{self, KpiReport};
use crate::scenario::ScenarioBundle;
use crate::terminal::{self, Cargo, ContainerClass, SimError, Vessel, YardBlock, YardCategory};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BerthPlan {
    /// Caller's key for the vessel (its index in the scenario list).
    pub vessel: usize,
    pub start_m: u32,
    pub end_m: u32,
    pub berth_time: SimTime,
    pub qcs: u32,
}

/// Quay occupancy and free quay cranes at one instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuayState {
    pub length_m: u32,
    pub clearance_m: u32,
    pub free_qcs: u32,
    /// `(start_m, end_m, vessel)` half-open intervals of berthed vessels.
    occupied: Vec<(u32, u32, usize)>,
}

impl QuayState {
    pub fn new(length_m: u32, clearance_m: u32, qcs: u32) -> Self {
        Self {
            length_m,
            clearance_m,
            free_qcs: qcs,
            occupied: Vec::new(),
        }
    }

    pub fn occupied(&self) -> &[(u32, u32, usize)] {
        &self.occupied
    }

    /// Lowest offset where `need` metres fit, if any.
    pub fn lowest_fit(&self, need: u32) -> Option<u32> {
        let mut candidate = 0u32;
        for &(start, end, _) in &self.occupied {
            if candidate.checked_add(need)? <= start {
                break;
            }
            candidate = candidate.max(end);
        }
        (u64::from(candidate) + u64::from(need) <= u64::from(self.length_m)).then_some(candidate)
    }

    fn insert(&mut self, start: u32, end: u32, vessel: usize) {
        let pos = self.occupied.partition_point(|&(s, _, _)| s < start);
        self.occupied.insert(pos, (start, end, vessel));
    }

    /// Frees the vessel's interval and returns its cranes to the pool.
    pub fn release(&mut self, vessel: usize, qcs: u32) {
        self.occupied.retain(|&(_, _, v)| v != vessel);
        self.free_qcs += qcs;
    }
}

/// Grants berths in queue order until the head of the queue cannot berth.
///
/// `waiting` must be sorted by arrival (ties by id). A vessel berths when
/// `length_m + clearance` fits contiguously and at least one quay crane is
/// free. Granted plans are committed to `quay`; the caller drops the first
/// `plans.len()` entries from its queue.
pub fn fcfs_berth(
    waiting: &[(usize, &Vessel)],
    quay: &mut QuayState,
    now: SimTime,
) -> Vec<BerthPlan> {
    let mut plans = Vec::new();
    for &(key, vessel) in waiting {
        let qcs = terminal::assign_qcs(vessel, quay.free_qcs);
        if qcs == 0 {
            break;
        }
        let need = vessel.length_m + quay.clearance_m;
        let Some(start) = quay.lowest_fit(need) else {
            break;
        };
        quay.insert(start, start + need, key);
        quay.free_qcs -= qcs;
        plans.push(BerthPlan {
            vessel: key,
            start_m: start,
            end_m: start + need,
            berth_time: now,
            qcs,
        });
    }
    plans
}

/// Why a box enters the yard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flow {
    /// Discharged from a vessel.
    Import,
    /// Pre-staged for loading onto a vessel.
    Export,
}

/// The only yard category a box may be stored in.
pub fn admitted_category(class: ContainerClass, flow: Flow) -> YardCategory {
    match flow {
        Flow::Export => YardCategory::Export,
        Flow::Import => match class.cargo {
            Cargo::Full => YardCategory::Import,
            Cargo::Hazardous => YardCategory::Hazardous,
            Cargo::Reefer => YardCategory::Reefer,
            Cargo::Empty => YardCategory::Empty,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocationError {
    #[error("no {0} block has room")]
    YardFull(YardCategory),
}

/// A yard-block selection rule.
pub trait BlockPolicy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Index into `yard` of the chosen block. Must only return an admissible
    /// block whose free capacity covers the box.
    fn choose(
        &self,
        class: ContainerClass,
        flow: Flow,
        yard: &[YardBlock],
    ) -> Result<usize, AllocationError>;
}

fn feasible(
    class: ContainerClass,
    flow: Flow,
    yard: &[YardBlock],
) -> impl Iterator<Item = (usize, &YardBlock)> {
    let category = admitted_category(class, flow);
    yard.iter()
        .enumerate()
        .filter(move |(_, b)| b.category == category && b.free_teu() >= class.teu())
}

/// Occupancy-ratio comparison without division.
fn ratio_cmp(a: &YardBlock, b: &YardBlock) -> std::cmp::Ordering {
    (u128::from(a.occupancy_teu) * u128::from(b.capacity_teu))
        .cmp(&(u128::from(b.occupancy_teu) * u128::from(a.capacity_teu)))
}

/// Emptiest admissible block by occupancy ratio; ties to the smallest name.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeastOccupancy;

impl BlockPolicy for LeastOccupancy {
    fn name(&self) -> &'static str {
        "baseline-least-occupancy"
    }

    fn choose(
        &self,
        class: ContainerClass,
        flow: Flow,
        yard: &[YardBlock],
    ) -> Result<usize, AllocationError> {
        feasible(class, flow, yard)
            .min_by(|(_, a), (_, b)| ratio_cmp(a, b).then_with(|| a.name.cmp(&b.name)))
            .map(|(i, _)| i)
            .ok_or(AllocationError::YardFull(admitted_category(class, flow)))
    }
}

/// Fullest admissible block that still fits; ties to the largest name.
/// Exists to bound the comparison from the bad side.
#[derive(Debug, Clone, Copy, Default)]
pub struct WorstFit;

impl BlockPolicy for WorstFit {
    fn name(&self) -> &'static str {
        "worst-fit-adversarial"
    }

    fn choose(
        &self,
        class: ContainerClass,
        flow: Flow,
        yard: &[YardBlock],
    ) -> Result<usize, AllocationError> {
        feasible(class, flow, yard)
            .max_by(|(_, a), (_, b)| ratio_cmp(a, b).then_with(|| a.name.cmp(&b.name)))
            .map(|(i, _)| i)
            .ok_or(AllocationError::YardFull(admitted_category(class, flow)))
    }
}

static POLICIES: [&dyn BlockPolicy; 2] = [&LeastOccupancy, &WorstFit];

pub const DEFAULT_POLICY: &str = "baseline-least-occupancy";

pub fn registered_policies() -> Vec<&'static str> {
    POLICIES.iter().map(|p| p.name()).collect()
}

pub fn policy_by_name(name: &str) -> Option<&'static dyn BlockPolicy> {
    POLICIES.iter().copied().find(|p| p.name() == name)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerRef {
    pub id: String,
    pub class: ContainerClass,
    pub flow: Flow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementDecision {
    pub container: String,
    pub block: String,
    pub time: SimTime,
}

/// Asks `policy` for a block. Does not modify the yard.
pub fn assign_block(
    policy: &dyn BlockPolicy,
    container: &ContainerRef,
    yard: &[YardBlock],
    time: SimTime,
) -> Result<PlacementDecision, AllocationError> {
    let i = policy.choose(container.class, container.flow, yard)?;
    Ok(PlacementDecision {
        container: container.id.clone(),
        block: yard[i].name.clone(),
        time,
    })
}

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("unknown policy {name:?}; registered: {}", .registered.join(", "))]
    UnknownPolicy {
        name: String,
        registered: Vec<&'static str>,
    },
    #[error("at least one policy is required")]
    NoPolicies,
    #[error("policy {policy}: {source}")]
    Simulation {
        policy: String,
        #[source]
        source: SimError,
    },
}

#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub policy: &'static str,
    pub report: KpiReport,
}

/// Runs the scenario once per policy with the bundle's seed and parameters.
/// Runs are independent and may execute in parallel; output keeps input order.
pub fn policy_compare(
    bundle: &ScenarioBundle,
    policies: &[&str],
) -> Result<Vec<PolicyRun>, CompareError> {
    if policies.is_empty() {
        return Err(CompareError::NoPolicies);
    }
    let resolved = policies
        .iter()
        .map(|&name| {
            policy_by_name(name).ok_or_else(|| CompareError::UnknownPolicy {
                name: name.to_string(),
                registered: registered_policies(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let runs: Vec<Result<PolicyRun, CompareError>> =
        par_map!(resolved, |policy: &&dyn BlockPolicy| {
            let setup = bundle.setup_with_policy(*policy);
            terminal::simulate(&setup)
                .map(|out| PolicyRun {
                    policy: policy.name(),
                    report: metrics::kpi_report(bundle, &out),
                })
                .map_err(|source| CompareError::Simulation {
                    policy: policy.name().to_string(),
                    source,
                })
        });
    runs.into_iter().collect()
}

//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line, captured or not.

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use quayline::allocation::{
    policy_by_name, policy_compare, BlockPolicy, Flow, LeastOccupancy, WorstFit,
};
use quayline::des::{RngState, SimTime};
use quayline::metrics::{self, audit, Calibration, Minutes, Target};
use quayline::scenario::{
    self, Config, Lattice, ScenarioBundle, ShipFile, ShipRecord, ShipTotals, YardFile,
};
use quayline::terminal::{
    simulate, teu, Cargo, ContainerClass, EquipmentPool, Manifest, Mode, ServiceTimes, SimSetup,
    Size, Vessel, YardBlock, YardCategory,
};
use quayline::Exec;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/alexandria")
}

fn alexandria() -> ScenarioBundle {
    scenario::load_scenario(&fixture_dir()).expect("bundled scenario loads")
}

const ACTUAL: [u64; 12] = [
    960, 420, 600, 584, 1350, 1125, 569, 1215, 810, 150, 945, 2625,
];

fn fixture_integrity() -> Outcome {
    let t = Instant::now();
    let b = alexandria();
    let y = &b.yards;
    ensure!(y.grand_total() == 15666, "yard total {}", y.grand_total());
    ensure!(y.total == Some(15666), "declared yard total {:?}", y.total);
    let subtotals = [
        (YardCategory::Export, 2580),
        (YardCategory::Import, 8980),
        (YardCategory::Hazardous, 486),
        (YardCategory::Reefer, 500),
        (YardCategory::Empty, 3120),
    ];
    for (cat, want) in subtotals {
        ensure!(
            y.category_total(cat) == want,
            "{cat} subtotal {} != {want}",
            y.category_total(cat)
        );
    }
    ensure!(
        b.ships.total_teu() == 9531,
        "ship TEU {}",
        b.ships.total_teu()
    );
    let actual: Vec<u64> = b
        .ships
        .ships
        .iter()
        .map(|s| s.vessel.actual_minutes())
        .collect();
    ensure!(actual == ACTUAL, "actual minutes {actual:?}");
    ensure!(
        b.ships.total_actual_min() == 11353,
        "actual total {}",
        b.ships.total_actual_min()
    );
    let elapsed = t.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!(
        "15666 TEU yard, 9531 TEU ships, 11353 min in {elapsed:?}"
    ))
}

fn teu_oracle() -> Outcome {
    let b = alexandria();
    for s in &b.ships.ships {
        for (m, declared) in [
            (&s.vessel.discharge, s.d_teu_declared),
            (&s.vessel.load, s.l_teu_declared),
        ] {
            let n20 = m.twenties();
            let n40 = m.forties();
            ensure!(
                n20 + 2 * n40 == declared,
                "ship {}: {n20} + 2*{n40} != {declared}",
                s.vessel.id
            );
        }
    }
    let mut rng = RngState::new(0x7e0);
    for case in 0..10_000 {
        let mut counts = [0u32; 8];
        for c in &mut counts {
            *c = rng.uniform_inclusive(0, 1_000_000) as u32;
        }
        // Columns alternate 20 ft, 40 ft.
        let oracle: u64 = counts
            .iter()
            .enumerate()
            .map(|(i, &n)| u64::from(n) * if i % 2 == 0 { 1 } else { 2 })
            .sum();
        let got = teu(&Manifest::from_counts(counts));
        ensure!(
            got == oracle,
            "case {case}: {counts:?} gave {got}, oracle {oracle}"
        );
    }
    Ok("24 row halves and 10000 random manifests agree".into())
}

fn determinism() -> Outcome {
    let mut b = alexandria();
    let mut report = String::new();
    for (mode, seed) in [(Mode::Deterministic, 1), (Mode::Stochastic, 7)] {
        b.config.mode = mode;
        b.config.seed = seed;
        let setup = b.setup().ok_or("policy not registered")?;
        let t = Instant::now();
        let first = simulate(&setup).map_err(|e| e.to_string())?;
        let elapsed = t.elapsed();
        let second = simulate(&setup).map_err(|e| e.to_string())?;
        ensure!(
            elapsed < Duration::from_secs(5),
            "{mode} run took {elapsed:?}"
        );
        ensure!(
            first.canonical_log() == second.canonical_log(),
            "{mode} logs differ"
        );
        let (k1, k2) = (
            metrics::kpi_report(&b, &first).to_csv(),
            metrics::kpi_report(&b, &second).to_csv(),
        );
        ensure!(k1 == k2, "{mode} kpi.csv differs");
        report += &format!(
            "{mode} seed {seed}: {} events in {elapsed:?}; ",
            first.log.len()
        );
    }
    Ok(report.trim_end_matches("; ").to_string())
}

fn small_scenario(rng: &mut RngState) -> SimSetup {
    let r = |rng: &mut RngState, lo: u64, hi: u64| rng.uniform_inclusive(lo, hi);
    let n_ships = r(rng, 1, 5) as usize;
    let mut vessels = Vec::new();
    for i in 0..n_ships {
        let mut counts = [[0u32; 8]; 2];
        for side in &mut counts {
            for c in side.iter_mut() {
                if r(rng, 0, 2) == 0 {
                    *c = r(rng, 0, 4) as u32;
                }
            }
        }
        let arrival = SimTime::from_secs(r(rng, 0, 20_000));
        vessels.push(Vessel {
            id: (i + 1).to_string(),
            length_m: r(rng, 40, 250) as u32,
            arrival,
            discharge: Manifest::from_counts(counts[0]),
            load: Manifest::from_counts(counts[1]),
            actual_start: arrival,
            actual_end: arrival.add_secs(3600),
        });
    }

    // One block per needed category, extra blocks up to six, and room for
    // every box plus one TEU of fragmentation per block.
    let mut need = [0u64; 5];
    for v in &vessels {
        for (m, flow) in [(&v.discharge, Flow::Import), (&v.load, Flow::Export)] {
            for class in ContainerClass::ALL {
                let cat = quayline::allocation::admitted_category(class, flow);
                need[cat as usize] += u64::from(m.count(class)) * class.teu();
            }
        }
    }
    let mut cats: Vec<YardCategory> = YardCategory::ALL
        .into_iter()
        .filter(|&c| need[c as usize] > 0)
        .collect();
    if cats.is_empty() {
        cats.push(YardCategory::Import);
    }
    while cats.len() < 6 && r(rng, 0, 1) == 0 {
        cats.push(YardCategory::ALL[r(rng, 0, 4) as usize]);
    }
    let mut yard: Vec<YardBlock> = Vec::new();
    for cat in YardCategory::ALL {
        let blocks = cats.iter().filter(|&&c| c == cat).count() as u64;
        if blocks == 0 {
            continue;
        }
        let total = need[cat as usize] + 2 * blocks + r(rng, 0, 6);
        let mut left = total;
        for j in 0..blocks {
            let cap = if j + 1 == blocks {
                left
            } else {
                r(rng, 2, left - 2 * (blocks - j - 1))
            };
            left -= cap;
            yard.push(YardBlock::new(format!("{cat}{j}"), cat, cap));
        }
    }

    let longest = vessels.iter().map(|v| v.length_m).max().unwrap_or(0);
    let policy = if r(rng, 0, 1) == 0 {
        "baseline-least-occupancy"
    } else {
        "worst-fit-adversarial"
    };
    SimSetup {
        vessels,
        yard,
        equipment: EquipmentPool {
            quay_cranes: r(rng, 1, 4) as u32,
            yard_cranes: r(rng, 1, 3) as u32,
            trucks: r(rng, 1, 4) as u32,
            quay_length_m: longest + 15 + r(rng, 0, 300) as u32,
        },
        service: ServiceTimes {
            qc_cycle_s: r(rng, 20, 200),
            truck_cycle_s: r(rng, 20, 400),
            yc_cycle_s: r(rng, 20, 200),
            berth_clearance_m: 15,
            yc_fill_penalty_pct: r(rng, 0, 200),
        },
        policy: policy_by_name(policy).unwrap(),
        mode: if r(rng, 0, 1) == 0 {
            Mode::Deterministic
        } else {
            Mode::Stochastic
        },
        seed: rng.next_u64(),
        horizon: SimTime::from_secs(60 * 86_400),
    }
}

fn conservation_and_capacity() -> Outcome {
    let mut rng = RngState::new(2024);
    let mut events = 0;
    for case in 0..100 {
        let setup = small_scenario(&mut rng);
        ensure!(
            setup.vessels.len() <= 5 && setup.yard.len() <= 6,
            "case {case} out of bounds"
        );
        let out = simulate(&setup).map_err(|e| format!("case {case}: {e}"))?;
        let report = audit::audit_log(&setup, &out.canonical_log());
        ensure!(
            report.is_clean(),
            "case {case}: {} violation(s), first: {}",
            report.violations.len(),
            report.violations[0]
        );
        events += report.events;
    }
    Ok(format!(
        "100 scenarios, {events} events replayed, 0 violations"
    ))
}

fn oracle_category(class: ContainerClass, flow: Flow) -> YardCategory {
    if flow == Flow::Export {
        return YardCategory::Export;
    }
    match class.cargo {
        Cargo::Full => YardCategory::Import,
        Cargo::Hazardous => YardCategory::Hazardous,
        Cargo::Reefer => YardCategory::Reefer,
        Cargo::Empty => YardCategory::Empty,
    }
}

/// Exhaustive scan with floating-point ratios.
fn oracle_choice(
    yard: &[YardBlock],
    class: ContainerClass,
    flow: Flow,
    worst: bool,
) -> Option<usize> {
    let want = oracle_category(class, flow);
    let mut best: Option<(usize, f64)> = None;
    for (i, b) in yard.iter().enumerate() {
        if b.category != want || b.capacity_teu - b.occupancy_teu < class.teu() {
            continue;
        }
        let ratio = b.occupancy_teu as f64 / b.capacity_teu as f64;
        let better = match best {
            None => true,
            Some((j, r)) => {
                if worst {
                    ratio > r || (ratio == r && b.name > yard[j].name)
                } else {
                    ratio < r || (ratio == r && b.name < yard[j].name)
                }
            }
        };
        if better {
            best = Some((i, ratio));
        }
    }
    best.map(|(i, _)| i)
}

fn occupancies(caps: &[u64], budget: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
    if prefix.len() == caps.len() {
        out.push(prefix.clone());
        return;
    }
    for o in 0..=caps[prefix.len()].min(budget) {
        prefix.push(o);
        occupancies(caps, budget - o, prefix, out);
        prefix.pop();
    }
}

fn allocation_oracle() -> Outcome {
    const NAMES: [&str; 4] = ["c", "a", "d", "b"];
    const CAPS: [u64; 4] = [10, 7, 9, 8];
    let mut checked = 0u64;
    for n in 1..=4 {
        let mut occ_states = Vec::new();
        occupancies(&CAPS[..n], 10, &mut Vec::new(), &mut occ_states);
        for code in 0..5usize.pow(n as u32) {
            let cats: Vec<YardCategory> = (0..n)
                .map(|i| YardCategory::ALL[code / 5usize.pow(i as u32) % 5])
                .collect();
            for occ in &occ_states {
                let yard: Vec<YardBlock> = (0..n)
                    .map(|i| YardBlock {
                        occupancy_teu: occ[i],
                        ..YardBlock::new(NAMES[i], cats[i], CAPS[i])
                    })
                    .collect();
                for class in ContainerClass::ALL {
                    for flow in [Flow::Import, Flow::Export] {
                        let pairs: [(&dyn BlockPolicy, bool); 2] =
                            [(&LeastOccupancy, false), (&WorstFit, true)];
                        for (policy, worst) in pairs {
                            let got = policy.choose(class, flow, &yard).ok();
                            let want = oracle_choice(&yard, class, flow, worst);
                            ensure!(
                                got == want,
                                "{}: {class} {flow:?} on {yard:?}: got {got:?}, oracle {want:?}",
                                policy.name()
                            );
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!(
        "{checked} decisions agree with the exhaustive scan"
    ))
}

struct AlexandriaFit {
    fit: Calibration,
    elapsed: Duration,
    kpi_csv: String,
}

fn alexandria_fit() -> &'static Result<AlexandriaFit, String> {
    static FIT: OnceLock<Result<AlexandriaFit, String>> = OnceLock::new();
    FIT.get_or_init(|| {
        let mut b = alexandria();
        let t = Instant::now();
        let fit = metrics::calibrate(&b, Exec::Auto).map_err(|e| e.to_string())?;
        let elapsed = t.elapsed();
        b.config.service = fit.service;
        let out = simulate(&b.setup().unwrap()).map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        metrics::emit_report(&metrics::kpi_report(&b, &out), dir.path())
            .map_err(|e| e.to_string())?;
        let kpi_csv = std::fs::read_to_string(dir.path().join(metrics::KPI_FILE))
            .map_err(|e| e.to_string())?;
        Ok(AlexandriaFit {
            fit,
            elapsed,
            kpi_csv,
        })
    })
}

fn reduction_arithmetic() -> Outcome {
    let r = metrics::reduction_pct(11353.0, 6403.0).map_err(|e| e.to_string())?;
    let within = (r - 43.60).abs() <= 0.01;
    ensure!(within, "reduction {r}");
    let fit = alexandria_fit().as_ref().map_err(Clone::clone)?;
    let csv = &fit.kpi_csv;
    ensure!(
        csv.contains("# paper_model_reduction_pct = 43.60\n"),
        "computed reduction missing from kpi.csv"
    );
    ensure!(
        csv.contains("# paper_claimed_reduction_pct = 54\n"),
        "claimed reduction missing from kpi.csv"
    );
    ensure!(
        csv.contains("\nTOTAL,11353,"),
        "actual total missing from kpi.csv"
    );
    Ok(format!(
        "{r:.4}% computed, 54% claimed, both in calibrated kpi.csv"
    ))
}

/// Four ships that load the cranes, trucks and yard cranes differently.
fn synthetic_bundle() -> ScenarioBundle {
    let day = 86_400;
    let f20 = ContainerClass::new(Size::S20, Cargo::Full);
    let f40 = ContainerClass::new(Size::S40, Cargo::Full);
    let ship = |id: &str, len: u32, at: u64, d: Manifest, l: Manifest| {
        let arrival = SimTime::from_secs(at);
        ShipRecord {
            d_teu_declared: teu(&d),
            l_teu_declared: teu(&l),
            vessel: Vessel {
                id: id.into(),
                length_m: len,
                arrival,
                discharge: d,
                load: l,
                actual_start: arrival,
                actual_end: arrival.add_secs(3600),
            },
            paper_model_min: None,
            paper_model_confident: true,
        }
    };
    let m = Manifest::new;
    let ships = vec![
        ship("1", 90, 0, m().with(f20, 1), m()),
        ship("2", 90, day, m().with(f20, 30), m()),
        ship("3", 180, 2 * day, m(), m().with(f20, 12).with(f40, 8)),
        ship("4", 270, 3 * day, m().with(f40, 10), m().with(f20, 10)),
        ship("5", 90, 4 * day, m().with(f20, 6), m().with(f20, 6)),
    ];
    let mut config = Config::new(SimTime::from_secs(30 * day));
    config.equipment = EquipmentPool {
        quay_cranes: 3,
        yard_cranes: 1,
        trucks: 2,
        quay_length_m: 400,
    };
    ScenarioBundle {
        yards: YardFile {
            blocks: vec![
                YardBlock::new("I1", YardCategory::Import, 120),
                YardBlock::new("X1", YardCategory::Export, 80),
            ],
            subtotals: Vec::new(),
            total: None,
        },
        ships: ShipFile {
            ships,
            totals: ShipTotals::default(),
        },
        config,
    }
}

fn calibration() -> Outcome {
    let lattice = Lattice {
        min_s: 30,
        max_s: 300,
        step_s: 30,
    };
    let mut b = synthetic_bundle();
    for planted in [(90, 240, 60), (150, 60, 210), (300, 30, 120)] {
        b.config.service.qc_cycle_s = planted.0;
        b.config.service.truck_cycle_s = planted.1;
        b.config.service.yc_cycle_s = planted.2;
        let out = simulate(&b.setup().unwrap()).map_err(|e| e.to_string())?;
        let targets: Vec<Target> = b
            .ships
            .ships
            .iter()
            .enumerate()
            .map(|(i, s)| Target {
                ship: i,
                minutes: metrics::ship_handling_minutes(&out, &s.vessel.id).unwrap(),
            })
            .collect();
        let fit =
            metrics::calibrate_to(&b, &targets, lattice, Exec::Auto).map_err(|e| e.to_string())?;
        let got = (
            fit.service.qc_cycle_s,
            fit.service.truck_cycle_s,
            fit.service.yc_cycle_s,
        );
        ensure!(
            got == planted,
            "planted {planted:?}, recovered {got:?} (objective {})",
            fit.objective
        );
        ensure!(
            fit.objective == 0,
            "objective {} at planted point",
            fit.objective
        );
    }

    let fit = alexandria_fit().as_ref().map_err(Clone::clone)?;
    let confident = metrics::confident_targets(&alexandria());
    ensure!(
        fit.fit.residuals.len() == confident.len() && confident.len() == 10,
        "{} residuals for {} confident ships",
        fit.fit.residuals.len(),
        confident.len()
    );
    ensure!(
        fit.fit.points == 28 * 28 * 28,
        "{} lattice points",
        fit.fit.points
    );
    ensure!(
        fit.elapsed < Duration::from_secs(600),
        "default lattice took {:?}",
        fit.elapsed
    );
    let s = fit.fit.service;
    let rms = (fit.fit.objective as f64 / confident.len() as f64).sqrt() / 100.0;
    Ok(format!(
        "3 planted points recovered; Alexandria best fit qc={} truck={} yc={} (rms residual {rms:.1} min) in {:?}",
        s.qc_cycle_s, s.truck_cycle_s, s.yc_cycle_s, fit.elapsed
    ))
}

fn policy_direction() -> Outcome {
    let b = alexandria();
    let runs = policy_compare(&b, &["baseline-least-occupancy", "worst-fit-adversarial"])
        .map_err(|e| e.to_string())?;
    let (base, worst): (Minutes, Minutes) = (
        runs[0].report.simulated_total,
        runs[1].report.simulated_total,
    );
    ensure!(
        base <= worst,
        "baseline {base} min > adversarial {worst} min"
    );
    Ok(format!("baseline {base} min <= adversarial {worst} min"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("fixture integrity", fixture_integrity),
        ("TEU oracle", teu_oracle),
        ("determinism", determinism),
        ("conservation and capacity", conservation_and_capacity),
        ("allocation oracle equivalence", allocation_oracle),
        ("reduction arithmetic", reduction_arithmetic),
        ("calibration self-consistency", calibration),
        ("policy comparison direction", policy_direction),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

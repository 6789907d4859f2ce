//! Scenario ingestion: `yards.csv`, `ships.csv` and `config.kv`.
//!
//! Declared totals travel with the raw rows and are re-verified on every
//! load. Each file also has a canonical serialization; loading a canonical
//! file and serializing it again reproduces it byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::allocation::{self, admitted_category, BlockPolicy, Flow, DEFAULT_POLICY};
use crate::des::SimTime;
use crate::terminal::{
    teu, ContainerClass, EquipmentPool, Manifest, Mode, ServiceTimes, SimSetup, Vessel, YardBlock,
    YardCategory,
};

pub const YARDS_FILE: &str = "yards.csv";
pub const SHIPS_FILE: &str = "ships.csv";
pub const CONFIG_FILE: &str = "config.kv";

pub const YARDS_HEADER: &str = "name,category,capacity_teu";

/// Stamp format of the terminal's log sheets, day first: `03/03/14 04:00AM`.
pub const STAMP_FORMAT: &str = "%d/%m/%y %I:%M%p";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },
    #[error("TotalMismatch: {what} declared {declared}, recomputed {computed}")]
    TotalMismatch {
        what: String,
        declared: u64,
        computed: u64,
    },
    #[error("TeuMismatch: ship {ship} {direction} declared {declared} TEU, recomputed {computed}")]
    TeuMismatch {
        ship: String,
        direction: &'static str,
        declared: u64,
        computed: u64,
    },
}

impl ScenarioError {
    /// Malformed input, as opposed to well-formed input that fails a check.
    pub fn is_parse(&self) -> bool {
        matches!(self, ScenarioError::Io { .. } | ScenarioError::Parse { .. })
    }
}

fn parse_err(file: &str, line: u64, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn records(
    text: &str,
    file: &str,
    header: &str,
) -> Result<Vec<(u64, csv::StringRecord)>, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let got = rdr
        .headers()
        .map_err(|e| parse_err(file, 1, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if got != header {
        return Err(parse_err(
            file,
            1,
            format!("expected header {header:?}, found {got:?}"),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(file, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(
    s: &str,
    file: &str,
    line: u64,
    col: &str,
) -> Result<T, ScenarioError> {
    s.trim().parse().map_err(|_| {
        parse_err(
            file,
            line,
            format!("{col}: expected a non-negative integer, found {s:?}"),
        )
    })
}

fn opt_num<T: std::str::FromStr>(
    s: &str,
    file: &str,
    line: u64,
    col: &str,
) -> Result<Option<T>, ScenarioError> {
    if s.is_empty() {
        Ok(None)
    } else {
        num(s, file, line, col).map(Some)
    }
}

/// Parses a log-sheet stamp (`03/03/14 04:00AM`) or an ISO stamp.
pub fn parse_stamp(s: &str) -> Option<SimTime> {
    NaiveDateTime::parse_from_str(s.trim(), STAMP_FORMAT)
        .ok()
        .and_then(SimTime::from_datetime)
        .or_else(|| SimTime::parse_iso(s))
}

pub fn format_stamp(t: SimTime) -> String {
    t.to_datetime().format(STAMP_FORMAT).to_string()
}

// ---------------------------------------------------------------------------
// yards.csv

/// Yard rows plus the totals the file declares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YardFile {
    pub blocks: Vec<YardBlock>,
    pub subtotals: Vec<(YardCategory, u64)>,
    pub total: Option<u64>,
}

impl YardFile {
    pub fn category_total(&self, cat: YardCategory) -> u64 {
        self.blocks
            .iter()
            .filter(|b| b.category == cat)
            .map(|b| b.capacity_teu)
            .sum()
    }

    pub fn grand_total(&self) -> u64 {
        self.blocks.iter().map(|b| b.capacity_teu).sum()
    }

    /// Compares every declared subtotal and the grand total with the rows.
    pub fn verify(&self) -> Result<(), ScenarioError> {
        for &(cat, declared) in &self.subtotals {
            let computed = self.category_total(cat);
            if computed != declared {
                return Err(ScenarioError::TotalMismatch {
                    what: format!("yard subtotal {cat}"),
                    declared,
                    computed,
                });
            }
        }
        if let Some(declared) = self.total {
            let computed = self.grand_total();
            if computed != declared {
                return Err(ScenarioError::TotalMismatch {
                    what: "yard grand total".into(),
                    declared,
                    computed,
                });
            }
        }
        Ok(())
    }

    /// Blocks grouped by category in order of first appearance, each group
    /// followed by its declared subtotal, then the declared total.
    pub fn to_canonical(&self) -> String {
        let mut order: Vec<YardCategory> = Vec::new();
        for b in &self.blocks {
            if !order.contains(&b.category) {
                order.push(b.category);
            }
        }
        for &(cat, _) in &self.subtotals {
            if !order.contains(&cat) {
                order.push(cat);
            }
        }
        let mut out = format!("{YARDS_HEADER}\n");
        for cat in order {
            for b in self.blocks.iter().filter(|b| b.category == cat) {
                let _ = writeln!(out, "{},{},{}", b.name, b.category, b.capacity_teu);
            }
            if let Some(&(_, teu)) = self.subtotals.iter().find(|(c, _)| *c == cat) {
                let _ = writeln!(out, "SUBTOTAL,{cat},{teu}");
            }
        }
        if let Some(total) = self.total {
            let _ = writeln!(out, "TOTAL,,{total}");
        }
        out
    }
}

pub fn parse_yards(text: &str, file: &str) -> Result<YardFile, ScenarioError> {
    let mut yard = YardFile {
        blocks: Vec::new(),
        subtotals: Vec::new(),
        total: None,
    };
    for (line, rec) in records(text, file, YARDS_HEADER)? {
        let (name, cat, cap) = (&rec[0], &rec[1], &rec[2]);
        let cap: u64 = num(cap, file, line, "capacity_teu")?;
        match name {
            "TOTAL" => {
                if !cat.is_empty() {
                    return Err(parse_err(file, line, "TOTAL row takes no category"));
                }
                if yard.total.replace(cap).is_some() {
                    return Err(parse_err(file, line, "duplicate TOTAL row"));
                }
            }
            "SUBTOTAL" => {
                let cat: YardCategory =
                    cat.parse().map_err(|m: String| parse_err(file, line, m))?;
                if yard.subtotals.iter().any(|(c, _)| *c == cat) {
                    return Err(parse_err(
                        file,
                        line,
                        format!("duplicate SUBTOTAL for {cat}"),
                    ));
                }
                yard.subtotals.push((cat, cap));
            }
            _ => {
                if name.is_empty() || name.contains(';') || name.contains('=') {
                    return Err(parse_err(file, line, format!("bad block name {name:?}")));
                }
                let cat: YardCategory =
                    cat.parse().map_err(|m: String| parse_err(file, line, m))?;
                if yard.blocks.iter().any(|b| b.name == name) {
                    return Err(parse_err(file, line, format!("duplicate block {name:?}")));
                }
                yard.blocks.push(YardBlock::new(name, cat, cap));
            }
        }
    }
    if yard.blocks.len() >= usize::from(u16::MAX) {
        return Err(parse_err(file, 0, "too many blocks"));
    }
    yard.verify()?;
    Ok(yard)
}

/// Reads and verifies a yard file.
pub fn load_yards(path: &Path) -> Result<YardFile, ScenarioError> {
    parse_yards(&read(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------------------
// ships.csv

const COUNT_COLUMNS: [&str; 8] = [
    "full20", "full40", "haz20", "haz40", "reefer20", "reefer40", "empty20", "empty40",
];

pub fn ships_header() -> String {
    let mut h = String::from(
        "id,length_m,arrival,actual_start,actual_end,paper_model_min,paper_model_confidence",
    );
    for prefix in ["d", "l"] {
        for c in COUNT_COLUMNS {
            let _ = write!(h, ",{prefix}_{c}");
        }
    }
    h.push_str(",d_teu_declared,l_teu_declared");
    h
}

/// One ship row: the vessel plus the published figures that travel with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShipRecord {
    pub vessel: Vessel,
    pub paper_model_min: Option<u64>,
    /// Whether the published model time is a trustworthy calibration target.
    pub paper_model_confident: bool,
    pub d_teu_declared: u64,
    pub l_teu_declared: u64,
}

/// Grand totals declared on the `TOTAL` row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ShipTotals {
    pub actual_min: Option<u64>,
    pub paper_model_min: Option<u64>,
    pub teu: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShipFile {
    pub ships: Vec<ShipRecord>,
    pub totals: ShipTotals,
}

impl ShipFile {
    pub fn total_teu(&self) -> u64 {
        self.ships
            .iter()
            .map(|s| teu(&s.vessel.discharge) + teu(&s.vessel.load))
            .sum()
    }

    pub fn total_actual_min(&self) -> u64 {
        self.ships.iter().map(|s| s.vessel.actual_minutes()).sum()
    }

    pub fn total_paper_model_min(&self) -> u64 {
        self.ships.iter().filter_map(|s| s.paper_model_min).sum()
    }

    pub fn verify(&self) -> Result<(), ScenarioError> {
        for s in &self.ships {
            for (direction, m, declared) in [
                ("discharge", &s.vessel.discharge, s.d_teu_declared),
                ("load", &s.vessel.load, s.l_teu_declared),
            ] {
                let computed = teu(m);
                if computed != declared {
                    return Err(ScenarioError::TeuMismatch {
                        ship: s.vessel.id.clone(),
                        direction,
                        declared,
                        computed,
                    });
                }
            }
        }
        let checks = [
            ("grand TEU total", self.totals.teu, self.total_teu()),
            (
                "actual minutes total",
                self.totals.actual_min,
                self.total_actual_min(),
            ),
            (
                "model minutes total",
                self.totals.paper_model_min,
                self.total_paper_model_min(),
            ),
        ];
        for (what, declared, computed) in checks {
            if let Some(declared) = declared {
                if declared != computed {
                    return Err(ScenarioError::TotalMismatch {
                        what: what.into(),
                        declared,
                        computed,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn vessels(&self) -> Vec<Vessel> {
        self.ships.iter().map(|s| s.vessel.clone()).collect()
    }

    pub fn to_canonical(&self) -> String {
        let mut out = ships_header();
        out.push('\n');
        for s in &self.ships {
            let v = &s.vessel;
            let _ = write!(
                out,
                "{},{},{},{},{},{},{}",
                v.id,
                v.length_m,
                format_stamp(v.arrival),
                format_stamp(v.actual_start),
                format_stamp(v.actual_end),
                s.paper_model_min.map(|m| m.to_string()).unwrap_or_default(),
                u8::from(s.paper_model_confident),
            );
            for m in [&v.discharge, &v.load] {
                for n in m.counts() {
                    let _ = write!(out, ",{n}");
                }
            }
            let _ = writeln!(out, ",{},{}", s.d_teu_declared, s.l_teu_declared);
        }
        let t = self.totals;
        if t != ShipTotals::default() {
            let opt = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "TOTAL,,,,{},{},{},{}",
                opt(t.actual_min),
                opt(t.paper_model_min),
                ",".repeat(16),
                opt(t.teu)
            );
            // the trailing l_teu_declared column stays empty
            out.insert(out.len() - 1, ',');
        }
        out
    }
}

pub fn parse_ships(text: &str, file: &str) -> Result<ShipFile, ScenarioError> {
    let header = ships_header();
    let mut ships: Vec<ShipRecord> = Vec::new();
    let mut totals: Option<ShipTotals> = None;
    for (line, rec) in records(text, file, &header)? {
        let f: Vec<&str> = rec.iter().collect();
        if f[0] == "TOTAL" {
            let allowed = [4usize, 5, 23];
            if let Some(i) = (1..f.len()).find(|i| !allowed.contains(i) && !f[*i].is_empty()) {
                return Err(parse_err(
                    file,
                    line,
                    format!("TOTAL row column {} must be empty", i + 1),
                ));
            }
            if totals.is_some() {
                return Err(parse_err(file, line, "duplicate TOTAL row"));
            }
            totals = Some(ShipTotals {
                actual_min: opt_num(f[4], file, line, "actual_end")?,
                paper_model_min: opt_num(f[5], file, line, "paper_model_min")?,
                teu: opt_num(f[23], file, line, "d_teu_declared")?,
            });
            continue;
        }
        let id = f[0].to_string();
        if id.is_empty() || id.contains([':', ';', '=', ' ']) {
            return Err(parse_err(file, line, format!("bad ship id {id:?}")));
        }
        if ships.iter().any(|s| s.vessel.id == id) {
            return Err(parse_err(file, line, format!("duplicate ship id {id:?}")));
        }
        let stamp = |i: usize, col: &str| {
            parse_stamp(f[i])
                .ok_or_else(|| parse_err(file, line, format!("{col}: bad timestamp {:?}", f[i])))
        };
        let mut counts = [[0u32; 8]; 2];
        for (dir, prefix) in ["d", "l"].iter().enumerate() {
            for (j, c) in COUNT_COLUMNS.iter().enumerate() {
                counts[dir][j] = num(f[7 + dir * 8 + j], file, line, &format!("{prefix}_{c}"))?;
            }
        }
        let confident = match f[6] {
            "1" => true,
            "0" => false,
            other => {
                return Err(parse_err(
                    file,
                    line,
                    format!("paper_model_confidence must be 0 or 1, found {other:?}"),
                ))
            }
        };
        ships.push(ShipRecord {
            vessel: Vessel {
                id,
                length_m: num(f[1], file, line, "length_m")?,
                arrival: stamp(2, "arrival")?,
                actual_start: stamp(3, "actual_start")?,
                actual_end: stamp(4, "actual_end")?,
                discharge: Manifest::from_counts(counts[0]),
                load: Manifest::from_counts(counts[1]),
            },
            paper_model_min: opt_num(f[5], file, line, "paper_model_min")?,
            paper_model_confident: confident,
            d_teu_declared: num(f[23], file, line, "d_teu_declared")?,
            l_teu_declared: num(f[24], file, line, "l_teu_declared")?,
        });
    }
    let file = ShipFile {
        ships,
        totals: totals.unwrap_or_default(),
    };
    file.verify()?;
    Ok(file)
}

/// Reads and verifies a ship schedule.
pub fn load_ships(path: &Path) -> Result<ShipFile, ScenarioError> {
    parse_ships(&read(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------------------
// config.kv

/// Calibration lattice: every cycle time in `min_s..=max_s` by `step_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    pub min_s: u64,
    pub max_s: u64,
    pub step_s: u64,
}

impl Default for Lattice {
    fn default() -> Self {
        Self {
            min_s: 30,
            max_s: 300,
            step_s: 10,
        }
    }
}

impl Lattice {
    pub fn values(&self) -> Vec<u64> {
        if self.step_s == 0 || self.min_s > self.max_s {
            return Vec::new();
        }
        (self.min_s..=self.max_s)
            .step_by(self.step_s as usize)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub seed: u64,
    pub horizon: SimTime,
    pub service: ServiceTimes,
    pub equipment: EquipmentPool,
    pub policy: String,
    pub mode: Mode,
    pub lattice: Lattice,
}

impl Config {
    pub fn new(horizon: SimTime) -> Self {
        Self {
            seed: 0,
            horizon,
            service: ServiceTimes::default(),
            equipment: EquipmentPool::default(),
            policy: DEFAULT_POLICY.to_string(),
            mode: Mode::Deterministic,
            lattice: Lattice::default(),
        }
    }

    pub fn to_canonical(&self) -> String {
        let s = &self.service;
        let e = &self.equipment;
        let l = &self.lattice;
        format!(
            "seed = {}\nhorizon = {}\nqc_cycle_s = {}\ntruck_cycle_s = {}\nyc_cycle_s = {}\n\
             yc_fill_penalty_pct = {}\nberth_clearance_m = {}\nquay_length_m = {}\nquay_cranes = {}\n\
             yard_cranes = {}\ntrucks = {}\npolicy = {}\nmode = {}\ncalib_min_s = {}\ncalib_max_s = {}\n\
             calib_step_s = {}\n",
            self.seed,
            self.horizon.iso(),
            s.qc_cycle_s,
            s.truck_cycle_s,
            s.yc_cycle_s,
            s.yc_fill_penalty_pct,
            s.berth_clearance_m,
            e.quay_length_m,
            e.quay_cranes,
            e.yard_cranes,
            e.trucks,
            self.policy,
            self.mode,
            l.min_s,
            l.max_s,
            l.step_s,
        )
    }
}

/// Splits `key = value` lines; `#` starts a comment line.
pub fn parse_kv(text: &str, file: &str) -> Result<Vec<(u64, String, String)>, ScenarioError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = (i + 1) as u64;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| parse_err(file, line, format!("expected `key = value`, found {t:?}")))?;
        out.push((line, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_config(text: &str, file: &str) -> Result<Config, ScenarioError> {
    let mut horizon = None;
    let mut cfg = Config::new(SimTime::ZERO);
    let mut seen: Vec<String> = Vec::new();
    for (line, key, value) in parse_kv(text, file)? {
        if seen.contains(&key) {
            return Err(parse_err(file, line, format!("duplicate key {key}")));
        }
        let n = |col: &str| num::<u64>(&value, file, line, col);
        let n32 = |col: &str| num::<u32>(&value, file, line, col);
        match key.as_str() {
            "seed" => cfg.seed = n("seed")?,
            "horizon" => {
                horizon = Some(
                    parse_stamp(&value)
                        .ok_or_else(|| parse_err(file, line, format!("bad horizon {value:?}")))?,
                )
            }
            "qc_cycle_s" => cfg.service.qc_cycle_s = n("qc_cycle_s")?,
            "truck_cycle_s" => cfg.service.truck_cycle_s = n("truck_cycle_s")?,
            "yc_cycle_s" => cfg.service.yc_cycle_s = n("yc_cycle_s")?,
            "yc_fill_penalty_pct" => cfg.service.yc_fill_penalty_pct = n("yc_fill_penalty_pct")?,
            "berth_clearance_m" => cfg.service.berth_clearance_m = n32("berth_clearance_m")?,
            "quay_length_m" => cfg.equipment.quay_length_m = n32("quay_length_m")?,
            "quay_cranes" => cfg.equipment.quay_cranes = n32("quay_cranes")?,
            "yard_cranes" => cfg.equipment.yard_cranes = n32("yard_cranes")?,
            "trucks" => cfg.equipment.trucks = n32("trucks")?,
            "policy" => cfg.policy = value.clone(),
            "mode" => {
                cfg.mode = value
                    .parse()
                    .map_err(|m: String| parse_err(file, line, m))?
            }
            "calib_min_s" => cfg.lattice.min_s = n("calib_min_s")?,
            "calib_max_s" => cfg.lattice.max_s = n("calib_max_s")?,
            "calib_step_s" => cfg.lattice.step_s = n("calib_step_s")?,
            other => return Err(parse_err(file, line, format!("unknown key {other:?}"))),
        }
        seen.push(key);
    }
    cfg.horizon = horizon.ok_or_else(|| parse_err(file, 0, "missing required key `horizon`"))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<Config, ScenarioError> {
    parse_config(&read(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------------------
// bundle

/// A complete, loaded scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioBundle {
    pub yards: YardFile,
    pub ships: ShipFile,
    pub config: Config,
}

impl ScenarioBundle {
    pub fn vessels(&self) -> Vec<Vessel> {
        self.ships.vessels()
    }

    pub fn policy(&self) -> Option<&'static dyn BlockPolicy> {
        allocation::policy_by_name(&self.config.policy)
    }

    pub fn setup_with_policy(&self, policy: &'static dyn BlockPolicy) -> SimSetup {
        SimSetup {
            vessels: self.vessels(),
            yard: self.yards.blocks.clone(),
            equipment: self.config.equipment,
            service: self.config.service,
            policy,
            mode: self.config.mode,
            seed: self.config.seed,
            horizon: self.config.horizon,
        }
    }

    /// Setup using the configured policy; `None` if its name is not registered.
    pub fn setup(&self) -> Option<SimSetup> {
        self.policy().map(|p| self.setup_with_policy(p))
    }
}

/// Loads `yards.csv`, `ships.csv` and `config.kv` from `dir`.
pub fn load_scenario(dir: &Path) -> Result<ScenarioBundle, ScenarioError> {
    Ok(ScenarioBundle {
        yards: load_yards(&dir.join(YARDS_FILE))?,
        ships: load_ships(&dir.join(SHIPS_FILE))?,
        config: load_config(&dir.join(CONFIG_FILE))?,
    })
}

pub mod alexandria {
    //! The bundled one-week Alexandria scenario.

    use super::*;

    pub const YARDS_CSV: &str = include_str!("../../../scenarios/alexandria/yards.csv");
    pub const SHIPS_CSV: &str = include_str!("../../../scenarios/alexandria/ships.csv");
    pub const CONFIG_KV: &str = include_str!("../../../scenarios/alexandria/config.kv");

    /// Recorded operation minutes per ship, in ship order.
    pub const ACTUAL_MINUTES: [u64; 12] = [
        960, 420, 600, 584, 1350, 1125, 569, 1215, 810, 150, 945, 2625,
    ];

    pub fn bundle() -> ScenarioBundle {
        ScenarioBundle {
            yards: parse_yards(YARDS_CSV, "alexandria/yards.csv").expect("bundled yards verify"),
            ships: parse_ships(SHIPS_CSV, "alexandria/ships.csv").expect("bundled ships verify"),
            config: parse_config(CONFIG_KV, "alexandria/config.kv").expect("bundled config parses"),
        }
    }
}

// ---------------------------------------------------------------------------
// validation

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn push(&mut self, name: &'static str, problems: Vec<String>, ok_detail: impl Into<String>) {
        let passed = problems.is_empty();
        let detail = if passed {
            ok_detail.into()
        } else {
            problems.join("; ")
        };
        self.checks.push(Check {
            name,
            passed,
            detail,
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Runs every consistency check; failures become report entries.
pub fn validate(bundle: &ScenarioBundle) -> ValidationReport {
    let mut report = ValidationReport::default();
    let cfg = &bundle.config;
    let ships = &bundle.ships.ships;

    let yard_problem = bundle.yards.verify().err().map(|e| e.to_string());
    report.push(
        "yard totals",
        yard_problem.into_iter().collect(),
        format!(
            "{} blocks, {} TEU",
            bundle.yards.blocks.len(),
            bundle.yards.grand_total()
        ),
    );

    let ship_problem = bundle.ships.verify().err().map(|e| e.to_string());
    report.push(
        "ship totals",
        ship_problem.into_iter().collect(),
        format!(
            "{} ships, {} TEU, {} actual min",
            ships.len(),
            bundle.ships.total_teu(),
            bundle.ships.total_actual_min()
        ),
    );

    let stamps: Vec<String> = ships
        .iter()
        .filter(|s| s.vessel.actual_end <= s.vessel.actual_start || s.vessel.length_m == 0)
        .map(|s| format!("ship {}", s.vessel.id))
        .collect();
    report.push(
        "ship records well-formed",
        stamps,
        "end after start, positive length",
    );

    let late: Vec<String> = ships
        .iter()
        .filter(|s| s.vessel.arrival >= cfg.horizon)
        .map(|s| {
            format!(
                "ship {} arrives {} at/after horizon",
                s.vessel.id, s.vessel.arrival
            )
        })
        .collect();
    report.push(
        "arrivals within horizon",
        late,
        format!("horizon {}", cfg.horizon),
    );

    let s = &cfg.service;
    let service: Vec<String> = [
        ("qc_cycle_s", s.qc_cycle_s),
        ("truck_cycle_s", s.truck_cycle_s),
        ("yc_cycle_s", s.yc_cycle_s),
        ("berth_clearance_m", u64::from(s.berth_clearance_m)),
    ]
    .into_iter()
    .filter(|(_, v)| *v == 0)
    .map(|(k, _)| format!("{k} is 0"))
    .collect();
    report.push("service times positive", service, "all positive");

    let e = &cfg.equipment;
    let equipment: Vec<String> = [
        ("quay_cranes", e.quay_cranes),
        ("yard_cranes", e.yard_cranes),
        ("trucks", e.trucks),
        ("quay_length_m", e.quay_length_m),
    ]
    .into_iter()
    .filter(|(_, v)| *v == 0)
    .map(|(k, _)| format!("{k} is 0"))
    .collect();
    report.push("equipment counts positive", equipment, "all positive");

    let mut missing: Vec<String> = Vec::new();
    let has = |cat: YardCategory| bundle.yards.blocks.iter().any(|b| b.category == cat);
    for sh in ships {
        for (m, flow) in [
            (&sh.vessel.discharge, Flow::Import),
            (&sh.vessel.load, Flow::Export),
        ] {
            for class in ContainerClass::ALL {
                let cat = admitted_category(class, flow);
                if m.count(class) > 0 && !has(cat) {
                    let msg = format!("{cat} needed by ship {} ({class})", sh.vessel.id);
                    if !missing.contains(&msg) {
                        missing.push(msg);
                    }
                }
            }
        }
    }
    report.push(
        "category coverage",
        missing,
        "every carried class has a block",
    );

    let too_long: Vec<String> = ships
        .iter()
        .filter(|sh| sh.vessel.length_m + s.berth_clearance_m > e.quay_length_m)
        .map(|sh| {
            format!(
                "ship {} needs {} m",
                sh.vessel.id,
                sh.vessel.length_m + s.berth_clearance_m
            )
        })
        .collect();
    report.push(
        "vessels fit quay",
        too_long,
        format!("quay {} m", e.quay_length_m),
    );

    let policy: Vec<String> = match bundle.policy() {
        Some(_) => Vec::new(),
        None => vec![format!(
            "unknown policy {:?}; registered: {}",
            cfg.policy,
            allocation::registered_policies().join(", ")
        )],
    };
    report.push("policy registered", policy, cfg.policy.clone());

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terminal::{Cargo, Size};

    #[test]
    fn bundled_yards_total() {
        let y = parse_yards(alexandria::YARDS_CSV, "y").unwrap();
        assert_eq!(y.blocks.len(), 15);
        assert_eq!(y.grand_total(), 15666);
        assert_eq!(y.category_total(YardCategory::Export), 1050 + 600 + 930);
        assert_eq!(y.category_total(YardCategory::Export), 2580);
    }

    #[test]
    fn wrong_declared_total_is_mismatch() {
        let text = alexandria::YARDS_CSV.replace("TOTAL,,15666", "TOTAL,,15000");
        match parse_yards(&text, "y") {
            Err(ScenarioError::TotalMismatch {
                declared, computed, ..
            }) => {
                assert_eq!((declared, computed), (15000, 15666));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_capacity_is_parse_error() {
        let text = alexandria::YARDS_CSV.replace("C,Import,1860", "C,Import,lots");
        let err = parse_yards(&text, "y").unwrap_err();
        assert!(err.is_parse(), "{err}");
        assert!(err.to_string().contains("capacity_teu"));
    }

    #[test]
    fn bundled_ships() {
        let s = parse_ships(alexandria::SHIPS_CSV, "s").unwrap();
        assert_eq!(s.ships.len(), 12);
        assert_eq!(s.total_teu(), 9531);
        let ten = &s.ships[9];
        assert_eq!(ten.vessel.id, "10");
        let d = &ten.vessel.discharge;
        assert_eq!((d.twenties(), d.forties(), teu(d)), (3, 43, 89));
        assert_eq!(ten.vessel.actual_minutes(), 150);
    }

    #[test]
    fn ship_ten_teu_edit_is_mismatch() {
        let text = alexandria::SHIPS_CSV.replace(",89,16\n", ",90,16\n");
        match parse_ships(&text, "s") {
            Err(ScenarioError::TeuMismatch {
                ship,
                declared,
                computed,
                ..
            }) => {
                assert_eq!((ship.as_str(), declared, computed), ("10", 90, 89));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stamps_are_day_first() {
        let t = parse_stamp("03/03/14 04:00AM").unwrap();
        assert_eq!(t.iso(), "2014-03-03T04:00:00");
        assert_eq!(
            parse_stamp("09/03/14 03:15PM").unwrap().iso(),
            "2014-03-09T15:15:00"
        );
        assert_eq!(
            parse_stamp("05/03/14 12:30AM").unwrap().iso(),
            "2014-03-05T00:30:00"
        );
        assert_eq!(format_stamp(t), "03/03/14 04:00AM");
        assert!(parse_stamp("03/03/14 08:00 M").is_none());
    }

    #[test]
    fn canonical_round_trips() {
        let y = parse_yards(alexandria::YARDS_CSV, "y").unwrap();
        assert_eq!(y.to_canonical(), alexandria::YARDS_CSV);
        let s = parse_ships(alexandria::SHIPS_CSV, "s").unwrap();
        assert_eq!(s.to_canonical(), alexandria::SHIPS_CSV);
        let c = parse_config(alexandria::CONFIG_KV, "c").unwrap();
        assert_eq!(c.to_canonical(), alexandria::CONFIG_KV);
    }

    #[test]
    fn config_rejects_unknown_keys_and_requires_horizon() {
        assert!(parse_config("horizon = 2014-03-31T00:00:00\nwidgets = 3\n", "c").is_err());
        assert!(parse_config("seed = 1\n", "c").is_err());
        let c = parse_config("# comment\nhorizon = 2014-03-31T00:00:00\n", "c").unwrap();
        assert_eq!(c.service, ServiceTimes::default());
        assert_eq!(c.policy, DEFAULT_POLICY);
    }

    #[test]
    fn bundled_scenario_validates() {
        let report = validate(&alexandria::bundle());
        assert!(report.all_passed(), "{report}");
    }

    #[test]
    fn zero_trucks_fails_only_equipment() {
        let mut b = alexandria::bundle();
        b.config.equipment.trucks = 0;
        let report = validate(&b);
        let failed: Vec<_> = report.failed().iter().map(|c| c.name).collect();
        assert_eq!(failed, ["equipment counts positive"]);
    }

    #[test]
    fn missing_reefer_block_fails_coverage() {
        let mut b = alexandria::bundle();
        b.yards
            .blocks
            .retain(|blk| blk.category != YardCategory::Reefer);
        b.yards
            .subtotals
            .retain(|(c, _)| *c != YardCategory::Reefer);
        b.yards.total = Some(b.yards.grand_total());
        let report = validate(&b);
        let failed: Vec<_> = report.failed().iter().map(|c| c.name).collect();
        assert_eq!(failed, ["category coverage"]);
        let reefer = ContainerClass::new(Size::S40, Cargo::Reefer);
        assert!(report.failed()[0].detail.contains(&reefer.to_string()));
    }

    #[test]
    fn lattice_values() {
        assert_eq!(Lattice::default().values().len(), 28);
        assert_eq!(
            Lattice {
                min_s: 10,
                max_s: 30,
                step_s: 10
            }
            .values(),
            [10, 20, 30]
        );
        assert!(Lattice {
            min_s: 10,
            max_s: 30,
            step_s: 0
        }
        .values()
        .is_empty());
    }
}

//! Scenario, series and error-profile files, and result writers.
//!
//! Scenario and error-profile files are TOML; slots in every file are
//! one-based. The series file is a CSV with header `slot,price,solar,load`
//! (the `load` column is optional).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{
    Battery, InflexibleAppliance, PowerFlexibleAppliance, Scenario, Tariff, TimeFlexibleAppliance,
    TimeGrid, Window,
};
use crate::error::{Error, Result};
use crate::harness::{Envelope, ErrorProfile, SimulationTrace};
use crate::moea::{ConvergenceLog, CONVERGENCE_HEADER};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub notes: String,
    pub slots: usize,
    #[serde(default = "one")]
    pub slot_duration: f64,
    #[serde(default = "default_origin")]
    pub origin: String,
    /// Series CSV, relative to the scenario file.
    pub series: Option<String>,
    pub battery: BatteryFile,
    pub tariff: TariffFile,
    #[serde(default)]
    pub inflexible: Vec<InflexibleFile>,
    #[serde(default)]
    pub time_flexible: Vec<TimeFlexibleFile>,
    #[serde(default)]
    pub power_flexible: Vec<PowerFlexibleFile>,
}

fn one() -> f64 {
    1.0
}

fn default_origin() -> String {
    "08:00".into()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryFile {
    /// Fraction of stored energy retained over 24 hours.
    pub leakage: f64,
    pub max_rate: f64,
    pub capacity_min: f64,
    pub capacity_max: f64,
    pub initial_energy: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TariffFile {
    pub feed_in_rate: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InflexibleFile {
    pub name: String,
    pub rated_power: f64,
    pub windows: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TimeFlexibleFile {
    pub name: String,
    pub rated_power: f64,
    pub window: [usize; 2],
    pub duration: usize,
    pub requested_start: usize,
    pub discomfort_weight: f64,
    pub delay_exponent: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PowerFlexibleFile {
    pub name: String,
    pub min_power: f64,
    pub max_power: f64,
    pub window: [usize; 2],
    pub discomfort_weight: f64,
    pub nominal_power: f64,
}

/// Exogenous per-slot series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub price: Vec<f64>,
    pub solar: Vec<f64>,
    pub load: Option<Vec<f64>>,
}

pub const SERIES_HEADER: [&str; 4] = ["slot", "price", "solar", "load"];

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn window(what: &str, w: [usize; 2], out: &mut Vec<String>) -> Window {
    if w[0] == 0 || w[1] == 0 {
        out.push(format!("{what}: window [{}, {}] uses slot 0; slots are one-based", w[0], w[1]));
    }
    Window::one_based(w[0], w[1])
}

pub fn parse_scenario(text: &str, path: &Path) -> Result<ScenarioFile> {
    toml::from_str(text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn read_series(path: &Path) -> Result<Series> {
    let text = read_text(path)?;
    parse_series(&text, path)
}

pub fn parse_series(text: &str, path: &Path) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 3 || names[..3] != SERIES_HEADER[..3] || (names.len() == 4 && names[3] != "load") || names.len() > 4 {
        return Err(Error::parse(
            path,
            format!("header must be `slot,price,solar` or `slot,price,solar,load`, got `{}`", names.join(",")),
        ));
    }
    let has_load = names.len() == 4;
    let mut series = Series {
        price: Vec::new(),
        solar: Vec::new(),
        load: has_load.then(Vec::new),
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| Error::parse(path, format!("line {row}: missing column {}", SERIES_HEADER[k])))?
                .parse::<f64>()
                .map_err(|e| Error::parse(path, format!("line {row}: column {}: {e}", SERIES_HEADER[k])))
        };
        let slot = num(0)?;
        if slot != (i + 1) as f64 {
            return Err(Error::parse(path, format!("line {row}: expected slot {}, got {slot}", i + 1)));
        }
        series.price.push(num(1)?);
        series.solar.push(num(2)?);
        if let Some(load) = series.load.as_mut() {
            load.push(num(3)?);
        }
    }
    Ok(series)
}

/// Builds and validates a scenario from its file form and series.
pub fn build_scenario(file: &ScenarioFile, series: &Series) -> Result<Scenario> {
    let mut bad = Vec::new();
    let inflexible = file
        .inflexible
        .iter()
        .map(|a| InflexibleAppliance {
            name: a.name.clone(),
            rated_power: a.rated_power,
            windows: a
                .windows
                .iter()
                .map(|&w| window(&format!("inflexible appliance {}", a.name), w, &mut bad))
                .collect(),
        })
        .collect();
    let time_flexible = file
        .time_flexible
        .iter()
        .map(|b| {
            let what = format!("time-flexible appliance {}", b.name);
            if b.requested_start == 0 {
                bad.push(format!("{what}: requested_start 0; slots are one-based"));
            }
            TimeFlexibleAppliance {
                name: b.name.clone(),
                rated_power: b.rated_power,
                window: window(&what, b.window, &mut bad),
                duration: b.duration,
                requested_start: b.requested_start.saturating_sub(1),
                discomfort_weight: b.discomfort_weight,
                delay_exponent: b.delay_exponent,
            }
        })
        .collect();
    let power_flexible = file
        .power_flexible
        .iter()
        .map(|c| PowerFlexibleAppliance {
            name: c.name.clone(),
            min_power: c.min_power,
            max_power: c.max_power,
            window: window(&format!("power-flexible appliance {}", c.name), c.window, &mut bad),
            discomfort_weight: c.discomfort_weight,
            nominal_power: c.nominal_power,
        })
        .collect();
    let daily = file.battery.leakage;
    if !(daily > 0.0 && daily <= 1.0) {
        bad.push(format!("battery.leakage: daily retention {daily} not in (0, 1]"));
    }
    let mut scenario = Scenario {
        grid: TimeGrid {
            slot_count: file.slots,
            slot_duration: file.slot_duration,
            origin_label: file.origin.clone(),
        },
        inflexible,
        time_flexible,
        power_flexible,
        battery: Battery {
            leakage_per_slot: Battery::per_slot_retention(daily, file.slot_duration),
            max_rate: file.battery.max_rate,
            capacity_min: file.battery.capacity_min,
            capacity_max: file.battery.capacity_max,
            initial_energy: file.battery.initial_energy,
        },
        tariff: Tariff {
            market_price: series.price.clone(),
            feed_in_rate: file.tariff.feed_in_rate,
        },
        renewable_true: series.solar.clone(),
        inflexible_true: Vec::new(),
        notes: if file.notes.is_empty() { file.name.clone() } else { file.notes.clone() },
    };
    scenario.inflexible_true = match &series.load {
        Some(load) => load.clone(),
        None => {
            if bad.is_empty() {
                scenario.appliance_inflexible_series()
            } else {
                vec![0.0; file.slots]
            }
        }
    };
    bad.extend(scenario.violations());
    if bad.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::Validation(bad))
    }
}

/// Loads a scenario file; `series_override` replaces its `series` entry.
pub fn load_scenario(path: &Path, series_override: Option<&Path>) -> Result<Scenario> {
    let text = read_text(path)?;
    let file = parse_scenario(&text, path)?;
    let series_path: PathBuf = match (series_override, &file.series) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(rel)) => path.parent().unwrap_or(Path::new(".")).join(rel),
        (None, None) => {
            return Err(Error::parse(path, "no `series` entry and no series file given"));
        }
    };
    let series = read_series(&series_path)?;
    build_scenario(&file, &series)
}

/// The household shipped in `data/`, compiled into the library.
pub fn bundled_table2() -> Scenario {
    let file = parse_scenario(include_str!("../data/table2.scenario"), Path::new("table2.scenario"))
        .expect("bundled scenario parses");
    let series = parse_series(include_str!("../data/table2_series.csv"), Path::new("table2_series.csv"))
        .expect("bundled series parses");
    build_scenario(&file, &series).expect("bundled scenario is valid")
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeFile {
    base: f64,
    slope: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ErrorProfileFile {
    price: EnvelopeFile,
    renewable: EnvelopeFile,
    load: EnvelopeFile,
}

pub fn parse_error_profile(text: &str, path: &Path) -> Result<ErrorProfile> {
    let f: ErrorProfileFile = toml::from_str(text).map_err(|e| Error::parse(path, e.to_string()))?;
    let env = |e: EnvelopeFile| Envelope { base: e.base, slope: e.slope };
    let profile = ErrorProfile {
        price: env(f.price),
        renewable: env(f.renewable),
        load: env(f.load),
    };
    let bad = profile.violations();
    if bad.is_empty() {
        Ok(profile)
    } else {
        Err(Error::Validation(bad))
    }
}

pub fn load_error_profile(path: &Path) -> Result<ErrorProfile> {
    let text = read_text(path)?;
    parse_error_profile(&text, path)
}

pub fn error_profile_toml(profile: &ErrorProfile) -> String {
    let env = |e: Envelope| EnvelopeFile { base: e.base, slope: e.slope };
    toml::to_string(&ErrorProfileFile {
        price: env(profile.price),
        renewable: env(profile.renewable),
        load: env(profile.load),
    })
    .expect("error profile serializes")
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn flush<W: Write>(w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

/// Column names of `schedule.csv` for a scenario.
pub fn schedule_header(scenario: &Scenario) -> Vec<String> {
    let mut h: Vec<String> = [
        "slot",
        "price_true",
        "price_forecast_t0",
        "renewable",
        "inflexible_load",
        "battery_power",
        "battery_energy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for b in &scenario.time_flexible {
        h.push(format!("power_{}", b.name));
    }
    for c in &scenario.power_flexible {
        h.push(format!("power_{}", c.name));
    }
    h.push("p_total".into());
    h.push("slot_cost".into());
    h
}

/// One row per slot; `battery_energy` is the energy at the end of the slot.
pub fn write_schedule(path: &Path, scenario: &Scenario, trace: &SimulationTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(schedule_header(scenario))?;
    for r in &trace.slots {
        let mut row = vec![
            (r.slot + 1).to_string(),
            r.price_true.to_string(),
            r.price_forecast_t0.to_string(),
            r.renewable.to_string(),
            r.inflexible_load.to_string(),
            r.battery_power.to_string(),
            r.energy_end.to_string(),
        ];
        row.extend(r.appliance_power.iter().map(f64::to_string));
        row.push(r.p_total.to_string());
        row.push(r.cost.to_string());
        w.write_record(row)?;
    }
    flush(w, path)
}

pub const PARETO_HEADER: [&str; 3] = ["cost", "dissatisfaction", "knee"];

pub fn write_pareto(path: &Path, front: &[(f64, f64)], knee: Option<usize>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(PARETO_HEADER)?;
    for (i, p) in front.iter().enumerate() {
        let flag = if Some(i) == knee { "1" } else { "0" };
        w.write_record([p.0.to_string(), p.1.to_string(), flag.to_string()])?;
    }
    flush(w, path)
}

/// Writes several logs into one file; each entry is `(solver, slot, log)`
/// with a one-based slot.
pub fn write_convergence(path: &Path, logs: &[(&str, usize, &ConvergenceLog)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(CONVERGENCE_HEADER)?;
    for (solver, slot, log) in logs {
        log.write_csv(&mut w, solver, *slot)?;
    }
    flush(w, path)
}

/// All outputs of one simulated day in `dir`.
pub fn write_trace(dir: &Path, scenario: &Scenario, trace: &SimulationTrace) -> Result<()> {
    write_schedule(&dir.join("schedule.csv"), scenario, trace)?;
    for s in &trace.solves {
        write_pareto(&dir.join(format!("pareto_{}.csv", s.slot + 1)), &s.front, s.knee)?;
    }
    let name = trace.solver.name();
    let logs: Vec<(&str, usize, &ConvergenceLog)> =
        trace.solves.iter().map(|s| (name, s.slot + 1, &s.log)).collect();
    write_convergence(&dir.join("convergence.csv"), &logs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub solver: String,
    pub seed: u64,
    /// `perfect` or `with_errors`.
    pub forecast: String,
    pub total_cost: f64,
    pub total_dissatisfaction: f64,
    /// Cost increase over the proposed solver's perfect-information cost
    /// for the same seed, when both runs exist.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degradation_pct: Option<f64>,
    /// Cost increase over this solver's own perfect-information cost.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub self_degradation_pct: Option<f64>,
    /// Slots where a baseline found no feasible schedule.
    pub infeasible_slots: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub run: Vec<RunSummary>,
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let text = toml::to_string(summary).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Human-readable echo of the effective parameters.
pub fn describe(scenario: &Scenario) -> String {
    let mut s = String::new();
    let g = &scenario.grid;
    let b = &scenario.battery;
    s.push_str(&format!(
        "slots: {} x {} h starting {}\n",
        g.slot_count, g.slot_duration, g.origin_label
    ));
    s.push_str(&format!(
        "appliances: {} inflexible, {} time-flexible, {} power-flexible\n",
        scenario.inflexible.len(),
        scenario.time_flexible.len(),
        scenario.power_flexible.len()
    ));
    for a in &scenario.inflexible {
        let w: Vec<String> = a.windows.iter().map(|w| format!("[{}, {}]", w.start + 1, w.end + 1)).collect();
        s.push_str(&format!("  inflexible {}: {} kW on {}\n", a.name, a.rated_power, w.join(" ")));
    }
    for a in &scenario.time_flexible {
        s.push_str(&format!(
            "  time-flexible {}: {} kW for {} slots in [{}, {}], requested {}, weight {}, exponent {}\n",
            a.name,
            a.rated_power,
            a.duration,
            a.window.start + 1,
            a.window.end + 1,
            a.requested_start + 1,
            a.discomfort_weight,
            a.delay_exponent
        ));
    }
    for a in &scenario.power_flexible {
        s.push_str(&format!(
            "  power-flexible {}: [{}, {}] kW in [{}, {}], nominal {}, weight {}\n",
            a.name,
            a.min_power,
            a.max_power,
            a.window.start + 1,
            a.window.end + 1,
            a.nominal_power,
            a.discomfort_weight
        ));
    }
    s.push_str(&format!(
        "battery: per-slot retention {:.9}, rate {} kW, capacity [{}, {}] kWh, initial {} kWh\n",
        b.leakage_per_slot, b.max_rate, b.capacity_min, b.capacity_max, b.initial_energy
    ));
    let (lo, hi) = scenario
        .tariff
        .market_price
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &p| (l.min(p), h.max(p)));
    s.push_str(&format!(
        "tariff: market price [{lo}, {hi}], feed-in rate {}\n",
        scenario.tariff.feed_in_rate
    ));
    s
}

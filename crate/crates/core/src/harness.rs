//! Receding-horizon simulation of one day, forecast corruption and metrics.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::baselines::{solve, BaselineConfig, ConstraintHandling, RawProblem};
use crate::constraints::build_feasible_set_unchecked;
use crate::domain::{grid_exchange, Scenario, Tariff};
use crate::error::{Error, Result};
use crate::laguerre::{
    build_basis, build_prediction, reconstruct_controls, LaguerreBasis, PredictionOperators,
    StateSpaceModel,
};
use crate::moea::{evolve, normalized_manhattan, select_knee, ConvergenceLog, MoeaConfig, Problem, Scored};
use crate::objectives::ForecastBundle;
use crate::sampler::{derive_seed, RandomStream};

const TAG_FORECAST: u64 = 101;
const TAG_SOLVE: u64 = 102;

/// Energy values within this distance outside a capacity bound are snapped
/// onto it after each realized step.
const ENERGY_SNAP: f64 = 1e-9;

/// Relative error bound `ε(m) = base + slope·m` at lead time `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub base: f64,
    pub slope: f64,
}

impl Envelope {
    pub const ZERO: Envelope = Envelope { base: 0.0, slope: 0.0 };

    pub fn at(&self, m: usize) -> f64 {
        self.base + self.slope * m as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorProfile {
    pub price: Envelope,
    pub renewable: Envelope,
    pub load: Envelope,
}

impl Default for ErrorProfile {
    fn default() -> Self {
        ErrorProfile {
            price: Envelope { base: 0.01, slope: 0.005 },
            renewable: Envelope { base: 0.02, slope: 0.01 },
            load: Envelope { base: 0.01, slope: 0.0075 },
        }
    }
}

impl ErrorProfile {
    pub fn zero() -> Self {
        ErrorProfile {
            price: Envelope::ZERO,
            renewable: Envelope::ZERO,
            load: Envelope::ZERO,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, e) in [("price", self.price), ("renewable", self.renewable), ("load", self.load)] {
            if !(e.base >= 0.0) {
                out.push(format!("error profile {name}.base must be nonnegative, got {}", e.base));
            }
            if !(e.slope >= 0.0) {
                out.push(format!("error profile {name}.slope must be nonnegative, got {}", e.slope));
            }
        }
        out
    }
}

fn corrupt(truth: &[f64], envelope: Envelope, rng: &mut RandomStream) -> Vec<f64> {
    truth
        .iter()
        .enumerate()
        .map(|(m, &v)| {
            let bound = envelope.at(m);
            let e = rng.range(-bound, bound);
            if m == 0 {
                v
            } else {
                v * (1.0 + e)
            }
        })
        .collect()
}

/// Truth over `[t_now, t_now + horizon)` with multiplicative uniform noise;
/// the current slot is exact and renewable stays nonnegative.
pub fn make_forecast(
    scenario: &Scenario,
    t_now: usize,
    horizon: usize,
    profile: &ErrorProfile,
    rng: &mut RandomStream,
) -> Result<ForecastBundle> {
    if t_now + horizon > scenario.slot_count() || horizon == 0 {
        return Err(Error::Range {
            what: "forecast end",
            index: t_now + horizon,
            limit: scenario.slot_count(),
        });
    }
    let truth = ForecastBundle::exact(scenario, t_now, horizon);
    Ok(ForecastBundle {
        price: corrupt(&truth.price, profile.price, rng),
        renewable: corrupt(&truth.renewable, profile.renewable, rng)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect(),
        inflexible_load: corrupt(&truth.inflexible_load, profile.load, rng),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SolverKind {
    Proposed,
    Penalty,
    ConstraintDominated,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [
        SolverKind::Proposed,
        SolverKind::Penalty,
        SolverKind::ConstraintDominated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Proposed => "proposed",
            SolverKind::Penalty => "penalty",
            SolverKind::ConstraintDominated => "cdom",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown solver {s:?} (expected proposed, penalty or cdom)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub moea: MoeaConfig,
    pub laguerre_pole: f64,
    pub laguerre_order: usize,
    /// Longest prediction horizon; clipped at the end of the day.
    pub horizon: usize,
    pub penalty_weight: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            moea: MoeaConfig::default(),
            laguerre_pole: 0.8,
            laguerre_order: 15,
            horizon: 20,
            penalty_weight: 1e4,
        }
    }
}

impl RunConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(Error::Validation(v)) = self.moea.validate() {
            out.extend(v);
        }
        if !(0.0..1.0).contains(&self.laguerre_pole) {
            out.push(format!("laguerre pole {} not in [0, 1)", self.laguerre_pole));
        }
        if self.laguerre_order == 0 {
            out.push("laguerre order must be at least 1".into());
        }
        if self.horizon == 0 {
            out.push("horizon must be at least 1".into());
        }
        if !(self.penalty_weight >= 0.0) {
            out.push(format!("penalty weight must be nonnegative, got {}", self.penalty_weight));
        }
        out
    }

    fn solve_config(&self, slot: usize) -> MoeaConfig {
        MoeaConfig {
            seed: derive_seed(self.moea.seed, &[TAG_SOLVE, slot as u64]),
            ..self.moea.clone()
        }
    }
}

/// What happened in one realized slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub price_true: f64,
    /// Price predicted for this slot by the earliest forecast covering it.
    pub price_forecast_t0: f64,
    pub renewable: f64,
    pub inflexible_load: f64,
    pub battery_power: f64,
    pub energy_start: f64,
    pub energy_end: f64,
    /// Power of each time-flexible appliance, then each power-flexible one.
    pub appliance_power: Vec<f64>,
    pub p_total: f64,
    pub cost: f64,
    pub dissatisfaction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    pub slot: usize,
    pub front: Vec<(f64, f64)>,
    pub knee: Option<usize>,
    pub log: ConvergenceLog,
    /// False when a baseline returned no feasible schedule.
    pub found_feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub solver: SolverKind,
    pub slots: Vec<SlotRecord>,
    pub solves: Vec<SolveRecord>,
    pub committed: Vec<Option<usize>>,
    pub total_cost: f64,
    pub total_dissatisfaction: f64,
    pub wall_seconds: f64,
}

impl SimulationTrace {
    pub fn battery_power(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.battery_power).collect()
    }

    /// `E_s` at every slot boundary, including the initial energy.
    pub fn energy_path(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.slots.first().map(|s| vec![s.energy_start]).unwrap_or_default();
        v.extend(self.slots.iter().map(|s| s.energy_end));
        v
    }
}

/// One decision for the current slot.
struct Decision {
    battery: f64,
    flexible: Vec<f64>,
    starts: Vec<usize>,
    record: SolveRecord,
}

struct BasisCache {
    pole: f64,
    order: usize,
    model: StateSpaceModel,
    entries: HashMap<usize, (LaguerreBasis, PredictionOperators)>,
}

impl BasisCache {
    fn new(scenario: &Scenario, config: &RunConfig) -> Self {
        BasisCache {
            pole: config.laguerre_pole,
            order: config.laguerre_order,
            model: StateSpaceModel::new(
                scenario.battery.leakage_per_slot,
                scenario.dt(),
                scenario.power_flexible.len(),
            ),
            entries: HashMap::new(),
        }
    }

    fn get(&mut self, horizon: usize) -> Result<&(LaguerreBasis, PredictionOperators)> {
        if !self.entries.contains_key(&horizon) {
            let basis = build_basis(self.pole, self.order, horizon)?;
            let ops = build_prediction(&basis, self.model);
            self.entries.insert(horizon, (basis, ops));
        }
        Ok(&self.entries[&horizon])
    }
}

fn earliest_starts(scenario: &Scenario, t_now: usize, committed: &[Option<usize>]) -> Result<Vec<usize>> {
    crate::moea::start_ranges(scenario, t_now, committed).map(|r| r.into_iter().map(|(lo, _)| lo).collect())
}

#[allow(clippy::too_many_arguments)]
fn decide(
    scenario: &Scenario,
    solver: SolverKind,
    config: &RunConfig,
    cache: &mut BasisCache,
    forecast: &ForecastBundle,
    t: usize,
    energy: f64,
    committed: &[Option<usize>],
) -> Result<Decision> {
    let horizon = forecast.horizon();
    let moea = config.solve_config(t);
    match solver {
        SolverKind::Proposed => {
            let (basis, ops) = cache.get(horizon)?;
            let set = build_feasible_set_unchecked(scenario, basis, ops, [energy, 0.0], t)?;
            let problem = Problem::with_committed(scenario, &set, forecast, basis, t, committed)?;
            let result = evolve(&problem, &moea)?;
            let pairs: Vec<(f64, f64)> = result.front.iter().map(Scored::pair).collect();
            let knee = select_knee(&pairs).ok_or_else(|| Error::Precondition("empty front".into()))?;
            let chosen = &result.front[knee];
            let u = reconstruct_controls(basis, &chosen.eta, scenario.power_flexible.len())?;
            let flexible = scenario
                .power_flexible
                .iter()
                .enumerate()
                .map(|(c, app)| if app.is_active(t) { app.nominal_power + u.get(1 + c, 0) } else { 0.0 })
                .collect();
            Ok(Decision {
                battery: u.get(0, 0),
                flexible,
                starts: chosen.starts.clone(),
                record: SolveRecord {
                    slot: t,
                    front: pairs,
                    knee: Some(knee),
                    log: result.log,
                    found_feasible: true,
                },
            })
        }
        SolverKind::Penalty | SolverKind::ConstraintDominated => {
            let handling = if solver == SolverKind::Penalty {
                ConstraintHandling::Penalty
            } else {
                ConstraintHandling::ConstraintDomination
            };
            let problem = RawProblem::new(scenario, forecast, t, energy, committed)?;
            let bc = BaselineConfig {
                moea,
                penalty_weight: config.penalty_weight,
                ..BaselineConfig::default()
            };
            let result = solve(&problem, &bc, handling)?;
            let pairs: Vec<(f64, f64)> = result.front.iter().map(Scored::pair).collect();
            match select_knee(&pairs) {
                Some(k) => {
                    let chosen = &result.front[k];
                    let flexible = scenario
                        .power_flexible
                        .iter()
                        .enumerate()
                        .map(|(c, app)| if app.is_active(t) { chosen.flexible_power[c][0] } else { 0.0 })
                        .collect();
                    Ok(Decision {
                        battery: chosen.battery_power[0],
                        flexible,
                        starts: chosen.starts.clone(),
                        record: SolveRecord {
                            slot: t,
                            front: pairs,
                            knee: Some(k),
                            log: result.log,
                            found_feasible: true,
                        },
                    })
                }
                None => Ok(Decision {
                    // no feasible schedule: idle battery, nominal appliances
                    battery: 0.0,
                    flexible: scenario
                        .power_flexible
                        .iter()
                        .map(|app| if app.is_active(t) { app.nominal_power } else { 0.0 })
                        .collect(),
                    starts: earliest_starts(scenario, t, committed)?,
                    record: SolveRecord {
                        slot: t,
                        front: Vec::new(),
                        knee: None,
                        log: result.log,
                        found_feasible: false,
                    },
                }),
            }
        }
    }
}

/// Clamps a requested battery power so the realized energy stays within
/// capacity and the power within the rate limit.
pub fn admissible_battery_power(scenario: &Scenario, energy: f64, requested: f64) -> f64 {
    let bat = &scenario.battery;
    let dt = scenario.dt();
    let retained = bat.leakage_per_slot * energy;
    let lo = (-bat.max_rate).max((bat.capacity_min - retained) / dt);
    let hi = bat.max_rate.min((bat.capacity_max - retained) / dt);
    if lo > hi {
        return hi;
    }
    requested.clamp(lo, hi)
}

fn realize_energy(scenario: &Scenario, energy: f64, p: f64) -> f64 {
    let bat = &scenario.battery;
    let e = bat.leakage_per_slot * energy + p * scenario.dt();
    if e < bat.capacity_min && e > bat.capacity_min - ENERGY_SNAP {
        bat.capacity_min
    } else if e > bat.capacity_max && e < bat.capacity_max + ENERGY_SNAP {
        bat.capacity_max
    } else {
        e
    }
}

struct Plant<'a> {
    scenario: &'a Scenario,
    energy: f64,
    committed: Vec<Option<usize>>,
    slots: Vec<SlotRecord>,
    first_forecast: Vec<Option<f64>>,
}

impl<'a> Plant<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        Plant {
            scenario,
            energy: scenario.battery.initial_energy,
            committed: vec![None; scenario.time_flexible.len()],
            slots: Vec::new(),
            first_forecast: vec![None; scenario.slot_count()],
        }
    }

    fn note_forecast(&mut self, t: usize, forecast: &ForecastBundle) {
        for (m, &p) in forecast.price.iter().enumerate() {
            self.first_forecast[t + m].get_or_insert(p);
        }
    }

    /// Commits start times due at `t`, applies the controls and advances the
    /// true dynamics by one slot.
    fn apply(&mut self, t: usize, battery: f64, flexible: &[f64], starts: &[usize]) {
        let s = self.scenario;
        let mut dissatisfaction = 0.0;
        for (i, app) in s.time_flexible.iter().enumerate() {
            if self.committed[i].is_none() && t >= app.window.start {
                let start = starts[i];
                self.committed[i] = Some(start);
                dissatisfaction += app.delay_penalty(start).unwrap_or(0.0);
            }
        }
        let p_s = admissible_battery_power(s, self.energy, battery);
        let energy_end = realize_energy(s, self.energy, p_s);

        let mut appliance_power = Vec::new();
        for (i, app) in s.time_flexible.iter().enumerate() {
            appliance_power.push(self.committed[i].map_or(0.0, |st| app.load(st, t)));
        }
        for (c, app) in s.power_flexible.iter().enumerate() {
            let p = if app.is_active(t) {
                flexible[c].clamp(app.min_power, app.max_power)
            } else {
                0.0
            };
            if app.is_active(t) {
                let dev = p - app.nominal_power;
                dissatisfaction += app.discomfort_weight * dev * dev;
            }
            appliance_power.push(p);
        }
        let inflexible = s.inflexible_true[t];
        let renewable = s.renewable_true[t];
        let p_con = inflexible + appliance_power.iter().sum::<f64>();
        let p_total = grid_exchange(p_con, p_s, renewable);
        let price = s.tariff.market_price[t];
        let cost = Tariff::effective_price(price, s.tariff.feed_in_rate, p_total) * p_total * s.dt();
        self.slots.push(SlotRecord {
            slot: t,
            price_true: price,
            price_forecast_t0: self.first_forecast[t].unwrap_or(price),
            renewable,
            inflexible_load: inflexible,
            battery_power: p_s,
            energy_start: self.energy,
            energy_end,
            appliance_power,
            p_total,
            cost,
            dissatisfaction,
        });
        self.energy = energy_end;
    }

    fn finish(self, solver: SolverKind, solves: Vec<SolveRecord>, started: Instant) -> SimulationTrace {
        SimulationTrace {
            solver,
            total_cost: self.slots.iter().map(|s| s.cost).sum(),
            total_dissatisfaction: self.slots.iter().map(|s| s.dissatisfaction).sum(),
            slots: self.slots,
            solves,
            committed: self.committed,
            wall_seconds: started.elapsed().as_secs_f64(),
        }
    }
}

/// Forecast drawn for slot `t`; depends only on the seed and the slot, so
/// every solver sees the same forecasts.
pub fn forecast_for_slot(
    scenario: &Scenario,
    config: &RunConfig,
    profile: &ErrorProfile,
    t: usize,
) -> Result<ForecastBundle> {
    let horizon = config.horizon.min(scenario.slot_count() - t);
    let mut rng = RandomStream::new(derive_seed(config.moea.seed, &[TAG_FORECAST, t as u64]), 0);
    make_forecast(scenario, t, horizon, profile, &mut rng)
}

/// Full-day receding-horizon run: solve, pick the knee, apply the first
/// control, advance the true system, repeat.
pub fn run_mpc_day(
    scenario: &Scenario,
    solver: SolverKind,
    config: &RunConfig,
    profile: &ErrorProfile,
) -> Result<SimulationTrace> {
    scenario.validate()?;
    let bad = config.violations();
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    let started = Instant::now();
    let mut cache = BasisCache::new(scenario, config);
    let mut plant = Plant::new(scenario);
    let mut solves = Vec::new();
    for t in 0..scenario.slot_count() {
        let forecast = forecast_for_slot(scenario, config, profile, t)?;
        plant.note_forecast(t, &forecast);
        let mut d = decide(scenario, solver, config, &mut cache, &forecast, t, plant.energy, &plant.committed)
            .map_err(|e| Error::Solver {
                slot: t + 1,
                source: Box::new(e),
            })?;
        if t > 0 {
            // generation fronts are kept for the first solve only
            d.record.log.fronts.clear();
        }
        plant.apply(t, d.battery, &d.flexible, &d.starts);
        solves.push(d.record);
    }
    Ok(plant.finish(solver, solves, started))
}

/// Solves once at slot 0 over the whole day and executes the plan open loop.
pub fn run_open_loop_day(scenario: &Scenario, config: &RunConfig) -> Result<SimulationTrace> {
    scenario.validate()?;
    let started = Instant::now();
    let n = scenario.slot_count();
    let mut cache = BasisCache::new(scenario, config);
    let (basis, ops) = cache.get(n)?;
    let forecast = ForecastBundle::exact(scenario, 0, n);
    let set = build_feasible_set_unchecked(scenario, basis, ops, [scenario.battery.initial_energy, 0.0], 0)?;
    let problem = Problem::new(scenario, &set, &forecast, basis, 0)?;
    let result = evolve(&problem, &config.solve_config(0))?;
    let pairs: Vec<(f64, f64)> = result.front.iter().map(Scored::pair).collect();
    let knee = select_knee(&pairs).ok_or_else(|| Error::Precondition("empty front".into()))?;
    let chosen = &result.front[knee];
    let u = reconstruct_controls(basis, &chosen.eta, scenario.power_flexible.len())?;
    let mut plant = Plant::new(scenario);
    plant.note_forecast(0, &forecast);
    for t in 0..n {
        let flexible: Vec<f64> = scenario
            .power_flexible
            .iter()
            .enumerate()
            .map(|(c, app)| if app.is_active(t) { app.nominal_power + u.get(1 + c, t) } else { 0.0 })
            .collect();
        plant.apply(t, u.get(0, t), &flexible, &chosen.starts);
    }
    let record = SolveRecord {
        slot: 0,
        front: pairs,
        knee: Some(knee),
        log: result.log,
        found_feasible: true,
    };
    Ok(plant.finish(SolverKind::Proposed, vec![record], started))
}

/// `100·(cost − reference)/reference`.
pub fn degradation_percent(cost: f64, reference: f64) -> f64 {
    100.0 * (cost - reference) / reference
}

pub fn degradation_metric(trace_with_errors: &SimulationTrace, trace_perfect: &SimulationTrace) -> f64 {
    degradation_percent(trace_with_errors.total_cost, trace_perfect.total_cost)
}

/// Normalized distance of each logged front to `ideal`.
pub fn manhattan_convergence(log: &ConvergenceLog, ideal: (f64, f64), ranges: (f64, f64)) -> Result<Vec<f64>> {
    if !(ranges.0 > 0.0 && ranges.1 > 0.0) {
        return Err(Error::Parameter(format!("ranges must be positive, got {ranges:?}")));
    }
    Ok(log
        .fronts
        .iter()
        .map(|f| normalized_manhattan(f, ideal, ranges))
        .collect())
}

/// Per-objective minimum and range over the union of several fronts.
pub fn union_ideal_and_ranges(fronts: &[&[(f64, f64)]]) -> Option<((f64, f64), (f64, f64))> {
    let all: Vec<(f64, f64)> = fronts.iter().flat_map(|f| f.iter().copied()).collect();
    if all.is_empty() {
        return None;
    }
    let (lo, hi) = crate::moea::bounds(&all);
    Some((
        lo,
        (crate::moea::range_or_one(hi.0 - lo.0), crate::moea::range_or_one(hi.1 - lo.1)),
    ))
}

/// Pearson correlation, `None` when either series is constant.
pub fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::tests::table2;

    fn tiny_config(seed: u64) -> RunConfig {
        RunConfig {
            moea: MoeaConfig {
                population_size: 8,
                max_iterations: 4,
                seed,
                ..MoeaConfig::default()
            },
            laguerre_order: 3,
            horizon: 4,
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_profile_is_exact() {
        let s = table2();
        let mut rng = RandomStream::new(0, 0);
        let f = make_forecast(&s, 3, 6, &ErrorProfile::zero(), &mut rng).unwrap();
        assert_eq!(f, ForecastBundle::exact(&s, 3, 6));
        assert!(make_forecast(&s, 20, 6, &ErrorProfile::zero(), &mut rng).is_err());
    }

    #[test]
    fn noise_is_bounded_and_centred() {
        let mut s = table2();
        s.tariff.market_price = vec![1.0; 24];
        let flat = Envelope { base: 0.1, slope: 0.0 };
        let profile = ErrorProfile { price: flat, renewable: flat, load: flat };
        let mut rng = RandomStream::new(5, 0);
        let mut sum = 0.0;
        let mut count = 0;
        for _ in 0..1000 {
            let f = make_forecast(&s, 0, 11, &profile, &mut rng).unwrap();
            assert_eq!(f.price[0], 1.0);
            for &p in &f.price[1..] {
                let e = p - 1.0;
                assert!(e.abs() <= 0.1);
                sum += e;
                count += 1;
            }
        }
        assert_eq!(count, 10_000);
        assert!((sum / count as f64).abs() < 0.005);
    }

    #[test]
    fn admissible_power_respects_capacity() {
        let s = table2();
        let rho = s.battery.leakage_per_slot;
        assert_eq!(admissible_battery_power(&s, 3.0, 0.0), 3.0 - rho * 3.0);
        assert_eq!(admissible_battery_power(&s, 9.5, 3.0), 10.0 - rho * 9.5);
        assert_eq!(admissible_battery_power(&s, 8.0, -7.0), -3.0);
    }

    #[test]
    fn no_flexibility_costs_do_nothing_baseline() {
        let mut s = table2();
        s.battery.max_rate = 0.0;
        s.battery.capacity_min = 0.0;
        s.time_flexible.clear();
        s.power_flexible.clear();
        let trace = run_mpc_day(&s, SolverKind::Proposed, &tiny_config(1), &ErrorProfile::zero()).unwrap();
        let expect: f64 = (0..24).map(|t| 5.0 * s.inflexible_true[t]).sum();
        assert!((trace.total_cost - expect).abs() < 1e-12);
    }

    #[test]
    fn day_runs_commit_once_and_stay_in_bounds() {
        let s = table2();
        for solver in SolverKind::ALL {
            let a = run_mpc_day(&s, solver, &tiny_config(2), &ErrorProfile::default()).unwrap();
            assert_eq!(a.slots.len(), 24);
            let start = a.committed[0].unwrap();
            let running: Vec<usize> = a.slots.iter().filter(|r| r.appliance_power[0] > 0.0).map(|r| r.slot).collect();
            assert_eq!(running, vec![start, start + 1], "{solver}");
            for e in a.energy_path() {
                assert!((3.0..=10.0).contains(&e), "{solver}: {e}");
            }
            let sum: f64 = a.slots.iter().map(|r| r.cost).sum();
            assert_eq!(sum, a.total_cost);
            let b = run_mpc_day(&s, solver, &tiny_config(2), &ErrorProfile::default()).unwrap();
            assert_eq!(a.slots, b.slots);
        }
    }

    #[test]
    fn metrics() {
        assert_eq!(degradation_percent(5.0, 5.0), 0.0);
        assert!((degradation_percent(401.20, 399.11) - 0.5237).abs() < 1e-3);
        assert!((degradation_percent(408.36, 399.11) - 2.3177).abs() < 1e-3);
        let log = ConvergenceLog {
            fronts: vec![vec![(400.0, 7.5)], vec![(399.0, 7.4), (401.0, 7.0)]],
            ..ConvergenceLog::default()
        };
        let s = manhattan_convergence(&log, (399.0, 7.4), (10.0, 0.5)).unwrap();
        assert!((s[0] - 0.3).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
        assert!(manhattan_convergence(&log, (0.0, 0.0), (0.0, 1.0)).is_err());
        assert!((correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(correlation(&[1.0, 1.0], &[0.0, 1.0]), None);
    }

    #[test]
    fn solver_names_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("nsga".parse::<SolverKind>().is_err());
    }
}

//! Household entities and deterministic power accounting.
//!
//! Slots are zero-based everywhere inside the crate. Configuration files and
//! CSV outputs use one-based slots (slot 1 is the first interval of the day);
//! [`Slot::from_one_based`] and [`Slot::one_based`] convert between the two.

use crate::error::{Error, Result};

/// Absolute tolerance used when checking physical bounds on computed powers.
pub const POWER_TOLERANCE: f64 = 1e-9;

/// Conversion helper between internal zero-based and external one-based slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Slot(pub usize);

impl Slot {
    pub fn from_one_based(slot: usize) -> Option<Slot> {
        slot.checked_sub(1).map(Slot)
    }

    pub fn one_based(self) -> usize {
        self.0 + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub slot_count: usize,
    /// Hours per slot.
    pub slot_duration: f64,
    /// Wall-clock label of the first slot, e.g. `"08:00"`.
    pub origin_label: String,
}

impl TimeGrid {
    pub fn hourly(slot_count: usize) -> Self {
        TimeGrid {
            slot_count,
            slot_duration: 1.0,
            origin_label: "08:00".to_string(),
        }
    }

    fn check(&self, out: &mut Vec<String>) {
        if self.slot_count == 0 {
            out.push("grid.slot_count must be at least 1".into());
        }
        if !(self.slot_duration > 0.0) || !self.slot_duration.is_finite() {
            out.push(format!(
                "grid.slot_duration must be positive, got {}",
                self.slot_duration
            ));
        }
    }
}

/// Closed slot interval `[start, end]`, zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn new(start: usize, end: usize) -> Self {
        Window { start, end }
    }

    /// Builds a window from one-based inclusive bounds `[alpha, beta]`.
    pub fn one_based(alpha: usize, beta: usize) -> Self {
        Window {
            start: alpha.saturating_sub(1),
            end: beta.saturating_sub(1),
        }
    }

    pub fn contains(&self, slot: usize) -> bool {
        self.start <= slot && slot <= self.end
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    fn check(&self, what: &str, slot_count: usize, out: &mut Vec<String>) {
        if self.start > self.end {
            out.push(format!(
                "{what}: window [{}, {}] is reversed",
                self.start + 1,
                self.end + 1
            ));
        }
        if self.end >= slot_count {
            out.push(format!(
                "{what}: window [{}, {}] exceeds the {slot_count}-slot grid",
                self.start + 1,
                self.end + 1
            ));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InflexibleAppliance {
    pub name: String,
    /// kW while on.
    pub rated_power: f64,
    pub windows: Vec<Window>,
}

impl InflexibleAppliance {
    pub fn is_on(&self, slot: usize) -> bool {
        self.windows.iter().any(|w| w.contains(slot))
    }

    pub fn load(&self, slot: usize) -> f64 {
        if self.is_on(slot) {
            self.rated_power
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeFlexibleAppliance {
    pub name: String,
    pub rated_power: f64,
    pub window: Window,
    /// Number of consecutive slots the appliance runs once started.
    pub duration: usize,
    pub requested_start: usize,
    pub discomfort_weight: f64,
    pub delay_exponent: f64,
}

impl TimeFlexibleAppliance {
    /// Latest start that still finishes inside the window.
    pub fn latest_start(&self) -> usize {
        (self.window.end + 1).saturating_sub(self.duration)
    }

    pub fn start_is_admissible(&self, start: usize) -> bool {
        self.window.start <= start && start <= self.latest_start()
    }

    pub fn is_running(&self, start: usize, slot: usize) -> bool {
        start <= slot && slot < start + self.duration
    }

    pub fn load(&self, start: usize, slot: usize) -> f64 {
        if self.is_running(start, slot) {
            self.rated_power
        } else {
            0.0
        }
    }

    /// Admissible start range `[lo, hi]` when planning at `t_now` (uncommitted).
    ///
    /// Starts never precede the requested start, and never precede `t_now`.
    pub fn planning_range(&self, t_now: usize) -> Option<(usize, usize)> {
        let lo = self.requested_start.max(t_now).max(self.window.start);
        let hi = self.latest_start();
        (lo <= hi).then_some((lo, hi))
    }

    /// Delay penalty `θ·(t_b − t_req)^k`.
    pub fn delay_penalty(&self, start: usize) -> Result<f64> {
        if start < self.requested_start {
            return Err(Error::ConstraintViolation(format!(
                "{}: start {} precedes requested start {}",
                self.name,
                start + 1,
                self.requested_start + 1
            )));
        }
        let delay = (start - self.requested_start) as f64;
        Ok(self.discomfort_weight * delay.powf(self.delay_exponent))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlexibleAppliance {
    pub name: String,
    pub min_power: f64,
    pub max_power: f64,
    pub window: Window,
    /// Weight of the quadratic deviation loss, 1/kW².
    pub discomfort_weight: f64,
    pub nominal_power: f64,
}

impl PowerFlexibleAppliance {
    pub fn is_active(&self, slot: usize) -> bool {
        self.window.contains(slot)
    }

    /// Bounds on the deviation from nominal power.
    pub fn deviation_bounds(&self) -> (f64, f64) {
        (
            self.min_power - self.nominal_power,
            self.max_power - self.nominal_power,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Battery {
    /// Fraction of stored energy retained over one slot (ρ).
    pub leakage_per_slot: f64,
    /// kW, symmetric charge/discharge limit.
    pub max_rate: f64,
    pub capacity_min: f64,
    pub capacity_max: f64,
    pub initial_energy: f64,
}

impl Battery {
    /// Per-slot retention for a given daily retention and slot length in hours.
    pub fn per_slot_retention(daily_retention: f64, slot_duration: f64) -> f64 {
        daily_retention.powf(slot_duration / 24.0)
    }

    fn check(&self, out: &mut Vec<String>) {
        let rho = self.leakage_per_slot;
        if !(rho > 0.0 && rho <= 1.0) {
            out.push(format!("battery.leakage: per-slot retention {rho} not in (0, 1]"));
        }
        if !(self.max_rate >= 0.0) {
            out.push(format!("battery.max_rate must be nonnegative, got {}", self.max_rate));
        }
        if !(0.0 <= self.capacity_min
            && self.capacity_min <= self.initial_energy
            && self.initial_energy <= self.capacity_max)
        {
            out.push(format!(
                "battery: need 0 <= capacity_min ({}) <= initial_energy ({}) <= capacity_max ({})",
                self.capacity_min, self.initial_energy, self.capacity_max
            ));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tariff {
    /// Price per kWh for each slot.
    pub market_price: Vec<f64>,
    /// Constant price per kWh paid for export.
    pub feed_in_rate: f64,
}

impl Tariff {
    /// Price applied to a net grid exchange: market price on import, feed-in rate otherwise.
    pub fn effective_price(market: f64, feed_in: f64, p_total: f64) -> f64 {
        if p_total > 0.0 {
            market
        } else {
            feed_in
        }
    }

    fn check(&self, out: &mut Vec<String>) {
        if let Some((i, p)) = self
            .market_price
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p >= 0.0))
        {
            out.push(format!("tariff: market price {p} at slot {} is negative", i + 1));
        }
        if !(self.feed_in_rate >= 0.0) {
            out.push(format!("tariff.feed_in_rate {} is negative", self.feed_in_rate));
        }
        let min_price = self
            .market_price
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if self.feed_in_rate > min_price {
            out.push(format!(
                "tariff.feed_in_rate {} exceeds the minimum market price {min_price}",
                self.feed_in_rate
            ));
        }
    }
}

/// A complete household instance over one day.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: TimeGrid,
    pub inflexible: Vec<InflexibleAppliance>,
    pub time_flexible: Vec<TimeFlexibleAppliance>,
    pub power_flexible: Vec<PowerFlexibleAppliance>,
    pub battery: Battery,
    pub tariff: Tariff,
    /// True renewable generation per slot, kW.
    pub renewable_true: Vec<f64>,
    /// True uncontrollable load per slot, kW.
    pub inflexible_true: Vec<f64>,
    pub notes: String,
}

impl Scenario {
    /// Checks every type invariant and returns the full list of violations.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.grid.slot_count;
        self.grid.check(&mut out);

        for a in &self.inflexible {
            let what = format!("inflexible appliance {}", a.name);
            if !(a.rated_power >= 0.0) {
                out.push(format!("{what}: rated_power {} is negative", a.rated_power));
            }
            let mut windows = a.windows.clone();
            windows.sort_by_key(|w| w.start);
            for w in &windows {
                w.check(&what, n, &mut out);
            }
            if windows.windows(2).any(|p| p[1].start <= p[0].end) {
                out.push(format!("{what}: windows overlap"));
            }
        }

        for b in &self.time_flexible {
            let what = format!("time-flexible appliance {}", b.name);
            b.window.check(&what, n, &mut out);
            if !(b.rated_power >= 0.0) {
                out.push(format!("{what}: rated_power {} is negative", b.rated_power));
            }
            if b.duration == 0 || b.window.start + b.duration > b.window.end + 1 {
                out.push(format!(
                    "{what}: duration {} does not fit window [{}, {}]",
                    b.duration,
                    b.window.start + 1,
                    b.window.end + 1
                ));
            } else if !b.start_is_admissible(b.requested_start) {
                out.push(format!(
                    "{what}: requested_start {} outside [{}, {}]",
                    b.requested_start + 1,
                    b.window.start + 1,
                    b.latest_start() + 1
                ));
            }
            if !(b.delay_exponent >= 1.0) {
                out.push(format!("{what}: delay_exponent {} < 1", b.delay_exponent));
            }
            if !(b.discomfort_weight >= 0.0) {
                out.push(format!("{what}: discomfort_weight is negative"));
            }
        }

        for c in &self.power_flexible {
            let what = format!("power-flexible appliance {}", c.name);
            c.window.check(&what, n, &mut out);
            if c.min_power > c.max_power {
                out.push(format!(
                    "{what}: min_power {} exceeds max_power {}",
                    c.min_power, c.max_power
                ));
            } else if !(0.0 <= c.min_power
                && c.min_power <= c.nominal_power
                && c.nominal_power <= c.max_power)
            {
                out.push(format!(
                    "{what}: need 0 <= min_power ({}) <= nominal_power ({}) <= max_power ({})",
                    c.min_power, c.nominal_power, c.max_power
                ));
            }
            if !(c.discomfort_weight >= 0.0) {
                out.push(format!("{what}: discomfort_weight is negative"));
            }
        }

        self.battery.check(&mut out);
        self.tariff.check(&mut out);

        for (name, len) in [
            ("market price", self.tariff.market_price.len()),
            ("renewable", self.renewable_true.len()),
            ("inflexible load", self.inflexible_true.len()),
        ] {
            if len != n {
                out.push(format!("{name} series has {len} entries, grid has {n} slots"));
            }
        }
        if self.renewable_true.iter().any(|p| !(*p >= 0.0)) {
            out.push("renewable series contains negative values".into());
        }
        if self.inflexible_true.iter().any(|p| !(*p >= 0.0)) {
            out.push("inflexible load series contains negative values".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn slot_count(&self) -> usize {
        self.grid.slot_count
    }

    pub fn dt(&self) -> f64 {
        self.grid.slot_duration
    }

    /// Uncontrollable load derived from the inflexible appliance list.
    pub fn appliance_inflexible_series(&self) -> Vec<f64> {
        (0..self.slot_count())
            .map(|t| self.inflexible.iter().map(|a| a.load(t)).sum())
            .collect()
    }

    fn check_slot(&self, slot: usize) -> Result<()> {
        if slot >= self.slot_count() {
            return Err(Error::Range {
                what: "slot",
                index: slot,
                limit: self.slot_count(),
            });
        }
        Ok(())
    }
}

/// `Σ_a γ_a·X_a(slot)` over the inflexible appliances.
pub fn inflexible_load(scenario: &Scenario, slot: usize) -> Result<f64> {
    scenario.check_slot(slot)?;
    Ok(scenario.inflexible.iter().map(|a| a.load(slot)).sum())
}

/// `Σ_b γ_b·X_b(slot)` for the given start per appliance.
pub fn time_flexible_load(
    appliances: &[TimeFlexibleAppliance],
    starts: &[usize],
    slot: usize,
) -> Result<f64> {
    if starts.len() != appliances.len() {
        return Err(Error::Parameter(format!(
            "{} start times for {} time-flexible appliances",
            starts.len(),
            appliances.len()
        )));
    }
    let mut total = 0.0;
    for (b, &start) in appliances.iter().zip(starts) {
        if !b.start_is_admissible(start) {
            return Err(Error::ConstraintViolation(format!(
                "{}: start {} outside [{}, {}]",
                b.name,
                start + 1,
                b.window.start + 1,
                b.latest_start() + 1
            )));
        }
        total += b.load(start, slot);
    }
    Ok(total)
}

/// Total appliance consumption at `slot`.
///
/// `flexible_powers[c][t]` is the commanded power of power-flexible appliance
/// `c` at slot `t`; it is masked to zero outside the appliance window.
pub fn total_consumption(
    scenario: &Scenario,
    starts: &[usize],
    flexible_powers: &[Vec<f64>],
    slot: usize,
) -> Result<f64> {
    let inflexible = inflexible_load(scenario, slot)?;
    let shiftable = time_flexible_load(&scenario.time_flexible, starts, slot)?;
    if flexible_powers.len() != scenario.power_flexible.len() {
        return Err(Error::Parameter(format!(
            "{} power profiles for {} power-flexible appliances",
            flexible_powers.len(),
            scenario.power_flexible.len()
        )));
    }
    let mut flexible = 0.0;
    for (c, profile) in scenario.power_flexible.iter().zip(flexible_powers) {
        if c.is_active(slot) {
            flexible += *profile.get(slot).ok_or(Error::Range {
                what: "power profile slot",
                index: slot,
                limit: profile.len(),
            })?;
        }
    }
    Ok(inflexible + shiftable + flexible)
}

/// Net grid power; negative values are exports.
pub fn grid_exchange(p_con: f64, p_storage: f64, p_renewable: f64) -> f64 {
    p_con + p_storage - p_renewable
}

/// One slot of battery dynamics, `E' = ρ·E + P_s·Δt`.
///
/// Capacity bounds are not checked here.
pub fn step_battery(energy: f64, p_storage: f64, battery: &Battery, dt: f64) -> Result<f64> {
    if p_storage.abs() > battery.max_rate + POWER_TOLERANCE {
        return Err(Error::ConstraintViolation(format!(
            "battery power {p_storage} exceeds rate limit {}",
            battery.max_rate
        )));
    }
    Ok(battery.leakage_per_slot * energy + p_storage * dt)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// The household from the reference case study, with a flat price.
    pub(crate) fn table2() -> Scenario {
        let n = 24;
        let inflexible = vec![
            InflexibleAppliance {
                name: "a1".into(),
                rated_power: 0.2,
                windows: vec![Window::one_based(1, 24)],
            },
            InflexibleAppliance {
                name: "a2".into(),
                rated_power: 1.2,
                windows: vec![Window::one_based(24, 24)],
            },
            InflexibleAppliance {
                name: "a3".into(),
                rated_power: 1.2,
                windows: vec![
                    Window::one_based(1, 1),
                    Window::one_based(10, 10),
                    Window::one_based(13, 13),
                ],
            },
        ];
        let mut s = Scenario {
            grid: TimeGrid::hourly(n),
            inflexible,
            time_flexible: vec![TimeFlexibleAppliance {
                name: "b1".into(),
                rated_power: 0.7,
                window: Window::one_based(11, 23),
                duration: 2,
                requested_start: 10,
                discomfort_weight: 0.001,
                delay_exponent: 3.0,
            }],
            power_flexible: vec![
                PowerFlexibleAppliance {
                    name: "c1".into(),
                    min_power: 0.2,
                    max_power: 0.8,
                    window: Window::one_based(11, 16),
                    discomfort_weight: 1.0,
                    nominal_power: 0.8,
                },
                PowerFlexibleAppliance {
                    name: "c2".into(),
                    min_power: 0.0,
                    max_power: 1.4,
                    window: Window::one_based(1, 24),
                    discomfort_weight: 0.4,
                    nominal_power: 1.4,
                },
            ],
            battery: Battery {
                leakage_per_slot: Battery::per_slot_retention(0.9, 1.0),
                max_rate: 3.0,
                capacity_min: 3.0,
                capacity_max: 10.0,
                initial_energy: 4.0,
            },
            tariff: Tariff {
                market_price: vec![5.0; n],
                feed_in_rate: 2.0,
            },
            renewable_true: vec![0.0; n],
            inflexible_true: vec![],
            notes: String::new(),
        };
        s.inflexible_true = s.appliance_inflexible_series();
        s
    }

    #[test]
    fn table2_is_valid() {
        assert_eq!(table2().violations(), Vec::<String>::new());
    }

    #[test]
    fn inflexible_load_matches_table2() {
        let s = table2();
        assert!((inflexible_load(&s, 0).unwrap() - 1.4).abs() < 1e-12);
        assert!((inflexible_load(&s, 1).unwrap() - 0.2).abs() < 1e-12);
        assert!(matches!(inflexible_load(&s, 24), Err(Error::Range { .. })));

        let mut empty = s.clone();
        empty.inflexible.clear();
        assert_eq!(inflexible_load(&empty, 5).unwrap(), 0.0);
    }

    #[test]
    fn time_flexible_load_runs_for_duration() {
        let s = table2();
        let b = &s.time_flexible;
        // start 11, slot 12 (one-based)
        assert_eq!(time_flexible_load(b, &[10], 11).unwrap(), 0.7);
        assert_eq!(time_flexible_load(b, &[10], 12).unwrap(), 0.0);
        assert!(matches!(
            time_flexible_load(b, &[22], 22),
            Err(Error::ConstraintViolation(_))
        ));
        assert!(time_flexible_load(b, &[9], 9).is_err());

        let mut two = b.clone();
        two.push(TimeFlexibleAppliance {
            rated_power: 0.5,
            ..b[0].clone()
        });
        assert!((time_flexible_load(&two, &[10, 11], 11).unwrap() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn total_consumption_composes_parts() {
        let s = table2();
        let zero = vec![vec![0.0; 24]; 2];
        assert!((total_consumption(&s, &[10], &zero, 1).unwrap() - 0.2).abs() < 1e-12);

        // one-based slot 11: a1 0.2, b1 0.7, c1 0.8, c2 1.4
        let nominal = vec![vec![0.8; 24], vec![1.4; 24]];
        let p = total_consumption(&s, &[10], &nominal, 10).unwrap();
        assert!((p - 3.1).abs() < 1e-12);
        // c1 is masked outside its window
        let p = total_consumption(&s, &[10], &nominal, 2).unwrap();
        assert!((p - 1.6).abs() < 1e-12);
    }

    #[test]
    fn grid_exchange_signs() {
        assert!((grid_exchange(3.1, -1.0, 0.5) - 1.6).abs() < 1e-12);
        assert_eq!(grid_exchange(1.0, 0.0, 2.0), -1.0);
        assert_eq!(grid_exchange(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn battery_step_and_leakage() {
        let mut b = table2().battery;
        let e = step_battery(4.0, 1.0, &b, 1.0).unwrap();
        // 0.9^(1/24)·4 + 1 = 4.9824784…
        assert!((e - 4.982_478).abs() < 1e-4, "{e}");

        let mut e = 4.0;
        for _ in 0..24 {
            e = step_battery(e, 0.0, &b, 1.0).unwrap();
        }
        assert!((e - 3.6).abs() < 1e-6);

        b.leakage_per_slot = 1.0;
        assert_eq!(step_battery(4.0, 1.0, &b, 1.0).unwrap(), 5.0);
        assert!(step_battery(4.0, 3.5, &b, 1.0).is_err());
    }

    #[test]
    fn slot_conversion_is_bijective() {
        for s in 1..100 {
            assert_eq!(Slot::from_one_based(s).unwrap().one_based(), s);
        }
        assert_eq!(Slot::from_one_based(0), None);
    }

    #[test]
    fn validation_reports_all_problems() {
        let mut s = table2();
        s.power_flexible[0].min_power = 0.9;
        s.tariff.feed_in_rate = 6.0;
        let v = s.violations();
        assert_eq!(v.len(), 2, "{v:?}");
        assert!(v[0].contains("c1"));
        assert!(v[1].contains("feed_in_rate"));
    }
}

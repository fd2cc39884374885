//! Energy cost and user dissatisfaction over a prediction horizon.

use crate::domain::{grid_exchange, Scenario, Tariff};
use crate::error::{Error, Result};
use crate::laguerre::{reconstruct_controls, ControlMatrix, LaguerreBasis};
use crate::moea::Chromosome;

/// Predicted exogenous series over the horizon starting at `t_now`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastBundle {
    pub price: Vec<f64>,
    pub renewable: Vec<f64>,
    pub inflexible_load: Vec<f64>,
}

impl ForecastBundle {
    /// The true series sliced to `[t_now, t_now + horizon)`.
    pub fn exact(scenario: &Scenario, t_now: usize, horizon: usize) -> Self {
        let r = t_now..t_now + horizon;
        ForecastBundle {
            price: scenario.tariff.market_price[r.clone()].to_vec(),
            renewable: scenario.renewable_true[r.clone()].to_vec(),
            inflexible_load: scenario.inflexible_true[r].to_vec(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.price.len()
    }

    fn check(&self, horizon: usize) -> Result<()> {
        if self.price.len() != horizon
            || self.renewable.len() != horizon
            || self.inflexible_load.len() != horizon
        {
            return Err(Error::Parameter(format!(
                "forecast lengths ({}, {}, {}) do not match horizon {horizon}",
                self.price.len(),
                self.renewable.len(),
                self.inflexible_load.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValues {
    pub cost: f64,
    pub dissatisfaction: f64,
    pub time_flexible: f64,
    pub power_flexible: f64,
}

impl ObjectiveValues {
    pub fn pair(&self) -> (f64, f64) {
        (self.cost, self.dissatisfaction)
    }
}

fn check_controls(scenario: &Scenario, controls: &ControlMatrix) -> Result<()> {
    if controls.signals() != 1 + scenario.power_flexible.len() {
        return Err(Error::Parameter(format!(
            "control matrix has {} signals, expected {}",
            controls.signals(),
            1 + scenario.power_flexible.len()
        )));
    }
    Ok(())
}

/// Absolute power of every power-flexible appliance at horizon offset `m`.
pub fn flexible_power(scenario: &Scenario, controls: &ControlMatrix, t_now: usize, m: usize, c: usize) -> f64 {
    let app = &scenario.power_flexible[c];
    if app.is_active(t_now + m) {
        app.nominal_power + controls.get(1 + c, m)
    } else {
        0.0
    }
}

/// Net grid power at each horizon offset.
pub fn net_power(
    scenario: &Scenario,
    forecast: &ForecastBundle,
    controls: &ControlMatrix,
    starts: &[usize],
    t_now: usize,
) -> Result<Vec<f64>> {
    check_controls(scenario, controls)?;
    let horizon = controls.horizon();
    forecast.check(horizon)?;
    if starts.len() != scenario.time_flexible.len() {
        return Err(Error::Parameter(format!(
            "{} start times for {} time-flexible appliances",
            starts.len(),
            scenario.time_flexible.len()
        )));
    }
    for (b, &s) in scenario.time_flexible.iter().zip(starts) {
        if !b.start_is_admissible(s) {
            return Err(Error::ConstraintViolation(format!(
                "{}: start {} outside its window",
                b.name,
                s + 1
            )));
        }
    }
    Ok((0..horizon)
        .map(|m| {
            let slot = t_now + m;
            let shiftable: f64 = scenario
                .time_flexible
                .iter()
                .zip(starts)
                .map(|(b, &s)| b.load(s, slot))
                .sum();
            let flexible: f64 = (0..scenario.power_flexible.len())
                .map(|c| flexible_power(scenario, controls, t_now, m, c))
                .sum();
            let p_con = forecast.inflexible_load[m] + shiftable + flexible;
            grid_exchange(p_con, controls.get(0, m), forecast.renewable[m])
        })
        .collect())
}

/// `Σ_m λ̃(t+m)·P_total(t+m)·Δt`, with the feed-in rate on export slots.
pub fn evaluate_cost(
    scenario: &Scenario,
    forecast: &ForecastBundle,
    controls: &ControlMatrix,
    starts: &[usize],
    t_now: usize,
) -> Result<f64> {
    let p = net_power(scenario, forecast, controls, starts, t_now)?;
    let fit = scenario.tariff.feed_in_rate;
    let dt = scenario.dt();
    Ok(p.iter()
        .zip(&forecast.price)
        .map(|(&p, &price)| Tariff::effective_price(price, fit, p) * p * dt)
        .sum())
}

/// Returns `(F_tf, F_pf, F_tf + F_pf)`.
pub fn evaluate_dissatisfaction(
    scenario: &Scenario,
    controls: &ControlMatrix,
    starts: &[usize],
    t_now: usize,
) -> Result<(f64, f64, f64)> {
    check_controls(scenario, controls)?;
    let mut f_tf = 0.0;
    for (b, &s) in scenario.time_flexible.iter().zip(starts) {
        f_tf += b.delay_penalty(s)?;
    }
    let mut f_pf = 0.0;
    for (c, app) in scenario.power_flexible.iter().enumerate() {
        for m in 0..controls.horizon() {
            if app.is_active(t_now + m) {
                let dev = controls.get(1 + c, m);
                f_pf += app.discomfort_weight * dev * dev;
            }
        }
    }
    Ok((f_tf, f_pf, f_tf + f_pf))
}

/// Both objectives for a set of controls.
pub fn evaluate_controls(
    scenario: &Scenario,
    forecast: &ForecastBundle,
    controls: &ControlMatrix,
    starts: &[usize],
    t_now: usize,
) -> Result<ObjectiveValues> {
    let cost = evaluate_cost(scenario, forecast, controls, starts, t_now)?;
    let (time_flexible, power_flexible, dissatisfaction) =
        evaluate_dissatisfaction(scenario, controls, starts, t_now)?;
    Ok(ObjectiveValues {
        cost,
        dissatisfaction,
        time_flexible,
        power_flexible,
    })
}

pub fn evaluate(
    chromosome: &Chromosome,
    scenario: &Scenario,
    forecast: &ForecastBundle,
    basis: &LaguerreBasis,
    t_now: usize,
) -> Result<ObjectiveValues> {
    let controls = reconstruct_controls(basis, &chromosome.eta, scenario.power_flexible.len())?;
    evaluate_controls(scenario, forecast, &controls, &chromosome.starts, t_now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::tests::table2;
    use crate::laguerre::build_basis;

    #[test]
    fn feed_in_rate_applies_to_exports() {
        let mut s = table2();
        s.inflexible.clear();
        s.time_flexible.clear();
        s.power_flexible.clear();
        s.tariff.feed_in_rate = 5.0;
        let forecast = ForecastBundle {
            price: vec![10.0, 20.0],
            renewable: vec![0.0, 1.0],
            inflexible_load: vec![0.0, 0.0],
        };
        let controls = ControlMatrix::from_rows(vec![vec![1.0, 0.0]]);
        let cost = evaluate_cost(&s, &forecast, &controls, &[], 0).unwrap();
        assert_eq!(cost, 10.0 * 1.0 + 5.0 * -1.0);

        let idle = ControlMatrix::zeros(1, 2);
        let none = ForecastBundle {
            renewable: vec![0.0; 2],
            ..forecast
        };
        assert_eq!(evaluate_cost(&s, &none, &idle, &[], 0).unwrap(), 0.0);
    }

    #[test]
    fn delay_penalty_is_cubic() {
        let s = table2();
        let controls = ControlMatrix::zeros(3, 4);
        let (tf, pf, total) = evaluate_dissatisfaction(&s, &controls, &[13], 0).unwrap();
        assert!((tf - 0.027).abs() < 1e-15);
        assert_eq!(pf, 0.0);
        assert_eq!(total, tf);
        assert!(evaluate_dissatisfaction(&s, &controls, &[9], 0).is_err());
    }

    #[test]
    fn taguchi_loss_over_active_slots() {
        let mut s = table2();
        s.power_flexible.truncate(1);
        // horizon covers slots 9..=20; c1 active on 10..=15
        let mut controls = ControlMatrix::zeros(2, 12);
        for m in 0..12 {
            controls.set(1, m, -0.2);
        }
        let (_, pf, _) = evaluate_dissatisfaction(&s, &controls, &[10], 9).unwrap();
        assert!((pf - 0.24).abs() < 1e-12);
    }

    #[test]
    fn zero_plan_costs_nominal_load() {
        let s = table2();
        let basis = build_basis(0.8, 4, 20).unwrap();
        let forecast = ForecastBundle::exact(&s, 0, 20);
        let ch = Chromosome::new(vec![10], vec![0.0; 12]);
        let v = evaluate(&ch, &s, &forecast, &basis, 0).unwrap();
        assert_eq!(v.dissatisfaction, 0.0);
        let mut expect = 0.0;
        for t in 0..20 {
            let mut load = s.inflexible_true[t] + 1.4;
            if (10..=15).contains(&t) {
                load += 0.8;
            }
            if t == 10 || t == 11 {
                load += 0.7;
            }
            expect += 5.0 * load;
        }
        assert!((v.cost - expect).abs() < 1e-9);

        let later = Chromosome::new(vec![12], vec![0.0; 12]);
        let w = evaluate(&later, &s, &forecast, &basis, 0).unwrap();
        assert_eq!(w.power_flexible, v.power_flexible);
        assert!(w.time_flexible > v.time_flexible);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let s = table2();
        let f = ForecastBundle::exact(&s, 0, 3);
        assert!(evaluate_cost(&s, &f, &ControlMatrix::zeros(2, 3), &[10], 0).is_err());
        assert!(evaluate_cost(&s, &f, &ControlMatrix::zeros(3, 4), &[10], 0).is_err());
        assert!(evaluate_cost(&s, &f, &ControlMatrix::zeros(3, 3), &[], 0).is_err());
    }
}

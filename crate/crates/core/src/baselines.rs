//! Reference NSGA-II solvers over raw per-slot decision variables.
//!
//! Both baselines search battery and appliance power directly, with box
//! clamping but no knowledge of the battery energy dynamics. Constraint
//! handling differs: one adds a weighted violation to both objectives, the
//! other ranks by constraint domination.

use rayon::prelude::*;

use crate::domain::Scenario;
use crate::error::{Error, Result};
use crate::laguerre::ControlMatrix;
use crate::moea::{
    bounds, crowding_distance, dominates, draw_starts, nondominated_sort_by, select_by_rank,
    start_ranges, Archive, ConvergenceLog, MoeaConfig, Scored,
};
use crate::objectives::{evaluate_controls, ForecastBundle, ObjectiveValues};
use crate::sampler::RandomStream;

/// Violations at or below this are treated as feasible.
pub const FEASIBLE_VIOLATION: f64 = 1e-6;

/// RNG phase tags; each constraint-handling rule draws its own streams.
fn phase_tags(handling: ConstraintHandling) -> (u64, u64) {
    match handling {
        ConstraintHandling::Penalty => (11, 12),
        ConstraintHandling::ConstraintDomination => (21, 22),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintHandling {
    Penalty,
    ConstraintDomination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub moea: MoeaConfig,
    /// ψ, multiplying the violation in both penalized objectives.
    pub penalty_weight: f64,
    /// Mutation standard deviation as a fraction of each variable's range.
    pub sigma_fraction: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            moea: MoeaConfig::default(),
            penalty_weight: 1e4,
            sigma_fraction: 0.05,
        }
    }
}

impl BaselineConfig {
    pub fn from_moea(moea: MoeaConfig) -> Self {
        BaselineConfig {
            moea,
            ..BaselineConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawChromosome {
    pub starts: Vec<usize>,
    /// Battery power per horizon slot.
    pub battery_power: Vec<f64>,
    /// Absolute power per power-flexible appliance and horizon slot; entries
    /// outside the appliance window are ignored.
    pub flexible_power: Vec<Vec<f64>>,
    pub violation: f64,
    pub objectives: Option<ObjectiveValues>,
}

impl Scored for RawChromosome {
    fn pair(&self) -> (f64, f64) {
        self.objectives.expect("chromosome not evaluated").pair()
    }
}

impl RawChromosome {
    pub fn horizon(&self) -> usize {
        self.battery_power.len()
    }

    pub fn is_feasible(&self) -> bool {
        self.violation <= FEASIBLE_VIOLATION
    }

    /// Battery power plus deviations from nominal, the layout the objectives use.
    pub fn controls(&self, scenario: &Scenario, t_now: usize) -> ControlMatrix {
        let m_len = self.horizon();
        let mut u = ControlMatrix::zeros(1 + scenario.power_flexible.len(), m_len);
        for m in 0..m_len {
            u.set(0, m, self.battery_power[m]);
            for (c, app) in scenario.power_flexible.iter().enumerate() {
                if app.is_active(t_now + m) {
                    u.set(1 + c, m, self.flexible_power[c][m] - app.nominal_power);
                }
            }
        }
        u
    }
}

/// Total clamped excess over rate, appliance-power and energy bounds, with
/// the energy trajectory simulated forward from `energy0`.
pub fn violation_measure(
    raw: &RawChromosome,
    scenario: &Scenario,
    energy0: f64,
    t_now: usize,
) -> Result<f64> {
    let m_len = raw.horizon();
    if raw.flexible_power.len() != scenario.power_flexible.len()
        || raw.flexible_power.iter().any(|v| v.len() != m_len)
    {
        return Err(Error::Parameter(
            "raw chromosome dimensions do not match the scenario".into(),
        ));
    }
    let bat = &scenario.battery;
    let dt = scenario.dt();
    let excess = |v: f64, lo: f64, hi: f64| (v - hi).max(0.0) + (lo - v).max(0.0);
    let mut total = 0.0;
    let mut energy = energy0;
    for m in 0..m_len {
        let p = raw.battery_power[m];
        total += excess(p, -bat.max_rate, bat.max_rate);
        for (c, app) in scenario.power_flexible.iter().enumerate() {
            if app.is_active(t_now + m) {
                total += excess(raw.flexible_power[c][m], app.min_power, app.max_power);
            }
        }
        energy = bat.leakage_per_slot * energy + p * dt;
        total += excess(energy, bat.capacity_min, bat.capacity_max);
    }
    Ok(total)
}

/// Inputs shared by both baseline solvers.
#[derive(Debug, Clone)]
pub struct RawProblem<'a> {
    pub scenario: &'a Scenario,
    pub forecast: &'a ForecastBundle,
    pub t_now: usize,
    /// Battery energy at `t_now`.
    pub energy0: f64,
    pub start_ranges: Vec<(usize, usize)>,
}

impl<'a> RawProblem<'a> {
    pub fn new(
        scenario: &'a Scenario,
        forecast: &'a ForecastBundle,
        t_now: usize,
        energy0: f64,
        committed: &[Option<usize>],
    ) -> Result<Self> {
        Ok(RawProblem {
            scenario,
            forecast,
            t_now,
            energy0,
            start_ranges: start_ranges(scenario, t_now, committed)?,
        })
    }

    fn horizon(&self) -> usize {
        self.forecast.horizon()
    }

    /// Per-variable box: battery first, then each appliance row.
    fn gene_bounds(&self) -> Vec<(f64, f64)> {
        let s = self.scenario;
        let mut out = vec![(-s.battery.max_rate, s.battery.max_rate); self.horizon()];
        for app in &s.power_flexible {
            out.extend(std::iter::repeat_n((app.min_power, app.max_power), self.horizon()));
        }
        out
    }

    fn assemble(&self, starts: Vec<usize>, genes: &[f64]) -> RawChromosome {
        let m_len = self.horizon();
        RawChromosome {
            starts,
            battery_power: genes[..m_len].to_vec(),
            flexible_power: genes[m_len..].chunks(m_len).map(<[f64]>::to_vec).collect(),
            violation: 0.0,
            objectives: None,
        }
    }

    fn genes(raw: &RawChromosome) -> Vec<f64> {
        let mut g = raw.battery_power.clone();
        for row in &raw.flexible_power {
            g.extend_from_slice(row);
        }
        g
    }

    pub fn evaluate(&self, mut raw: RawChromosome) -> Result<RawChromosome> {
        raw.violation = violation_measure(&raw, self.scenario, self.energy0, self.t_now)?;
        let u = raw.controls(self.scenario, self.t_now);
        raw.objectives = Some(evaluate_controls(
            self.scenario,
            self.forecast,
            &u,
            &raw.starts,
            self.t_now,
        )?);
        Ok(raw)
    }
}

#[derive(Debug, Clone)]
pub struct BaselineResult {
    /// Feasible non-dominated schedules by ascending cost; may be empty.
    pub front: Vec<RawChromosome>,
    pub population: Vec<RawChromosome>,
    pub log: ConvergenceLog,
}

fn sort_keys(pop: &[RawChromosome], handling: ConstraintHandling, psi: f64) -> Vec<(f64, f64)> {
    pop.iter()
        .map(|r| {
            let (c, d) = r.pair();
            match handling {
                ConstraintHandling::Penalty => (c + psi * r.violation, d + psi * r.violation),
                ConstraintHandling::ConstraintDomination => (c, d),
            }
        })
        .collect()
}

/// Constraint domination: feasible beats infeasible, smaller violation
/// beats larger, Pareto dominance among feasible.
pub fn constraint_dominates(a: (f64, f64), va: f64, b: (f64, f64), vb: f64) -> bool {
    let (fa, fb) = (va <= FEASIBLE_VIOLATION, vb <= FEASIBLE_VIOLATION);
    match (fa, fb) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => va < vb,
        (true, true) => dominates(a, b),
    }
}

fn rank(pop: &[RawChromosome], handling: ConstraintHandling, psi: f64) -> (Vec<(f64, f64)>, Vec<usize>) {
    let keys = sort_keys(pop, handling, psi);
    let ranks = match handling {
        ConstraintHandling::Penalty => nondominated_sort_by(pop.len(), |i, j| dominates(keys[i], keys[j])),
        ConstraintHandling::ConstraintDomination => nondominated_sort_by(pop.len(), |i, j| {
            constraint_dominates(keys[i], pop[i].violation, keys[j], pop[j].violation)
        }),
    };
    (keys, ranks)
}

fn select(pop: Vec<RawChromosome>, keep: usize, handling: ConstraintHandling, psi: f64) -> Vec<RawChromosome> {
    let (keys, ranks) = rank(&pop, handling, psi);
    select_by_rank(&keys, &ranks, keep)
        .into_iter()
        .map(|i| pop[i].clone())
        .collect()
}

/// Crowding distance of each member within its own rank class.
fn crowding_by_rank(keys: &[(f64, f64)], ranks: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; keys.len()];
    let max_rank = ranks.iter().copied().max().unwrap_or(0);
    for r in 0..=max_rank {
        let idx: Vec<usize> = (0..keys.len()).filter(|&i| ranks[i] == r).collect();
        let pts: Vec<(f64, f64)> = idx.iter().map(|&i| keys[i]).collect();
        for (k, d) in idx.into_iter().zip(crowding_distance(&pts)) {
            out[k] = d;
        }
    }
    out
}

fn tournament(ranks: &[usize], crowd: &[f64], rng: &mut RandomStream) -> usize {
    let a = rng.index(ranks.len());
    let b = rng.index(ranks.len());
    if ranks[a] != ranks[b] {
        if ranks[a] < ranks[b] {
            a
        } else {
            b
        }
    } else if crowd[b] > crowd[a] {
        b
    } else {
        a
    }
}

fn mutate_genes(genes: &mut [f64], box_: &[(f64, f64)], sigma_fraction: f64, rng: &mut RandomStream) {
    let p = 1.0 / genes.len().max(1) as f64;
    for (g, &(lo, hi)) in genes.iter_mut().zip(box_) {
        if rng.coin(p) {
            *g = (*g + sigma_fraction * (hi - lo) * rng.normal()).clamp(lo, hi);
        }
    }
}

pub fn solve_penalty(problem: &RawProblem, config: &BaselineConfig) -> Result<BaselineResult> {
    solve(problem, config, ConstraintHandling::Penalty)
}

pub fn solve_constraint_dominated(problem: &RawProblem, config: &BaselineConfig) -> Result<BaselineResult> {
    solve(problem, config, ConstraintHandling::ConstraintDomination)
}

pub fn solve(
    problem: &RawProblem,
    config: &BaselineConfig,
    handling: ConstraintHandling,
) -> Result<BaselineResult> {
    let mc = &config.moea;
    mc.validate()?;
    let psi = config.penalty_weight;
    let n_pop = mc.population_size;
    let box_ = problem.gene_bounds();
    let (phase_init, phase_child) = phase_tags(handling);

    let initial: Vec<RawChromosome> = (0..mc.initial_evaluations())
        .into_par_iter()
        .map(|n| {
            let mut rng = mc.stream(phase_init, 0, n);
            let starts = draw_starts(&problem.start_ranges, &mut rng);
            let genes: Vec<f64> = box_.iter().map(|&(lo, hi)| rng.range(lo, hi)).collect();
            problem.evaluate(problem.assemble(starts, &genes))
        })
        .collect::<Result<_>>()?;

    let mut archive: Archive<RawChromosome> = Archive::new();
    for r in initial.iter().filter(|r| r.is_feasible()) {
        archive.insert(r);
    }
    let mut pop = select(initial, n_pop, handling, psi);

    let mut log = ConvergenceLog::default();
    let plain: Vec<(f64, f64)> = pop.iter().map(Scored::pair).collect();
    log.set_reference(&plain);
    let mut evaluations = mc.initial_evaluations();
    log.record(0, evaluations, archive.pairs(), 0);

    let children = mc.offspring_per_generation();
    for it in 0..mc.max_iterations {
        let generation = it + 1;
        let (keys, ranks) = rank(&pop, handling, psi);
        let crowd = crowding_by_rank(&keys, &ranks);
        let offspring: Vec<RawChromosome> = (0..children.div_ceil(2))
            .into_par_iter()
            .map(|k| {
                let mut rng = mc.stream(phase_child, generation, k);
                let pa = &pop[tournament(&ranks, &crowd, &mut rng)];
                let pb = &pop[tournament(&ranks, &crowd, &mut rng)];
                let (ga, gb) = (RawProblem::genes(pa), RawProblem::genes(pb));
                let mut c1 = ga.clone();
                let mut c2 = gb.clone();
                for i in 0..ga.len() {
                    if rng.coin(0.5) {
                        c1[i] = gb[i];
                        c2[i] = ga[i];
                    }
                }
                let mut s1 = pa.starts.clone();
                let mut s2 = pb.starts.clone();
                for i in 0..s1.len() {
                    if rng.coin(0.5) {
                        std::mem::swap(&mut s1[i], &mut s2[i]);
                    }
                }
                mutate_genes(&mut c1, &box_, config.sigma_fraction, &mut rng);
                mutate_genes(&mut c2, &box_, config.sigma_fraction, &mut rng);
                let a = problem.evaluate(problem.assemble(s1, &c1))?;
                let b = problem.evaluate(problem.assemble(s2, &c2))?;
                Ok(vec![a, b])
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .take(children)
            .collect();
        evaluations += offspring.len();
        for r in offspring.iter().filter(|r| r.is_feasible()) {
            archive.insert(r);
        }
        let mut merged = pop;
        merged.extend(offspring);
        pop = select(merged, n_pop, handling, psi);
        log.record(generation, evaluations, archive.pairs(), 0);
    }
    log.finish();
    Ok(BaselineResult {
        front: archive.sorted(),
        population: pop,
        log,
    })
}

/// Componentwise bounds of a baseline front, if any.
pub fn front_bounds(front: &[RawChromosome]) -> Option<((f64, f64), (f64, f64))> {
    if front.is_empty() {
        return None;
    }
    let pairs: Vec<(f64, f64)> = front.iter().map(Scored::pair).collect();
    Some(bounds(&pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::tests::table2;

    fn raw_zero(s: &Scenario, m: usize, t_now: usize) -> RawChromosome {
        RawChromosome {
            starts: vec![10],
            battery_power: vec![0.0; m],
            flexible_power: s
                .power_flexible
                .iter()
                .map(|a| {
                    (0..m)
                        .map(|k| if a.is_active(t_now + k) { a.nominal_power } else { 0.0 })
                        .collect()
                })
                .collect(),
            violation: 0.0,
            objectives: None,
        }
    }

    #[test]
    fn violation_examples() {
        let s = table2();
        let mut raw = raw_zero(&s, 4, 0);
        raw.battery_power = vec![0.5, -0.5, 0.0, 0.0];
        assert_eq!(violation_measure(&raw, &s, 5.0, 0).unwrap(), 0.0);
        raw.battery_power = vec![4.0, 0.0, 0.0, 0.0];
        let rho = s.battery.leakage_per_slot;
        // 1 kW above the rate limit, and the energy path 5ρ+4 then ρ-decay is
        // still under 10 kWh for all four slots
        let e1 = rho * 5.0 + 4.0;
        assert!(e1 < 10.0);
        assert!((violation_measure(&raw, &s, 5.0, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn violation_matches_per_constraint_accumulation() {
        let s = table2();
        let mut rng = RandomStream::new(4, 0);
        for _ in 0..500 {
            let t_now = rng.integer(0, 12);
            let m = 8;
            let mut raw = raw_zero(&s, m, t_now);
            for v in raw.battery_power.iter_mut() {
                *v = rng.range(-5.0, 5.0);
            }
            for row in raw.flexible_power.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.range(-0.5, 2.0);
                }
            }
            let e0 = rng.range(3.0, 10.0);
            let mut rate = 0.0;
            let mut power = 0.0;
            let mut energy_ex = 0.0;
            let mut e = e0;
            for k in 0..m {
                let p = raw.battery_power[k];
                if p.abs() > 3.0 {
                    rate += p.abs() - 3.0;
                }
                for (c, a) in s.power_flexible.iter().enumerate() {
                    let v = raw.flexible_power[c][k];
                    if a.window.contains(t_now + k) {
                        if v > a.max_power {
                            power += v - a.max_power;
                        }
                        if v < a.min_power {
                            power += a.min_power - v;
                        }
                    }
                }
                e = s.battery.leakage_per_slot * e + p;
                if e > 10.0 {
                    energy_ex += e - 10.0;
                }
                if e < 3.0 {
                    energy_ex += 3.0 - e;
                }
            }
            let got = violation_measure(&raw, &s, e0, t_now).unwrap();
            assert!((got - (rate + power + energy_ex)).abs() < 1e-9);
        }
    }

    #[test]
    fn feasible_objectives_are_plain() {
        let s = table2();
        let f = ForecastBundle::exact(&s, 0, 6);
        let p = RawProblem::new(&s, &f, 0, 5.0, &[]).unwrap();
        let r = p.evaluate(raw_zero(&s, 6, 0)).unwrap();
        assert_eq!(r.violation, 0.0);
        let keys = sort_keys(std::slice::from_ref(&r), ConstraintHandling::Penalty, 1e4);
        assert_eq!(keys[0], r.pair());
    }

    #[test]
    fn constraint_domination_rule() {
        assert!(constraint_dominates((9.0, 9.0), 0.0, (0.0, 0.0), 1.0));
        assert!(!constraint_dominates((0.0, 0.0), 1.0, (9.0, 9.0), 0.0));
        assert!(constraint_dominates((9.0, 9.0), 0.5, (0.0, 0.0), 1.0));
        assert!(constraint_dominates((0.0, 0.0), 0.0, (1.0, 1.0), 0.0));
        assert!(!constraint_dominates((0.0, 1.0), 0.0, (1.0, 0.0), 0.0));
    }

    fn config(seed: u64) -> BaselineConfig {
        BaselineConfig::from_moea(MoeaConfig {
            population_size: 12,
            max_iterations: 10,
            seed,
            ..MoeaConfig::default()
        })
    }

    #[test]
    fn mixed_population_ranks_feasible_first() {
        let s = table2();
        let f = ForecastBundle::exact(&s, 0, 6);
        let p = RawProblem::new(&s, &f, 0, 5.0, &[]).unwrap();
        let r = solve_constraint_dominated(&p, &config(2)).unwrap();
        let (_, ranks) = rank(&r.population, ConstraintHandling::ConstraintDomination, 0.0);
        for (a, ra) in r.population.iter().zip(&ranks) {
            for (b, rb) in r.population.iter().zip(&ranks) {
                if a.is_feasible() && !b.is_feasible() {
                    assert!(ra < rb);
                }
            }
        }
    }

    #[test]
    fn baselines_are_deterministic_and_budgeted() {
        let s = table2();
        let f = ForecastBundle::exact(&s, 0, 6);
        let p = RawProblem::new(&s, &f, 0, 5.0, &[]).unwrap();
        for h in [ConstraintHandling::Penalty, ConstraintHandling::ConstraintDomination] {
            let a = solve(&p, &config(8), h).unwrap();
            let b = solve(&p, &config(8), h).unwrap();
            assert_eq!(a.front, b.front);
            assert_eq!(
                a.log.records.last().unwrap().evaluations,
                config(8).moea.evaluation_budget()
            );
            assert!(a.front.iter().all(RawChromosome::is_feasible));
        }
    }
}

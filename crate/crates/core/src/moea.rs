//! Feasibility-preserving multiobjective evolution over `(starts, η)`.

use std::io::Write;

use rayon::prelude::*;

use crate::constraints::{is_feasible, FeasibleSet};
use crate::domain::Scenario;
use crate::error::{Error, Result};
use crate::laguerre::LaguerreBasis;
use crate::objectives::{evaluate, ForecastBundle, ObjectiveValues};
use crate::sampler::{
    derive_seed, initial_point, random_coordinates, sampler_one, sampler_two, RandomStream,
};

/// RNG phase tags, mixed into per-chromosome sub-seeds.
const PHASE_INIT: u64 = 1;
const PHASE_RESERVE: u64 = 2;
const PHASE_CROSSOVER: u64 = 3;
const PHASE_MUTATION: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome {
    pub starts: Vec<usize>,
    pub eta: Vec<f64>,
    pub objectives: Option<ObjectiveValues>,
}

impl Chromosome {
    pub fn new(starts: Vec<usize>, eta: Vec<f64>) -> Self {
        Chromosome {
            starts,
            eta,
            objectives: None,
        }
    }

    /// Objective pair; panics if the chromosome was never evaluated.
    pub fn pair(&self) -> (f64, f64) {
        self.objectives.expect("chromosome not evaluated").pair()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub members: Vec<Chromosome>,
    pub reserve: Vec<Chromosome>,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoeaConfig {
    pub population_size: usize,
    pub max_iterations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub seed: u64,
}

impl Default for MoeaConfig {
    fn default() -> Self {
        MoeaConfig {
            population_size: 200,
            max_iterations: 1000,
            crossover_rate: 0.2,
            mutation_rate: 0.8,
            seed: 0,
        }
    }
}

impl MoeaConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.population_size < 4 {
            bad.push(format!(
                "population_size must be at least 4, got {}",
                self.population_size
            ));
        }
        for (name, r) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                bad.push(format!("{name} must lie in [0, 1], got {r}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    pub fn crossover_pairs(&self) -> usize {
        (self.crossover_rate * self.population_size as f64).ceil() as usize
    }

    pub fn mutation_count(&self) -> usize {
        (self.mutation_rate * self.population_size as f64).ceil() as usize
    }

    /// Objective evaluations per generation.
    pub fn offspring_per_generation(&self) -> usize {
        2 * self.crossover_pairs() + self.mutation_count()
    }

    /// Evaluations spent on initialization (members plus reserve candidates).
    pub fn initial_evaluations(&self) -> usize {
        3 * self.population_size
    }

    pub fn evaluation_budget(&self) -> usize {
        self.initial_evaluations() + self.max_iterations * self.offspring_per_generation()
    }

    pub(crate) fn stream(&self, phase: u64, generation: usize, index: usize) -> RandomStream {
        RandomStream::new(
            derive_seed(self.seed, &[phase, generation as u64, index as u64]),
            0,
        )
    }
}

/// Admissible start range for every time-flexible appliance at `t_now`.
///
/// A committed appliance has the single-slot range `(s, s)`.
pub fn start_ranges(
    scenario: &Scenario,
    t_now: usize,
    committed: &[Option<usize>],
) -> Result<Vec<(usize, usize)>> {
    scenario
        .time_flexible
        .iter()
        .enumerate()
        .map(|(i, app)| match committed.get(i).copied().flatten() {
            Some(s) => Ok((s, s)),
            None => app.planning_range(t_now).ok_or_else(|| {
                Error::Precondition(format!(
                    "{} has no admissible start at slot {}",
                    app.name,
                    t_now + 1
                ))
            }),
        })
        .collect()
}

pub fn draw_starts(ranges: &[(usize, usize)], rng: &mut RandomStream) -> Vec<usize> {
    ranges.iter().map(|&(lo, hi)| rng.integer(lo, hi)).collect()
}

/// Everything a single horizon solve needs.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub scenario: &'a Scenario,
    pub set: &'a FeasibleSet,
    pub forecast: &'a ForecastBundle,
    pub basis: &'a LaguerreBasis,
    pub t_now: usize,
    pub start_ranges: Vec<(usize, usize)>,
}

impl<'a> Problem<'a> {
    pub fn new(
        scenario: &'a Scenario,
        set: &'a FeasibleSet,
        forecast: &'a ForecastBundle,
        basis: &'a LaguerreBasis,
        t_now: usize,
    ) -> Result<Self> {
        Self::with_committed(scenario, set, forecast, basis, t_now, &[])
    }

    pub fn with_committed(
        scenario: &'a Scenario,
        set: &'a FeasibleSet,
        forecast: &'a ForecastBundle,
        basis: &'a LaguerreBasis,
        t_now: usize,
        committed: &[Option<usize>],
    ) -> Result<Self> {
        if forecast.horizon() != basis.horizon() {
            return Err(Error::Parameter(format!(
                "forecast horizon {} differs from basis horizon {}",
                forecast.horizon(),
                basis.horizon()
            )));
        }
        let expected = (1 + scenario.power_flexible.len()) * basis.order();
        if set.dimension() != expected {
            return Err(Error::Parameter(format!(
                "feasible set dimension {} differs from coefficient count {expected}",
                set.dimension()
            )));
        }
        Ok(Problem {
            scenario,
            set,
            forecast,
            basis,
            t_now,
            start_ranges: start_ranges(scenario, t_now, committed)?,
        })
    }

    pub fn evaluate(&self, mut ch: Chromosome) -> Result<Chromosome> {
        ch.objectives = Some(evaluate(
            &ch,
            self.scenario,
            self.forecast,
            self.basis,
            self.t_now,
        )?);
        Ok(ch)
    }
}

fn evaluate_all(problem: &Problem, chromosomes: Vec<Chromosome>) -> Result<Vec<Chromosome>> {
    chromosomes
        .into_par_iter()
        .map(|c| problem.evaluate(c))
        .collect()
}

pub fn initialize(problem: &Problem, config: &MoeaConfig) -> Result<Population> {
    config.validate()?;
    let n_pop = config.population_size;
    let set = problem.set;
    let dim = set.dimension();
    let mut base = config.stream(PHASE_INIT, 0, usize::MAX);
    let eta_ini = initial_point(set, 0, &mut base)?;

    let members: Vec<Chromosome> = (0..n_pop)
        .into_par_iter()
        .map(|n| {
            let mut rng = config.stream(PHASE_INIT, 0, n);
            let starts = draw_starts(&problem.start_ranges, &mut rng);
            let coords = random_coordinates(dim, 0.5, &mut rng);
            let eta = sampler_one(set, &eta_ini, &coords, n, &mut rng)?;
            problem.evaluate(Chromosome::new(starts, eta))
        })
        .collect::<Result<_>>()?;

    let all: Vec<usize> = (0..dim).collect();
    let candidates: Vec<Chromosome> = (0..2 * n_pop)
        .into_par_iter()
        .map(|n| {
            let mut rng = config.stream(PHASE_RESERVE, 0, n);
            let starts = draw_starts(&problem.start_ranges, &mut rng);
            let eta = sampler_one(set, &eta_ini, &all, 0, &mut rng)?;
            problem.evaluate(Chromosome::new(starts, eta))
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(f64, f64)> = candidates.iter().map(Chromosome::pair).collect();
    let keep = environmental_selection(&pairs, n_pop);
    let reserve = keep.into_iter().map(|i| candidates[i].clone()).collect();

    Ok(Population {
        members,
        reserve,
        iteration: 0,
    })
}

/// `(c·η + (1−c)·η̄, (1−c)·η + c·η̄)`.
pub fn blend(eta: &[f64], eta_bar: &[f64], c: f64) -> (Vec<f64>, Vec<f64>) {
    let first = eta
        .iter()
        .zip(eta_bar)
        .map(|(a, b)| c * a + (1.0 - c) * b)
        .collect();
    let second = eta
        .iter()
        .zip(eta_bar)
        .map(|(a, b)| (1.0 - c) * a + c * b)
        .collect();
    (first, second)
}

/// Two offspring from a member and a partner drawn from members ∪ reserve.
pub fn crossover(
    pop: &Population,
    ranges: &[(usize, usize)],
    rng: &mut RandomStream,
) -> (Chromosome, Chromosome) {
    let h = &pop.members[rng.index(pop.members.len())];
    let k = rng.index(pop.members.len() + pop.reserve.len());
    let h_bar = pop
        .members
        .get(k)
        .unwrap_or_else(|| &pop.reserve[k - pop.members.len()]);
    let s1 = draw_starts(ranges, rng);
    let s2 = draw_starts(ranges, rng);
    let (e1, e2) = blend(&h.eta, &h_bar.eta, rng.uniform());
    (Chromosome::new(s1, e1), Chromosome::new(s2, e2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    CoordinateWise,
    Directional,
}

/// A perturbed copy of a random member; start times are kept.
pub fn mutate(
    pop: &Population,
    set: &FeasibleSet,
    iteration: usize,
    rng: &mut RandomStream,
) -> Result<(Chromosome, SamplerKind)> {
    let h = &pop.members[rng.index(pop.members.len())];
    let dim = set.dimension();
    if rng.coin(0.5) {
        let coords = random_coordinates(dim, (3.0 / dim.max(1) as f64).min(1.0), rng);
        let eta = sampler_one(set, &h.eta, &coords, iteration, rng)?;
        Ok((Chromosome::new(h.starts.clone(), eta), SamplerKind::CoordinateWise))
    } else {
        let eta = sampler_two(set, &h.eta, rng)?;
        Ok((Chromosome::new(h.starts.clone(), eta), SamplerKind::Directional))
    }
}

/// `a` Pareto-dominates `b` under minimization.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Front index per element for an arbitrary dominance relation.
pub fn nondominated_sort_by(n: usize, dom: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dom(i, j) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            } else if dom(j, i) {
                dominates_list[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut rank = vec![usize::MAX; n];
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    let mut level = 0;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            rank[i] = level;
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        current = next;
        level += 1;
    }
    rank
}

pub fn nondominated_sort(values: &[(f64, f64)]) -> Vec<usize> {
    nondominated_sort_by(values.len(), |i, j| dominates(values[i], values[j]))
}

/// Standard crowding distance, each objective normalized by its range.
pub fn crowding_distance(front: &[(f64, f64)]) -> Vec<f64> {
    let n = front.len();
    if n < 3 {
        return vec![f64::INFINITY; n];
    }
    let mut dist = vec![0.0; n];
    let keys: [fn(&(f64, f64)) -> f64; 2] = [|p| p.0, |p| p.1];
    for key in keys {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| key(&front[a]).total_cmp(&key(&front[b])).then(a.cmp(&b)));
        let lo = key(&front[order[0]]);
        let hi = key(&front[order[n - 1]]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let gap = key(&front[order[w + 1]]) - key(&front[order[w - 1]]);
            dist[order[w]] += gap / range;
        }
    }
    dist
}

/// Fill fronts in rank order, breaking the last one by descending crowding.
pub fn select_by_rank(values: &[(f64, f64)], ranks: &[usize], keep: usize) -> Vec<usize> {
    let max_rank = ranks.iter().copied().max().unwrap_or(0);
    let mut out = Vec::with_capacity(keep);
    for r in 0..=max_rank {
        if out.len() >= keep {
            break;
        }
        let front: Vec<usize> = (0..values.len()).filter(|&i| ranks[i] == r).collect();
        if out.len() + front.len() <= keep {
            out.extend(front);
            continue;
        }
        let pts: Vec<(f64, f64)> = front.iter().map(|&i| values[i]).collect();
        let cd = crowding_distance(&pts);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| cd[b].total_cmp(&cd[a]).then(a.cmp(&b)));
        out.extend(order.into_iter().take(keep - out.len()).map(|k| front[k]));
    }
    out
}

pub fn environmental_selection(values: &[(f64, f64)], keep: usize) -> Vec<usize> {
    let ranks = nondominated_sort(values);
    select_by_rank(values, &ranks, keep)
}

/// Anything carrying an evaluated objective pair.
pub trait Scored {
    fn pair(&self) -> (f64, f64);
}

impl Scored for Chromosome {
    fn pair(&self) -> (f64, f64) {
        Chromosome::pair(self)
    }
}

/// Mutually non-dominated set of every feasible chromosome seen so far.
#[derive(Debug, Clone)]
pub struct Archive<T> {
    members: Vec<T>,
}

impl<T> Default for Archive<T> {
    fn default() -> Self {
        Archive {
            members: Vec::new(),
        }
    }
}

impl<T: Scored + Clone> Archive<T> {
    pub fn new() -> Self {
        Archive::default()
    }

    /// Returns whether the item entered the archive. Items whose objective
    /// pair is already present are rejected.
    pub fn insert(&mut self, item: &T) -> bool {
        let p = item.pair();
        if !(p.0.is_finite() && p.1.is_finite()) {
            return false;
        }
        if self.members.iter().any(|m| {
            let q = m.pair();
            dominates(q, p) || q == p
        }) {
            return false;
        }
        self.members.retain(|m| !dominates(p, m.pair()));
        self.members.push(item.clone());
        true
    }

    pub fn members(&self) -> &[T] {
        &self.members
    }

    /// Members sorted by ascending cost.
    pub fn sorted(&self) -> Vec<T> {
        let mut v = self.members.clone();
        v.sort_by(|a, b| {
            let (pa, pb) = (a.pair(), b.pair());
            pa.0.total_cmp(&pb.0).then(pa.1.total_cmp(&pb.1))
        });
        v
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.sorted().iter().map(Scored::pair).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Index of the front member with the least normalized L1 distance to the
/// front's ideal corner. Ties go to the lower cost.
pub fn select_knee(front: &[(f64, f64)]) -> Option<usize> {
    if front.is_empty() {
        return None;
    }
    let (ideal, nadir) = bounds(front);
    let norm = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    let score = |p: &(f64, f64)| norm(p.0, ideal.0, nadir.0) + norm(p.1, ideal.1, nadir.1);
    let mut best = 0;
    for i in 1..front.len() {
        let (si, sb) = (score(&front[i]), score(&front[best]));
        if si < sb - 1e-12 || ((si - sb).abs() <= 1e-12 && front[i].0 < front[best].0) {
            best = i;
        }
    }
    Some(best)
}

/// Componentwise minimum and maximum of a nonempty point set.
pub fn bounds(points: &[(f64, f64)]) -> ((f64, f64), (f64, f64)) {
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo = (lo.0.min(p.0), lo.1.min(p.1));
        hi = (hi.0.max(p.0), hi.1.max(p.1));
    }
    (lo, hi)
}

/// `min_p Σ_obj |p_obj − ideal_obj| / range_obj`.
pub fn normalized_manhattan(front: &[(f64, f64)], ideal: (f64, f64), ranges: (f64, f64)) -> f64 {
    front
        .iter()
        .map(|p| (p.0 - ideal.0).abs() / ranges.0 + (p.1 - ideal.1).abs() / ranges.1)
        .fold(f64::INFINITY, f64::min)
}

/// Area dominated by `front` and bounded by `reference` (minimization).
pub fn hypervolume(front: &[(f64, f64)], reference: (f64, f64)) -> f64 {
    let mut pts: Vec<(f64, f64)> = front
        .iter()
        .copied()
        .filter(|p| p.0 < reference.0 && p.1 < reference.1)
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut stairs: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        if stairs.last().is_none_or(|q| p.1 < q.1) {
            stairs.push(p);
        }
    }
    stairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let next_x = stairs.get(i + 1).map_or(reference.0, |q| q.0);
            (next_x - p.0) * (reference.1 - p.1)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub evaluations: usize,
    pub front_size: usize,
    pub ideal: (f64, f64),
    pub nadir: (f64, f64),
    pub manhattan: f64,
    pub hypervolume: f64,
    /// Offspring removed by the feasibility check; zero for this solver.
    pub infeasible: usize,
}

/// Per-generation summary of the retained front.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceLog {
    pub records: Vec<GenerationRecord>,
    pub fronts: Vec<Vec<(f64, f64)>>,
    pub reference_point: Option<(f64, f64)>,
}

pub const CONVERGENCE_HEADER: [&str; 11] = [
    "solver",
    "slot",
    "generation",
    "evaluations",
    "front_size",
    "ideal_cost",
    "ideal_dissatisfaction",
    "nadir_cost",
    "nadir_dissatisfaction",
    "manhattan",
    "hypervolume",
];

impl ConvergenceLog {
    /// Fixes the hypervolume reference point from an initial point cloud:
    /// its nadir pushed out by 10% of its range.
    pub fn set_reference(&mut self, initial: &[(f64, f64)]) {
        if initial.is_empty() {
            return;
        }
        let (lo, hi) = bounds(initial);
        let pad = |l: f64, h: f64| {
            let r = h - l;
            h + if r > 0.0 { 0.1 * r } else { 1.0 }
        };
        self.reference_point = Some((pad(lo.0, hi.0), pad(lo.1, hi.1)));
    }

    pub fn record(&mut self, generation: usize, evaluations: usize, front: Vec<(f64, f64)>, infeasible: usize) {
        let (ideal, nadir) = if front.is_empty() {
            ((f64::NAN, f64::NAN), (f64::NAN, f64::NAN))
        } else {
            bounds(&front)
        };
        let hv = self
            .reference_point
            .map_or(f64::NAN, |r| hypervolume(&front, r));
        self.records.push(GenerationRecord {
            generation,
            evaluations,
            front_size: front.len(),
            ideal,
            nadir,
            manhattan: f64::NAN,
            hypervolume: hv,
            infeasible,
        });
        self.fronts.push(front);
    }

    /// Fills the distance column against the last recorded front's ideal
    /// point and ranges.
    pub fn finish(&mut self) {
        let Some(last) = self.fronts.iter().rev().find(|f| !f.is_empty()) else {
            return;
        };
        let (ideal, nadir) = bounds(last);
        let ranges = (range_or_one(nadir.0 - ideal.0), range_or_one(nadir.1 - ideal.1));
        for (rec, front) in self.records.iter_mut().zip(&self.fronts) {
            rec.manhattan = if front.is_empty() {
                f64::NAN
            } else {
                normalized_manhattan(front, ideal, ranges)
            };
        }
    }

    pub fn total_infeasible(&self) -> usize {
        self.records.iter().map(|r| r.infeasible).sum()
    }

    pub fn write_csv<W: Write>(&self, out: &mut csv::Writer<W>, solver: &str, slot: usize) -> Result<()> {
        for r in &self.records {
            out.write_record([
                solver.to_string(),
                slot.to_string(),
                r.generation.to_string(),
                r.evaluations.to_string(),
                r.front_size.to_string(),
                r.ideal.0.to_string(),
                r.ideal.1.to_string(),
                r.nadir.0.to_string(),
                r.nadir.1.to_string(),
                r.manhattan.to_string(),
                r.hypervolume.to_string(),
            ])?;
        }
        Ok(())
    }
}

pub fn range_or_one(r: f64) -> f64 {
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Archive members sorted by ascending cost.
    pub front: Vec<Chromosome>,
    pub population: Population,
    pub log: ConvergenceLog,
}

pub fn evolve(problem: &Problem, config: &MoeaConfig) -> Result<SolveResult> {
    let mut pop = initialize(problem, config)?;
    let mut archive: Archive<Chromosome> = Archive::new();
    let mut log = ConvergenceLog::default();
    let initial: Vec<(f64, f64)> = pop.members.iter().map(Chromosome::pair).collect();
    log.set_reference(&initial);
    for ch in pop.members.iter().chain(&pop.reserve) {
        archive.insert(ch);
    }
    let mut evaluations = config.initial_evaluations();
    log.record(0, evaluations, archive.pairs(), 0);

    let pairs = config.crossover_pairs();
    let mutants = config.mutation_count();
    for it in 0..config.max_iterations {
        let generation = it + 1;
        let from_crossover = (0..pairs).into_par_iter().map(|k| {
            let mut rng = config.stream(PHASE_CROSSOVER, generation, k);
            let (a, b) = crossover(&pop, &problem.start_ranges, &mut rng);
            Ok(vec![a, b])
        });
        let from_mutation = (0..mutants).into_par_iter().map(|k| {
            let mut rng = config.stream(PHASE_MUTATION, generation, k);
            mutate(&pop, problem.set, it, &mut rng).map(|(c, _)| vec![c])
        });
        let offspring: Vec<Chromosome> = from_crossover
            .chain(from_mutation)
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let before = offspring.len();
        let offspring: Vec<Chromosome> = offspring
            .into_iter()
            .filter(|c| is_feasible(problem.set, &c.eta).feasible)
            .collect();
        let infeasible = before - offspring.len();
        let offspring = evaluate_all(problem, offspring)?;
        evaluations += before;

        for ch in &offspring {
            archive.insert(ch);
        }
        let mut merged = std::mem::take(&mut pop.members);
        merged.extend(offspring);
        let values: Vec<(f64, f64)> = merged.iter().map(Chromosome::pair).collect();
        let keep = environmental_selection(&values, config.population_size);
        pop.members = keep.into_iter().map(|i| merged[i].clone()).collect();
        pop.iteration = generation;
        log.record(generation, evaluations, archive.pairs(), infeasible);
    }
    log.finish();
    Ok(SolveResult {
        front: archive.sorted(),
        population: pop,
        log,
    })
}

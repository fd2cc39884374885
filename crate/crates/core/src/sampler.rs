//! Feasibility-preserving moves inside `{η : A·η ≤ b}`.
//!
//! Both samplers move along a line through the current point and pick a
//! step inside the chord the polytope cuts from that line, so a feasible
//! input always yields a feasible output. Sampler I moves coordinate by
//! coordinate; sampler II moves along the direction towards a random point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{is_feasible, row_slacks, FeasibleSet};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// Steps along directions no row binds are capped at this length.
pub const DEFAULT_STEP_CAP: f64 = 1e3;

/// Row derivatives smaller than this along a direction are treated as zero.
const DERIVATIVE_FLOOR: f64 = 1e-14;

const DIRECTION_ATTEMPTS: usize = 8;

/// A reproducible random source keyed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn integer(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..=hi)
    }

    pub fn index(&mut self, len: usize) -> usize {
        self.rng.random_range(0..len)
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        // Box–Muller; one value per call keeps the stream layout simple.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Mixes a seed with a path of tags into an independent sub-seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    tags.iter()
        .fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t)))
}

/// Largest feasible steps along `+d` and `−d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBounds {
    pub d_pos: f64,
    pub d_neg: f64,
}

fn bounds_from_derivatives(
    slacks: &[f64],
    derivative: impl Fn(usize) -> f64,
    cap: f64,
) -> StepBounds {
    let mut d_pos = cap;
    let mut d_neg = cap;
    for (r, &s) in slacks.iter().enumerate() {
        let a = derivative(r);
        let s = s.max(0.0);
        if a > DERIVATIVE_FLOOR {
            d_pos = d_pos.min(s / a);
        } else if a < -DERIVATIVE_FLOOR {
            d_neg = d_neg.min(s / -a);
        }
    }
    StepBounds {
        d_pos: d_pos.max(0.0),
        d_neg: d_neg.max(0.0),
    }
}

fn require_feasible(set: &FeasibleSet, eta: &[f64]) -> Result<()> {
    if eta.len() != set.dimension() {
        return Err(Error::Parameter(format!(
            "coefficient vector has {} entries, set has dimension {}",
            eta.len(),
            set.dimension()
        )));
    }
    let report = is_feasible(set, eta);
    if !report.feasible {
        return Err(Error::Precondition(format!(
            "point violates {} by {:.3e}",
            report.worst_label.map(|l| l.to_string()).unwrap_or_default(),
            report.max_violation
        )));
    }
    Ok(())
}

pub fn line_bounds(set: &FeasibleSet, eta: &[f64], direction: &[f64]) -> Result<StepBounds> {
    line_bounds_with_cap(set, eta, direction, DEFAULT_STEP_CAP)
}

pub fn line_bounds_with_cap(
    set: &FeasibleSet,
    eta: &[f64],
    direction: &[f64],
    cap: f64,
) -> Result<StepBounds> {
    require_feasible(set, eta)?;
    if direction.len() != eta.len() {
        return Err(Error::Parameter("direction dimension mismatch".into()));
    }
    let slacks = row_slacks(set, eta);
    let a = set.a();
    Ok(bounds_from_derivatives(
        &slacks,
        |r| dot(a.row(r), direction),
        cap,
    ))
}

fn draw_step_fraction(iteration: usize, rng: &mut RandomStream) -> f64 {
    if iteration % 5 == 0 {
        if rng.coin(0.5) {
            1.0
        } else {
            0.0
        }
    } else {
        rng.uniform()
    }
}

/// Convex sampler I: resample each listed coordinate inside its chord.
///
/// Coordinates are visited in order and each chord is computed at the
/// current (already updated) point. Every fifth iteration the step fraction
/// is drawn from `{0, 1}`, sending the coordinate to a chord endpoint.
pub fn sampler_one(
    set: &FeasibleSet,
    eta: &[f64],
    coordinates: &[usize],
    iteration: usize,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    require_feasible(set, eta)?;
    let mut out = eta.to_vec();
    if coordinates.is_empty() {
        return Ok(out);
    }
    let a = set.a();
    let mut slacks = row_slacks(set, &out);
    for &i in coordinates {
        if i >= out.len() {
            return Err(Error::Range {
                what: "coordinate",
                index: i,
                limit: out.len(),
            });
        }
        let bounds = bounds_from_derivatives(&slacks, |r| a.get(r, i), DEFAULT_STEP_CAP);
        let c = draw_step_fraction(iteration, rng);
        let step = -bounds.d_neg + (bounds.d_pos + bounds.d_neg) * c;
        if step != 0.0 {
            out[i] += step;
            for (r, s) in slacks.iter_mut().enumerate() {
                *s -= a.get(r, i) * step;
            }
        }
    }
    Ok(out)
}

/// Moves `eta` to `eta + (−d_neg + (d_pos + d_neg)·fraction)·direction`.
pub fn chord_step(
    set: &FeasibleSet,
    eta: &[f64],
    direction: &[f64],
    fraction: f64,
) -> Result<Vec<f64>> {
    let bounds = line_bounds(set, eta, direction)?;
    let step = -bounds.d_neg + (bounds.d_pos + bounds.d_neg) * fraction;
    Ok(eta
        .iter()
        .zip(direction)
        .map(|(e, d)| e + step * d)
        .collect())
}

/// A uniform draw from the set's coefficient box.
pub fn random_box_point(set: &FeasibleSet, rng: &mut RandomStream) -> Vec<f64> {
    set.coefficient_box()
        .iter()
        .map(|&w| rng.range(-w, w))
        .collect()
}

/// Convex sampler II: step along the direction towards a random point.
pub fn sampler_two(set: &FeasibleSet, eta: &[f64], rng: &mut RandomStream) -> Result<Vec<f64>> {
    require_feasible(set, eta)?;
    for _ in 0..DIRECTION_ATTEMPTS {
        let target = random_box_point(set, rng);
        let direction: Vec<f64> = target.iter().zip(eta).map(|(t, e)| t - e).collect();
        if norm(&direction) < 1e-12 {
            continue;
        }
        let fraction = rng.uniform();
        return chord_step(set, eta, &direction, fraction);
    }
    Ok(eta.to_vec())
}

/// Each index is kept with probability `p`; at least one index is returned.
pub fn random_coordinates(dimension: usize, p: f64, rng: &mut RandomStream) -> Vec<usize> {
    if dimension == 0 {
        return Vec::new();
    }
    let mut out: Vec<usize> = (0..dimension).filter(|_| rng.coin(p)).collect();
    if out.is_empty() {
        out.push(rng.index(dimension));
    }
    out
}

/// Finds a strictly feasible point by relaxed cyclic projection onto the
/// rows tightened by a small margin.
pub fn recover_feasible_point(set: &FeasibleSet, start: &[f64]) -> Result<Vec<f64>> {
    const MARGIN: f64 = 1e-7;
    const RELAXATION: f64 = 1.5;
    const MAX_SWEEPS: usize = 20_000;
    let a = set.a();
    let b = set.b();
    let norms: Vec<f64> = (0..set.rows()).map(|r| dot(a.row(r), a.row(r))).collect();
    let mut x = start.to_vec();
    for _ in 0..MAX_SWEEPS {
        let mut clean = true;
        for r in 0..set.rows() {
            if norms[r] == 0.0 {
                continue;
            }
            let excess = dot(a.row(r), &x) - (b[r] - MARGIN);
            if excess > 0.0 {
                clean = false;
                let scale = RELAXATION * excess / norms[r];
                for (xi, ai) in x.iter_mut().zip(a.row(r)) {
                    *xi -= scale * ai;
                }
            }
        }
        if clean {
            break;
        }
    }
    let report = is_feasible(set, &x);
    if report.feasible {
        Ok(x)
    } else {
        let row = report.worst_row.unwrap_or(0);
        Err(Error::InfeasibleScenario {
            row,
            label: set.labels()[row].to_string(),
            violation: report.max_violation,
        })
    }
}

/// Start point for a population: `η = 0` when feasible, otherwise a point
/// recovered by projection, then `diversify_steps` sampler II moves.
pub fn initial_point(
    set: &FeasibleSet,
    diversify_steps: usize,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    let zero = vec![0.0; set.dimension()];
    let mut eta = if is_feasible(set, &zero).feasible {
        zero
    } else {
        recover_feasible_point(set, &zero)?
    };
    for _ in 0..diversify_steps {
        eta = sampler_two(set, &eta, rng)?;
    }
    Ok(eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{build_feasible_set, RowLabel};
    use crate::domain::tests::table2;
    use crate::laguerre::{build_basis, build_prediction, StateSpaceModel};
    use crate::linalg::Matrix;

    /// `−1 ≤ η_i ≤ 1` for each coordinate.
    fn unit_box(dim: usize) -> FeasibleSet {
        let mut a = Matrix::zeros(0, dim);
        let mut labels = Vec::new();
        for i in 0..dim {
            let mut row = vec![0.0; dim];
            row[i] = 1.0;
            a.push_row(&row);
            row[i] = -1.0;
            a.push_row(&row);
            labels.push(RowLabel::RateUpper { m: i });
            labels.push(RowLabel::RateLower { m: i });
        }
        FeasibleSet::from_parts(a, vec![1.0; 2 * dim], labels, vec![1.0; dim]).unwrap()
    }

    fn table2_set() -> FeasibleSet {
        let s = table2();
        let basis = build_basis(0.8, 6, 12).unwrap();
        let ops = build_prediction(
            &basis,
            StateSpaceModel::new(s.battery.leakage_per_slot, 1.0, 2),
        );
        build_feasible_set(&s, &basis, &ops, [4.0, 0.0], 8).unwrap()
    }

    #[test]
    fn box_chords() {
        let set = unit_box(1);
        assert_eq!(
            line_bounds(&set, &[0.0], &[1.0]).unwrap(),
            StepBounds { d_pos: 1.0, d_neg: 1.0 }
        );
        assert_eq!(
            line_bounds(&set, &[0.5], &[1.0]).unwrap(),
            StepBounds { d_pos: 0.5, d_neg: 1.5 }
        );
        assert!(line_bounds(&set, &[1.5], &[1.0]).is_err());
    }

    #[test]
    fn unbounded_direction_is_capped() {
        let set = unit_box(2);
        let b = line_bounds_with_cap(&set, &[0.0, 0.0], &[0.0, 0.0], 7.0).unwrap();
        assert_eq!(b, StepBounds { d_pos: 7.0, d_neg: 7.0 });
    }

    #[test]
    fn chord_endpoints_are_tight() {
        let set = table2_set();
        let mut rng = RandomStream::new(1, 0);
        let mut eta = vec![0.0; set.dimension()];
        for _ in 0..200 {
            eta = sampler_two(&set, &eta, &mut rng).unwrap();
            let dir = random_box_point(&set, &mut rng);
            let b = line_bounds(&set, &eta, &dir).unwrap();
            if b.d_pos >= DEFAULT_STEP_CAP {
                continue;
            }
            let inside: Vec<f64> = eta.iter().zip(&dir).map(|(e, d)| e + 0.999 * b.d_pos * d).collect();
            assert!(is_feasible(&set, &inside).feasible);
            let step = 1.001 * b.d_pos + 1e-6;
            let outside: Vec<f64> = eta.iter().zip(&dir).map(|(e, d)| e + step * d).collect();
            assert!(!is_feasible(&set, &outside).feasible);
            let edge: Vec<f64> = eta.iter().zip(&dir).map(|(e, d)| e + b.d_pos * d).collect();
            let min_slack = row_slacks(&set, &edge).into_iter().fold(f64::INFINITY, f64::min);
            assert!(min_slack.abs() <= 1e-7);
        }
    }

    #[test]
    fn empty_coordinate_set_is_identity() {
        let set = unit_box(3);
        let mut rng = RandomStream::new(3, 0);
        let eta = vec![0.1, -0.2, 0.3];
        assert_eq!(sampler_one(&set, &eta, &[], 1, &mut rng).unwrap(), eta);
    }

    #[test]
    fn vertex_iterations_jump_to_chord_ends() {
        let set = unit_box(2);
        let mut rng = RandomStream::new(5, 0);
        for it in [0, 5, 10, 1000] {
            let out = sampler_one(&set, &[0.0, 0.0], &[1], it, &mut rng).unwrap();
            assert!(out[1] == 1.0 || out[1] == -1.0, "{out:?}");
            assert_eq!(out[0], 0.0);
        }
    }

    #[test]
    fn samplers_stay_feasible() {
        let set = table2_set();
        let mut rng = RandomStream::new(11, 2);
        let n = set.dimension();
        let mut eta = vec![0.0; n];
        for it in 0..5000 {
            let coords = random_coordinates(n, 3.0 / n as f64, &mut rng);
            eta = sampler_one(&set, &eta, &coords, it, &mut rng).unwrap();
            assert!(is_feasible(&set, &eta).feasible, "sampler I at {it}");
            eta = sampler_two(&set, &eta, &mut rng).unwrap();
            assert!(is_feasible(&set, &eta).feasible, "sampler II at {it}");
        }
    }

    #[test]
    fn zero_step_keeps_point() {
        let set = unit_box(2);
        let eta = [0.25, -0.5];
        let dir = [1.0, 1.0];
        // fraction d_neg/(d_pos+d_neg) gives step 0
        let b = line_bounds(&set, &eta, &dir).unwrap();
        let out = chord_step(&set, &eta, &dir, b.d_neg / (b.d_pos + b.d_neg)).unwrap();
        assert!((out[0] - eta[0]).abs() < 1e-15 && (out[1] - eta[1]).abs() < 1e-15);
    }

    #[test]
    fn chord_fraction_is_uniform() {
        // Fixed direction from the centre of the box: the position along the
        // chord must be uniform on [-1, 1].
        let set = unit_box(1);
        let mut rng = RandomStream::new(8, 0);
        let mut bins = [0usize; 10];
        let n = 20_000;
        for _ in 0..n {
            let out = chord_step(&set, &[0.0], &[1.0], rng.uniform()).unwrap();
            let k = (((out[0] + 1.0) / 2.0) * 10.0).floor().min(9.0) as usize;
            bins[k] += 1;
        }
        for b in bins {
            let frac = b as f64 / n as f64;
            assert!((frac - 0.1).abs() < 0.01, "{bins:?}");
        }
    }

    #[test]
    fn sampler_two_covers_box() {
        let set = unit_box(3);
        let mut rng = RandomStream::new(21, 0);
        let mut eta = vec![0.0; 3];
        let mut lo = [0.0f64; 3];
        let mut hi = [0.0f64; 3];
        for _ in 0..5000 {
            eta = sampler_two(&set, &eta, &mut rng).unwrap();
            for i in 0..3 {
                lo[i] = lo[i].min(eta[i]);
                hi[i] = hi[i].max(eta[i]);
            }
        }
        for i in 0..3 {
            assert!(lo[i] <= -0.95 && hi[i] >= 0.95, "{lo:?} {hi:?}");
        }
    }

    #[test]
    fn identical_streams_give_identical_samples() {
        let set = table2_set();
        let run = || {
            let mut rng = RandomStream::new(99, 4);
            let mut eta = vec![0.0; set.dimension()];
            for it in 0..50 {
                eta = sampler_one(&set, &eta, &[0, 3, 7], it, &mut rng).unwrap();
                eta = sampler_two(&set, &eta, &mut rng).unwrap();
            }
            eta
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn initial_point_is_zero_then_diversified() {
        let set = table2_set();
        let mut rng = RandomStream::new(0, 0);
        assert!(initial_point(&set, 0, &mut rng).unwrap().iter().all(|&v| v == 0.0));
        let eta = initial_point(&set, 50, &mut rng).unwrap();
        assert!(is_feasible(&set, &eta).feasible);

        // tight rows at the origin still admit it
        let mut a = Matrix::zeros(0, 1);
        a.push_row(&[1.0]);
        let tight = FeasibleSet::from_parts(a, vec![0.0], vec![RowLabel::RateUpper { m: 0 }], vec![1.0]).unwrap();
        assert_eq!(initial_point(&tight, 0, &mut rng).unwrap(), vec![0.0]);
    }

    #[test]
    fn projection_recovers_from_empty_battery() {
        let mut s = table2();
        s.battery.initial_energy = 3.0;
        let basis = build_basis(0.8, 6, 12).unwrap();
        let ops = build_prediction(&basis, StateSpaceModel::new(s.battery.leakage_per_slot, 1.0, 2));
        let set = crate::constraints::build_feasible_set_unchecked(&s, &basis, &ops, [3.0, 0.0], 0).unwrap();
        assert!(!is_feasible(&set, &vec![0.0; set.dimension()]).feasible);
        let mut rng = RandomStream::new(0, 0);
        let eta = initial_point(&set, 5, &mut rng).unwrap();
        assert!(is_feasible(&set, &eta).feasible);
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[0, 1]);
        let b = derive_seed(1, &[1, 0]);
        let c = derive_seed(2, &[0, 1]);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(1, &[0, 1]));
    }
}

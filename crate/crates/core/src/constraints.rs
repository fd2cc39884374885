//! The stacked linear-inequality system `A·η ≤ b` over Laguerre coefficients.

use std::fmt;
use std::io::Write;

use crate::domain::Scenario;
use crate::error::{Error, Result};
use crate::laguerre::{LaguerreBasis, PredictionOperators};
use crate::linalg::{dot, Matrix};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Which physical bound a constraint row encodes. `m` is the horizon offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowLabel {
    RateUpper { m: usize },
    RateLower { m: usize },
    ApplianceUpper { appliance: usize, m: usize },
    ApplianceLower { appliance: usize, m: usize },
    /// Bound on the energy at the end of slot `t+m`, i.e. `E_s(t+m+1)`.
    EnergyUpper { m: usize },
    EnergyLower { m: usize },
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowLabel::RateUpper { m } => write!(f, "rate-upper({m})"),
            RowLabel::RateLower { m } => write!(f, "rate-lower({m})"),
            RowLabel::ApplianceUpper { appliance, m } => {
                write!(f, "appliance-upper({appliance},{m})")
            }
            RowLabel::ApplianceLower { appliance, m } => {
                write!(f, "appliance-lower({appliance},{m})")
            }
            RowLabel::EnergyUpper { m } => write!(f, "energy-upper({m})"),
            RowLabel::EnergyLower { m } => write!(f, "energy-lower({m})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    a: Matrix,
    b: Vec<f64>,
    labels: Vec<RowLabel>,
    tolerance: f64,
    /// Half-width of a coefficient box used to draw random directions.
    coefficient_box: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Row with the largest `A_r·η − b_r`, if there are any rows.
    pub worst_row: Option<usize>,
    pub worst_label: Option<RowLabel>,
    /// `max_r (A_r·η − b_r)`; negative when strictly interior.
    pub max_violation: f64,
}

impl FeasibleSet {
    /// Assembles a set from explicit rows.
    pub fn from_parts(
        a: Matrix,
        b: Vec<f64>,
        labels: Vec<RowLabel>,
        coefficient_box: Vec<f64>,
    ) -> Result<Self> {
        if a.rows() != b.len() || b.len() != labels.len() {
            return Err(Error::Parameter(format!(
                "constraint system has {} rows, {} bounds, {} labels",
                a.rows(),
                b.len(),
                labels.len()
            )));
        }
        if a.rows() > 0 && a.cols() != coefficient_box.len() {
            return Err(Error::Parameter("coefficient box dimension mismatch".into()));
        }
        Ok(FeasibleSet {
            a,
            b,
            labels,
            tolerance: DEFAULT_TOLERANCE,
            coefficient_box,
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn labels(&self) -> &[RowLabel] {
        &self.labels
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn dimension(&self) -> usize {
        self.coefficient_box.len()
    }

    pub fn coefficient_box(&self) -> &[f64] {
        &self.coefficient_box
    }

    /// One line per row: label, row coefficients, bound.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dimension()).map(|i| format!("a_{i}")));
        header.push("b".into());
        w.write_record(&header)?;
        for r in 0..self.rows() {
            let mut rec = vec![self.labels[r].to_string()];
            rec.extend(self.a.row(r).iter().map(|v| format!("{v:e}")));
            rec.push(format!("{:e}", self.b[r]));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("constraint dump", e))?;
        Ok(())
    }
}

/// Builds the set and requires `η = 0` to be feasible.
pub fn build_feasible_set(
    scenario: &Scenario,
    basis: &LaguerreBasis,
    ops: &PredictionOperators,
    x0: [f64; 2],
    t_now: usize,
) -> Result<FeasibleSet> {
    let set = build_feasible_set_unchecked(scenario, basis, ops, x0, t_now)?;
    let report = is_feasible(&set, &vec![0.0; set.dimension()]);
    if !report.feasible {
        let row = report.worst_row.unwrap_or(0);
        return Err(Error::InfeasibleScenario {
            row,
            label: set.labels[row].to_string(),
            violation: report.max_violation,
        });
    }
    Ok(set)
}

/// Builds the set without checking that `η = 0` is feasible.
///
/// Closed-loop operation can leave the battery at its lower capacity, where
/// leakage alone exits the set; callers then need a recovered start point
/// (see [`crate::sampler::initial_point`]).
pub fn build_feasible_set_unchecked(
    scenario: &Scenario,
    basis: &LaguerreBasis,
    ops: &PredictionOperators,
    x0: [f64; 2],
    t_now: usize,
) -> Result<FeasibleSet> {
    let bat = &scenario.battery;
    let tol = DEFAULT_TOLERANCE;
    if !(x0[0] >= bat.capacity_min - tol && x0[0] <= bat.capacity_max + tol) {
        return Err(Error::Precondition(format!(
            "battery energy {} outside [{}, {}]",
            x0[0], bat.capacity_min, bat.capacity_max
        )));
    }
    let ell = scenario.power_flexible.len();
    if ops.model().flexible_count != ell || ops.horizon() != basis.horizon() {
        return Err(Error::Parameter(
            "prediction operators do not match scenario or basis".into(),
        ));
    }
    let j = basis.order();
    let n = (1 + ell) * j;

    let mut a = Matrix::zeros(0, n);
    let mut b = Vec::new();
    let mut labels = Vec::new();
    let mut row = vec![0.0; n];

    let mut push_block = |a: &mut Matrix, block: usize, l: &[f64], sign: f64| {
        row.iter_mut().for_each(|v| *v = 0.0);
        for (dst, v) in row[block * j..(block + 1) * j].iter_mut().zip(l) {
            *dst = sign * v;
        }
        a.push_row(&row);
    };

    for m in 0..basis.horizon() {
        let l = basis.at(m);
        let slot = t_now + m;
        let active: Vec<usize> = scenario
            .power_flexible
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_active(slot))
            .map(|(i, _)| i)
            .collect();

        push_block(&mut a, 0, l, 1.0);
        b.push(bat.max_rate);
        labels.push(RowLabel::RateUpper { m });
        for &c in &active {
            let (_, hi) = scenario.power_flexible[c].deviation_bounds();
            push_block(&mut a, 1 + c, l, 1.0);
            b.push(hi);
            labels.push(RowLabel::ApplianceUpper { appliance: c, m });
        }

        push_block(&mut a, 0, l, -1.0);
        b.push(bat.max_rate);
        labels.push(RowLabel::RateLower { m });
        for &c in &active {
            let (lo, _) = scenario.power_flexible[c].deviation_bounds();
            push_block(&mut a, 1 + c, l, -1.0);
            b.push(-lo);
            labels.push(RowLabel::ApplianceLower { appliance: c, m });
        }

        let phi = ops.phi(m + 1).row(0);
        let free = dot(ops.a_power(m + 1).row(0), &x0);
        a.push_row(phi);
        b.push(bat.capacity_max - free);
        labels.push(RowLabel::EnergyUpper { m });
        let neg: Vec<f64> = phi.iter().map(|v| -v).collect();
        a.push_row(&neg);
        b.push(free - bat.capacity_min);
        labels.push(RowLabel::EnergyLower { m });
    }

    let peaks = basis.peak_magnitudes();
    let mut coefficient_box = Vec::with_capacity(n);
    let half_width = |range: f64, peak: f64| {
        if peak > 0.0 {
            range / peak
        } else {
            range
        }
    };
    coefficient_box.extend(peaks.iter().map(|&p| half_width(bat.max_rate, p)));
    for c in &scenario.power_flexible {
        let (lo, hi) = c.deviation_bounds();
        let range = lo.abs().max(hi.abs());
        coefficient_box.extend(peaks.iter().map(|&p| half_width(range, p)));
    }

    FeasibleSet::from_parts(a, b, labels, coefficient_box)
}

/// `b − A·η`.
pub fn row_slacks(set: &FeasibleSet, eta: &[f64]) -> Vec<f64> {
    assert_eq!(eta.len(), set.dimension(), "coefficient dimension mismatch");
    (0..set.rows())
        .map(|r| set.b[r] - dot(set.a.row(r), eta))
        .collect()
}

pub fn is_feasible(set: &FeasibleSet, eta: &[f64]) -> FeasibilityReport {
    let slacks = row_slacks(set, eta);
    let mut worst: Option<(usize, f64)> = None;
    for (r, s) in slacks.iter().enumerate() {
        let v = -s;
        if worst.is_none_or(|(_, w)| v > w) {
            worst = Some((r, v));
        }
    }
    match worst {
        Some((r, v)) => FeasibilityReport {
            feasible: v <= set.tolerance,
            worst_row: Some(r),
            worst_label: Some(set.labels[r]),
            max_violation: v,
        },
        None => FeasibilityReport {
            feasible: true,
            worst_row: None,
            worst_label: None,
            max_violation: f64::NEG_INFINITY,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::tests::table2;
    use crate::laguerre::{build_basis, build_prediction, StateSpaceModel};

    fn set_for(s: &Scenario, j: usize, m: usize, x0: [f64; 2], t: usize) -> Result<FeasibleSet> {
        let basis = build_basis(0.8, j, m).unwrap();
        let ops = build_prediction(
            &basis,
            StateSpaceModel::new(s.battery.leakage_per_slot, s.dt(), s.power_flexible.len()),
        );
        build_feasible_set(s, &basis, &ops, x0, t)
    }

    #[test]
    fn table2_zero_is_feasible() {
        let s = table2();
        let set = set_for(&s, 15, 20, [4.0, 0.0], 0).unwrap();
        let r = is_feasible(&set, &vec![0.0; set.dimension()]);
        assert!(r.feasible);
        // c2 runs at its maximum, so its upper rows are tight
        assert_eq!(r.max_violation, 0.0);
        let rho: f64 = s.battery.leakage_per_slot;
        let slacks = row_slacks(&set, &vec![0.0; set.dimension()]);
        let r19 = set
            .labels()
            .iter()
            .position(|l| *l == RowLabel::EnergyLower { m: 19 })
            .unwrap();
        assert!((slacks[r19] - (rho.powi(20) * 4.0 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn appliance_rows_only_inside_window() {
        let s = table2();
        let set = set_for(&s, 4, 20, [4.0, 0.0], 0).unwrap();
        for label in set.labels() {
            if let RowLabel::ApplianceUpper { appliance: 0, m } = label {
                assert!((10..=15).contains(m), "c1 row at offset {m}");
            }
        }
        let c1_rows = set
            .labels()
            .iter()
            .filter(|l| matches!(l, RowLabel::ApplianceUpper { appliance: 0, .. }))
            .count();
        assert_eq!(c1_rows, 6);
        // per m: 2 rate + 2 energy + 2 for c2 always; c1 adds 2 on 6 slots
        assert_eq!(set.rows(), 20 * 6 + 12);
    }

    #[test]
    fn empty_battery_with_leakage_is_rejected() {
        let mut s = table2();
        s.battery.initial_energy = 3.0;
        match set_for(&s, 3, 5, [3.0, 0.0], 0) {
            // leakage compounds, so the last offset is the most violated
            Err(Error::InfeasibleScenario { label, .. }) => assert_eq!(label, "energy-lower(4)"),
            other => panic!("expected infeasible scenario, got {other:?}"),
        }
    }

    #[test]
    fn minimal_instance_has_four_rows() {
        let mut s = table2();
        s.power_flexible.clear();
        s.battery.leakage_per_slot = 1.0;
        let basis = build_basis(0.0, 1, 1).unwrap();
        let ops = build_prediction(&basis, StateSpaceModel::new(1.0, 1.0, 0));
        let set = build_feasible_set(&s, &basis, &ops, [4.0, 0.0], 0).unwrap();
        assert_eq!(set.rows(), 4);
        assert_eq!(set.a().row(0), &[1.0]);
        assert_eq!(set.a().row(1), &[-1.0]);
        assert_eq!(set.a().row(2), &[1.0]);
        assert_eq!(set.a().row(3), &[-1.0]);
        assert_eq!(set.b(), &[3.0, 3.0, 6.0, 1.0]);

        let far = is_feasible(&set, &[30.0]);
        assert!(!far.feasible);
        assert_eq!(far.worst_label, Some(RowLabel::RateUpper { m: 0 }));
        // exactly on the rate boundary
        assert!(is_feasible(&set, &[-1.0]).feasible);
        assert_eq!(row_slacks(&set, &[0.0]), set.b().to_vec());
        let slack = row_slacks(&set, &[-1.0]);
        assert!(slack.iter().any(|s| s.abs() <= 1e-12));
    }

    #[test]
    fn set_ignores_start_times() {
        // the builder takes no start times at all; two scenarios differing in
        // requested start give the same rows
        let s = table2();
        let mut t = table2();
        t.time_flexible[0].requested_start = 15;
        let a = set_for(&s, 5, 10, [5.0, 0.0], 3).unwrap();
        let b = set_for(&t, 5, 10, [5.0, 0.0], 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_dump_has_label_first() {
        let s = table2();
        let set = set_for(&s, 2, 2, [4.0, 0.0], 0).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "label,a_0,a_1,a_2,a_3,a_4,a_5,b");
        assert!(lines.next().unwrap().starts_with("rate-upper(0),"));
        assert_eq!(text.lines().count(), set.rows() + 1);
    }
}

//! Discrete Laguerre network and the state-space prediction built on it.
//!
//! A control trajectory over an `M`-slot horizon is written as
//! `u(m) = L(m)ᵀ·η` where `L(m)` collects the first `J` discrete Laguerre
//! functions at lag `m`. The vectors obey `L(m+1) = A_la·L(m)` with
//! `L(0) = √(1−p²)·[1, −p, p², …, (−p)^(J−1)]ᵀ`.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Precomputed Laguerre vectors `L(0..M)` for a pole, order and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LaguerreBasis {
    pole: f64,
    order: usize,
    horizon: usize,
    /// `vectors[m]` is `L(m)`, length `order`.
    vectors: Vec<Vec<f64>>,
    transition: Matrix,
}

impl LaguerreBasis {
    pub fn pole(&self) -> f64 {
        self.pole
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `L(m)` for `m < horizon`.
    pub fn at(&self, m: usize) -> &[f64] {
        &self.vectors[m]
    }

    /// The lower-triangular recursion matrix `A_la`.
    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    /// Largest `|l_j(m)|` over the horizon, per basis function.
    pub fn peak_magnitudes(&self) -> Vec<f64> {
        (0..self.order)
            .map(|j| {
                self.vectors
                    .iter()
                    .map(|l| l[j].abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// `Σ_m l_i(m)·l_j(m)` over the stored horizon.
    pub fn gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.order, self.order);
        for l in &self.vectors {
            for i in 0..self.order {
                for j in 0..self.order {
                    g.set(i, j, g.get(i, j) + l[i] * l[j]);
                }
            }
        }
        g
    }

    /// Largest `‖L(m+1) − A_la·L(m)‖∞` over the stored horizon.
    pub fn recursion_residual(&self) -> f64 {
        self.vectors
            .windows(2)
            .map(|w| {
                let next = self.transition.mul_vec(&w[0]);
                next.iter()
                    .zip(&w[1])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

fn initial_vector(pole: f64, order: usize) -> Vec<f64> {
    let scale = (1.0 - pole * pole).sqrt();
    let mut v = Vec::with_capacity(order);
    let mut power = 1.0;
    for _ in 0..order {
        v.push(scale * power);
        power *= -pole;
    }
    v
}

fn transition_matrix(pole: f64, order: usize) -> Matrix {
    let beta = 1.0 - pole * pole;
    let mut a = Matrix::zeros(order, order);
    for i in 0..order {
        a.set(i, i, pole);
        // entry (i, j) below the diagonal is (−p)^(i−j−1)·(1−p²)
        let mut coeff = beta;
        for j in (0..i).rev() {
            a.set(i, j, coeff);
            coeff *= -pole;
        }
    }
    a
}

/// Builds the Laguerre vectors `L(0..horizon)`.
pub fn build_basis(pole: f64, order: usize, horizon: usize) -> Result<LaguerreBasis> {
    if !(0.0..1.0).contains(&pole) {
        return Err(Error::Parameter(format!("Laguerre pole {pole} not in [0, 1)")));
    }
    if order == 0 {
        return Err(Error::Parameter("Laguerre order must be at least 1".into()));
    }
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    let transition = transition_matrix(pole, order);
    let mut vectors = Vec::with_capacity(horizon);
    vectors.push(initial_vector(pole, order));
    for m in 1..horizon {
        let next = transition.mul_vec(&vectors[m - 1]);
        vectors.push(next);
    }
    Ok(LaguerreBasis {
        pole,
        order,
        horizon,
        vectors,
        transition,
    })
}

/// Deviation signals for the battery (row 0) and each power-flexible
/// appliance (rows `1..=ℓ`) over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMatrix {
    signals: usize,
    horizon: usize,
    data: Vec<f64>,
}

impl ControlMatrix {
    pub fn zeros(signals: usize, horizon: usize) -> Self {
        ControlMatrix {
            signals,
            horizon,
            data: vec![0.0; signals * horizon],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let horizon = rows.first().map_or(0, Vec::len);
        let signals = rows.len();
        let data = rows.into_iter().flatten().collect::<Vec<_>>();
        assert_eq!(data.len(), signals * horizon, "ragged control rows");
        ControlMatrix {
            signals,
            horizon,
            data,
        }
    }

    pub fn signals(&self) -> usize {
        self.signals
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, signal: usize, m: usize) -> f64 {
        self.data[signal * self.horizon + m]
    }

    pub fn set(&mut self, signal: usize, m: usize, v: f64) {
        self.data[signal * self.horizon + m] = v;
    }

    pub fn signal(&self, signal: usize) -> &[f64] {
        &self.data[signal * self.horizon..(signal + 1) * self.horizon]
    }

    /// Battery power over the horizon.
    pub fn battery(&self) -> &[f64] {
        self.signal(0)
    }

    /// Column `m`, i.e. `u(t+m)`.
    pub fn column(&self, m: usize) -> Vec<f64> {
        (0..self.signals).map(|s| self.get(s, m)).collect()
    }
}

fn check_eta(basis: &LaguerreBasis, eta: &[f64], flexible_count: usize) -> Result<()> {
    let expected = (1 + flexible_count) * basis.order;
    if eta.len() != expected {
        return Err(Error::Parameter(format!(
            "coefficient vector has {} entries, expected (1+{flexible_count})·{} = {expected}",
            eta.len(),
            basis.order
        )));
    }
    Ok(())
}

/// `u(t+m) = G(m)·η` for every `m` in the horizon.
pub fn reconstruct_controls(
    basis: &LaguerreBasis,
    eta: &[f64],
    flexible_count: usize,
) -> Result<ControlMatrix> {
    check_eta(basis, eta, flexible_count)?;
    let j = basis.order;
    let mut out = ControlMatrix::zeros(1 + flexible_count, basis.horizon);
    for (m, l) in basis.vectors.iter().enumerate() {
        for (s, block) in eta.chunks_exact(j).enumerate() {
            out.set(s, m, dot(l, block));
        }
    }
    Ok(out)
}

/// `x(t+1) = A·x(t) + B·u(t)` with state `[E_s, C_p]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpaceModel {
    pub leakage: f64,
    pub dt: f64,
    pub flexible_count: usize,
}

impl StateSpaceModel {
    pub fn new(leakage: f64, dt: f64, flexible_count: usize) -> Self {
        StateSpaceModel {
            leakage,
            dt,
            flexible_count,
        }
    }

    /// `[[ρ, 0], [0, 1]]`
    pub fn a(&self) -> Matrix {
        Matrix::from_rows(&[vec![self.leakage, 0.0], vec![0.0, 1.0]])
    }

    /// `[[Δt, 0…0], [0, 1…1]]`
    pub fn b(&self) -> Matrix {
        let n = 1 + self.flexible_count;
        let mut b = Matrix::zeros(2, n);
        b.set(0, 0, self.dt);
        for c in 1..n {
            b.set(1, c, 1.0);
        }
        b
    }

    pub fn a_power(&self, m: usize) -> Matrix {
        let mut out = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let a = self.a();
        for _ in 0..m {
            out = a.mul(&out);
        }
        out
    }

    pub fn step(&self, x: [f64; 2], u: &[f64]) -> [f64; 2] {
        assert_eq!(u.len(), 1 + self.flexible_count);
        [
            self.leakage * x[0] + self.dt * u[0],
            x[1] + u[1..].iter().sum::<f64>(),
        ]
    }
}

/// Prediction matrices `G(m)` and `φ(m)` for one basis and model.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOperators {
    model: StateSpaceModel,
    horizon: usize,
    /// `g[m]` is `G(m)`, `(1+ℓ) × (1+ℓ)·J`, for `m < horizon`.
    g: Vec<Matrix>,
    /// `phi[m]` is `φ(m)`, `2 × (1+ℓ)·J`, for `m ≤ horizon`.
    phi: Vec<Matrix>,
    /// `a_pow[m]` is `A^m` for `m ≤ horizon`.
    a_pow: Vec<Matrix>,
}

impl PredictionOperators {
    pub fn model(&self) -> &StateSpaceModel {
        &self.model
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn g(&self, m: usize) -> &Matrix {
        &self.g[m]
    }

    pub fn phi(&self, m: usize) -> &Matrix {
        &self.phi[m]
    }

    pub fn a_power(&self, m: usize) -> &Matrix {
        &self.a_pow[m]
    }

    pub fn coefficient_count(&self) -> usize {
        self.phi[0].cols()
    }
}

fn block_diagonal(l: &[f64], blocks: usize) -> Matrix {
    let j = l.len();
    let mut g = Matrix::zeros(blocks, blocks * j);
    for b in 0..blocks {
        g.row_mut(b)[b * j..(b + 1) * j].copy_from_slice(l);
    }
    g
}

/// Builds `G(m)` and `φ(m+1) = A·φ(m) + B·G(m)` with `φ(0) = 0`.
pub fn build_prediction(basis: &LaguerreBasis, model: StateSpaceModel) -> PredictionOperators {
    let blocks = 1 + model.flexible_count;
    let n = blocks * basis.order;
    let a = model.a();
    let b = model.b();
    let g: Vec<Matrix> = basis
        .vectors
        .iter()
        .map(|l| block_diagonal(l, blocks))
        .collect();
    let mut phi = Vec::with_capacity(basis.horizon + 1);
    phi.push(Matrix::zeros(2, n));
    let mut a_pow = Vec::with_capacity(basis.horizon + 1);
    a_pow.push(model.a_power(0));
    for m in 0..basis.horizon {
        let next = a.mul(&phi[m]).add(&b.mul(&g[m]));
        phi.push(next);
        a_pow.push(a.mul(&a_pow[m]));
    }
    PredictionOperators {
        model,
        horizon: basis.horizon,
        g,
        phi,
        a_pow,
    }
}

/// `x(t+m|t) = A^m·x(t) + φ(m)·η`.
pub fn predict_state(
    ops: &PredictionOperators,
    x0: [f64; 2],
    eta: &[f64],
    m: usize,
) -> Result<[f64; 2]> {
    if m > ops.horizon {
        return Err(Error::Range {
            what: "prediction step",
            index: m,
            limit: ops.horizon,
        });
    }
    if eta.len() != ops.coefficient_count() {
        return Err(Error::Parameter(format!(
            "coefficient vector has {} entries, expected {}",
            eta.len(),
            ops.coefficient_count()
        )));
    }
    let free = ops.a_pow[m].mul_vec(&x0);
    let forced = ops.phi[m].mul_vec(eta);
    Ok([free[0] + forced[0], free[1] + forced[1]])
}

//! Time-ordered propagation of the driven system.
//!
//! The Hamiltonian is `H(t) = D + Σ_m [d_m(t) a_m + conj(d_m(t)) a_m†]` with
//! `D` the (diagonal) static Hamiltonian in the chosen frame. Two unitary
//! integrators are available:
//!
//! * [`Integrator::Split`] (default): per step of length `h` sampled at the
//!   midpoint `t*`,
//!   `U ← e^{−iDh/2} · Π_m exp(−ih V_m(t*)) · e^{−iDh/2} · U`.
//!   The drive terms of different modes act on different tensor factors, so
//!   their exponentials commute and each one is a small `n_m × n_m` matrix.
//!   With `d = r e^{iθ}` the single-mode drive is
//!   `V = r · e^{−iθN} (a + a†) e^{iθN}`, so its exponential comes from the
//!   fixed eigenbasis of `a + a†` without a per-step eigensolve.
//!   [`Integrator::SplitFourthOrder`] composes three such steps with
//!   triple-jump weights.
//! * [`Integrator::DenseMidpoint`]: exact exponential of the dense sampled
//!   Hamiltonian `H(t*)`. Exact for drives that are constant on each step;
//!   intended for validation on small spaces.
//!
//! Leakage `Σ_cols ⟨u|W|u⟩` is accumulated on the step boundaries with the
//! trapezoidal rule and divided by the duration.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::controls::DriveSource;
use crate::error::{Error, Result};
use crate::block::Block;
use crate::fockspace::{CMatrix, CompositeBasis};
use crate::model::SystemSpec;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Time integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Split,
    SplitFourthOrder,
    DenseMidpoint,
}

impl Integrator {
    /// Sub-steps as (start fraction, length fraction) of one step.
    fn stages(self) -> Vec<(f64, f64)> {
        match self {
            Integrator::Split | Integrator::DenseMidpoint => vec![(0.0, 1.0)],
            Integrator::SplitFourthOrder => {
                let g1 = 1.0 / (2.0 - 2f64.powf(1.0 / 3.0));
                let g2 = 1.0 - 2.0 * g1;
                vec![(0.0, g1), (g1, g2), (g1 + g2, g1)]
            }
        }
    }
}

/// Step-size selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// Fixed step count; `None` picks `τ/Δt` with
    /// `Δt = min(1/(20 f_max), τ/10⁴)`.
    pub steps: Option<usize>,
    pub integrator: Integrator,
    /// Refuse steps that resolve the fastest drive frequency with fewer
    /// samples per period than this.
    pub min_steps_per_period: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            steps: None,
            integrator: Integrator::Split,
            min_steps_per_period: 20.0,
        }
    }
}

impl StepControl {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps: Some(steps),
            ..Self::default()
        }
    }

    pub fn integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }
}

/// Default number of steps for a drive of the given duration and fastest
/// frequency (rad/s).
pub fn default_step_count(duration: f64, max_frequency: f64) -> usize {
    let f_max = max_frequency / TAU;
    let mut dt = duration / 1e4;
    if f_max > 0.0 {
        dt = dt.min(1.0 / (20.0 * f_max));
    }
    ((duration / dt) * (1.0 - 1e-12)).ceil() as usize
}

/// Resolved time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    pub steps: usize,
    pub dt: f64,
    pub integrator: Integrator,
    stages: Vec<(f64, f64)>,
}

impl StepPlan {
    pub fn new(duration: f64, max_frequency: f64, control: &StepControl) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::InvalidPulse(format!("duration must be positive, got {duration}")));
        }
        let steps = control
            .steps
            .unwrap_or_else(|| default_step_count(duration, max_frequency))
            .max(1);
        let dt = duration / steps as f64;
        let f_max = max_frequency / TAU;
        if f_max > 0.0 {
            let per_period = 1.0 / (f_max * dt);
            if per_period < control.min_steps_per_period {
                return Err(Error::StepTooCoarse {
                    steps_per_period: per_period,
                    max_frequency_hz: f_max,
                    required: control.min_steps_per_period,
                });
            }
        }
        Ok(Self {
            steps,
            dt,
            integrator: control.integrator,
            stages: control.integrator.stages(),
        })
    }

    /// Trapezoid weight of boundary `k` divided by the duration.
    fn leakage_weight(&self, k: usize) -> f64 {
        let w = if k == 0 || k == self.steps { 0.5 } else { 1.0 };
        w / self.steps as f64
    }
}

/// Which initial basis states to propagate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Columns {
    Essential,
    Full,
    States(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    /// `dim_full × columns.len()`: evolved images of the initial basis states.
    pub final_propagator: CMatrix,
    /// Basis index of the initial state of every column.
    pub columns: Vec<usize>,
    /// `(1/τ)∫ Σ_cols ⟨u|W|u⟩ dt` (trapezoidal on the step grid); zero
    /// without weights.
    pub leakage_integral: f64,
    /// Largest total guard-level population of any column at any step boundary.
    pub max_guard_population: f64,
    pub step_count: usize,
}

impl PropagationResult {
    /// `max |(U†U − I)_ij|` over the propagated columns.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.final_propagator.ncols();
        (self.final_propagator.adjoint() * &self.final_propagator - CMatrix::identity(n, n)).camax()
    }
}

/// Eigen-decomposition of `a + a†` for one mode.
#[derive(Debug, Clone)]
struct Ladder {
    levels: usize,
    stride: usize,
    /// eigenvalues of `a + a†`
    mu: Vec<f64>,
    /// eigenvectors, column-major `levels × levels`
    q: Vec<f64>,
    /// `√(a+1)`, the `(a, a+1)` entry of the lowering operator
    sqrt: Vec<f64>,
}

impl Ladder {
    fn new(levels: usize, stride: usize) -> Self {
        let sqrt: Vec<f64> = (1..levels).map(|k| (k as f64).sqrt()).collect();
        let x = DMatrix::<f64>::from_fn(levels, levels, |i, j| {
            if j == i + 1 {
                sqrt[i]
            } else if i == j + 1 {
                sqrt[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(x);
        Self {
            levels,
            stride,
            mu: eig.eigenvalues.iter().copied().collect(),
            q: eig.eigenvectors.as_slice().to_vec(),
            sqrt,
        }
    }

    #[inline]
    fn q(&self, a: usize, j: usize) -> f64 {
        self.q[a + j * self.levels]
    }

    fn phases(&self, theta: f64) -> Vec<Complex64> {
        let step = Complex64::from_polar(1.0, -theta);
        let mut p = Vec::with_capacity(self.levels);
        let mut z = Complex64::new(1.0, 0.0);
        for _ in 0..self.levels {
            p.push(z);
            z *= step;
        }
        p
    }

    /// `exp(−ih (d a + conj(d) a†))`, column-major into `out`.
    fn exponential(&self, d: Complex64, h: f64, out: &mut [Complex64]) {
        let n = self.levels;
        let (r, theta) = d.to_polar();
        let f: Vec<Complex64> = self.mu.iter().map(|&mu| Complex64::from_polar(1.0, -h * r * mu)).collect();
        let p = self.phases(theta);
        for b in 0..n {
            for a in b..n {
                let mut m = ZERO;
                for (j, fj) in f.iter().enumerate() {
                    m += fj * (self.q(a, j) * self.q(b, j));
                }
                let rel = p[a] * p[b].conj();
                out[a + b * n] = m * rel;
                out[b + a * n] = m * rel.conj();
            }
        }
    }

    /// Derivatives of `2 Re Tr(L† (I⊗E⊗I) R)` with respect to `Re d` and
    /// `Im d`, given the reduced overlap `C_ab = Σ conj(L_a) R_b`.
    fn gradient(&self, d: Complex64, h: f64, overlap: &[Complex64]) -> (f64, f64) {
        let n = self.levels;
        let (r, theta) = d.to_polar();
        let lambda: Vec<f64> = self.mu.iter().map(|&mu| r * mu).collect();
        let p = self.phases(theta);
        // B = Qᵀ C_θ Q with C_θ = e^{−iθ(a−b)} C_ab
        let mut tmp = vec![ZERO; n * n];
        for b in 0..n {
            let cb = p[b].conj();
            for a in 0..n {
                let c = overlap[a + b * n] * p[a] * cb;
                for j in 0..n {
                    tmp[j + b * n] += c * self.q(a, j);
                }
            }
        }
        let mut g = vec![ZERO; n * n];
        for k in 0..n {
            for b in 0..n {
                let qbk = self.q(b, k);
                for j in 0..n {
                    g[j + k * n] += tmp[j + b * n] * qbk;
                }
            }
        }
        // Hadamard product with Φ_jk, the divided difference of e^{−ihλ}
        for k in 0..n {
            for j in 0..=k {
                let mean = 0.5 * (lambda[j] + lambda[k]);
                let half = 0.5 * h * (lambda[j] - lambda[k]);
                let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
                let phi = Complex64::new(0.0, -h) * Complex64::from_polar(sinc, -h * mean);
                g[j + k * n] *= phi;
                if j != k {
                    g[k + j * n] *= phi;
                }
            }
        }
        // first off-diagonals of Q G Qᵀ
        let entry = |a: usize, b: usize| {
            let mut acc = ZERO;
            for k in 0..n {
                let mut row = ZERO;
                for j in 0..n {
                    row += g[j + k * n] * self.q(a, j);
                }
                acc += row * self.q(b, k);
            }
            acc
        };
        let phase = p.get(1).copied().unwrap_or(Complex64::new(1.0, 0.0));
        let i = Complex64::new(0.0, 1.0);
        let (mut gx, mut gy) = (0.0, 0.0);
        for a in 0..n - 1 {
            let s = self.sqrt[a];
            let upper = entry(a, a + 1);
            let lower = entry(a + 1, a);
            // X_θ(a,a+1) = e^{−iθ}√(a+1), X_θ(a+1,a) = e^{iθ}√(a+1); Y_θ = ±i X_θ
            let xu = phase * s;
            let xl = phase.conj() * s;
            gx += 2.0 * (xu * upper + xl * lower).re;
            gy += 2.0 * (i * xu * upper - i * xl * lower).re;
        }
        (gx, gy)
    }
}

/// Reusable propagation engine for one system.
#[derive(Debug, Clone)]
pub struct Propagator {
    basis: CompositeBasis,
    diagonal: Vec<f64>,
    ladders: Vec<Ladder>,
    guard_rows: Vec<usize>,
}

/// Per-boundary leakage bookkeeping during a sweep.
struct LeakageTally<'a> {
    weighted_rows: Vec<(usize, f64)>,
    guard_rows: &'a [usize],
    column_pop: Vec<f64>,
    integral: f64,
    max_guard: f64,
}

impl<'a> LeakageTally<'a> {
    fn new(weights: Option<&[f64]>, guard_rows: &'a [usize], ncols: usize) -> Self {
        let weighted_rows = weights
            .map(|w| w.iter().copied().enumerate().filter(|&(_, x)| x != 0.0).collect())
            .unwrap_or_default();
        Self {
            weighted_rows,
            guard_rows,
            column_pop: vec![0.0; ncols],
            integral: 0.0,
            max_guard: 0.0,
        }
    }

    fn record(&mut self, block: &Block, weight: f64) {
        self.column_pop.iter_mut().for_each(|p| *p = 0.0);
        for &i in self.guard_rows {
            block.add_row_population(i, &mut self.column_pop);
        }
        self.max_guard = self.column_pop.iter().copied().fold(self.max_guard, f64::max);
        let weighted: f64 = self.weighted_rows.iter().map(|&(i, w)| w * block.row_population(i)).sum();
        self.integral += weight * weighted;
    }
}

impl Propagator {
    pub fn new(system: &SystemSpec) -> Self {
        let basis = system.basis();
        let ladders = basis
            .levels()
            .iter()
            .zip(basis.strides())
            .map(|(&levels, &stride)| Ladder::new(levels, stride))
            .collect();
        let guard_rows = (0..basis.dim_full()).filter(|&i| !basis.is_essential(i)).collect();
        Self {
            diagonal: system.static_diagonal(),
            basis,
            ladders,
            guard_rows,
        }
    }

    pub fn basis(&self) -> &CompositeBasis {
        &self.basis
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub(crate) fn initial_block(&self, columns: &Columns) -> Result<(Vec<usize>, Block)> {
        let dim = self.basis.dim_full();
        let cols: Vec<usize> = match columns {
            Columns::Essential => self.basis.essential_indices().to_vec(),
            Columns::Full => (0..dim).collect(),
            Columns::States(s) => {
                if let Some(&bad) = s.iter().find(|&&i| i >= dim) {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: bad,
                    });
                }
                s.clone()
            }
        };
        let block = Block::unit_columns(dim, &cols);
        Ok((cols, block))
    }

    fn check_drive(&self, drive: &dyn DriveSource) -> Result<()> {
        if drive.n_modes() != self.basis.n_modes() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.n_modes(),
                actual: drive.n_modes(),
            });
        }
        Ok(())
    }

    pub fn plan(&self, drive: &dyn DriveSource, control: &StepControl) -> Result<StepPlan> {
        self.check_drive(drive)?;
        StepPlan::new(drive.duration(), drive.max_frequency(), control)
    }

    fn half_phases(&self, plan: &StepPlan) -> Vec<Vec<Complex64>> {
        plan.stages
            .iter()
            .map(|&(_, frac)| {
                let h = frac * plan.dt;
                self.diagonal
                    .iter()
                    .map(|&e| Complex64::from_polar(1.0, -0.5 * h * e))
                    .collect()
            })
            .collect()
    }

    /// Propagates the selected initial states over the drive duration.
    pub fn propagate(
        &self,
        drive: &dyn DriveSource,
        control: &StepControl,
        columns: &Columns,
        weights: Option<&[f64]>,
    ) -> Result<PropagationResult> {
        let plan = self.plan(drive, control)?;
        let (cols, mut block) = self.initial_block(columns)?;
        let (leakage, max_guard) = self.forward(drive, &plan, &mut block, weights, &mut |_, _| {})?;
        Ok(PropagationResult {
            final_propagator: block.to_matrix(),
            columns: cols,
            leakage_integral: leakage,
            max_guard_population: max_guard,
            step_count: plan.steps,
        })
    }

    /// Forward sweep in place. `observe(k, block)` sees every step boundary.
    pub(crate) fn forward(
        &self,
        drive: &dyn DriveSource,
        plan: &StepPlan,
        block: &mut Block,
        weights: Option<&[f64]>,
        observe: &mut dyn FnMut(usize, &Block),
    ) -> Result<(f64, f64)> {
        let dim = self.basis.dim_full();
        if let Some(w) = weights {
            if w.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: w.len(),
                });
            }
        }
        let mut tally = LeakageTally::new(weights, &self.guard_rows, block.ncols);
        tally.record(block, plan.leakage_weight(0));
        observe(0, block);

        match plan.integrator {
            Integrator::DenseMidpoint => {
                let ops: Vec<CMatrix> = (0..self.basis.n_modes())
                    .map(|m| self.basis.lowering_operator(m))
                    .collect::<Result<_>>()?;
                let static_part = CMatrix::from_diagonal(&DVector::from_iterator(
                    dim,
                    self.diagonal.iter().map(|&e| Complex64::new(e, 0.0)),
                ));
                let mut amps = vec![ZERO; self.basis.n_modes()];
                for k in 0..plan.steps {
                    drive.amplitudes((k as f64 + 0.5) * plan.dt, &mut amps);
                    let mut h = static_part.clone();
                    for (a, &d) in ops.iter().zip(&amps) {
                        h += a * d + a.adjoint() * d.conj();
                    }
                    let step = (h * Complex64::new(0.0, -plan.dt)).exp();
                    *block = Block::from_matrix(&(step * block.to_matrix()));
                    tally.record(block, plan.leakage_weight(k + 1));
                    observe(k + 1, block);
                }
            }
            Integrator::Split | Integrator::SplitFourthOrder => {
                let phases = self.half_phases(plan);
                let mut amps = vec![ZERO; self.basis.n_modes()];
                let mut kernel = vec![ZERO; self.max_levels().pow(2)];
                let mut scratch = Block::zeros(0, 0);
                for k in 0..plan.steps {
                    let t0 = k as f64 * plan.dt;
                    for (stage, &(start, frac)) in plan.stages.iter().enumerate() {
                        let h = frac * plan.dt;
                        drive.amplitudes(t0 + (start + 0.5 * frac) * plan.dt, &mut amps);
                        block.apply_diagonal(&phases[stage]);
                        for (ladder, &d) in self.ladders.iter().zip(&amps) {
                            let n = ladder.levels;
                            ladder.exponential(d, h, &mut kernel[..n * n]);
                            block.apply_mode(ladder.stride, n, &kernel[..n * n], &mut scratch);
                        }
                        block.apply_diagonal(&phases[stage]);
                    }
                    tally.record(block, plan.leakage_weight(k + 1));
                    observe(k + 1, block);
                }
            }
        }
        Ok((tally.integral, tally.max_guard))
    }

    fn max_levels(&self) -> usize {
        self.ladders.iter().map(|l| l.levels).max().unwrap_or(1)
    }

    /// Discrete adjoint sweep for the split integrators.
    ///
    /// `state` holds `U_N` and `adjoint` holds `Λ_N = ∂J/∂conj(U_N)`
    /// (including the final leakage term). The sweep walks back to `t = 0`,
    /// reconstructing `U_k = S_k† U_{k+1}` and updating
    /// `Λ_k = S_k† Λ_{k+1} + c_k W U_k`. For every sub-step and mode it calls
    /// `accumulate(mode, t, g)` with `g = ∂J/∂Re d + i ∂J/∂Im d`.
    pub(crate) fn backward(
        &self,
        drive: &dyn DriveSource,
        plan: &StepPlan,
        state: &mut Block,
        adjoint: &mut Block,
        weights: Option<&[f64]>,
        accumulate: &mut dyn FnMut(usize, f64, Complex64),
    ) -> Result<()> {
        if plan.integrator == Integrator::DenseMidpoint {
            return Err(Error::InvalidPulse(
                "gradients are only available for the split integrators".into(),
            ));
        }
        let phases: Vec<Vec<Complex64>> = self
            .half_phases(plan)
            .into_iter()
            .map(|p| p.into_iter().map(|z| z.conj()).collect())
            .collect();
        let mut amps = vec![ZERO; self.basis.n_modes()];
        let max_n = self.max_levels();
        let mut kernel = vec![ZERO; max_n * max_n];
        let mut scratch = Block::zeros(0, 0);
        let mut overlap = vec![ZERO; max_n * max_n];

        for k in (0..plan.steps).rev() {
            let t0 = k as f64 * plan.dt;
            for (stage, &(start, frac)) in plan.stages.iter().enumerate().rev() {
                let h = frac * plan.dt;
                let t = t0 + (start + 0.5 * frac) * plan.dt;
                drive.amplitudes(t, &mut amps);
                state.apply_diagonal(&phases[stage]);
                adjoint.apply_diagonal(&phases[stage]);
                for (m, (ladder, &d)) in self.ladders.iter().zip(&amps).enumerate() {
                    let n = ladder.levels;
                    ladder.exponential(d, h, &mut kernel[..n * n]);
                    adjoint_in_place(&mut kernel[..n * n], n);
                    // state ← E†·state gives the right factor R of this mode
                    state.apply_mode(ladder.stride, n, &kernel[..n * n], &mut scratch);
                    Block::reduced_overlap(adjoint, state, ladder.stride, n, &mut overlap[..n * n]);
                    let (gx, gy) = ladder.gradient(d, h, &overlap[..n * n]);
                    accumulate(m, t, Complex64::new(gx, gy));
                    adjoint.apply_mode(ladder.stride, n, &kernel[..n * n], &mut scratch);
                }
                state.apply_diagonal(&phases[stage]);
                adjoint.apply_diagonal(&phases[stage]);
            }
            if let Some(w) = weights {
                adjoint.add_weighted(state, w, plan.leakage_weight(k));
            }
        }
        Ok(())
    }

    /// Trajectory of one initial state, recording populations at the step
    /// boundaries closest to `sample_times`.
    pub fn evolve_state(
        &self,
        drive: &dyn DriveSource,
        control: &StepControl,
        initial: &DVector<Complex64>,
        sample_times: &[f64],
    ) -> Result<Trajectory> {
        let dim = self.basis.dim_full();
        if initial.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: initial.len(),
            });
        }
        let norm = initial.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidPulse(format!("initial state norm {norm} is not 1")));
        }
        let plan = self.plan(drive, control)?;
        let wanted: Vec<usize> = sample_times
            .iter()
            .map(|&t| ((t / plan.dt).round().max(0.0) as usize).min(plan.steps))
            .collect();
        let mut block = Block::from_matrix(&CMatrix::from_column_slice(dim, 1, initial.as_slice()));
        let mut samples: Vec<(usize, Vec<f64>)> = Vec::new();
        self.forward(drive, &plan, &mut block, None, &mut |k, state| {
            if wanted.contains(&k) {
                samples.push((k, (0..dim).map(|i| state.row_population(i)).collect()));
            }
        })?;
        let mut times = Vec::with_capacity(wanted.len());
        let mut populations = Vec::with_capacity(wanted.len());
        for k in wanted {
            let (_, pops) = samples.iter().find(|(s, _)| *s == k).expect("sampled");
            times.push(k as f64 * plan.dt);
            populations.push(pops.clone());
        }
        Ok(Trajectory {
            times,
            populations,
            final_state: block.to_matrix().column(0).into_owned(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `populations[sample][basis_state]`
    pub populations: Vec<Vec<f64>>,
    pub final_state: DVector<Complex64>,
}

fn adjoint_in_place(m: &mut [Complex64], n: usize) {
    for a in 0..n {
        m[a + a * n] = m[a + a * n].conj();
        for b in a + 1..n {
            let (x, y) = (m[a + b * n], m[b + a * n]);
            m[a + b * n] = y.conj();
            m[b + a * n] = x.conj();
        }
    }
}

/// Propagates a system under a drive (convenience wrapper around [`Propagator`]).
pub fn propagate(
    system: &SystemSpec,
    drive: &dyn DriveSource,
    control: &StepControl,
    columns: &Columns,
    weights: Option<&[f64]>,
) -> Result<PropagationResult> {
    Propagator::new(system).propagate(drive, control, columns, weights)
}

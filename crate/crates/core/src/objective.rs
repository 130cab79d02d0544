//! Synthesis objective `O = O_F + O_L` and its adjoint gradient.

use num_complex::Complex64;

use crate::block::Block;
use crate::controls::PulseParams;
use crate::dynamics::{Columns, PropagationResult, Propagator, StepControl, StepPlan};
use crate::error::{Error, Result};
use crate::fockspace::{CMatrix, CompositeBasis};
use crate::model::SystemSpec;
use crate::targets::TargetGate;

/// Diagonal leakage weights over the full basis. The objective divides them
/// by the essential dimension, like the trace in `O_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardWeights {
    weights: Vec<f64>,
}

impl GuardWeights {
    /// All-zero weights (leakage term disabled).
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
        }
    }

    pub fn from_vec(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidSystem("guard weights must be finite and non-negative".into()));
        }
        Ok(Self { weights })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w * factor).collect(),
        }
    }
}

/// Per mode, the highest guard level weighs 1 and each lower guard level a
/// tenth of the one above. A state takes the largest weight over its modes;
/// essential states weigh zero.
pub fn guard_weights(basis: &CompositeBasis) -> GuardWeights {
    let weights = (0..basis.dim_full())
        .map(|i| {
            basis
                .modes()
                .iter()
                .zip(basis.occupations_of(i))
                .filter(|(m, n)| *n >= m.essential_levels)
                .map(|(m, n)| 10f64.powi(n as i32 + 1 - m.total_levels() as i32))
                .fold(0.0, f64::max)
        })
        .collect();
    GuardWeights { weights }
}

/// Target unitary embedded as `dim_full × E` columns (zero on guard rows).
fn embedded_target(basis: &CompositeBasis, target: &TargetGate) -> Result<CMatrix> {
    let e = basis.dim_essential();
    if target.dim() != e {
        return Err(Error::DimensionMismatch {
            expected: e,
            actual: target.dim(),
        });
    }
    basis.embed_essential_columns(&target.unitary)
}

/// `Tr_ess(U†·T)/E` for propagated essential columns.
fn overlap(basis: &CompositeBasis, columns: &Block, target: &CMatrix) -> Complex64 {
    let mut z = Complex64::new(0.0, 0.0);
    for c in 0..columns.ncols {
        for &i in basis.essential_indices() {
            z += columns.get(i, c).conj() * target[(i, c)];
        }
    }
    z / basis.dim_essential() as f64
}

/// `|Tr_ess(U(τ)†U_target)/E|²`.
///
/// `result` must hold the propagated essential columns (or the full square
/// propagator).
pub fn fidelity(basis: &CompositeBasis, result: &PropagationResult, target: &TargetGate) -> Result<f64> {
    let dim = basis.dim_full();
    let e = basis.dim_essential();
    if target.dim() != e {
        return Err(Error::DimensionMismatch {
            expected: e,
            actual: target.dim(),
        });
    }
    if result.final_propagator.nrows() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: result.final_propagator.nrows(),
        });
    }
    let mut z = Complex64::new(0.0, 0.0);
    let mut found = 0;
    for (c, &start) in result.columns.iter().enumerate() {
        if let Some(k) = basis.essential_indices().iter().position(|&i| i == start) {
            found += 1;
            for (r, &i) in basis.essential_indices().iter().enumerate() {
                z += result.final_propagator[(i, c)].conj() * target.unitary[(r, k)];
            }
        }
    }
    if found != e {
        return Err(Error::DimensionMismatch {
            expected: e,
            actual: found,
        });
    }
    Ok((z / e as f64).norm_sqr())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub infidelity: f64,
    pub leakage: f64,
    pub total: f64,
    /// Largest total guard population of any column at any step boundary.
    pub max_guard_population: f64,
    /// `∂O/∂x` over [`PulseParams::pack`] (per rad/s).
    pub gradient: Option<Vec<f64>>,
}

impl ObjectiveValue {
    pub fn fidelity(&self) -> f64 {
        1.0 - self.infidelity
    }
}

/// Reusable objective for one (system, target, weights, step control).
#[derive(Debug, Clone)]
pub struct Objective {
    propagator: Propagator,
    target: CMatrix,
    weights: GuardWeights,
    per_column: Vec<f64>,
    control: StepControl,
}

impl Objective {
    pub fn new(system: &SystemSpec, target: &TargetGate, weights: GuardWeights, control: StepControl) -> Result<Self> {
        let propagator = Propagator::new(system);
        let basis = propagator.basis();
        if weights.len() != basis.dim_full() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim_full(),
                actual: weights.len(),
            });
        }
        let target = embedded_target(basis, target)?;
        let per_column = weights.scaled(1.0 / basis.dim_essential() as f64).weights;
        Ok(Self {
            propagator,
            target,
            weights,
            per_column,
            control,
        })
    }

    /// Objective with the default guard weights and step control.
    pub fn with_defaults(system: &SystemSpec, target: &TargetGate) -> Result<Self> {
        let weights = guard_weights(&system.basis());
        Self::new(system, target, weights, StepControl::default())
    }

    pub fn basis(&self) -> &CompositeBasis {
        self.propagator.basis()
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn weights(&self) -> &GuardWeights {
        &self.weights
    }

    pub fn control(&self) -> &StepControl {
        &self.control
    }

    fn leakage_weights(&self) -> Option<&[f64]> {
        (!self.weights.is_zero()).then(|| self.per_column.as_slice())
    }

    fn forward(&self, params: &PulseParams) -> Result<(StepPlan, Block, f64, f64)> {
        let plan = self.propagator.plan(params, &self.control)?;
        let (_, mut block) = self.propagator.initial_block(&Columns::Essential)?;
        let (leak, max_guard) = self
            .propagator
            .forward(params, &plan, &mut block, self.leakage_weights(), &mut |_, _| {})?;
        Ok((plan, block, leak, max_guard))
    }

    pub fn evaluate(&self, params: &PulseParams) -> Result<ObjectiveValue> {
        let (_, block, leakage, max_guard) = self.forward(params)?;
        let z = overlap(self.basis(), &block, &self.target);
        let infidelity = (1.0 - z.norm_sqr()).max(0.0);
        finish(infidelity, leakage, max_guard, None)
    }

    pub fn evaluate_with_gradient(&self, params: &PulseParams) -> Result<ObjectiveValue> {
        let (plan, mut state, leakage, max_guard) = self.forward(params)?;
        let basis = self.basis();
        let e = basis.dim_essential() as f64;
        let z = overlap(basis, &state, &self.target);
        let infidelity = (1.0 - z.norm_sqr()).max(0.0);

        // Λ_N = ∂J/∂conj(U_N): −conj(z)·T/E from the overlap, c_N·W·U_N from leakage
        let mut adjoint = Block::from_matrix(&(&self.target * (-z.conj() / e)));
        if let Some(w) = self.leakage_weights() {
            adjoint.add_weighted(&state, w, 0.5 / plan.steps as f64);
        }

        let mut gradient = vec![0.0; params.n_real()];
        let basis_fn = params.basis();
        let carriers = params.carriers();
        self.propagator.backward(
            params,
            &plan,
            &mut state,
            &mut adjoint,
            self.leakage_weights(),
            &mut |mode, t, g| {
                let (first, values) = basis_fn.nonzero(t);
                let gc = g.conj();
                for (k, &omega) in carriers[mode].iter().enumerate() {
                    let phased = gc * Complex64::from_polar(1.0, omega * t);
                    let base = params.index(mode, k, first);
                    for (b, &s) in values.iter().enumerate() {
                        let w = phased * s;
                        gradient[2 * (base + b)] += w.re;
                        gradient[2 * (base + b) + 1] -= w.im;
                    }
                }
            },
        )?;
        finish(infidelity, leakage, max_guard, Some(gradient))
    }
}

fn finish(infidelity: f64, leakage: f64, max_guard: f64, gradient: Option<Vec<f64>>) -> Result<ObjectiveValue> {
    let total = infidelity + leakage;
    if !total.is_finite() || gradient.as_ref().is_some_and(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite);
    }
    Ok(ObjectiveValue {
        infidelity,
        leakage,
        total,
        max_guard_population: max_guard,
        gradient,
    })
}

/// One-shot `O` and `∇O` with the default step control.
pub fn objective_and_gradient(
    system: &SystemSpec,
    params: &PulseParams,
    target: &TargetGate,
    weights: &GuardWeights,
) -> Result<ObjectiveValue> {
    Objective::new(system, target, weights.clone(), StepControl::default())?.evaluate_with_gradient(params)
}

/// One compared gradient component.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientComparison {
    pub index: usize,
    pub adjoint: f64,
    pub finite_difference: f64,
    /// Allowed `|adjoint − fd|`.
    pub tolerance: f64,
}

impl GradientComparison {
    pub fn passes(&self) -> bool {
        (self.adjoint - self.finite_difference).abs() <= self.tolerance
    }
}

/// Central finite differences on selected packed components.
///
/// The step is `rel_step · max(|x_i|, scale)` with `scale` a typical
/// amplitude (rad/s). A component passes when
/// `|g − g_fd| ≤ rtol·|g_fd| + 10·ε·|O|/h`; the second term is the
/// round-off floor of the difference quotient.
pub fn finite_difference_check(
    objective: &Objective,
    params: &PulseParams,
    gradient: &[f64],
    indices: &[usize],
    rel_step: f64,
    scale: f64,
    rtol: f64,
) -> Result<Vec<GradientComparison>> {
    let x0 = params.pack();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= x0.len() {
            return Err(Error::DimensionMismatch {
                expected: x0.len(),
                actual: i,
            });
        }
        let h = rel_step * x0[i].abs().max(scale);
        let mut x = x0.clone();
        x[i] = x0[i] + h;
        probe.unpack(&x)?;
        let plus = objective.evaluate(&probe)?.total;
        x[i] = x0[i] - h;
        probe.unpack(&x)?;
        let minus = objective.evaluate(&probe)?.total;
        let fd = (plus - minus) / (2.0 * h);
        let magnitude = plus.abs().max(minus.abs());
        out.push(GradientComparison {
            index: i,
            adjoint: gradient[i],
            finite_difference: fd,
            tolerance: rtol * fd.abs() + 10.0 * f64::EPSILON * magnitude / h,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::random_init;
    use crate::resonance::enumerate_transitions;
    use crate::targets::{build_layer, LayerKind, LayerOptions};
    use crate::units::{mhz, ns};
    use rand::{Rng, SeedableRng};

    #[test]
    fn guard_weights_preset_b() {
        let spec = SystemSpec::preset_b();
        let basis = spec.basis();
        let w = guard_weights(&basis);
        let at = |occ: &[usize]| w.as_slice()[basis.state_index(occ).unwrap()];
        assert_eq!(at(&[4, 0, 0]), 1.0);
        assert_eq!(at(&[2, 0, 0]), 1e-2);
        assert_eq!(at(&[3, 0, 0]), 1e-1);
        assert_eq!(at(&[0, 4, 0]), 1.0);
        assert_eq!(at(&[0, 0, 3]), 1e-1);
        assert_eq!(at(&[2, 3, 0]), 1e-1);
        for &i in basis.essential_indices() {
            assert_eq!(w.as_slice()[i], 0.0);
        }
        assert_eq!(w.as_slice().iter().cloned().fold(0.0, f64::max), 1.0);
    }

    fn random_unitary(n: usize, seed: u64) -> CMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let h = &m + m.adjoint();
        (h * Complex64::new(0.0, -1.0)).exp()
    }

    fn isolated(levels: usize) -> SystemSpec {
        let t = crate::fockspace::ModeSpec::new("T", levels, 0, 0.0, mhz(1.0)).unwrap();
        SystemSpec::new(t, vec![], vec![]).unwrap()
    }

    fn as_result(u: CMatrix) -> PropagationResult {
        let n = u.ncols();
        PropagationResult {
            final_propagator: u,
            columns: (0..n).collect(),
            leakage_integral: 0.0,
            max_guard_population: 0.0,
            step_count: 0,
        }
    }

    #[test]
    fn fidelity_matches_double_loop() {
        let spec = isolated(4);
        let basis = spec.basis();
        let u = random_unitary(4, 1);
        let v = random_unitary(4, 2);
        let target = TargetGate::custom(v.clone()).unwrap();
        let got = fidelity(&basis, &as_result(u.clone()), &target).unwrap();
        let mut z = Complex64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                z += u[(i, j)].conj() * v[(i, j)];
            }
        }
        assert!((got - (z / 4.0).norm_sqr()).abs() < 1e-13);

        assert!((fidelity(&basis, &as_result(v.clone()), &target).unwrap() - 1.0).abs() < 1e-13);
        let phased = &v * Complex64::from_polar(1.0, 0.77);
        assert!((fidelity(&basis, &as_result(phased), &target).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn zero_weights_give_zero_leakage() {
        let spec = SystemSpec::preset_a();
        let table = enumerate_transitions(&spec);
        let params = random_init(2, ns(100.0), 10, table.carrier_sets(), mhz(1.0)).unwrap();
        let target = build_layer(&spec, LayerKind::Mixing, 0.3, &LayerOptions::default()).unwrap();
        let dim = spec.basis().dim_full();
        let obj = Objective::new(&spec, &target, GuardWeights::zeros(dim), StepControl::default()).unwrap();
        let v = obj.evaluate(&params).unwrap();
        assert_eq!(v.leakage, 0.0);
        assert!(v.max_guard_population > 0.0);
        let weighted = Objective::with_defaults(&spec, &target).unwrap().evaluate(&params).unwrap();
        assert!(weighted.leakage > 0.0);
        assert_eq!(weighted.infidelity, v.infidelity);
    }

    #[test]
    fn gradient_matches_fd_on_small_system() {
        let t = crate::fockspace::ModeSpec::new("T", 2, 1, 0.0, mhz(20.0)).unwrap();
        let m = crate::fockspace::ModeSpec::new("m", 2, 1, 0.0, mhz(0.6)).unwrap();
        let spec = SystemSpec::multimode(t, vec![m]).unwrap();
        let table = enumerate_transitions(&spec);
        let params = random_init(9, ns(200.0), 6, table.carrier_sets(), mhz(3.0)).unwrap();
        let target = build_layer(&spec, LayerKind::Mixing, 0.5, &LayerOptions::default()).unwrap();
        let obj = Objective::with_defaults(&spec, &target).unwrap();
        let v = obj.evaluate_with_gradient(&params).unwrap();
        let grad = v.gradient.clone().unwrap();
        let plain = obj.evaluate(&params).unwrap();
        assert_eq!(plain.total, v.total);
        let indices: Vec<usize> = (0..grad.len()).collect();
        let checks = finite_difference_check(&obj, &params, &grad, &indices, 1e-6, mhz(1.0), 1e-5).unwrap();
        for c in &checks {
            assert!(c.passes(), "{c:?}");
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = SystemSpec::preset_b();
        let target = TargetGate::custom(CMatrix::identity(4, 4)).unwrap();
        assert!(matches!(
            Objective::with_defaults(&spec, &target),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}

//! Target gates for QAOA-style layers on bosonic qudits.
//!
//! Every target acts as the identity on the control mode and as the layer
//! gate on the computational modes. An 8-level cavity mode is read as three
//! qubits through the binary expansion `s = Σ_k s_k 2^k`; qutrit modes are
//! used as they are.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::CMatrix;
use crate::model::SystemSpec;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Initialization,
    Mixing,
    PhaseSeparation,
    Custom,
}

impl LayerKind {
    /// Short name used on the command line and in CSV files.
    pub fn short_name(self) -> &'static str {
        match self {
            LayerKind::Initialization => "hadamard",
            LayerKind::Mixing => "mix",
            LayerKind::PhaseSeparation => "phase",
            LayerKind::Custom => "custom",
        }
    }

    pub fn from_short_name(name: &str) -> Result<Self> {
        match name {
            "hadamard" => Ok(LayerKind::Initialization),
            "mix" => Ok(LayerKind::Mixing),
            "phase" => Ok(LayerKind::PhaseSeparation),
            other => Err(Error::Config(format!(
                "unknown layer `{other}` (expected hadamard, mix or phase)"
            ))),
        }
    }
}

/// How the computational modes are read as qudits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuditLayout {
    /// One cavity mode with `2^qubits` essential levels, binary-encoded.
    BinaryQubits { qubits: usize },
    /// Each computational mode is a qudit of the given dimension.
    Qudits { dimension: usize, count: usize },
    /// Arbitrary essential space (custom targets).
    Unstructured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetGate {
    pub layer_kind: LayerKind,
    /// Normalized to (−π, π]; zero for initialization and custom gates.
    pub angle: f64,
    /// Acts on the full essential subspace, control mode included.
    pub unitary: CMatrix,
    pub layout: QuditLayout,
    /// Essential levels of the control mode (identity factor).
    pub control_levels: usize,
}

impl TargetGate {
    /// Wraps an arbitrary essential-subspace unitary.
    pub fn custom(unitary: CMatrix) -> Result<Self> {
        if unitary.nrows() != unitary.ncols() {
            return Err(Error::DimensionMismatch {
                expected: unitary.nrows(),
                actual: unitary.ncols(),
            });
        }
        if unitarity_defect(&unitary) > 1e-10 {
            return Err(Error::InvalidSystem("custom target is not unitary".into()));
        }
        Ok(Self {
            layer_kind: LayerKind::Custom,
            angle: 0.0,
            unitary,
            layout: QuditLayout::Unstructured,
            control_levels: 1,
        })
    }

    pub fn dim(&self) -> usize {
        self.unitary.nrows()
    }
}

/// `max |(U†U − I)_ij|`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    (u.adjoint() * u - CMatrix::identity(n, n)).camax()
}

/// X rotation `exp(−i β σ_x / 2)`.
pub fn mixing_qubit(beta: f64) -> CMatrix {
    let (s, c) = (beta / 2.0).sin_cos();
    let off = Complex64::new(0.0, -s);
    CMatrix::from_row_slice(2, 2, &[Complex64::new(c, 0.0), off, off, Complex64::new(c, 0.0)])
}

/// Circulant qutrit mixer that fixes `(|0⟩ + |1⟩ + |2⟩)/√3`.
pub fn mixing_qutrit(beta: f64) -> CMatrix {
    let (s, c) = beta.sin_cos();
    let r3 = 3f64.sqrt();
    let first = [
        (1.0 + 2.0 * c) / 3.0,
        (1.0 - c - r3 * s) / 3.0,
        (1.0 - c + r3 * s) / 3.0,
    ];
    CMatrix::from_fn(3, 3, |i, j| Complex64::new(first[(j + 3 - i) % 3], 0.0))
}

/// Diagonal two-qudit phase gate: `e^{iγ}` where both qudits agree.
pub fn phase_separation(dimension: usize, gamma: f64) -> Result<CMatrix> {
    if !(2..=3).contains(&dimension) {
        return Err(Error::UnsupportedLayout(format!(
            "phase separation defined for qubits and qutrits, got dimension {dimension}"
        )));
    }
    let phase = Complex64::from_polar(1.0, gamma);
    let n = dimension * dimension;
    Ok(CMatrix::from_fn(n, n, |i, j| {
        if i != j {
            ZERO
        } else if i / dimension == i % dimension {
            phase
        } else {
            ONE
        }
    }))
}

/// Discrete Fourier matrix `F_d[j,k] = e^{2πi jk/d}/√d`.
pub fn fourier(d: usize) -> CMatrix {
    let norm = 1.0 / (d as f64).sqrt();
    CMatrix::from_fn(d, d, |j, k| {
        Complex64::from_polar(norm, TAU * ((j * k) % d) as f64 / d as f64)
    })
}

pub fn hadamard() -> CMatrix {
    fourier(2)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

fn kron_power(a: &CMatrix, n: usize) -> CMatrix {
    let mut out = CMatrix::identity(1, 1);
    for _ in 0..n {
        out = kron(&out, a);
    }
    out
}

/// Bijection between the levels of a `2^n`-level qudit and `n`-bit strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuditQubitMap {
    pub levels: usize,
    pub qubits: usize,
}

impl QuditQubitMap {
    pub fn new(levels: usize, qubits: usize) -> Result<Self> {
        if qubits == 0 || qubits >= usize::BITS as usize || levels != 1 << qubits {
            return Err(Error::UnsupportedLayout(format!(
                "{levels} levels cannot be binary-encoded in {qubits} qubits"
            )));
        }
        Ok(Self { levels, qubits })
    }

    /// Bits `(s_{n−1}, …, s_0)`, most significant first, as written in `|10⟩`.
    pub fn to_bits(&self, level: usize) -> Vec<u8> {
        (0..self.qubits)
            .rev()
            .map(|k| ((level >> k) & 1) as u8)
            .collect()
    }

    pub fn from_bits(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    /// Value of qubit `k`, i.e. the coefficient of `2^k`.
    pub fn bit(&self, level: usize, k: usize) -> usize {
        (level >> k) & 1
    }

    pub fn label(&self, level: usize) -> String {
        let bits: String = self.to_bits(level).iter().map(|b| char::from(b'0' + b)).collect();
        format!("|{bits}>")
    }
}

/// Layer construction options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerOptions {
    /// Qubit (or qudit) pairs coupled by the phase-separation layer. `None`
    /// picks a ring over all qudits (a single pair for two qudits).
    pub graph: Option<Vec<(usize, usize)>>,
}

impl Default for LayerOptions {
    fn default() -> Self {
        Self { graph: None }
    }
}

/// Maps an angle to (−π, π]. The layers are 2π-periodic up to a global phase.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = (angle + PI).rem_euclid(TAU) - PI;
    if a <= -PI {
        a += TAU;
    }
    a
}

/// Infers the qudit layout of the computational modes.
pub fn layout_of(system: &SystemSpec) -> Result<QuditLayout> {
    let dims: Vec<usize> = system.computational.iter().map(|m| m.essential_levels).collect();
    match dims.as_slice() {
        [] => Err(Error::UnsupportedLayout("system has no computational modes".into())),
        [d] if d.is_power_of_two() && *d >= 4 => Ok(QuditLayout::BinaryQubits {
            qubits: d.trailing_zeros() as usize,
        }),
        [d, rest @ ..] if rest.iter().all(|x| x == d) && (*d == 2 || *d == 3) => {
            Ok(QuditLayout::Qudits {
                dimension: *d,
                count: dims.len(),
            })
        }
        _ => Err(Error::UnsupportedLayout(format!(
            "computational levels {dims:?} are neither one binary-encoded mode nor equal qubits/qutrits"
        ))),
    }
}

fn default_graph(n: usize) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..n).map(|k| (k, (k + 1) % n)).collect(),
    }
}

/// Diagonal phase-separation gate over `count` qudits of dimension `d`
/// (row-major, qudit 0 most significant), product of pairwise phases.
fn phase_layer(d: usize, count: usize, graph: &[(usize, usize)], gamma: f64) -> Result<CMatrix> {
    for &(a, b) in graph {
        if a >= count || b >= count || a == b {
            return Err(Error::UnsupportedLayout(format!(
                "graph edge ({a}, {b}) invalid for {count} qudits"
            )));
        }
    }
    let n = d.pow(count as u32);
    let phase = Complex64::from_polar(1.0, gamma);
    let digit = |s: usize, q: usize| (s / d.pow((count - 1 - q) as u32)) % d;
    Ok(CMatrix::from_fn(n, n, |i, j| {
        if i != j {
            return ZERO;
        }
        graph
            .iter()
            .filter(|&&(a, b)| digit(i, a) == digit(i, b))
            .fold(ONE, |acc, _| acc * phase)
    }))
}

/// Phase layer on a binary-encoded mode: pair `(i, j)` refers to bits
/// `s_i` and `s_j` of the level index.
fn binary_phase_layer(qubits: usize, graph: &[(usize, usize)], gamma: f64) -> Result<CMatrix> {
    let map = QuditQubitMap::new(1 << qubits, qubits)?;
    for &(a, b) in graph {
        if a >= qubits || b >= qubits || a == b {
            return Err(Error::UnsupportedLayout(format!(
                "graph edge ({a}, {b}) invalid for {qubits} qubits"
            )));
        }
    }
    let phase = Complex64::from_polar(1.0, gamma);
    let n = map.levels;
    Ok(CMatrix::from_fn(n, n, |i, j| {
        if i != j {
            return ZERO;
        }
        graph
            .iter()
            .filter(|&&(a, b)| map.bit(i, a) == map.bit(i, b))
            .fold(ONE, |acc, _| acc * phase)
    }))
}

/// Gate on the computational modes only (no control factor).
pub fn computational_gate(
    layout: &QuditLayout,
    kind: LayerKind,
    angle: f64,
    options: &LayerOptions,
) -> Result<CMatrix> {
    let (d, count) = match *layout {
        QuditLayout::BinaryQubits { qubits } => (2, qubits),
        QuditLayout::Qudits { dimension, count } => (dimension, count),
        QuditLayout::Unstructured => {
            return Err(Error::UnsupportedLayout("no qudit structure".into()))
        }
    };
    let graph = options.graph.clone().unwrap_or_else(|| default_graph(count));
    match kind {
        LayerKind::Initialization => Ok(kron_power(&fourier(d), count)),
        LayerKind::Mixing => {
            let single = if d == 2 {
                mixing_qubit(angle)
            } else {
                mixing_qutrit(angle)
            };
            Ok(kron_power(&single, count))
        }
        LayerKind::PhaseSeparation => {
            if count < 2 {
                return Err(Error::UnsupportedLayout(
                    "phase separation needs at least two qudits".into(),
                ));
            }
            match layout {
                QuditLayout::BinaryQubits { qubits } => binary_phase_layer(*qubits, &graph, angle),
                _ => phase_layer(d, count, &graph, angle),
            }
        }
        LayerKind::Custom => Err(Error::UnsupportedLayout(
            "custom layers are built with TargetGate::custom".into(),
        )),
    }
}

/// Builds the layer unitary on the essential subspace: identity on the
/// control mode tensored with the computational gate.
pub fn build_layer(
    system: &SystemSpec,
    kind: LayerKind,
    angle: f64,
    options: &LayerOptions,
) -> Result<TargetGate> {
    let layout = layout_of(system)?;
    let angle = match kind {
        LayerKind::Mixing | LayerKind::PhaseSeparation => normalize_angle(angle),
        _ => 0.0,
    };
    let gate = computational_gate(&layout, kind, angle, options)?;
    let control_levels = system.control.essential_levels;
    let unitary = kron(&CMatrix::identity(control_levels, control_levels), &gate);
    Ok(TargetGate {
        layer_kind: kind,
        angle,
        unitary,
        layout,
        control_levels,
    })
}

/// Generalized Hadamard layer for the system's layout.
pub fn initialization(system: &SystemSpec) -> Result<TargetGate> {
    build_layer(system, LayerKind::Initialization, 0.0, &LayerOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scaling-and-squaring Taylor exponential, independent of nalgebra's expm.
    fn expm_taylor(a: &CMatrix) -> CMatrix {
        let n = a.nrows();
        let norm = a.norm();
        let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0) as u32;
        let scaled = a / Complex64::new(2f64.powi(squarings as i32), 0.0);
        let mut term = CMatrix::identity(n, n);
        let mut sum = CMatrix::identity(n, n);
        for k in 1..30 {
            term = &term * &scaled / Complex64::new(k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    fn pauli_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    fn pauli_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }

    #[test]
    fn qubit_mixer_values() {
        assert!((mixing_qubit(0.0) - CMatrix::identity(2, 2)).camax() < 1e-15);
        let x = mixing_qubit(PI);
        let expect = pauli_x() * Complex64::new(0.0, -1.0);
        assert!((x - expect).camax() < 1e-15);
        let beta = PI / 5.0;
        let oracle = expm_taylor(&(pauli_x() * Complex64::new(0.0, -beta / 2.0)));
        assert!((mixing_qubit(beta) - oracle).camax() < 1e-12);
    }

    #[test]
    fn qutrit_mixer_fixes_uniform_state() {
        assert!((mixing_qutrit(0.0) - CMatrix::identity(3, 3)).camax() < 1e-15);
        let v = nalgebra::DVector::from_element(3, Complex64::new(1.0 / 3f64.sqrt(), 0.0));
        for k in 0..20 {
            let beta = -PI + k as f64 * 0.37;
            assert!((mixing_qutrit(beta) * &v - &v).camax() < 1e-12);
        }
    }

    #[test]
    fn qutrit_mixer_matches_dft_conjugation() {
        let beta = PI / 5.0;
        let f = fourier(3);
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            ONE,
            Complex64::from_polar(1.0, -beta),
            Complex64::from_polar(1.0, beta),
        ]));
        let oracle = &f * d * f.adjoint();
        assert!((mixing_qutrit(beta) - oracle).camax() < 1e-12);
    }

    #[test]
    fn phase_separation_patterns() {
        let g = 0.7;
        let p = Complex64::from_polar(1.0, g);
        let u2 = phase_separation(2, g).unwrap();
        let diag: Vec<Complex64> = (0..4).map(|i| u2[(i, i)]).collect();
        assert_eq!(diag, vec![p, ONE, ONE, p]);
        let u3 = phase_separation(3, g).unwrap();
        for i in 0..9 {
            let expect = if [0, 4, 8].contains(&i) { p } else { ONE };
            assert_eq!(u3[(i, i)], expect);
        }
        assert!(phase_separation(4, g).is_err());
    }

    #[test]
    fn qubit_phase_is_zz_rotation() {
        let g = PI / 5.0;
        let zz = kron(&pauli_z(), &pauli_z());
        let oracle = expm_taylor(&(zz * Complex64::new(0.0, g / 2.0)))
            * Complex64::from_polar(1.0, g / 2.0);
        assert!((phase_separation(2, g).unwrap() - oracle).camax() < 1e-12);
    }

    #[test]
    fn binary_map_examples() {
        let q = QuditQubitMap::new(4, 2).unwrap();
        assert_eq!(q.to_bits(2), vec![1, 0]);
        assert_eq!(q.to_bits(0), vec![0, 0]);
        assert_eq!(q.label(2), "|10>");
        let q8 = QuditQubitMap::new(8, 3).unwrap();
        for s in 0..8 {
            assert_eq!(q8.from_bits(&q8.to_bits(s)), s);
        }
        assert!(QuditQubitMap::new(6, 3).is_err());
    }

    #[test]
    fn initialization_columns() {
        let a = initialization(&SystemSpec::preset_a()).unwrap();
        assert_eq!(a.unitary.nrows(), 16);
        for i in 0..8 {
            assert!((a.unitary[(i, 0)].re - 1.0 / 8f64.sqrt()).abs() < 1e-14);
        }
        let b = initialization(&SystemSpec::preset_b()).unwrap();
        for i in 0..9 {
            assert!((b.unitary[(i, 0)] - Complex64::new(1.0 / 3.0, 0.0)).norm() < 1e-14);
        }
        assert!(unitarity_defect(&a.unitary) < 1e-12);
        assert!(unitarity_defect(&b.unitary) < 1e-12);
    }

    #[test]
    fn preset_b_mixing_at_zero_is_identity() {
        let t = build_layer(&SystemSpec::preset_b(), LayerKind::Mixing, 0.0, &LayerOptions::default())
            .unwrap();
        assert_eq!(t.unitary.nrows(), 18);
        assert!((t.unitary - CMatrix::identity(18, 18)).camax() < 1e-15);
    }

    #[test]
    fn preset_a_ring_phase_brute_force() {
        let g = PI / 5.0;
        let t = build_layer(&SystemSpec::preset_a(), LayerKind::PhaseSeparation, g, &LayerOptions::default())
            .unwrap();
        // product of the three two-qubit gates lifted through the binary map
        let pair = phase_separation(2, g).unwrap();
        for s in 0..8usize {
            let bits = [(s >> 0) & 1, (s >> 1) & 1, (s >> 2) & 1];
            let mut expect = ONE;
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                let k = 2 * bits[a] + bits[b];
                expect *= pair[(k, k)];
            }
            for t_level in 0..2 {
                let i = t_level * 8 + s;
                assert!((t.unitary[(i, i)] - expect).norm() < 1e-14);
            }
        }
        assert_eq!(t.unitary.iter().filter(|z| z.norm() > 0.0).count(), 16);
    }

    #[test]
    fn preset_b_phase_pattern() {
        let g = 1.1;
        let t = build_layer(&SystemSpec::preset_b(), LayerKind::PhaseSeparation, g, &LayerOptions::default())
            .unwrap();
        let p = Complex64::from_polar(1.0, g);
        for tl in 0..2 {
            for l in 0..3 {
                for m in 0..3 {
                    let i = tl * 9 + l * 3 + m;
                    let expect = if l == m { p } else { ONE };
                    assert!((t.unitary[(i, i)] - expect).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn angles_are_normalized() {
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.3) - 0.3).abs() < 1e-15);
        let t = build_layer(&SystemSpec::preset_b(), LayerKind::Mixing, 0.2 + TAU, &LayerOptions::default())
            .unwrap();
        assert!((t.angle - 0.2).abs() < 1e-12);
    }

    #[test]
    fn targets_are_identity_on_control() {
        let sys = SystemSpec::preset_b();
        for kind in [LayerKind::Initialization, LayerKind::Mixing, LayerKind::PhaseSeparation] {
            let u = build_layer(&sys, kind, 0.9, &LayerOptions::default()).unwrap().unitary;
            for i in 0..18 {
                for j in 0..18 {
                    if i / 9 != j / 9 {
                        assert_eq!(u[(i, j)], ZERO);
                    }
                }
            }
            let block = u.view((0, 0), (9, 9)).into_owned();
            assert_eq!(u.view((9, 9), (9, 9)).into_owned(), block);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mixers_form_one_parameter_groups(b1 in -4.0f64..4.0, b2 in -4.0f64..4.0) {
                let lhs = mixing_qubit(b1) * mixing_qubit(b2);
                prop_assert!((lhs - mixing_qubit(b1 + b2)).camax() < 1e-12);
                let lhs = mixing_qutrit(b1) * mixing_qutrit(b2);
                prop_assert!((lhs - mixing_qutrit(b1 + b2)).camax() < 1e-12);
            }

            #[test]
            fn layers_are_unitary(angle in -PI..PI) {
                for sys in [SystemSpec::preset_a(), SystemSpec::preset_b()] {
                    for kind in [LayerKind::Initialization, LayerKind::Mixing, LayerKind::PhaseSeparation] {
                        let t = build_layer(&sys, kind, angle, &LayerOptions::default()).unwrap();
                        prop_assert!(unitarity_defect(&t.unitary) < 1e-12);
                    }
                }
            }
        }
    }
}

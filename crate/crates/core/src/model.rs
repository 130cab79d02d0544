//! Static dispersive Hamiltonians and drive couplings.
//!
//! The system is one control mode `T` followed by the computational cavity
//! modes. Every term of the static Hamiltonian is a function of the number
//! operators only, so it is stored as its diagonal:
//!
//! ```text
//! E(t, n_1, ..) = Σ_j [ω_j n_j + ξ_j n_j²] + Σ_{(a,b)} ξ_ab n_a n_b − Σ_j f_j n_j
//! ```
//!
//! with `f_j` the rotating-frame offset of mode `j` (zero in the lab frame).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{CMatrix, CompositeBasis, ModeSpec};
use crate::units::{ghz, mhz};

/// Density-density coupling `ξ_ab n_a n_b` between two modes (basis indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossKerr {
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

/// Reference frame used for the numerics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// Each mode rotates at its own fundamental frequency.
    #[default]
    Rotating,
    Lab,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub control: ModeSpec,
    pub computational: Vec<ModeSpec>,
    pub cross_kerr: Vec<CrossKerr>,
    /// Per-mode frame offsets (rad/s) in basis order: control first.
    pub frame_offsets: Vec<f64>,
}

impl SystemSpec {
    /// Builds a system with the given explicit couplings, in the rotating frame.
    pub fn new(
        control: ModeSpec,
        computational: Vec<ModeSpec>,
        cross_kerr: Vec<CrossKerr>,
    ) -> Result<Self> {
        let mut spec = Self {
            control,
            computational,
            cross_kerr,
            frame_offsets: Vec::new(),
        };
        spec.set_frame(Frame::Rotating);
        spec.validate()?;
        Ok(spec)
    }

    /// One control mode coupled to every computational mode with the
    /// geometric-mean dispersive shift `ξ_Tj = √(ξ_j ξ_T)`; cavity modes are
    /// not coupled to each other.
    pub fn multimode(control: ModeSpec, computational: Vec<ModeSpec>) -> Result<Self> {
        let cross_kerr = computational
            .iter()
            .enumerate()
            .map(|(j, mode)| CrossKerr {
                a: 0,
                b: j + 1,
                value: (mode.self_kerr * control.self_kerr).abs().sqrt(),
            })
            .collect();
        Self::new(control, computational, cross_kerr)
    }

    /// Single 8-level cavity mode `m` coupled to the control qubit.
    pub fn preset_a() -> Self {
        Self::multimode(preset_control(), vec![preset_mode_m(8)]).expect("preset A is valid")
    }

    /// Two qutrit cavity modes `l` and `m` coupled to the control qubit.
    pub fn preset_b() -> Self {
        Self::multimode(preset_control(), vec![preset_mode_l(), preset_mode_m(3)])
            .expect("preset B is valid")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "A" | "a" => Ok(Self::preset_a()),
            "B" | "b" => Ok(Self::preset_b()),
            other => Err(Error::InvalidSystem(format!("unknown preset `{other}` (expected A or B)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.control.validate()?;
        for mode in &self.computational {
            mode.validate()?;
        }
        let n = self.n_modes();
        for ck in &self.cross_kerr {
            if ck.a >= n || ck.b >= n || ck.a == ck.b {
                return Err(Error::InvalidSystem(format!(
                    "cross-Kerr term ({}, {}) does not reference two distinct modes",
                    ck.a, ck.b
                )));
            }
            if !ck.value.is_finite() {
                return Err(Error::InvalidSystem("non-finite cross-Kerr value".into()));
            }
            if ck.value < 0.0 {
                log::warn!(
                    "negative cross-Kerr between modes {} and {}: outside the usual dispersive regime",
                    ck.a,
                    ck.b
                );
            }
        }
        if self.frame_offsets.len() != n {
            return Err(Error::InvalidSystem(format!(
                "expected {n} frame offsets, got {}",
                self.frame_offsets.len()
            )));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        1 + self.computational.len()
    }

    /// Modes in basis order: control first.
    pub fn modes(&self) -> Vec<ModeSpec> {
        std::iter::once(self.control.clone())
            .chain(self.computational.iter().cloned())
            .collect()
    }

    pub fn mode(&self, index: usize) -> Option<&ModeSpec> {
        if index == 0 {
            Some(&self.control)
        } else {
            self.computational.get(index - 1)
        }
    }

    pub fn mode_index(&self, label: &str) -> Option<usize> {
        (0..self.n_modes()).find(|&j| self.mode(j).is_some_and(|m| m.label == label))
    }

    pub fn basis(&self) -> CompositeBasis {
        CompositeBasis::new(self.modes()).expect("validated system")
    }

    pub fn set_frame(&mut self, frame: Frame) {
        self.frame_offsets = match frame {
            Frame::Rotating => self.modes().iter().map(|m| m.frequency).collect(),
            Frame::Lab => vec![0.0; self.n_modes()],
        };
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.set_frame(frame);
        self
    }

    pub fn cross_kerr_between(&self, a: usize, b: usize) -> f64 {
        self.cross_kerr
            .iter()
            .filter(|ck| (ck.a == a && ck.b == b) || (ck.a == b && ck.b == a))
            .map(|ck| ck.value)
            .sum()
    }

    /// Energy of one occupation tuple (rad/s) in the configured frame.
    pub fn energy(&self, occupations: &[usize]) -> f64 {
        let modes = self.modes();
        let mut e = 0.0;
        for ((mode, &n), &offset) in modes.iter().zip(occupations).zip(&self.frame_offsets) {
            let n = n as f64;
            e += (mode.frequency - offset) * n + mode.self_kerr * n * n;
        }
        for ck in &self.cross_kerr {
            e += ck.value * (occupations[ck.a] * occupations[ck.b]) as f64;
        }
        e
    }

    /// Diagonal of the static Hamiltonian over the full (guarded) basis.
    pub fn static_diagonal(&self) -> Vec<f64> {
        let basis = self.basis();
        (0..basis.dim_full())
            .map(|i| self.energy(&basis.occupations_of(i)))
            .collect()
    }

    /// Static Hamiltonian as a dense (real, diagonal) matrix.
    pub fn static_hamiltonian(&self) -> CMatrix {
        let diag = self.static_diagonal();
        let h = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            diag.len(),
            diag.iter().map(|&e| num_complex::Complex64::new(e, 0.0)),
        ));
        debug_assert!((&h - h.adjoint()).norm() == 0.0);
        h
    }

    /// Ladder operators of every mode embedded in the full space.
    pub fn drive_operators(&self) -> DriveOperators {
        let basis = self.basis();
        let lowering = (0..self.n_modes())
            .map(|m| basis.lowering_operator(m).expect("mode index in range"))
            .collect();
        DriveOperators { lowering }
    }
}

/// Lowering operators `a_m` for every controllable mode. The raising
/// operators are their adjoints.
#[derive(Debug, Clone)]
pub struct DriveOperators {
    pub lowering: Vec<CMatrix>,
}

impl DriveOperators {
    pub fn raising(&self, mode: usize) -> CMatrix {
        self.lowering[mode].adjoint()
    }

    /// `Σ_m d_m a_m + conj(d_m) a_m†` for the given complex amplitudes.
    pub fn drive_hamiltonian(&self, amplitudes: &[num_complex::Complex64]) -> CMatrix {
        let dim = self.lowering[0].nrows();
        let mut h = CMatrix::zeros(dim, dim);
        for (a, &d) in self.lowering.iter().zip(amplitudes) {
            h += a * d + a.adjoint() * d.conj();
        }
        h
    }
}

fn preset_control() -> ModeSpec {
    ModeSpec::new("T", 2, 3, ghz(5.0), mhz(200.0)).expect("valid")
}

fn preset_mode_m(levels: usize) -> ModeSpec {
    ModeSpec::new("m", levels, 2, ghz(3.0), mhz(0.6)).expect("valid")
}

fn preset_mode_l() -> ModeSpec {
    ModeSpec::new("l", 3, 2, ghz(4.0), mhz(0.9)).expect("valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::to_mhz;

    #[test]
    fn lab_frame_entry_preset_a() {
        let spec = SystemSpec::preset_a().with_frame(Frame::Lab);
        let basis = spec.basis();
        let diag = spec.static_diagonal();
        let i = basis.state_index(&[1, 1]).unwrap();
        let expect = ghz(5.0) + mhz(200.0) + ghz(3.0) + mhz(0.6) + spec.cross_kerr_between(0, 1);
        assert!((diag[i] - expect).abs() < 1e-3);
    }

    #[test]
    fn geometric_mean_couplings() {
        for spec in [SystemSpec::preset_a(), SystemSpec::preset_b()] {
            let m = spec.mode_index("m").unwrap();
            let tm = to_mhz(spec.cross_kerr_between(0, m));
            assert!((tm - (0.6f64 * 200.0).sqrt()).abs() < 1e-9);
            assert!((tm - 10.95).abs() < 5e-3);
        }
        let b = SystemSpec::preset_b();
        let tl = to_mhz(b.cross_kerr_between(0, b.mode_index("l").unwrap()));
        assert!((tl - 13.42).abs() < 5e-3);
    }

    #[test]
    fn rotating_frame_kerr_remainder() {
        let spec = SystemSpec::preset_a();
        let basis = spec.basis();
        let diag = spec.static_diagonal();
        let i = basis.state_index(&[0, 2]).unwrap();
        assert!((diag[i] - 4.0 * mhz(0.6)).abs() < 1e-6);
    }

    #[test]
    fn frames_differ_by_offsets() {
        let rot = SystemSpec::preset_b();
        let lab = rot.clone().with_frame(Frame::Lab);
        let basis = rot.basis();
        let (dr, dl) = (rot.static_diagonal(), lab.static_diagonal());
        for i in 0..basis.dim_full() {
            let occ = basis.occupations_of(i);
            let shift: f64 = occ
                .iter()
                .zip(&rot.frame_offsets)
                .map(|(&n, &f)| n as f64 * f)
                .sum();
            assert!(((dl[i] - dr[i]) - shift).abs() < 1e-3);
        }
    }

    #[test]
    fn preset_dimensions() {
        let a = SystemSpec::preset_a().basis();
        assert_eq!((a.dim_essential(), a.dim_full()), (16, 50));
        let b = SystemSpec::preset_b().basis();
        assert_eq!((b.dim_essential(), b.dim_full()), (18, 125));
    }

    #[test]
    fn multimode_reproduces_presets() {
        let b = SystemSpec::multimode(preset_control(), vec![preset_mode_l(), preset_mode_m(3)])
            .unwrap();
        assert_eq!(b, SystemSpec::preset_b());
        let a = SystemSpec::multimode(preset_control(), vec![preset_mode_m(8)]).unwrap();
        assert_eq!(a, SystemSpec::preset_a());
        let third = ModeSpec::new("k", 3, 2, ghz(6.0), mhz(1.3)).unwrap();
        let c = SystemSpec::multimode(
            preset_control(),
            vec![preset_mode_l(), preset_mode_m(3), third],
        )
        .unwrap();
        assert_eq!(c.basis().dim_essential(), 54);
        assert_eq!(c.cross_kerr.len(), 3);
        assert_eq!(c.cross_kerr_between(1, 2), 0.0);
    }

    #[test]
    fn static_hamiltonian_is_hermitian_diagonal() {
        let h = SystemSpec::preset_b().static_hamiltonian();
        assert!((&h - h.adjoint()).norm() == 0.0);
        let off: f64 = h
            .iter()
            .enumerate()
            .filter(|(k, _)| k % 126 != 0)
            .map(|(_, z)| z.norm())
            .sum();
        assert_eq!(off, 0.0);
    }

    #[test]
    fn drive_operators_are_adjoint_pairs() {
        let ops = SystemSpec::preset_b().drive_operators();
        for m in 0..3 {
            assert_eq!(ops.raising(m), ops.lowering[m].adjoint());
        }
    }

    #[test]
    fn rejects_dangling_couplings() {
        let err = SystemSpec::new(
            preset_control(),
            vec![preset_mode_l()],
            vec![CrossKerr { a: 0, b: 2, value: 1.0 }],
        );
        assert!(err.is_err());
    }
}

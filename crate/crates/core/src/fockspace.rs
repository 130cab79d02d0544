//! Truncated Fock-space algebra on a tensor product of bosonic modes.
//!
//! Basis states are ordered row-major over the mode occupations with the
//! first mode (the control mode) as the slowest-varying factor. For modes
//! with total level counts `(n_0, n_1, ..., n_k)` the occupation tuple
//! `(o_0, ..., o_k)` sits at index `Σ o_j · stride_j` where
//! `stride_k = 1` and `stride_j = stride_{j+1} · n_{j+1}`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// One bosonic mode of the truncated model.
///
/// Frequencies are angular (rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub label: String,
    /// Computational levels `n_m`.
    pub essential_levels: usize,
    /// Extra guard levels `δn_m` above the computational ones.
    pub guard_levels: usize,
    /// Fundamental frequency `ω_m`.
    pub frequency: f64,
    /// Self-Kerr coefficient `ξ_m`.
    pub self_kerr: f64,
}

impl ModeSpec {
    pub fn new(
        label: impl Into<String>,
        essential_levels: usize,
        guard_levels: usize,
        frequency: f64,
        self_kerr: f64,
    ) -> Result<Self> {
        let mode = Self {
            label: label.into(),
            essential_levels,
            guard_levels,
            frequency,
            self_kerr,
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        if self.essential_levels < 2 {
            return Err(Error::InvalidMode(format!(
                "mode `{}` needs at least 2 essential levels, got {}",
                self.label, self.essential_levels
            )));
        }
        if !self.frequency.is_finite() || !self.self_kerr.is_finite() {
            return Err(Error::InvalidMode(format!(
                "mode `{}` has non-finite parameters",
                self.label
            )));
        }
        Ok(())
    }

    pub fn total_levels(&self) -> usize {
        self.essential_levels + self.guard_levels
    }
}

/// Composite basis of a list of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeBasis {
    modes: Vec<ModeSpec>,
    levels: Vec<usize>,
    strides: Vec<usize>,
    dim_full: usize,
    dim_essential: usize,
    essential: Vec<usize>,
}

impl CompositeBasis {
    pub fn new(modes: Vec<ModeSpec>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidSystem("a basis needs at least one mode".into()));
        }
        for mode in &modes {
            mode.validate()?;
        }
        let levels: Vec<usize> = modes.iter().map(ModeSpec::total_levels).collect();
        let mut strides = vec![1; levels.len()];
        for j in (0..levels.len() - 1).rev() {
            strides[j] = strides[j + 1] * levels[j + 1];
        }
        let dim_full = strides[0] * levels[0];
        let dim_essential = modes.iter().map(|m| m.essential_levels).product();

        let mut basis = Self {
            modes,
            levels,
            strides,
            dim_full,
            dim_essential,
            essential: Vec::new(),
        };
        basis.essential = (0..dim_full)
            .filter(|&i| {
                basis
                    .occupations_of(i)
                    .iter()
                    .zip(&basis.modes)
                    .all(|(&n, mode)| n < mode.essential_levels)
            })
            .collect();
        debug_assert_eq!(basis.essential.len(), basis.dim_essential);
        Ok(basis)
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Total level count of every mode.
    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn dim_full(&self) -> usize {
        self.dim_full
    }

    pub fn dim_essential(&self) -> usize {
        self.dim_essential
    }

    /// Full-space indices of the essential subspace, strictly increasing.
    ///
    /// The k-th entry is the basis state that essential-subspace index k
    /// refers to, so essential matrices use the same row-major ordering
    /// restricted to computational levels.
    pub fn essential_indices(&self) -> &[usize] {
        &self.essential
    }

    pub fn state_index(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.modes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.modes.len(),
                actual: occupations.len(),
            });
        }
        let mut index = 0;
        for ((&n, &levels), (&stride, mode)) in occupations
            .iter()
            .zip(&self.levels)
            .zip(self.strides.iter().zip(&self.modes))
        {
            if n >= levels {
                return Err(Error::OccupationOutOfRange {
                    mode: mode.label.clone(),
                    occupation: n,
                    levels,
                });
            }
            index += n * stride;
        }
        Ok(index)
    }

    /// Inverse of [`state_index`](Self::state_index).
    ///
    /// # Panics
    /// If `index >= dim_full`.
    pub fn occupations_of(&self, index: usize) -> Vec<usize> {
        assert!(index < self.dim_full, "basis index {index} out of range");
        self.strides
            .iter()
            .zip(&self.levels)
            .map(|(&stride, &levels)| (index / stride) % levels)
            .collect()
    }

    pub fn occupation(&self, index: usize, mode: usize) -> usize {
        (index / self.strides[mode]) % self.levels[mode]
    }

    pub fn is_essential(&self, index: usize) -> bool {
        (0..self.modes.len()).all(|j| self.occupation(index, j) < self.modes[j].essential_levels)
    }

    /// Human-readable label such as `|1,0,2>`.
    pub fn state_label(&self, index: usize) -> String {
        let occ: Vec<String> = self.occupations_of(index).iter().map(usize::to_string).collect();
        format!("|{}>", occ.join(","))
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.modes.len() {
            Err(Error::UnknownMode(mode))
        } else {
            Ok(())
        }
    }

    /// Lowering operator `a_m` of one mode embedded in the full space.
    pub fn lowering_operator(&self, mode: usize) -> Result<CMatrix> {
        self.check_mode(mode)?;
        let mut a = CMatrix::zeros(self.dim_full, self.dim_full);
        let stride = self.strides[mode];
        for col in 0..self.dim_full {
            let n = self.occupation(col, mode);
            if n > 0 {
                a[(col - stride, col)] = Complex64::new((n as f64).sqrt(), 0.0);
            }
        }
        Ok(a)
    }

    /// Number operator `a_m† a_m` of one mode embedded in the full space.
    pub fn number_operator(&self, mode: usize) -> Result<CMatrix> {
        self.check_mode(mode)?;
        Ok(CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim_full,
            (0..self.dim_full).map(|i| Complex64::new(self.occupation(i, mode) as f64, 0.0)),
        )))
    }

    /// Places an essential-subspace operator into the full space, zero on
    /// every guard row and column.
    pub fn embed_essential(&self, essential_matrix: &CMatrix) -> Result<CMatrix> {
        self.check_essential_shape(essential_matrix)?;
        let mut full = CMatrix::zeros(self.dim_full, self.dim_full);
        for (j, &col) in self.essential.iter().enumerate() {
            for (i, &row) in self.essential.iter().enumerate() {
                full[(row, col)] = essential_matrix[(i, j)];
            }
        }
        Ok(full)
    }

    /// Essential rows of essential columns; inverse of [`embed_essential`](Self::embed_essential).
    pub fn restrict_essential(&self, full: &CMatrix) -> Result<CMatrix> {
        if full.nrows() != self.dim_full || full.ncols() != self.dim_full {
            return Err(Error::DimensionMismatch {
                expected: self.dim_full,
                actual: full.nrows().max(full.ncols()),
            });
        }
        Ok(CMatrix::from_fn(self.dim_essential, self.dim_essential, |i, j| {
            full[(self.essential[i], self.essential[j])]
        }))
    }

    /// Essential operator embedded as a `dim_full × dim_essential` column
    /// block, matching propagators restricted to essential initial states.
    pub fn embed_essential_columns(&self, essential_matrix: &CMatrix) -> Result<CMatrix> {
        self.check_essential_shape(essential_matrix)?;
        let mut block = CMatrix::zeros(self.dim_full, self.dim_essential);
        for j in 0..self.dim_essential {
            for (i, &row) in self.essential.iter().enumerate() {
                block[(row, j)] = essential_matrix[(i, j)];
            }
        }
        Ok(block)
    }

    fn check_essential_shape(&self, m: &CMatrix) -> Result<()> {
        if m.nrows() != self.dim_essential || m.ncols() != self.dim_essential {
            return Err(Error::DimensionMismatch {
                expected: self.dim_essential,
                actual: if m.nrows() != self.dim_essential {
                    m.nrows()
                } else {
                    m.ncols()
                },
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mode(label: &str, ess: usize, guard: usize) -> ModeSpec {
        ModeSpec::new(label, ess, guard, 0.0, 0.0).unwrap()
    }

    #[test]
    fn two_qutrit_indices() {
        let b = CompositeBasis::new(vec![mode("l", 3, 0), mode("m", 3, 0)]).unwrap();
        assert_eq!(b.state_index(&[0, 0]).unwrap(), 0);
        assert_eq!(b.state_index(&[2, 2]).unwrap(), 8);
    }

    #[test]
    fn preset_b_shape_indices() {
        let b = CompositeBasis::new(vec![mode("T", 2, 3), mode("l", 3, 2), mode("m", 3, 2)])
            .unwrap();
        assert_eq!(b.dim_full(), 125);
        assert_eq!(b.state_index(&[1, 0, 0]).unwrap(), 25);
        match b.state_index(&[0, 5, 0]) {
            Err(Error::OccupationOutOfRange { mode, .. }) => assert_eq!(mode, "l"),
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn single_mode_ladder() {
        let b = CompositeBasis::new(vec![mode("m", 3, 0)]).unwrap();
        let a = b.lowering_operator(0).unwrap();
        assert_eq!(a[(0, 1)], Complex64::new(1.0, 0.0));
        assert!((a[(1, 2)].re - 2f64.sqrt()).abs() < 1e-15);
        let nonzero = a.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
        let n = a.adjoint() * &a;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { i as f64 } else { 0.0 };
                assert!((n[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn truncated_commutator() {
        // [a, a†] = I − (n_top + 1)|top⟩⟨top| with n_top = 3 here.
        let b = CompositeBasis::new(vec![mode("m", 3, 1)]).unwrap();
        let a = b.lowering_operator(0).unwrap();
        let comm = &a * a.adjoint() - a.adjoint() * &a;
        let n = 4;
        for i in 0..n {
            for j in 0..n {
                let expect = match (i == j, i == n - 1) {
                    (true, false) => 1.0,
                    (true, true) => 1.0 - n as f64,
                    _ => 0.0,
                };
                assert!((comm[(i, j)].re - expect).abs() < 1e-13, "({i},{j})");
                assert!(comm[(i, j)].im.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn lowering_acts_on_designated_factor() {
        let b = CompositeBasis::new(vec![mode("T", 2, 1), mode("m", 2, 1)]).unwrap();
        let a_t = b.lowering_operator(0).unwrap();
        let a_m = b.lowering_operator(1).unwrap();
        let from = b.state_index(&[2, 1]).unwrap();
        let to = b.state_index(&[1, 1]).unwrap();
        assert!((a_t[(to, from)].re - 2f64.sqrt()).abs() < 1e-15);
        assert!((&a_t * &a_m - &a_m * &a_t).norm() < 1e-14);
        assert!(b.lowering_operator(2).is_err());
    }

    #[test]
    fn embed_identity_on_essential() {
        let b = CompositeBasis::new(vec![mode("q", 2, 1)]).unwrap();
        let id = CMatrix::identity(2, 2);
        let e = b.embed_essential(&id).unwrap();
        let diag: Vec<f64> = (0..3).map(|i| e[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, 1.0, 0.0]);
        assert!(b.embed_essential(&CMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn embed_preset_a_counts() {
        let b = CompositeBasis::new(vec![mode("T", 2, 3), mode("m", 8, 2)]).unwrap();
        assert_eq!(b.dim_full(), 50);
        let u = CMatrix::from_element(16, 16, Complex64::new(1.0, 0.5));
        let e = b.embed_essential(&u).unwrap();
        assert_eq!(e.iter().filter(|z| z.norm() > 0.0).count(), 256);
        assert_eq!(b.restrict_essential(&e).unwrap(), u);
    }

    proptest! {
        #[test]
        fn index_roundtrip(levels in proptest::collection::vec((2usize..4, 0usize..3), 1..4)) {
            let modes: Vec<ModeSpec> = levels
                .iter()
                .enumerate()
                .map(|(k, &(e, g))| mode(&format!("q{k}"), e, g))
                .collect();
            let b = CompositeBasis::new(modes).unwrap();
            for i in 0..b.dim_full() {
                prop_assert_eq!(b.state_index(&b.occupations_of(i)).unwrap(), i);
            }
            let ess = b.essential_indices();
            prop_assert_eq!(ess.len(), b.dim_essential());
            prop_assert!(ess.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn embedding_preserves_norm(seed in 0u64..1000) {
            let b = CompositeBasis::new(vec![mode("T", 2, 1), mode("m", 2, 2)]).unwrap();
            let u = CMatrix::from_fn(4, 4, |i, j| {
                let x = (seed as f64 + 1.0) * (i as f64 + 2.0 * j as f64 + 1.0);
                Complex64::new(x.sin(), x.cos())
            });
            let e = b.embed_essential(&u).unwrap();
            let s_u = u.clone().svd(false, false).singular_values.max();
            let s_e = e.svd(false, false).singular_values.max();
            prop_assert!((s_u - s_e).abs() < 1e-10);
        }
    }
}

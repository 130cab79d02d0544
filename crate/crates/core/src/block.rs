//! Blocks of state vectors in a state-major, split real/imaginary layout.
//!
//! Entry `(i, c)` (basis state `i`, column `c`) lives at `i * ncols + c`.
//! A single-mode operator then acts on contiguous runs of
//! `stride * ncols` numbers, which keeps the inner loops vectorizable.

use num_complex::Complex64;

use crate::fockspace::CMatrix;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub dim: usize,
    pub ncols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Block {
    pub fn zeros(dim: usize, ncols: usize) -> Self {
        Self {
            dim,
            ncols,
            re: vec![0.0; dim * ncols],
            im: vec![0.0; dim * ncols],
        }
    }

    /// Unit vectors `e_{states[c]}` as columns.
    pub fn unit_columns(dim: usize, states: &[usize]) -> Self {
        let mut b = Self::zeros(dim, states.len());
        for (c, &i) in states.iter().enumerate() {
            b.re[i * b.ncols + c] = 1.0;
        }
        b
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        let mut b = Self::zeros(m.nrows(), m.ncols());
        for c in 0..m.ncols() {
            for i in 0..m.nrows() {
                b.set(i, c, m[(i, c)]);
            }
        }
        b
    }

    pub fn to_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.dim, self.ncols, |i, c| self.get(i, c))
    }

    #[inline]
    pub fn get(&self, i: usize, c: usize) -> Complex64 {
        let k = i * self.ncols + c;
        Complex64::new(self.re[k], self.im[k])
    }

    #[inline]
    pub fn set(&mut self, i: usize, c: usize, z: Complex64) {
        let k = i * self.ncols + c;
        self.re[k] = z.re;
        self.im[k] = z.im;
    }

    /// Row `i` scaled by `phases[i]`.
    pub fn apply_diagonal(&mut self, phases: &[Complex64]) {
        let n = self.ncols;
        for (i, p) in phases.iter().enumerate() {
            let (re, im) = (&mut self.re[i * n..(i + 1) * n], &mut self.im[i * n..(i + 1) * n]);
            for (x, y) in re.iter_mut().zip(im.iter_mut()) {
                let (a, b) = (*x, *y);
                *x = p.re * a - p.im * b;
                *y = p.re * b + p.im * a;
            }
        }
    }

    /// `self += scale · diag(w) · other`.
    pub fn add_weighted(&mut self, other: &Block, w: &[f64], scale: f64) {
        let n = self.ncols;
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let s = scale * wi;
            let r = i * n..(i + 1) * n;
            for (x, y) in self.re[r.clone()].iter_mut().zip(&other.re[r.clone()]) {
                *x += s * y;
            }
            for (x, y) in self.im[r.clone()].iter_mut().zip(&other.im[r]) {
                *x += s * y;
            }
        }
    }

    /// Applies `op` (column-major `levels × levels`) to the factor with the
    /// given stride. `scratch` is resized as needed.
    pub fn apply_mode(&mut self, stride: usize, levels: usize, op: &[Complex64], scratch: &mut Block) {
        let run = stride * self.ncols;
        let group = run * levels;
        if scratch.re.len() < group {
            scratch.re.resize(group, 0.0);
            scratch.im.resize(group, 0.0);
        }
        for start in (0..self.re.len()).step_by(group) {
            let (sr, si) = (&mut scratch.re[..group], &mut scratch.im[..group]);
            sr.copy_from_slice(&self.re[start..start + group]);
            si.copy_from_slice(&self.im[start..start + group]);
            for a in 0..levels {
                let out = start + a * run..start + (a + 1) * run;
                let (yr, yi) = (&mut self.re[out.clone()], &mut self.im[out]);
                let z = op[a];
                axpy_init(yr, yi, z, &sr[..run], &si[..run]);
                for b in 1..levels {
                    let z = op[a + b * levels];
                    if z.re == 0.0 && z.im == 0.0 {
                        continue;
                    }
                    axpy(yr, yi, z, &sr[b * run..(b + 1) * run], &si[b * run..(b + 1) * run]);
                }
            }
        }
    }

    /// `C_ab = Σ conj(left[.., a, ..]) · right[.., b, ..]` over the other
    /// factors and all columns, column-major into `out`.
    pub fn reduced_overlap(left: &Block, right: &Block, stride: usize, levels: usize, out: &mut [Complex64]) {
        out.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        let run = stride * left.ncols;
        let group = run * levels;
        for start in (0..left.re.len()).step_by(group) {
            for a in 0..levels {
                let la = start + a * run..start + (a + 1) * run;
                let (lr, li) = (&left.re[la.clone()], &left.im[la]);
                for b in 0..levels {
                    let rb = start + b * run..start + (b + 1) * run;
                    out[a + b * levels] += dot_conj(lr, li, &right.re[rb.clone()], &right.im[rb]);
                }
            }
        }
    }

    /// `|u_ic|²` summed over the columns of row `i`.
    pub fn row_population(&self, i: usize) -> f64 {
        let r = i * self.ncols..(i + 1) * self.ncols;
        self.re[r.clone()].iter().map(|x| x * x).sum::<f64>() + self.im[r].iter().map(|x| x * x).sum::<f64>()
    }

    /// Adds `|u_ic|²` of row `i` into `acc[c]`.
    pub fn add_row_population(&self, i: usize, acc: &mut [f64]) {
        let r = i * self.ncols..(i + 1) * self.ncols;
        for ((a, x), y) in acc.iter_mut().zip(&self.re[r.clone()]).zip(&self.im[r]) {
            *a += x * x + y * y;
        }
    }
}

#[inline]
fn axpy_init(yr: &mut [f64], yi: &mut [f64], z: Complex64, xr: &[f64], xi: &[f64]) {
    for (((yr, yi), xr), xi) in yr.iter_mut().zip(yi.iter_mut()).zip(xr).zip(xi) {
        *yr = z.re * xr - z.im * xi;
        *yi = z.re * xi + z.im * xr;
    }
}

#[inline]
fn axpy(yr: &mut [f64], yi: &mut [f64], z: Complex64, xr: &[f64], xi: &[f64]) {
    for (((yr, yi), xr), xi) in yr.iter_mut().zip(yi.iter_mut()).zip(xr).zip(xi) {
        *yr += z.re * xr - z.im * xi;
        *yi += z.re * xi + z.im * xr;
    }
}

#[inline]
fn dot_conj(lr: &[f64], li: &[f64], rr: &[f64], ri: &[f64]) -> Complex64 {
    let (mut re, mut im) = ([0.0f64; 4], [0.0f64; 4]);
    let chunks = lr.len() / 4 * 4;
    for k in (0..chunks).step_by(4) {
        for l in 0..4 {
            let (a, b, c, d) = (lr[k + l], li[k + l], rr[k + l], ri[k + l]);
            re[l] += a * c + b * d;
            im[l] += a * d - b * c;
        }
    }
    for k in chunks..lr.len() {
        let (a, b, c, d) = (lr[k], li[k], rr[k], ri[k]);
        re[0] += a * c + b * d;
        im[0] += a * d - b * c;
    }
    Complex64::new((re[0] + re[1]) + (re[2] + re[3]), (im[0] + im[1]) + (im[2] + im[3]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{CompositeBasis, ModeSpec};

    fn basis() -> CompositeBasis {
        let m = |l: &str, e, g| ModeSpec::new(l, e, g, 0.0, 0.0).unwrap();
        CompositeBasis::new(vec![m("T", 2, 1), m("l", 2, 1), m("m", 3, 0)]).unwrap()
    }

    fn sample(dim: usize, ncols: usize, seed: f64) -> CMatrix {
        CMatrix::from_fn(dim, ncols, |i, c| {
            let k = (i * ncols + c) as f64 + seed;
            Complex64::new(k.sin(), (0.7 * k).cos())
        })
    }

    fn dense(b: &CompositeBasis, mode: usize, op: &[Complex64]) -> CMatrix {
        let n = b.levels()[mode];
        let dim = b.dim_full();
        CMatrix::from_fn(dim, dim, |row, col| {
            let (or, oc) = (b.occupations_of(row), b.occupations_of(col));
            let others_equal = (0..b.n_modes()).all(|k| k == mode || or[k] == oc[k]);
            if others_equal {
                op[or[mode] + oc[mode] * n]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    #[test]
    fn mode_kernel_matches_dense_embedding() {
        let b = basis();
        for mode in 0..3 {
            let n = b.levels()[mode];
            let op: Vec<Complex64> = (0..n * n)
                .map(|k| Complex64::new(k as f64 * 0.3 - 1.0, (k * k) as f64 * 0.1))
                .collect();
            let u = sample(b.dim_full(), 2, mode as f64);
            let mut block = Block::from_matrix(&u);
            let mut scratch = Block::zeros(0, 0);
            block.apply_mode(b.strides()[mode], n, &op, &mut scratch);
            let d = dense(&b, mode, &op);
            assert!((block.to_matrix() - &d * &u).camax() < 1e-12, "mode {mode}");

            let v = sample(b.dim_full(), 2, 3.0 + mode as f64);
            let mut c = vec![Complex64::new(0.0, 0.0); n * n];
            Block::reduced_overlap(&Block::from_matrix(&v), &Block::from_matrix(&u), b.strides()[mode], n, &mut c);
            let tr: Complex64 = (0..n * n).map(|k| op[k] * c[k]).sum();
            let direct = (v.adjoint() * &d * &u).trace();
            assert!((tr - direct).norm() < 1e-11, "mode {mode}");
        }
    }

    #[test]
    fn diagonal_and_populations() {
        let u = sample(4, 3, 0.5);
        let mut block = Block::from_matrix(&u);
        let phases: Vec<Complex64> = (0..4).map(|k| Complex64::from_polar(1.0, k as f64)).collect();
        block.apply_diagonal(&phases);
        for i in 0..4 {
            for c in 0..3 {
                assert!((block.get(i, c) - phases[i] * u[(i, c)]).norm() < 1e-15);
            }
            let pop: f64 = (0..3).map(|c| u[(i, c)].norm_sqr()).sum();
            assert!((block.row_population(i) - pop).abs() < 1e-14);
        }
    }
}

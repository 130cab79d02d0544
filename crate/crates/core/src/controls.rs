//! Drive pulses: B-spline envelopes modulated by carrier frequencies.
//!
//! The complex drive on mode `m` is
//!
//! ```text
//! d_m(t) = Σ_k exp(i Ω_{m,k} t) · W_{m,k}(t),    W_{m,k}(t) = Σ_b α_{m,k,b} S_b(t)
//! ```
//!
//! where `S_b` are quadratic B-splines on a uniform clamped knot vector over
//! `[0, τ]` and the carriers `Ω_{m,k}` are rotating-frame transition
//! frequencies. The drive couples to the system as `d_m a_m + conj(d_m) a_m†`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::units::mhz;

/// Amplitude bound used for random initial pulses: 0.2 MHz.
pub fn default_init_amplitude() -> f64 {
    mhz(0.2)
}

/// Anything that supplies complex drive amplitudes `d_m(t)` (rad/s).
pub trait DriveSource: Sync {
    fn n_modes(&self) -> usize;

    fn duration(&self) -> f64;

    fn amplitude(&self, mode: usize, t: f64) -> Complex64;

    /// Largest frequency content (rad/s) the time step must resolve.
    fn max_frequency(&self) -> f64;

    fn amplitudes(&self, t: f64, out: &mut [Complex64]) {
        for (m, slot) in out.iter_mut().enumerate() {
            *slot = self.amplitude(m, t);
        }
    }
}

/// Quadratic B-spline basis on a uniform clamped knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    count: usize,
    duration: f64,
    knots: Vec<f64>,
}

impl BSplineBasis {
    pub const DEGREE: usize = 2;

    pub fn new(count: usize, duration: f64) -> Result<Self> {
        if count < 3 {
            return Err(Error::InvalidPulse(format!(
                "quadratic splines need at least 3 basis functions, got {count}"
            )));
        }
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::InvalidPulse(format!("duration must be positive, got {duration}")));
        }
        let spans = count - Self::DEGREE;
        let mut knots = vec![0.0; Self::DEGREE];
        knots.extend((0..=spans).map(|k| duration * k as f64 / spans as f64));
        knots.extend(std::iter::repeat_n(duration, Self::DEGREE));
        Ok(Self {
            count,
            duration,
            knots,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Width of one knot span, `τ/(N_b − 2)`.
    pub fn span_width(&self) -> f64 {
        self.duration / (self.count - Self::DEGREE) as f64
    }

    /// The three possibly-nonzero basis values at `t`: returns the index of
    /// the first one and the values `S_first, S_first+1, S_first+2`.
    ///
    /// `t` is clamped to `[0, τ]`; callers check the domain.
    pub fn nonzero(&self, t: f64) -> (usize, [f64; 3]) {
        let spans = self.count - Self::DEGREE;
        let h = self.span_width();
        let t = t.clamp(0.0, self.duration);
        let span = ((t / h).floor() as usize).min(spans - 1);
        // knot index of the span start in the full knot vector
        let i = span + Self::DEGREE;
        let k = &self.knots;
        // Cox–de Boor triangle for degree 2
        let mut n = [1.0, 0.0, 0.0];
        let mut left = [0.0; 3];
        let mut right = [0.0; 3];
        for j in 1..=Self::DEGREE {
            left[j] = t - k[i + 1 - j];
            right[j] = k[i + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (span, n)
    }

    /// All basis values at `t ∈ [0, τ]`.
    pub fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let mut out = vec![0.0; self.count];
        let (first, values) = self.nonzero(t);
        out[first..first + 3].copy_from_slice(&values);
        Ok(out)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                duration: self.duration,
            });
        }
        Ok(())
    }
}

/// Values of the `N_b` quadratic B-splines on `[0, τ]` at time `t`.
pub fn bspline_basis(count: usize, duration: f64, t: f64) -> Result<Vec<f64>> {
    BSplineBasis::new(count, duration)?.evaluate(t)
}

/// B-spline pulse parameters for every drivable mode.
///
/// Coefficients are stored flat, ordered by mode, then carrier, then basis
/// function. Units are rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseParams {
    basis: BSplineBasis,
    carriers: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    alphas: Vec<Complex64>,
}

impl PulseParams {
    /// All-zero pulse.
    pub fn zeros(duration: f64, splines: usize, carriers: Vec<Vec<f64>>) -> Result<Self> {
        let basis = BSplineBasis::new(splines, duration)?;
        let mut offsets = Vec::with_capacity(carriers.len() + 1);
        let mut total = 0;
        for set in &carriers {
            offsets.push(total);
            total += set.len() * splines;
        }
        offsets.push(total);
        Ok(Self {
            basis,
            carriers,
            offsets,
            alphas: vec![Complex64::new(0.0, 0.0); total],
        })
    }

    pub fn duration(&self) -> f64 {
        self.basis.duration
    }

    pub fn splines(&self) -> usize {
        self.basis.count
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn carriers(&self) -> &[Vec<f64>] {
        &self.carriers
    }

    pub fn n_carriers(&self, mode: usize) -> usize {
        self.carriers[mode].len()
    }

    pub fn alphas(&self) -> &[Complex64] {
        &self.alphas
    }

    pub fn alphas_mut(&mut self) -> &mut [Complex64] {
        &mut self.alphas
    }

    /// Flat index of `α_{mode, carrier, spline}`.
    pub fn index(&self, mode: usize, carrier: usize, spline: usize) -> usize {
        self.offsets[mode] + carrier * self.basis.count + spline
    }

    pub fn alpha(&self, mode: usize, carrier: usize, spline: usize) -> Complex64 {
        self.alphas[self.index(mode, carrier, spline)]
    }

    pub fn set_alpha(&mut self, mode: usize, carrier: usize, spline: usize, value: Complex64) {
        let i = self.index(mode, carrier, spline);
        self.alphas[i] = value;
    }

    /// Coefficient range of one mode in the flat layout.
    pub fn mode_range(&self, mode: usize) -> std::ops::Range<usize> {
        self.offsets[mode]..self.offsets[mode + 1]
    }

    /// Number of real parameters: `Σ_m 2 · N_f(m) · N_b`.
    pub fn n_real(&self) -> usize {
        2 * self.alphas.len()
    }

    /// Real parameter vector `[re α_0, im α_0, re α_1, …]` (rad/s).
    pub fn pack(&self) -> Vec<f64> {
        self.alphas.iter().flat_map(|a| [a.re, a.im]).collect()
    }

    pub fn unpack(&mut self, packed: &[f64]) -> Result<()> {
        if packed.len() != self.n_real() {
            return Err(Error::DimensionMismatch {
                expected: self.n_real(),
                actual: packed.len(),
            });
        }
        for (a, pair) in self.alphas.iter_mut().zip(packed.chunks_exact(2)) {
            *a = Complex64::new(pair[0], pair[1]);
        }
        Ok(())
    }

    /// `d_m(t)` for `t ∈ [0, τ]`.
    pub fn evaluate_drive(&self, mode: usize, t: f64) -> Result<Complex64> {
        if mode >= self.carriers.len() {
            return Err(Error::UnknownMode(mode));
        }
        self.basis.check_time(t)?;
        Ok(self.drive_unchecked(mode, t))
    }

    fn drive_unchecked(&self, mode: usize, t: f64) -> Complex64 {
        let (first, values) = self.basis.nonzero(t);
        let mut d = Complex64::new(0.0, 0.0);
        for (k, &omega) in self.carriers[mode].iter().enumerate() {
            let base = self.index(mode, k, first);
            let w = self.alphas[base] * values[0]
                + self.alphas[base + 1] * values[1]
                + self.alphas[base + 2] * values[2];
            d += Complex64::from_polar(1.0, omega * t) * w;
        }
        d
    }

    /// Upper bound `Σ_k Σ_b |α_{m,k,b}|` on `|d_m(t)|`.
    pub fn amplitude_bound(&self, mode: usize) -> f64 {
        self.alphas[self.mode_range(mode)].iter().map(|a| a.norm()).sum()
    }

    /// Samples `d_m` on `samples` uniformly spaced points of `[0, τ)`.
    pub fn sample(&self, mode: usize, samples: usize) -> Result<Vec<(f64, Complex64)>> {
        if mode >= self.carriers.len() {
            return Err(Error::UnknownMode(mode));
        }
        let dt = self.duration() / samples as f64;
        Ok((0..samples)
            .map(|j| {
                let t = j as f64 * dt;
                (t, self.drive_unchecked(mode, t))
            })
            .collect())
    }

    pub fn max_carrier(&self) -> f64 {
        self.carriers
            .iter()
            .flatten()
            .fold(0.0f64, |acc, &w| acc.max(w.abs()))
    }
}

impl DriveSource for PulseParams {
    fn n_modes(&self) -> usize {
        self.carriers.len()
    }

    fn duration(&self) -> f64 {
        self.basis.duration
    }

    fn amplitude(&self, mode: usize, t: f64) -> Complex64 {
        self.drive_unchecked(mode, t)
    }

    /// Fastest carrier plus the envelope bandwidth `N_b/τ`.
    fn max_frequency(&self) -> f64 {
        self.max_carrier() + TAU * self.basis.count as f64 / self.basis.duration
    }
}

/// Random initial pulse: every real parameter i.i.d. uniform in
/// `[0, amplitude)` (rad/s), deterministic in `seed`.
pub fn random_init(
    seed: u64,
    duration: f64,
    splines: usize,
    carriers: Vec<Vec<f64>>,
    amplitude: f64,
) -> Result<PulseParams> {
    let mut params = PulseParams::zeros(duration, splines, carriers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for a in params.alphas.iter_mut() {
        let re = amplitude * rng.random::<f64>();
        let im = amplitude * rng.random::<f64>();
        *a = Complex64::new(re, im);
    }
    Ok(params)
}

/// Drive that is constant on each of `segments` equal time slices.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantDrive {
    pub duration: f64,
    /// `values[mode][segment]` in rad/s.
    pub values: Vec<Vec<Complex64>>,
}

impl PiecewiseConstantDrive {
    pub fn segments(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

impl DriveSource for PiecewiseConstantDrive {
    fn n_modes(&self) -> usize {
        self.values.len()
    }

    fn duration(&self) -> f64 {
        self.duration
    }

    fn amplitude(&self, mode: usize, t: f64) -> Complex64 {
        let n = self.segments();
        let k = ((t / self.duration * n as f64).floor() as usize).min(n - 1);
        self.values[mode][k]
    }

    fn max_frequency(&self) -> f64 {
        0.0
    }
}

/// One line of a magnitude spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumLine {
    /// Linear frequency (Hz) relative to the frame the carriers live in.
    pub frequency: f64,
    pub magnitude: f64,
}

/// DFT magnitude of `d_m(t)` sampled at `sample_rate` (Hz) over `[0, τ)`,
/// sorted by frequency. Magnitudes are normalized by the sample count so a
/// pure tone of amplitude `A` shows a peak of height `A`.
pub fn pulse_spectrum(params: &PulseParams, mode: usize, sample_rate: f64) -> Result<Vec<SpectrumLine>> {
    if mode >= params.n_modes() {
        return Err(Error::UnknownMode(mode));
    }
    let max_carrier_hz = params.carriers[mode]
        .iter()
        .fold(0.0f64, |acc, &w| acc.max(w.abs()))
        / TAU;
    if !(sample_rate > 0.0) || sample_rate < 4.0 * max_carrier_hz {
        return Err(Error::SampleRateTooLow {
            sample_rate,
            max_carrier_hz,
        });
    }
    let n = ((params.duration() * sample_rate).round() as usize).max(1);
    let mut buffer: Vec<Complex64> = (0..n)
        .map(|j| params.drive_unchecked(mode, j as f64 / sample_rate))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buffer);
    let mut lines: Vec<SpectrumLine> = buffer
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let signed = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
            SpectrumLine {
                frequency: signed * sample_rate / n as f64,
                magnitude: z.norm() / n as f64,
            }
        })
        .collect();
    lines.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::ns;
    use proptest::prelude::*;

    #[test]
    fn partition_of_unity() {
        let basis = BSplineBasis::new(10, ns(8000.0)).unwrap();
        for j in 0..=10_000 {
            let t = basis.duration() * j as f64 / 10_000.0;
            let s: f64 = basis.evaluate(t).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn clamped_ends() {
        let basis = BSplineBasis::new(10, 1.0).unwrap();
        let left = basis.evaluate(0.0).unwrap();
        assert_eq!(left[0], 1.0);
        assert!(left[1..].iter().all(|&v| v == 0.0));
        let right = basis.evaluate(1.0).unwrap();
        assert!((right[9] - 1.0).abs() < 1e-15);
        assert!(right[..9].iter().all(|&v| v.abs() < 1e-15));
        assert!(basis.evaluate(1.0 + 1e-9).is_err());
        assert!(basis.evaluate(-1e-9).is_err());
    }

    #[test]
    fn support_spans_at_most_three_knot_intervals() {
        let tau = ns(8000.0);
        let basis = BSplineBasis::new(10, tau).unwrap();
        let h = tau / 8.0;
        assert!((basis.span_width() - h).abs() < 1e-18);
        let grid = 80_000;
        for b in 0..10 {
            let support: Vec<f64> = (0..=grid)
                .map(|j| tau * j as f64 / grid as f64)
                .filter(|&t| basis.evaluate(t).unwrap()[b] > 1e-14)
                .collect();
            let width = support.last().unwrap() - support.first().unwrap();
            assert!(width <= 3.0 * h + 1e-12, "basis {b} support {width}");
            assert!(width > 0.9 * h);
        }
    }

    #[test]
    fn zero_pulse_is_zero() {
        let p = PulseParams::zeros(1e-6, 5, vec![vec![1e8, 2e8], vec![3e7]]).unwrap();
        for j in 0..50 {
            let t = 1e-6 * j as f64 / 49.0;
            assert_eq!(p.evaluate_drive(0, t).unwrap(), Complex64::new(0.0, 0.0));
        }
        assert!(p.evaluate_drive(2, 0.0).is_err());
    }

    #[test]
    fn single_term_drive() {
        let omega = 2.0e8;
        let mut p = PulseParams::zeros(1e-6, 6, vec![vec![omega]]).unwrap();
        p.set_alpha(0, 0, 2, Complex64::new(3.0e6, 0.0));
        for j in 0..40 {
            let t = 1e-6 * j as f64 / 39.0;
            let d = p.evaluate_drive(0, t).unwrap();
            let s = p.basis().evaluate(t).unwrap()[2];
            assert!((d.norm() - 3.0e6 * s).abs() < 1e-6);
            if s > 1e-6 {
                let phase = Complex64::from_polar(1.0, omega * t);
                assert!((d / d.norm() - phase).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn drive_matches_direct_double_sum() {
        let carriers = vec![vec![1.1e8, -4.0e7, 9.0e6], vec![2.0e6]];
        let p = random_init(7, 5e-7, 10, carriers.clone(), mhz(0.2)).unwrap();
        for j in 0..100 {
            let t = 5e-7 * j as f64 / 99.0;
            let s = bspline_basis(10, 5e-7, t).unwrap();
            for (m, set) in carriers.iter().enumerate() {
                let mut oracle = Complex64::new(0.0, 0.0);
                for (k, &w) in set.iter().enumerate() {
                    for (b, &sb) in s.iter().enumerate() {
                        oracle += Complex64::new(0.0, w * t).exp() * p.alpha(m, k, b) * sb;
                    }
                }
                let got = p.evaluate_drive(m, t).unwrap();
                assert!((got - oracle).norm() <= 1e-13 * oracle.norm().max(1.0) * 1e2);
            }
        }
    }

    #[test]
    fn random_init_is_bounded_and_seeded() {
        let carriers = vec![vec![1.0; 8], vec![2.0; 14]];
        let a = random_init(11, 5e-7, 10, carriers.clone(), mhz(0.2)).unwrap();
        let b = random_init(11, 5e-7, 10, carriers.clone(), mhz(0.2)).unwrap();
        let c = random_init(12, 5e-7, 10, carriers, mhz(0.2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.n_real(), 2 * 22 * 10);
        assert!(a.pack().iter().all(|&x| (0.0..TAU * 0.2e6).contains(&x)));
    }

    #[test]
    fn zero_spectrum() {
        let p = PulseParams::zeros(1e-6, 5, vec![vec![TAU * 10e6]]).unwrap();
        let s = pulse_spectrum(&p, 0, 100e6).unwrap();
        assert!(s.iter().all(|l| l.magnitude == 0.0));
        assert!(pulse_spectrum(&p, 0, 30e6).is_err());
    }

    #[test]
    fn single_carrier_peak() {
        let f = 12.5e6;
        let tau = 2e-6;
        let mut p = PulseParams::zeros(tau, 5, vec![vec![TAU * f]]).unwrap();
        for b in 0..5 {
            p.set_alpha(0, 0, b, Complex64::new(1.0, 0.0));
        }
        let s = pulse_spectrum(&p, 0, 200e6).unwrap();
        let peak = s.iter().max_by(|a, b| a.magnitude.total_cmp(&b.magnitude)).unwrap();
        assert!((peak.frequency - f).abs() <= 1.0 / tau);
        assert!((peak.magnitude - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn pack_unpack_roundtrip(values in proptest::collection::vec(-1e7f64..1e7, 60)) {
            let mut p = PulseParams::zeros(1e-6, 5, vec![vec![1.0, 2.0], vec![3.0, 4.0, 5.0, 6.0]]).unwrap();
            prop_assert_eq!(p.n_real(), 60);
            p.unpack(&values).unwrap();
            prop_assert_eq!(p.pack(), values);
        }

        #[test]
        fn drive_is_bounded(seed in 0u64..500, frac in 0.0f64..1.0) {
            let p = random_init(seed, 1e-6, 7, vec![vec![1e8, 3e7], vec![5e6]], mhz(0.2)).unwrap();
            let t = frac * 1e-6;
            for m in 0..2 {
                prop_assert!(p.evaluate_drive(m, t).unwrap().norm() <= p.amplitude_bound(m) * (1.0 + 1e-12));
            }
        }
    }
}

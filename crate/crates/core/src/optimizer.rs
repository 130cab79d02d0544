//! L-BFGS minimization with multiple random restarts.
//!
//! The pulse problem is solved in MHz-scaled variables `x = α / (2π·10⁶)`
//! so that unit steps are physically sensible.

use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controls::{default_init_amplitude, random_init, PulseParams};
use crate::error::{Error, Result};
use crate::objective::{Objective, ObjectiveValue};

/// Rad/s per optimizer unit.
pub const PARAMETER_SCALE: f64 = TAU * 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Stop once `1 − O_F` reaches this value.
    pub target_fidelity: f64,
    /// L-BFGS history length.
    pub memory: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Symmetric box `|Re α|, |Im α| ≤ bound` (rad/s).
    pub bounds: Option<f64>,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub gradient_floor: f64,
    pub max_line_search: usize,
    /// Upper end of the uniform initial coefficient distribution (rad/s).
    pub init_amplitude: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            target_fidelity: 0.99,
            memory: 10,
            restarts: 10,
            seed: 0,
            bounds: None,
            c1: 1e-4,
            c2: 0.9,
            gradient_floor: 1e-10,
            max_line_search: 20,
            init_amplitude: default_init_amplitude(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidOptimizer(m.to_string()));
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.target_fidelity >= 0.0 && self.target_fidelity <= 1.0) {
            return bad("target_fidelity must lie in [0, 1]");
        }
        if self.memory < 1 {
            return bad("memory must be at least 1");
        }
        if self.restarts < 1 {
            return bad("restarts must be at least 1");
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return bad("line-search constants need 0 < c1 < c2 < 1");
        }
        if let Some(b) = self.bounds {
            if !(b > 0.0 && b.is_finite()) {
                return bad("bounds must be positive");
            }
        }
        if !(self.init_amplitude >= 0.0 && self.init_amplitude.is_finite()) {
            return bad("init_amplitude must be non-negative");
        }
        Ok(())
    }
}

/// Why a minimization stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    MaxIterations,
    GradientFloor,
    LineSearchFailed,
    EvaluationFailed,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::TargetReached => "target_reached",
            StopReason::MaxIterations => "max_iterations",
            StopReason::GradientFloor => "gradient_floor",
            StopReason::LineSearchFailed => "line_search_failed",
            StopReason::EvaluationFailed => "evaluation_failed",
        }
    }
}

/// Value, gradient and an optional fidelity for the stopping test.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub fidelity: Option<f64>,
}

/// Settings of the bare L-BFGS iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsSettings {
    pub max_iterations: usize,
    pub target_fidelity: Option<f64>,
    pub memory: usize,
    pub bounds: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub gradient_floor: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        let c = OptimizerConfig::default();
        Self {
            max_iterations: c.max_iterations,
            target_fidelity: None,
            memory: c.memory,
            bounds: None,
            c1: c.c1,
            c2: c.c2,
            gradient_floor: c.gradient_floor,
            max_line_search: c.max_line_search,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub fidelity: Option<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: StopReason,
    /// Objective at the initial point and after every accepted step.
    pub accepted: Vec<f64>,
}

struct Point {
    x: Vec<f64>,
    eval: Evaluation,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn project(x: &mut [f64], bound: Option<f64>) {
    if let Some(b) = bound {
        x.iter_mut().for_each(|v| *v = v.clamp(-b, b));
    }
}

/// Gradient with components that push against an active bound removed.
fn projected_gradient(x: &[f64], g: &[f64], bound: Option<f64>) -> Vec<f64> {
    match bound {
        None => g.to_vec(),
        Some(b) => x
            .iter()
            .zip(g)
            .map(|(&xi, &gi)| {
                if (xi >= b && gi < 0.0) || (xi <= -b && gi > 0.0) {
                    0.0
                } else {
                    gi
                }
            })
            .collect(),
    }
}

/// Two-loop recursion: `−H·g`.
fn direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

struct Counter<'a, F> {
    f: &'a mut F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> Result<Evaluation>> Counter<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Result<Evaluation> {
        self.evaluations += 1;
        let e = (self.f)(x)?;
        if !e.value.is_finite() || e.gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(e)
    }
}

enum Search {
    Found(Point),
    Failed,
    Error,
}

/// Strong-Wolfe line search (bracketing + zoom with cubic interpolation).
fn wolfe_search<F: FnMut(&[f64]) -> Result<Evaluation>>(
    counter: &mut Counter<'_, F>,
    start: &Point,
    p: &[f64],
    alpha0: f64,
    s: &LbfgsSettings,
) -> Search {
    let f0 = start.eval.value;
    let d0 = dot(&start.eval.gradient, p);
    let at = |alpha: f64| -> Vec<f64> { start.x.iter().zip(p).map(|(x, d)| x + alpha * d).collect() };
    let mut budget = s.max_line_search;
    let probe = |alpha: f64, counter: &mut Counter<'_, F>| -> Option<std::result::Result<(Point, f64), ()>> {
        let x = at(alpha);
        match counter.eval(&x) {
            Ok(eval) => {
                let d = dot(&eval.gradient, p);
                Some(Ok((Point { x, eval }, d)))
            }
            Err(Error::NonFinite) => Some(Err(())),
            Err(_) => None,
        }
    };

    let (mut a_prev, mut f_prev, mut d_prev) = (0.0, f0, d0);
    let mut alpha = alpha0;
    let mut first = true;
    // bracket
    let (lo, hi);
    loop {
        if budget == 0 {
            return Search::Failed;
        }
        budget -= 1;
        let (pt, d) = match probe(alpha, counter) {
            None => return Search::Error,
            Some(Err(())) => {
                // non-finite: shrink towards the last good step
                alpha = 0.5 * (a_prev + alpha);
                continue;
            }
            Some(Ok(v)) => v,
        };
        let f = pt.eval.value;
        if !sufficient(f0, d0, alpha, f, d, s.c1) || (!first && f >= f_prev) {
            lo = (a_prev, f_prev, d_prev);
            hi = (alpha, f, d);
            break;
        }
        if d.abs() <= -s.c2 * d0 {
            return Search::Found(pt);
        }
        if d >= 0.0 {
            lo = (alpha, f, d);
            hi = (a_prev, f_prev, d_prev);
            // keep the accepted-so-far point for zoom below
            return zoom(counter, start, p, lo, hi, Some(pt), budget, s);
        }
        a_prev = alpha;
        f_prev = f;
        d_prev = d;
        alpha *= 2.0;
        first = false;
    }
    zoom(counter, start, p, lo, hi, None, budget, s)
}

#[allow(clippy::too_many_arguments)]
fn zoom<F: FnMut(&[f64]) -> Result<Evaluation>>(
    counter: &mut Counter<'_, F>,
    start: &Point,
    p: &[f64],
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
    mut lo_point: Option<Point>,
    mut budget: usize,
    s: &LbfgsSettings,
) -> Search {
    let f0 = start.eval.value;
    let d0 = dot(&start.eval.gradient, p);
    while budget > 0 {
        budget -= 1;
        let alpha = interpolate(lo, hi);
        let x: Vec<f64> = start.x.iter().zip(p).map(|(x, d)| x + alpha * d).collect();
        let eval = match counter.eval(&x) {
            Ok(e) => e,
            Err(Error::NonFinite) => {
                hi = (alpha, f64::INFINITY, 0.0);
                continue;
            }
            Err(_) => return Search::Error,
        };
        let f = eval.value;
        let d = dot(&eval.gradient, p);
        if !sufficient(f0, d0, alpha, f, d, s.c1) || f >= lo.1 {
            hi = (alpha, f, d);
        } else {
            if d.abs() <= -s.c2 * d0 {
                return Search::Found(Point { x, eval });
            }
            if d * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (alpha, f, d);
            lo_point = Some(Point { x, eval });
        }
        if (hi.0 - lo.0).abs() < 1e-14 * lo.0.abs().max(1e-14) {
            break;
        }
    }
    // Fall back to the best sufficient-decrease point, if any.
    match lo_point {
        Some(pt) if pt.eval.value < f0 => Search::Found(pt),
        _ => Search::Failed,
    }
}

/// Armijo's condition, or the approximate Wolfe condition of Hager and
/// Zhang when the decrease is below round-off (never an increase).
fn sufficient(f0: f64, d0: f64, alpha: f64, f: f64, d: f64, c1: f64) -> bool {
    f <= f0 + c1 * alpha * d0 || (f <= f0 && d <= (1.0 - 2.0 * c1) * d0.abs())
}

/// Minimizer of the cubic through two points with slopes, safeguarded to
/// the interior of the bracket.
fn interpolate(lo: (f64, f64, f64), hi: (f64, f64, f64)) -> f64 {
    let (a0, f0, d0) = lo;
    let (a1, f1, d1) = hi;
    let (left, right) = (a0.min(a1), a0.max(a1));
    let width = right - left;
    let mid = 0.5 * (a0 + a1);
    if !f1.is_finite() {
        return mid;
    }
    let d1c = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1);
    let disc = d1c * d1c - d0 * d1;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (a1 - a0).signum() * disc.sqrt();
    let a = a1 - (a1 - a0) * (d1 + d2 - d1c) / (d1 - d0 + 2.0 * d2);
    if a.is_finite() && a > left + 0.1 * width && a < right - 0.1 * width {
        a
    } else {
        mid
    }
}

/// Backtracking along the projected path `P(x + αp)` with Armijo's condition.
fn projected_search<F: FnMut(&[f64]) -> Result<Evaluation>>(
    counter: &mut Counter<'_, F>,
    start: &Point,
    p: &[f64],
    alpha0: f64,
    s: &LbfgsSettings,
) -> Search {
    let mut alpha = alpha0;
    for _ in 0..s.max_line_search {
        let mut x: Vec<f64> = start.x.iter().zip(p).map(|(x, d)| x + alpha * d).collect();
        project(&mut x, s.bounds);
        let step: Vec<f64> = x.iter().zip(&start.x).map(|(a, b)| a - b).collect();
        let decrease = dot(&start.eval.gradient, &step);
        match counter.eval(&x) {
            Ok(eval) => {
                if eval.value <= start.eval.value + s.c1 * decrease && decrease < 0.0 {
                    return Search::Found(Point { x, eval });
                }
            }
            Err(Error::NonFinite) => {}
            Err(_) => return Search::Error,
        }
        alpha *= 0.5;
    }
    Search::Failed
}

/// Minimizes `f` from `x0`. Evaluation errors stop the run and return the
/// best point so far; an error at `x0` is returned as `Err`.
pub fn lbfgs<F>(mut f: F, x0: &[f64], s: &LbfgsSettings) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    let mut counter = Counter { f: &mut f, evaluations: 0 };
    let mut x = x0.to_vec();
    project(&mut x, s.bounds);
    let eval = counter.eval(&x)?;
    let mut current = Point { x, eval };
    let mut accepted = vec![current.eval.value];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(s.memory);
    let mut iterations = 0;

    let reached = |p: &Point| match (s.target_fidelity, p.eval.fidelity) {
        (Some(t), Some(fid)) => fid >= t,
        _ => false,
    };

    let reason = loop {
        if reached(&current) {
            break StopReason::TargetReached;
        }
        let pg = projected_gradient(&current.x, &current.eval.gradient, s.bounds);
        if inf_norm(&pg) < s.gradient_floor {
            break StopReason::GradientFloor;
        }
        if iterations >= s.max_iterations {
            break StopReason::MaxIterations;
        }

        let mut retried = false;
        let next = loop {
            let mut p = direction(&pg, &history);
            if s.bounds.is_some() {
                p = projected_gradient(&current.x, &p.iter().map(|v| -v).collect::<Vec<_>>(), s.bounds)
                    .into_iter()
                    .map(|v| -v)
                    .collect();
            }
            if !(dot(&current.eval.gradient, &p) < 0.0) {
                history.clear();
                p = pg.iter().map(|g| -g).collect();
            }
            let alpha0 = if history.is_empty() {
                (1.0 / p.iter().map(|v| v * v).sum::<f64>().sqrt()).min(1.0)
            } else {
                1.0
            };
            let result = if s.bounds.is_some() {
                projected_search(&mut counter, &current, &p, alpha0, s)
            } else {
                wolfe_search(&mut counter, &current, &p, alpha0, s)
            };
            match result {
                Search::Found(pt) => break Ok(pt),
                Search::Error => break Err(StopReason::EvaluationFailed),
                Search::Failed if !retried && !history.is_empty() => {
                    history.clear();
                    retried = true;
                }
                Search::Failed => break Err(StopReason::LineSearchFailed),
            }
        };
        let next = match next {
            Ok(pt) => pt,
            Err(reason) => break reason,
        };

        let sv: Vec<f64> = next.x.iter().zip(&current.x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = next
            .eval
            .gradient
            .iter()
            .zip(&current.eval.gradient)
            .map(|(a, b)| a - b)
            .collect();
        let sy = dot(&sv, &yv);
        if sy > 1e-12 * dot(&yv, &yv).sqrt() * dot(&sv, &sv).sqrt() && sy > 0.0 {
            if history.len() == s.memory {
                history.pop_front();
            }
            history.push_back((sv, yv, 1.0 / sy));
        }
        current = next;
        accepted.push(current.eval.value);
        iterations += 1;
    };

    Ok(LbfgsOutcome {
        x: current.x,
        value: current.eval.value,
        gradient: current.eval.gradient,
        fidelity: current.eval.fidelity,
        iterations,
        evaluations: counter.evaluations,
        reason,
        accepted,
    })
}

/// Outcome of one synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub iterations: usize,
    pub evaluations: usize,
    pub fidelity: f64,
    pub leakage: f64,
    pub max_guard_population: f64,
    pub wall_time_s: f64,
    pub converged: bool,
    pub status: StopReason,
}

impl RunRecord {
    /// Wall seconds per objective-gradient evaluation.
    pub fn cpu_per_evaluation(&self) -> f64 {
        if self.evaluations == 0 {
            0.0
        } else {
            self.wall_time_s / self.evaluations as f64
        }
    }
}

fn settings_of(config: &OptimizerConfig) -> LbfgsSettings {
    LbfgsSettings {
        max_iterations: config.max_iterations,
        target_fidelity: Some(config.target_fidelity),
        memory: config.memory,
        bounds: config.bounds.map(|b| b / PARAMETER_SCALE),
        c1: config.c1,
        c2: config.c2,
        gradient_floor: config.gradient_floor,
        max_line_search: config.max_line_search,
    }
}

/// Minimizes the objective from `init`; returns the best pulse and its record.
pub fn minimize(objective: &Objective, init: PulseParams, config: &OptimizerConfig, seed: u64) -> Result<(PulseParams, RunRecord)> {
    config.validate()?;
    let started = Instant::now();
    let mut params = init;
    let x0: Vec<f64> = params.pack().iter().map(|v| v / PARAMETER_SCALE).collect();
    let mut probe = params.clone();
    let mut last: Option<(Vec<f64>, ObjectiveValue)> = None;
    let outcome = lbfgs(
        |x: &[f64]| {
            let packed: Vec<f64> = x.iter().map(|v| v * PARAMETER_SCALE).collect();
            probe.unpack(&packed)?;
            let value = objective.evaluate_with_gradient(&probe)?;
            let gradient = value
                .gradient
                .as_ref()
                .expect("gradient requested")
                .iter()
                .map(|g| g * PARAMETER_SCALE)
                .collect();
            let eval = Evaluation {
                value: value.total,
                gradient,
                fidelity: Some(value.fidelity()),
            };
            last = Some((x.to_vec(), value));
            Ok(eval)
        },
        &x0,
        &settings_of(config),
    )?;
    let packed: Vec<f64> = outcome.x.iter().map(|v| v * PARAMETER_SCALE).collect();
    params.unpack(&packed)?;
    let value = match last {
        Some((x, v)) if x == outcome.x => v,
        _ => objective.evaluate(&params)?,
    };
    let record = RunRecord {
        seed,
        iterations: outcome.iterations,
        evaluations: outcome.evaluations,
        fidelity: value.fidelity(),
        leakage: value.leakage,
        max_guard_population: value.max_guard_population,
        wall_time_s: started.elapsed().as_secs_f64(),
        converged: outcome.reason == StopReason::TargetReached,
        status: outcome.reason,
    };
    Ok((params, record))
}

/// Pulse shape shared by all restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseShape {
    pub duration: f64,
    pub splines: usize,
    pub carriers: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultistartResult {
    /// One record per restart, in seed order.
    pub records: Vec<RunRecord>,
    pub best: PulseParams,
    pub best_index: usize,
}

impl MultistartResult {
    pub fn best_record(&self) -> &RunRecord {
        &self.records[self.best_index]
    }
}

/// Runs `config.restarts` minimizations from random pulses with seeds
/// `seed, seed+1, …` on `workers` threads and keeps the best by fidelity.
pub fn multistart(objective: &Objective, shape: &PulseShape, config: &OptimizerConfig, workers: usize) -> Result<MultistartResult> {
    config.validate()?;
    let run = |k: usize| -> Result<(PulseParams, RunRecord)> {
        let seed = config.seed.wrapping_add(k as u64);
        let init = random_init(seed, shape.duration, shape.splines, shape.carriers.clone(), config.init_amplitude)?;
        minimize(objective, init, config, seed)
    };
    let runs: Vec<Result<(PulseParams, RunRecord)>> = if workers <= 1 {
        (0..config.restarts).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidOptimizer(e.to_string()))?;
        pool.install(|| (0..config.restarts).into_par_iter().map(run).collect())
    };
    let mut records = Vec::with_capacity(runs.len());
    let mut pulses = Vec::with_capacity(runs.len());
    for r in runs {
        let (p, rec) = r?;
        pulses.push(p);
        records.push(rec);
    }
    let best_index = best_by_fidelity(&records);
    Ok(MultistartResult {
        best: pulses.swap_remove(best_index),
        records,
        best_index,
    })
}

/// Index of the highest fidelity; ties go to the lowest seed.
pub fn best_by_fidelity(records: &[RunRecord]) -> usize {
    let mut best = 0;
    for (k, r) in records.iter().enumerate() {
        let b = &records[best];
        if r.fidelity > b.fidelity || (r.fidelity == b.fidelity && r.seed < b.seed) {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quadratic(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() - 0.5).collect();
        // A = MᵀM + I
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| m[k * n + i] * m[k * n + j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        (a, b)
    }

    fn solve(a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let m = nalgebra::DMatrix::from_row_slice(n, n, a);
        m.lu().solve(&nalgebra::DVector::from_column_slice(b)).unwrap().as_slice().to_vec()
    }

    #[test]
    fn quadratic_converges_to_closed_form() {
        let n = 20;
        let (a, b) = quadratic(n, 3);
        let exact = solve(&a, &b);
        // ½(x−x*)ᵀA(x−x*): same minimizer, value free of cancellation near it
        let f = |x: &[f64]| {
            let e: Vec<f64> = x.iter().zip(&exact).map(|(p, q)| p - q).collect();
            let ae: Vec<f64> = (0..n).map(|i| dot(&a[i * n..(i + 1) * n], &e)).collect();
            Ok(Evaluation {
                value: 0.5 * dot(&e, &ae),
                gradient: ae,
                fidelity: None,
            })
        };
        let out = lbfgs(f, &vec![0.0; n], &LbfgsSettings::default()).unwrap();
        assert!(out.iterations < 50, "{}", out.iterations);
        assert!(inf_norm(&out.gradient) < 1e-8, "{:?} {} {} {:e}", out.reason, out.iterations, out.evaluations, inf_norm(&out.gradient));
        for (x, e) in out.x.iter().zip(&exact) {
            assert!((x - e).abs() < 1e-7);
        }
        assert!(out.accepted.windows(2).all(|w| w[1] <= w[0]));
    }

    fn rosenbrock(x: &[f64]) -> Result<Evaluation> {
        let (a, b) = (x[0], x[1]);
        Ok(Evaluation {
            value: (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
            gradient: vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
            fidelity: None,
        })
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let s = LbfgsSettings {
            max_iterations: 200,
            ..LbfgsSettings::default()
        };
        let out = lbfgs(rosenbrock, &[-1.2, 1.0], &s).unwrap();
        assert!(out.value < 1e-8, "{out:?}");
        assert!(out.iterations <= 200);
        assert!(out.accepted.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_target_stops_after_first_evaluation() {
        let s = LbfgsSettings {
            target_fidelity: Some(0.0),
            ..LbfgsSettings::default()
        };
        let f = |x: &[f64]| {
            let mut e = rosenbrock(x)?;
            e.fidelity = Some(0.1);
            Ok(e)
        };
        let out = lbfgs(f, &[-1.2, 1.0], &s).unwrap();
        assert_eq!((out.iterations, out.evaluations), (0, 1));
        assert_eq!(out.reason, StopReason::TargetReached);
    }

    #[test]
    fn bounds_hold_for_every_iterate() {
        let s = LbfgsSettings {
            bounds: Some(0.5),
            max_iterations: 100,
            ..LbfgsSettings::default()
        };
        let mut seen = Vec::new();
        let f = |x: &[f64]| {
            seen.push(x.to_vec());
            rosenbrock(x)
        };
        let out = lbfgs(f, &[-1.2, 1.0], &s).unwrap();
        assert!(seen.iter().flatten().all(|v| v.abs() <= 0.5));
        // constrained minimizer lies on the box edge a = 0.5
        assert!((out.x[0] - 0.5).abs() < 1e-6, "{:?}", out.x);
        assert!((out.x[1] - 0.25).abs() < 1e-4, "{:?}", out.x);
        assert!(out.accepted.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn iteration_cap_and_counting() {
        let s = LbfgsSettings {
            max_iterations: 3,
            ..LbfgsSettings::default()
        };
        let out = lbfgs(rosenbrock, &[-1.2, 1.0], &s).unwrap();
        assert_eq!(out.iterations, 3);
        assert_eq!(out.reason, StopReason::MaxIterations);
        assert!(out.evaluations >= out.iterations + 1);
        assert_eq!(out.accepted.len(), 4);
    }

    #[test]
    fn best_is_max_fidelity_regardless_of_order() {
        let rec = |seed, fidelity| RunRecord {
            seed,
            iterations: 0,
            evaluations: 1,
            fidelity,
            leakage: 0.0,
            max_guard_population: 0.0,
            wall_time_s: 0.0,
            converged: false,
            status: StopReason::MaxIterations,
        };
        let mut records = vec![rec(0, 0.3), rec(1, 0.9), rec(2, 0.5), rec(3, 0.9)];
        assert_eq!(records[best_by_fidelity(&records)].seed, 1);
        records.reverse();
        assert_eq!(records[best_by_fidelity(&records)].seed, 1);
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig {
            max_iterations: 0,
            ..OptimizerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            target_fidelity: 1.5,
            ..OptimizerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

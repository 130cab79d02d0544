//! Campaigns over (gate, angle, τ, restart) cells and their aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, GateSpec};
use crate::controls::random_init;
use crate::error::Result;
use crate::io::RunRow;
use crate::model::SystemSpec;
use crate::objective::{guard_weights, Objective};
use crate::optimizer::{minimize, OptimizerConfig, RunRecord, StopReason};
use crate::resonance::enumerate_transitions;
use crate::units::to_ns;

/// One (gate, angle, τ) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub gate: GateSpec,
    pub duration: f64,
}

pub fn cells(config: &ExperimentConfig) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for gate in config.gate_specs()? {
        for &duration in &config.durations() {
            out.push(Cell {
                gate: gate.clone(),
                duration,
            });
        }
    }
    Ok(out)
}

/// Runs one restart of one cell. Failures become a record with NaN
/// fidelity so a diverged cell never aborts the campaign.
pub fn run_restart(system: &SystemSpec, config: &ExperimentConfig, cell: &Cell, restart: usize) -> RunRow {
    let seed = config.seed.wrapping_add(restart as u64);
    let label = cell.gate.kind.short_name();
    match try_restart(system, config, cell, seed) {
        Ok(record) => RunRow::new(label, cell.gate.angle_over_pi, to_ns(cell.duration), &record),
        Err(e) => {
            log::warn!("cell {label} {} {} seed {seed} failed: {e}", cell.gate.angle_over_pi, to_ns(cell.duration));
            RunRow {
                gate: label.to_string(),
                angle_over_pi: cell.gate.angle_over_pi,
                tau_ns: to_ns(cell.duration),
                seed,
                fidelity: f64::NAN,
                leakage: f64::NAN,
                max_guard_population: f64::NAN,
                iterations: 0,
                evals: 0,
                cpu_s: 0.0,
                converged: false,
                status: "error".into(),
            }
        }
    }
}

fn try_restart(system: &SystemSpec, config: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<RunRecord> {
    let target = cell.gate.target(system)?;
    let objective = Objective::new(system, &target, guard_weights(&system.basis()), config.step_control())?;
    let opt = cell_optimizer(config, cell)?;
    let carriers = enumerate_transitions(system).carrier_sets();
    let init = random_init(seed, cell.duration, config.pulse.splines, carriers, opt.init_amplitude)?;
    Ok(minimize(&objective, init, &opt, seed)?.1)
}

pub fn cell_optimizer(config: &ExperimentConfig, cell: &Cell) -> Result<OptimizerConfig> {
    let mut opt = config.optimizer_config()?;
    opt.max_iterations = cell.gate.max_iterations;
    Ok(opt)
}

/// Runs every cell and restart on `workers` threads. Rows come back in
/// (cell, restart) order regardless of scheduling.
pub fn run_campaign(config: &ExperimentConfig, workers: usize) -> Result<Vec<RunRow>> {
    let system = config.system()?;
    let cells = cells(config)?;
    let restarts = config.optimizer.restarts;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..restarts).map(move |r| (c, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let rows = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(c, r)| run_restart(&system, config, &cells[c], r))
            .collect()
    });
    Ok(rows)
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn mean(values: &[f64]) -> f64 {
    let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn max(values: &[f64]) -> f64 {
    values.iter().copied().filter(|x| !x.is_nan()).fold(f64::NAN, f64::max)
}

/// Statistics across the restarts of one (gate, angle, τ) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRow {
    pub gate: String,
    pub angle_over_pi: f64,
    pub tau_ns: f64,
    pub restarts: usize,
    pub mean_fidelity: f64,
    pub best_fidelity: f64,
    pub p20_fidelity: f64,
    pub p80_fidelity: f64,
    pub max_guard_population: f64,
    pub converged: usize,
}

/// Per (gate, τ): means across angles of the per-angle statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub gate: String,
    pub tau_ns: f64,
    pub angles: usize,
    pub mean_fidelity: f64,
    pub mean_best_fidelity: f64,
    pub p20_fidelity: f64,
    pub p80_fidelity: f64,
    pub mean_max_guard_population: f64,
    pub max_guard_population: f64,
    pub mean_iterations: f64,
    pub mean_evals: f64,
    pub cpu_s_per_eval: f64,
}

fn key(x: f64) -> u64 {
    x.to_bits()
}

/// Groups rows by cell, keeping first-appearance order.
fn group<'a, K: Ord + Copy>(rows: &'a [RunRow], k: impl Fn(&RunRow) -> K) -> Vec<Vec<&'a RunRow>> {
    let mut order: Vec<K> = Vec::new();
    let mut map: BTreeMap<K, Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        let key = k(r);
        map.entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order.into_iter().map(|k| map.remove(&k).expect("present")).collect()
}

pub fn per_angle(rows: &[RunRow]) -> Vec<AngleRow> {
    let gate_ids = gate_ids(rows);
    group(rows, |r| (gate_ids[&r.gate], key(r.angle_over_pi), key(r.tau_ns)))
        .into_iter()
        .map(|g| {
            let fid: Vec<f64> = g.iter().map(|r| r.fidelity).collect();
            let guard: Vec<f64> = g.iter().map(|r| r.max_guard_population).collect();
            AngleRow {
                gate: g[0].gate.clone(),
                angle_over_pi: g[0].angle_over_pi,
                tau_ns: g[0].tau_ns,
                restarts: g.len(),
                mean_fidelity: mean(&fid),
                best_fidelity: max(&fid),
                p20_fidelity: percentile(&fid, 20.0),
                p80_fidelity: percentile(&fid, 80.0),
                max_guard_population: max(&guard),
                converged: g.iter().filter(|r| r.converged).count(),
            }
        })
        .collect()
}

fn gate_ids(rows: &[RunRow]) -> BTreeMap<String, usize> {
    let mut ids = BTreeMap::new();
    for r in rows {
        let n = ids.len();
        ids.entry(r.gate.clone()).or_insert(n);
    }
    ids
}

pub fn aggregate(rows: &[RunRow]) -> Vec<AggregateRow> {
    let angles = per_angle(rows);
    let gate_ids = gate_ids(rows);
    let by_cell = group(rows, |r| (gate_ids[&r.gate], key(r.tau_ns)));
    let mut out = Vec::new();
    for cell in by_cell {
        let (gate, tau) = (&cell[0].gate, cell[0].tau_ns);
        let a: Vec<&AngleRow> = angles.iter().filter(|a| &a.gate == gate && a.tau_ns == tau).collect();
        let pick = |f: fn(&AngleRow) -> f64| a.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let col = |f: fn(&RunRow) -> f64| cell.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let evals: f64 = cell.iter().map(|r| r.evals as f64).sum();
        let cpu: f64 = cell.iter().map(|r| r.cpu_s * r.evals as f64).sum();
        out.push(AggregateRow {
            gate: gate.clone(),
            tau_ns: tau,
            angles: a.len(),
            mean_fidelity: mean(&pick(|r| r.mean_fidelity)),
            mean_best_fidelity: mean(&pick(|r| r.best_fidelity)),
            p20_fidelity: mean(&pick(|r| r.p20_fidelity)),
            p80_fidelity: mean(&pick(|r| r.p80_fidelity)),
            mean_max_guard_population: mean(&col(|r| r.max_guard_population)),
            max_guard_population: max(&col(|r| r.max_guard_population)),
            mean_iterations: mean(&col(|r| r.iterations as f64)),
            mean_evals: mean(&col(|r| r.evals as f64)),
            cpu_s_per_eval: if evals > 0.0 { cpu / evals } else { 0.0 },
        });
    }
    out
}

/// True when the row's restart stopped on the fidelity target.
pub fn reached_target(row: &RunRow) -> bool {
    row.status == StopReason::TargetReached.as_str()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(gate: &str, angle: f64, tau: f64, seed: u64, fidelity: f64) -> RunRow {
        RunRow {
            gate: gate.into(),
            angle_over_pi: angle,
            tau_ns: tau,
            seed,
            fidelity,
            leakage: 0.0,
            max_guard_population: fidelity / 100.0,
            iterations: 10,
            evals: 11,
            cpu_s: 0.5,
            converged: fidelity > 0.9,
            status: "max_iterations".into(),
        }
    }

    #[test]
    fn percentiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 20.0), 1.8);
        assert_eq!(percentile(&v, 80.0), 4.2);
        assert_eq!(percentile(&[0.7], 20.0), 0.7);
        assert!(percentile(&[], 50.0).is_nan());
    }

    #[test]
    fn counting() {
        let rows = vec![
            row("mix", 0.2, 500.0, 0, 0.8),
            row("mix", 0.2, 500.0, 1, 0.9),
            row("mix", 0.2, 1000.0, 0, 0.95),
            row("mix", 0.2, 1000.0, 1, 0.97),
        ];
        assert_eq!(per_angle(&rows).len(), 2);
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        assert!((agg[0].mean_fidelity - 0.85).abs() < 1e-15);
        assert_eq!(agg[1].mean_best_fidelity, 0.97);
    }

    #[test]
    fn percentiles_across_restarts_mean_across_angles() {
        let mut rows = Vec::new();
        for (a, base) in [(0.2, 0.5), (0.4, 0.7)] {
            for s in 0..5 {
                rows.push(row("phase", a, 500.0, s, base + 0.01 * s as f64));
            }
        }
        let angles = per_angle(&rows);
        assert!((angles[0].p20_fidelity - 0.508).abs() < 1e-12);
        assert!((angles[1].p80_fidelity - 0.732).abs() < 1e-12);
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        assert!((agg[0].p20_fidelity - 0.608).abs() < 1e-12);
        assert!((agg[0].mean_fidelity - 0.62).abs() < 1e-12);
    }

    #[test]
    fn failed_rows_do_not_poison_statistics() {
        let mut rows = vec![row("mix", 0.2, 500.0, 0, 0.9)];
        let mut bad = row("mix", 0.2, 500.0, 1, f64::NAN);
        bad.status = "error".into();
        rows.push(bad);
        let a = per_angle(&rows);
        assert_eq!(a[0].mean_fidelity, 0.9);
        assert_eq!(a[0].restarts, 2);
    }
}

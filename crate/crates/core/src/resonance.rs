//! Carrier frequencies from single-boson transitions.
//!
//! A carrier for mode `j` is the energy difference between two essential
//! basis states that differ by one boson in mode `j` and agree everywhere
//! else. Transitions with the same frequency (within [`DEDUP_TOLERANCE`])
//! share a carrier.

use std::f64::consts::TAU;

use crate::model::SystemSpec;

/// Two transitions closer than this (rad/s) share one carrier: 1 kHz.
pub const DEDUP_TOLERANCE: f64 = TAU * 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub mode: usize,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    /// `E(to) − E(from)` in the system's frame (rad/s).
    pub frequency: f64,
    /// Index of the carrier this transition is assigned to within its mode.
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    pub entries: Vec<Transition>,
    /// Sorted distinct carrier frequencies per mode (basis order).
    pub distinct: Vec<Vec<f64>>,
}

impl TransitionTable {
    pub fn total_transitions(&self) -> usize {
        self.entries.len()
    }

    pub fn total_distinct(&self) -> usize {
        self.distinct.iter().map(Vec::len).sum()
    }

    pub fn transitions_of(&self, mode: usize) -> impl Iterator<Item = &Transition> {
        self.entries.iter().filter(move |t| t.mode == mode)
    }

    /// Carrier list per mode; the mode-`j` drive is modulated by every
    /// distinct mode-`j` transition frequency.
    pub fn carrier_sets(&self) -> Vec<Vec<f64>> {
        self.distinct.clone()
    }
}

/// Enumerates every upward single-boson transition inside the essential
/// subspace and groups degenerate ones.
pub fn enumerate_transitions(spec: &SystemSpec) -> TransitionTable {
    let basis = spec.basis();
    let modes = spec.modes();
    let mut raw = Vec::new();
    for &index in basis.essential_indices() {
        let from = basis.occupations_of(index);
        for (j, mode) in modes.iter().enumerate() {
            if from[j] + 1 < mode.essential_levels {
                let mut to = from.clone();
                to[j] += 1;
                let frequency = spec.energy(&to) - spec.energy(&from);
                raw.push((j, from.clone(), to, frequency));
            }
        }
    }

    let mut distinct = vec![Vec::new(); modes.len()];
    for (j, slot) in distinct.iter_mut().enumerate() {
        let mut freqs: Vec<f64> = raw.iter().filter(|t| t.0 == j).map(|t| t.3).collect();
        freqs.sort_by(f64::total_cmp);
        // Single-linkage clustering on the sorted list; each cluster is
        // represented by its mean.
        let mut clusters: Vec<Vec<f64>> = Vec::new();
        for f in freqs {
            match clusters.last_mut() {
                Some(c) if f - c[c.len() - 1] <= DEDUP_TOLERANCE => c.push(f),
                _ => clusters.push(vec![f]),
            }
        }
        *slot = clusters
            .iter()
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
    }

    let entries = raw
        .into_iter()
        .map(|(mode, from, to, frequency)| {
            let group = nearest(&distinct[mode], frequency);
            Transition {
                mode,
                from,
                to,
                frequency,
                group,
            }
        })
        .collect();
    TransitionTable { entries, distinct }
}

fn nearest(sorted: &[f64], f: f64) -> usize {
    sorted
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - f).abs().total_cmp(&(b.1 - f).abs()))
        .map(|(k, _)| k)
        .expect("mode has at least one carrier")
}

/// Per-mode carrier lists for a system (rotating-frame when the system is).
pub fn carrier_sets(table: &TransitionTable) -> Vec<Vec<f64>> {
    table.carrier_sets()
}

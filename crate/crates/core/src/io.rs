//! File formats: pulse JSON and the CSV tables written by the CLI.
//!
//! Frequencies and drive amplitudes are written as linear MHz (value / 2π),
//! times in ns.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::controls::{PulseParams, SpectrumLine};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::fockspace::CompositeBasis;
use crate::optimizer::RunRecord;
use crate::resonance::TransitionTable;
use crate::units::{mhz, ns, to_mhz, to_ns};

/// Serialized pulse. `alphas[mode][carrier][spline] = [re, im]` in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseDocument {
    pub duration_ns: f64,
    pub splines: usize,
    #[serde(rename = "carriers_MHz")]
    pub carriers_mhz: Vec<Vec<f64>>,
    pub alphas: Vec<Vec<Vec<[f64; 2]>>>,
    pub seed: Option<u64>,
}

impl PulseDocument {
    pub fn from_params(params: &PulseParams, seed: Option<u64>) -> Self {
        let carriers = params.carriers();
        let alphas = carriers
            .iter()
            .enumerate()
            .map(|(m, list)| {
                (0..list.len())
                    .map(|k| {
                        (0..params.splines())
                            .map(|b| {
                                let a = params.alpha(m, k, b);
                                [to_mhz(a.re), to_mhz(a.im)]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            duration_ns: to_ns(params.duration()),
            splines: params.splines(),
            carriers_mhz: carriers.iter().map(|c| c.iter().map(|&w| to_mhz(w)).collect()).collect(),
            alphas,
            seed,
        }
    }

    pub fn to_params(&self) -> Result<PulseParams> {
        let carriers: Vec<Vec<f64>> = self
            .carriers_mhz
            .iter()
            .map(|c| c.iter().map(|&f| mhz(f)).collect())
            .collect();
        let mut params = PulseParams::zeros(ns(self.duration_ns), self.splines, carriers)?;
        if self.alphas.len() != self.carriers_mhz.len() {
            return Err(Error::DimensionMismatch {
                expected: self.carriers_mhz.len(),
                actual: self.alphas.len(),
            });
        }
        for (m, per_mode) in self.alphas.iter().enumerate() {
            if per_mode.len() != self.carriers_mhz[m].len() {
                return Err(Error::DimensionMismatch {
                    expected: self.carriers_mhz[m].len(),
                    actual: per_mode.len(),
                });
            }
            for (k, per_carrier) in per_mode.iter().enumerate() {
                if per_carrier.len() != self.splines {
                    return Err(Error::DimensionMismatch {
                        expected: self.splines,
                        actual: per_carrier.len(),
                    });
                }
                for (b, &[re, im]) in per_carrier.iter().enumerate() {
                    params.set_alpha(m, k, b, Complex64::new(mhz(re), mhz(im)));
                }
            }
        }
        Ok(params)
    }
}

pub fn write_pulse_json(path: &Path, params: &PulseParams, seed: Option<u64>) -> Result<()> {
    let doc = PulseDocument::from_params(params, seed);
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, &doc)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_pulse_json(path: &Path) -> Result<(PulseParams, Option<u64>)> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    let doc: PulseDocument = serde_json::from_str(&text)?;
    Ok((doc.to_params()?, doc.seed))
}

/// Sampled drives: `t_ns, re_d_<label>, im_d_<label>, …` in MHz.
pub fn write_pulse_csv<W: Write>(out: W, params: &PulseParams, labels: &[String], samples: usize) -> Result<()> {
    let n_modes = params.carriers().len();
    if labels.len() != n_modes {
        return Err(Error::DimensionMismatch {
            expected: n_modes,
            actual: labels.len(),
        });
    }
    let columns = (0..n_modes)
        .map(|m| params.sample(m, samples))
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t_ns".to_string()];
    for l in labels {
        header.push(format!("re_d_{l}"));
        header.push(format!("im_d_{l}"));
    }
    w.write_record(&header)?;
    for j in 0..samples {
        let mut row = vec![to_ns(columns[0][j].0).to_string()];
        for col in &columns {
            row.push(to_mhz(col[j].1.re).to_string());
            row.push(to_mhz(col[j].1.im).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    #[serde(rename = "freq_MHz")]
    pub freq_mhz: f64,
    pub magnitude: f64,
}

/// Spectrum CSV: `freq_MHz, magnitude` (magnitude in MHz).
pub fn write_spectrum_csv<W: Write>(out: W, lines: &[SpectrumLine]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for l in lines {
        w.serialize(SpectrumRow {
            freq_mhz: l.frequency / 1e6,
            magnitude: to_mhz(l.magnitude),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Trajectory CSV: `t_ns` then one population column per basis state.
pub fn write_trajectory_csv<W: Write>(out: W, basis: &CompositeBasis, trajectory: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t_ns".to_string()];
    header.extend((0..basis.dim_full()).map(|i| basis.state_label(i)));
    w.write_record(&header)?;
    for (t, pops) in trajectory.times.iter().zip(&trajectory.populations) {
        let mut row = vec![to_ns(*t).to_string()];
        row.extend(pops.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceRow {
    pub mode: String,
    pub from: String,
    pub to: String,
    #[serde(rename = "freq_MHz")]
    pub freq_mhz: f64,
    pub degeneracy_group: usize,
}

pub fn resonance_rows(basis: &CompositeBasis, table: &TransitionTable) -> Vec<ResonanceRow> {
    let fmt = |occ: &[usize]| {
        let inner: Vec<String> = occ.iter().map(usize::to_string).collect();
        format!("|{}>", inner.join(","))
    };
    table
        .entries
        .iter()
        .map(|t| ResonanceRow {
            mode: basis.modes()[t.mode].label.clone(),
            from: fmt(&t.from),
            to: fmt(&t.to),
            freq_mhz: to_mhz(t.frequency),
            degeneracy_group: t.group,
        })
        .collect()
}

pub fn write_resonances_csv<W: Write>(out: W, rows: &[ResonanceRow]) -> Result<()> {
    write_rows(out, rows)
}

/// One restart of one campaign cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub gate: String,
    pub angle_over_pi: f64,
    pub tau_ns: f64,
    pub seed: u64,
    pub fidelity: f64,
    pub leakage: f64,
    pub max_guard_population: f64,
    pub iterations: usize,
    pub evals: usize,
    pub cpu_s: f64,
    pub converged: bool,
    pub status: String,
}

impl RunRow {
    pub fn new(gate: &str, angle_over_pi: f64, tau_ns: f64, record: &RunRecord) -> Self {
        Self {
            gate: gate.to_string(),
            angle_over_pi,
            tau_ns,
            seed: record.seed,
            fidelity: record.fidelity,
            leakage: record.leakage,
            max_guard_population: record.max_guard_population,
            iterations: record.iterations,
            evals: record.evaluations,
            cpu_s: record.cpu_per_evaluation(),
            converged: record.converged,
            status: record.status.as_str().to_string(),
        }
    }
}

pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_rows_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_rows(std::fs::File::create(path)?, rows)
}

pub fn read_rows_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    read_rows(std::fs::File::open(path)?)
}

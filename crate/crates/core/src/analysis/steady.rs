//! Frequency estimation and steady-state classification.

use std::fmt;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::gap::least_squares_slope;
use crate::dynamics::System;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::netmodel::{EdgeKind, PortRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Synchronized,
    LowFreqOscillation,
    Collapse,
    Aperiodic,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for Classification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Synchronized" => Ok(Self::Synchronized),
            "LowFreqOscillation" => Ok(Self::LowFreqOscillation),
            "Collapse" => Ok(Self::Collapse),
            "Aperiodic" => Ok(Self::Aperiodic),
            _ => Err(Error::Format(format!("unknown classification {s:?}"))),
        }
    }
}

/// Which state columns carry rotor angles and bus voltages.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignalLayout {
    /// `(label, θ slot)` per generator.
    pub generators: Vec<(String, usize)>,
    /// `(label, Vα slot)` per shunt capacitor.
    pub voltages: Vec<(String, usize)>,
    /// Preferred probe, index into `voltages`.
    pub probe: Option<usize>,
}

impl SignalLayout {
    /// The probe defaults to the first capacitor on a bus without a generator.
    pub fn from_system(sys: &System) -> Self {
        let net = sys.net();
        let mut out = SignalLayout::default();
        for p in sys.ports() {
            match p.role {
                PortRole::Generator => out.generators.push((p.label.clone(), p.offset + 3)),
                PortRole::Capacitor => {
                    let hosts_sg = net
                        .edges
                        .iter()
                        .any(|e| matches!(e.kind, EdgeKind::Sg(_)) && e.from == p.from);
                    if !hosts_sg && out.probe.is_none() {
                        out.probe = Some(out.voltages.len());
                    }
                    out.voltages.push((p.label.clone(), p.offset));
                }
                PortRole::Inductor => {}
            }
        }
        out
    }

    /// From state-column names (`sg<i>_theta`, `sh<i>_Va`, ...). Column `k`
    /// is state slot `k`.
    pub fn from_columns(columns: &[String]) -> Self {
        let mut out = SignalLayout::default();
        for (k, c) in columns.iter().enumerate() {
            if let Some(label) = c.strip_suffix("_theta") {
                out.generators.push((label.to_string(), k));
            } else if let Some(label) = c.strip_suffix("_Va") {
                if label.starts_with("sh") {
                    out.voltages.push((label.to_string(), k));
                }
            }
        }
        out
    }
}

/// Mean frequency per generator over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    /// rad/s, in generator order.
    pub per_sg: Vec<f64>,
    pub mean: f64,
    /// `max − min` (rad/s).
    pub spread: f64,
    /// `spread / |mean|`.
    pub relative_spread: f64,
}

fn frequencies_over(traj: &Trajectory, layout: &SignalLayout, range: std::ops::Range<usize>) -> FrequencyEstimate {
    let t = &traj.times[range.clone()];
    let per_sg: Vec<f64> = layout
        .generators
        .iter()
        .map(|&(_, slot)| {
            let theta: Vec<f64> = range.clone().map(|i| traj.state(i)[slot]).collect();
            least_squares_slope(t, &theta)
        })
        .collect();
    if per_sg.is_empty() {
        return FrequencyEstimate {
            per_sg,
            mean: 0.0,
            spread: 0.0,
            relative_spread: 0.0,
        };
    }
    let mean = per_sg.iter().sum::<f64>() / per_sg.len() as f64;
    let max = per_sg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = per_sg.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = max - min;
    FrequencyEstimate {
        relative_spread: if mean != 0.0 { spread / mean.abs() } else if spread == 0.0 { 0.0 } else { f64::INFINITY },
        per_sg,
        mean,
        spread,
    }
}

/// Least-squares slope of each unwrapped rotor angle over the final
/// `window` seconds.
pub fn estimate_frequencies(traj: &Trajectory, layout: &SignalLayout, window: f64) -> Result<FrequencyEstimate> {
    let n = traj.len();
    if n < 2 {
        return Err(Error::Grid("need at least 2 samples".into()));
    }
    let end = traj.times[n - 1];
    let span = end - traj.times[0];
    if !(window > 0.0) || window > span * (1.0 + 1e-12) {
        return Err(Error::Grid(format!("window {window} s outside trajectory span {span} s")));
    }
    let start = traj.times.partition_point(|&t| t < end - window);
    if n - start < 2 {
        return Err(Error::Grid("window holds fewer than 2 samples".into()));
    }
    Ok(frequencies_over(traj, layout, start..n))
}

/// Thresholds and windows of the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Maximum relative frequency spread for synchronization.
    pub spread_tol: f64,
    /// Maximum `(max − min)/mean` of windowed RMS values.
    pub flatness_tol: f64,
    /// Minimum share of spectral energy in the dominant peak.
    pub peak_fraction: f64,
    /// Collapse if terminal H is below this fraction of the median transient H.
    pub collapse_frac: f64,
    /// Analysis window as a fraction of the samples, taken from the end.
    pub window_fraction: f64,
    /// RMS window length in cycles of the mean frequency.
    pub envelope_cycles: f64,
    /// Peaks reported and used to tell discrete from broadband spectra.
    pub max_peaks: usize,
    /// Probe label override, e.g. `"sh5"`.
    pub probe: Option<String>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            spread_tol: 1e-3,
            flatness_tol: 0.02,
            peak_fraction: 0.95,
            collapse_frac: 1e-3,
            window_fraction: 0.25,
            envelope_cycles: 20.0,
            max_peaks: 4,
            probe: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak {
    /// rad/s
    pub omega: f64,
    /// Share of the window's spectral energy in this peak's main lobe.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateReport {
    pub classification: Classification,
    /// Largest envelope flatness ratio over the bus voltages.
    pub envelope_flatness: f64,
    pub probe: String,
    pub terminal_h: f64,
    pub median_transient_h: f64,
    pub frequencies: FrequencyEstimate,
    pub peaks: Vec<SpectralPeak>,
}

/// Hann-windowed one-sided power spectrum of a zero-mean copy of `x`.
fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2 + 1].iter().map(|z| z.norm_sqr()).collect()
}

/// Repeatedly takes the strongest bin and its ±2-bin Hann main lobe.
fn spectral_peaks(power: &[f64], dt: f64, count: usize) -> Vec<SpectralPeak> {
    let total: f64 = power.iter().sum();
    if !(total > 0.0) {
        return Vec::new();
    }
    let n_fft = 2 * (power.len() - 1);
    let bin = 2.0 * std::f64::consts::PI / (n_fft.max(1) as f64 * dt);
    let mut left = power.to_vec();
    let mut out = Vec::new();
    for _ in 0..count {
        let (k, &pk) = left
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty spectrum");
        if pk <= 0.0 {
            break;
        }
        let lo = k.saturating_sub(2);
        let hi = (k + 2).min(left.len() - 1);
        let lobe: f64 = left[lo..=hi].iter().sum();
        // Parabolic interpolation on the log power for the peak position.
        let offset = if k > 0 && k + 1 < power.len() && power[k - 1] > 0.0 && power[k + 1] > 0.0 {
            let (a, b, c) = (power[k - 1].ln(), power[k].ln(), power[k + 1].ln());
            let d = a - 2.0 * b + c;
            if d != 0.0 { 0.5 * (a - c) / d } else { 0.0 }
        } else {
            0.0
        };
        out.push(SpectralPeak {
            omega: (k as f64 + offset) * bin,
            fraction: lobe / total,
        });
        left[lo..=hi].iter_mut().for_each(|v| *v = 0.0);
    }
    out
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// `(max − min)/mean` of RMS values over sliding windows of `len` samples
/// advanced by `step`.
fn flatness(x: &[f64], len: usize, step: usize) -> f64 {
    let len = len.clamp(1, x.len());
    let step = step.max(1);
    let vals: Vec<f64> = (0..=x.len() - len).step_by(step).map(|s| rms(&x[s..s + len])).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if mean > 0.0 {
        (max - min) / mean
    } else {
        0.0
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Classifies the terminal behavior of a trajectory with energy channels.
///
/// Collapse is tested first. Otherwise the run is Synchronized when the
/// frequency spread, envelope flatness and dominant-peak tests all pass;
/// LowFreqOscillation when it fails one of them but the probe spectrum is
/// still carried by a few discrete peaks; Aperiodic when it is broadband.
pub fn classify_steady_state(
    traj: &Trajectory,
    layout: &SignalLayout,
    cfg: &ClassifierConfig,
) -> Result<SteadyStateReport> {
    let n = traj.len();
    if n < 16 {
        return Err(Error::Grid(format!("need at least 16 samples, got {n}")));
    }
    let h = match &traj.energy {
        Some(e) if e.total.len() == n => &e.total,
        _ => return Err(Error::Grid("trajectory has no energy channel".into())),
    };
    if !(cfg.window_fraction > 0.0 && cfg.window_fraction <= 0.5) {
        return Err(Error::Config("window_fraction must be in (0, 0.5]".into()));
    }
    let dt = (traj.times[n - 1] - traj.times[0]) / (n - 1) as f64;
    let win = ((n as f64 * cfg.window_fraction).ceil() as usize).max(8);
    let start = n - win;

    let terminal_h = h[n - 1];
    let median_transient_h = median(&h[..n / 2]);
    let freqs = frequencies_over(traj, layout, start..n);

    let channel = |slot: usize| -> Vec<f64> { (start..n).map(|i| traj.state(i)[slot]).collect() };
    let voltages: Vec<(String, Vec<f64>)> =
        layout.voltages.iter().map(|(l, s)| (l.clone(), channel(*s))).collect();
    let levels: Vec<f64> = voltages.iter().map(|(_, v)| rms(v)).collect();
    let top = levels.iter().copied().fold(0.0, f64::max);

    // Probe: override, layout default, else the strongest bus; a probe that
    // carries essentially nothing (e.g. a node of an anti-phase mode) falls
    // back to the strongest bus.
    let strongest = levels.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i);
    let mut probe = match &cfg.probe {
        Some(name) => Some(
            voltages
                .iter()
                .position(|(l, _)| l == name)
                .ok_or_else(|| Error::Config(format!("unknown probe {name:?}")))?,
        ),
        None => layout.probe.or(strongest),
    };
    if let Some(p) = probe {
        if levels[p] < 1e-6 * top {
            probe = strongest;
        }
    }
    let (probe_label, peaks) = match probe {
        Some(p) => (voltages[p].0.clone(), spectral_peaks(&power_spectrum(&voltages[p].1), dt, cfg.max_peaks)),
        None => (String::new(), Vec::new()),
    };

    let omega_ref = if freqs.per_sg.is_empty() {
        peaks.first().map_or(0.0, |p| p.omega)
    } else {
        freqs.mean.abs()
    };
    let env_len = if omega_ref > 0.0 {
        ((cfg.envelope_cycles * 2.0 * std::f64::consts::PI / omega_ref / dt).round() as usize).min(win / 2)
    } else {
        win / 2
    };
    let env_step = if omega_ref > 0.0 {
        ((2.0 * std::f64::consts::PI / omega_ref / dt).round() as usize).max(1)
    } else {
        1
    };
    let envelope_flatness = voltages
        .iter()
        .zip(&levels)
        .filter(|(_, &l)| l > 1e-3 * top && l > 0.0)
        .map(|((_, v), _)| flatness(v, env_len, env_step))
        .fold(0.0, f64::max);

    let dominant = peaks.first().map_or(0.0, |p| p.fraction);
    let discrete: f64 = peaks.iter().map(|p| p.fraction).sum();
    let classification = if terminal_h < cfg.collapse_frac * median_transient_h {
        Classification::Collapse
    } else if freqs.relative_spread < cfg.spread_tol
        && envelope_flatness < cfg.flatness_tol
        && dominant > cfg.peak_fraction
    {
        Classification::Synchronized
    } else if discrete > cfg.peak_fraction {
        Classification::LowFreqOscillation
    } else {
        Classification::Aperiodic
    };

    Ok(SteadyStateReport {
        classification,
        frequencies: freqs,
        envelope_flatness,
        probe: probe_label,
        peaks,
        terminal_h,
        median_transient_h,
    })
}

/// [`classify_steady_state`] with the layout of a compiled system.
pub fn classify_system(sys: &System, traj: &Trajectory, cfg: &ClassifierConfig) -> Result<SteadyStateReport> {
    classify_steady_state(traj, &SignalLayout::from_system(sys), cfg)
}

//! Fixed-step RK4 and embedded Dormand–Prince 5(4) integration.
//!
//! Samples are recorded on a grid given by `sample_every`; the stepper never
//! keeps more than the current stage buffers, so memory grows with the number
//! of samples only.

use crate::dynamics::System;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk4 {
        dt: f64,
    },
    Rk45 {
        abs_tol: f64,
        rel_tol: f64,
        dt_min: f64,
        dt_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Sampling interval of the stored trajectory (s).
    pub sample_every: f64,
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, sample_every: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4 { dt },
            sample_every,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.sample_every > 0.0) {
            return bad("sample_every must be > 0");
        }
        match self.method {
            Method::Rk4 { dt } if !(dt > 0.0) => bad("dt must be > 0"),
            Method::Rk45 {
                abs_tol,
                rel_tol,
                dt_min,
                dt_max,
            } => {
                if !(abs_tol > 0.0 && rel_tol > 0.0) {
                    bad("tolerances must be > 0")
                } else if !(dt_min > 0.0 && dt_min <= dt_max) {
                    bad("need 0 < dt_min <= dt_max")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Stored energy, source power and dissipation sampled along a trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyChannels {
    pub total: Vec<f64>,
    pub source: Vec<f64>,
    pub dissipation: Vec<f64>,
    /// Stored energy per port, `parts[port][sample]`.
    pub parts: Vec<Vec<f64>>,
}

impl EnergyChannels {
    pub fn push(&mut self, e: &crate::dynamics::EnergyBreakdown) {
        if self.parts.is_empty() {
            self.parts = vec![Vec::new(); e.parts.len()];
        }
        self.total.push(e.total);
        self.source.push(e.source);
        self.dissipation.push(e.dissipation);
        for (series, &p) in self.parts.iter_mut().zip(&e.parts) {
            series.push(p);
        }
    }

    fn select(&self, idx: &[usize]) -> Self {
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        EnergyChannels {
            total: pick(&self.total),
            source: pick(&self.source),
            dissipation: pick(&self.dissipation),
            parts: self.parts.iter().map(pick).collect(),
        }
    }
}

/// Time-stamped states, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub dim: usize,
    pub states: Vec<f64>,
    pub energy: Option<EnergyChannels>,
}

impl Trajectory {
    pub fn new(dim: usize) -> Self {
        Trajectory {
            times: Vec::new(),
            dim,
            states: Vec::new(),
            energy: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn push(&mut self, t: f64, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.times.push(t);
        self.states.extend_from_slice(x);
    }

    /// Series of one state slot.
    pub fn channel(&self, slot: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.states[i * self.dim + slot]).collect()
    }

    /// Sub-trajectory of samples `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Trajectory {
        let idx: Vec<usize> = range.collect();
        self.select(&idx)
    }

    fn select(&self, idx: &[usize]) -> Trajectory {
        let mut out = Trajectory::new(self.dim);
        for &i in idx {
            out.push(self.times[i], self.state(i));
        }
        out.energy = self.energy.as_ref().map(|e| e.select(idx));
        out
    }
}

/// Keeps every `stride`-th sample plus the final one.
pub fn decimate(traj: &Trajectory, stride: usize) -> Trajectory {
    let stride = stride.max(1);
    let n = traj.len();
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if n > 0 && idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    traj.select(&idx)
}

/// Integrates `dx/dt = f(t, x)` and calls `observe(t, x)` on every sample,
/// including both endpoints.
pub fn solve<F, O>(
    mut f: F,
    x0: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    mut observe: O,
) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(f64, &[f64]) -> Result<()>,
{
    cfg.validate()?;
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(Error::Config(format!("empty time span ({t0}, {t1})")));
    }
    match cfg.method {
        Method::Rk4 { dt } => rk4(&mut f, x0, t0, t1, dt, cfg.sample_every, &mut observe),
        Method::Rk45 {
            abs_tol,
            rel_tol,
            dt_min,
            dt_max,
        } => dopri(
            &mut f,
            x0,
            (t0, t1),
            (abs_tol, rel_tol),
            (dt_min, dt_max),
            cfg.sample_every,
            &mut observe,
        ),
    }
}

fn check_finite(t: f64, x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(slot) => Err(Error::NonFinite { t, slot }),
        None => Ok(()),
    }
}

fn rk4<F, O>(f: &mut F, x0: &[f64], t0: f64, t1: f64, dt: f64, every: f64, observe: &mut O) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(f64, &[f64]) -> Result<()>,
{
    let n = x0.len();
    let steps = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as u64;
    let h = (t1 - t0) / steps as f64;
    let stride = ((every / h).round() as u64).max(1);

    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    observe(t0, &x)?;
    for step in 0..steps {
        let t = t0 + step as f64 * h;
        f(t, &x, &mut k1)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        f(t + h, &tmp, &mut k4)?;
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let done = step + 1;
        let t_new = if done == steps { t1 } else { t0 + done as f64 * h };
        check_finite(t_new, &x)?;
        if done % stride == 0 || done == steps {
            observe(t_new, &x)?;
        }
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dopri<F, O>(
    f: &mut F,
    x0: &[f64],
    (t0, t1): (f64, f64),
    (abs_tol, rel_tol): (f64, f64),
    (dt_min, dt_max): (f64, f64),
    every: f64,
    observe: &mut O,
) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(f64, &[f64]) -> Result<()>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut x5 = vec![0.0; n];
    let mut t = t0;
    let mut h = dt_max.min(every).max(dt_min);
    let mut sample_idx: u64 = 1;
    let sample_time = |i: u64| (t0 + i as f64 * every).min(t1);
    observe(t0, &x)?;

    while t < t1 {
        let target = sample_time(sample_idx);
        let clamped = t + h >= target;
        let step = if clamped { target - t } else { h };

        f(t, &x, &mut k[0])?;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = x[i];
                for (j, a) in A[s].iter().take(s).enumerate() {
                    acc += step * a * k[j][i];
                }
                tmp[i] = acc;
            }
            f(t + C[s] * step, &tmp, &mut k[s])?;
        }
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for s in 0..7 {
                hi += B5[s] * k[s][i];
                lo += B4[s] * k[s][i];
            }
            x5[i] = x[i] + step * hi;
            err = err.max((step * (hi - lo)).abs());
            scale = scale.max(x[i].abs()).max(x5[i].abs());
        }
        if !err.is_finite() {
            return Err(Error::NonFinite { t, slot: 0 });
        }
        let tol = abs_tol + rel_tol * scale;
        let ratio = err / tol;
        if ratio <= 1.0 {
            t = if clamped { target } else { t + step };
            std::mem::swap(&mut x, &mut x5);
            check_finite(t, &x)?;
            if clamped {
                observe(t, &x)?;
                sample_idx += 1;
            }
            let grow = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
            if !clamped || step >= h {
                h = (h * grow).clamp(dt_min, dt_max);
            }
        } else {
            if step <= dt_min {
                return Err(Error::StepFailure { t, dt: step });
            }
            let shrink = (0.9 * ratio.powf(-0.25)).clamp(0.1, 0.9);
            h = (step * shrink).max(dt_min);
        }
    }
    Ok(())
}

/// Integrates the network and records states plus energy channels.
pub fn integrate(
    sys: &System,
    x0: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if x0.len() != sys.dim() {
        return Err(Error::Dimension {
            expected: sys.dim(),
            got: x0.len(),
        });
    }
    let mut traj = Trajectory::new(sys.dim());
    let mut energy = EnergyChannels::default();
    solve(
        |t, x, dx| sys.rhs(t, x, dx),
        x0,
        t_span,
        cfg,
        |t, x| {
            traj.push(t, x);
            energy.push(&sys.hamiltonian(x)?);
            Ok(())
        },
    )?;
    traj.energy = Some(energy);
    Ok(traj)
}

/// Energy channels only, without storing states.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub channels: EnergyChannels,
}

/// Like [`integrate`], but keeps only the energy channels. Used for
/// step-resolution energy-balance checks over long horizons.
pub fn integrate_energy(
    sys: &System,
    x0: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<EnergyTrace> {
    let mut out = EnergyTrace::default();
    solve(
        |t, x, dx| sys.rhs(t, x, dx),
        x0,
        t_span,
        cfg,
        |t, x| {
            out.times.push(t);
            out.channels.push(&sys.hamiltonian(x)?);
            Ok(())
        },
    )?;
    Ok(out)
}

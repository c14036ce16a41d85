//! Hamiltonian-gap convergence and the rotating frame.

use crate::dynamics::System;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::netmodel::PortRole;

/// Pointwise `|H₁ − H₂|` on a shared grid with its fitted decay rate.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSeries {
    pub times: Vec<f64>,
    pub gap: Vec<f64>,
    /// Exponential decay rate (1/s) over the final half; positive = decaying.
    pub rate: f64,
}

impl GapSeries {
    /// Gap at the sample nearest to `t`.
    pub fn at(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&s| s < t).min(self.times.len() - 1);
        self.gap[i]
    }
}

/// Least-squares slope of `ln(max(y, 1e-300))` against `t`, negated.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> f64 {
    let n = times.len().min(values.len());
    if n < 2 {
        return 0.0;
    }
    let logs: Vec<f64> = values[..n].iter().map(|&v| v.max(1e-300).ln()).collect();
    -least_squares_slope(&times[..n], &logs)
}

/// Slope of the least-squares line through `(t, y)`.
pub(crate) fn least_squares_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in t.iter().zip(y) {
        num += (a - tm) * (b - ym);
        den += (a - tm) * (a - tm);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn energy_of(sys: &System, traj: &Trajectory) -> Result<Vec<f64>> {
    match &traj.energy {
        Some(e) if e.total.len() == traj.len() => Ok(e.total.clone()),
        _ => (0..traj.len())
            .map(|i| Ok(sys.hamiltonian(traj.state(i))?.total))
            .collect(),
    }
}

pub fn hamiltonian_gap(sys: &System, traj1: &Trajectory, traj2: &Trajectory) -> Result<GapSeries> {
    if traj1.len() != traj2.len() || traj1.times != traj2.times {
        return Err(Error::Grid("trajectories do not share a time grid".into()));
    }
    if traj1.is_empty() {
        return Err(Error::Grid("empty trajectory".into()));
    }
    let h1 = energy_of(sys, traj1)?;
    let h2 = energy_of(sys, traj2)?;
    let gap: Vec<f64> = h1.iter().zip(&h2).map(|(a, b)| (a - b).abs()).collect();
    let half = traj1.len() / 2;
    let rate = fit_decay_rate(&traj1.times[half..], &gap[half..]);
    Ok(GapSeries {
        times: traj1.times.clone(),
        gap,
        rate,
    })
}

/// Multiplies every αβ pair by `e^{−jω₀t}` and shifts rotor angles by
/// `−ω₀t`. Speeds and energy channels are unchanged.
pub fn rotating_frame(sys: &System, traj: &Trajectory, omega0: f64) -> Trajectory {
    let mut out = traj.clone();
    let dim = traj.dim;
    for (i, &t) in traj.times.iter().enumerate() {
        let (s, c) = (-omega0 * t).sin_cos();
        let x = &mut out.states[i * dim..(i + 1) * dim];
        for p in sys.ports() {
            let o = p.pair_offset();
            let (a, b) = (x[o], x[o + 1]);
            x[o] = c * a - s * b;
            x[o + 1] = s * a + c * b;
            if p.role == PortRole::Generator {
                x[p.offset + 3] -= omega0 * t;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{random_initial, two_machine_default};

    fn sample_traj(sys: &System) -> Trajectory {
        let mut tr = Trajectory::new(sys.dim());
        for k in 0..5 {
            tr.push(0.1 * k as f64, &random_initial(sys.dim(), k, 10.0));
        }
        tr
    }

    #[test]
    fn identical_trajectories_have_zero_gap() {
        let sys = System::new(two_machine_default()).unwrap();
        let tr = sample_traj(&sys);
        let g = hamiltonian_gap(&sys, &tr, &tr).unwrap();
        assert!(g.gap.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_mismatch() {
        let sys = System::new(two_machine_default()).unwrap();
        let tr = sample_traj(&sys);
        let short = tr.slice(0..3);
        assert!(matches!(hamiltonian_gap(&sys, &tr, &short), Err(Error::Grid(_))));
    }

    #[test]
    fn rate_of_exponential() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        assert!((fit_decay_rate(&t, &y) - 0.7).abs() < 1e-12);
        // Zeros are floored rather than producing NaN.
        assert!(fit_decay_rate(&t, &vec![0.0; 50]).is_finite());
    }

    #[test]
    fn rotation_round_trip_and_identity() {
        let sys = System::new(two_machine_default()).unwrap();
        let tr = sample_traj(&sys);
        assert_eq!(rotating_frame(&sys, &tr, 0.0).states, tr.states);
        let back = rotating_frame(&sys, &rotating_frame(&sys, &tr, 7.5), -7.5);
        for (a, b) in back.states.iter().zip(&tr.states) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn pure_tone_becomes_constant() {
        let sys = System::new(two_machine_default()).unwrap();
        let w0 = 2.0;
        let x0 = random_initial(sys.dim(), 5, 1.0);
        let mut tr = Trajectory::new(sys.dim());
        for k in 0..20 {
            let t = 0.05 * k as f64;
            let mut x = x0.clone();
            let (s, c) = (w0 * t).sin_cos();
            for p in sys.ports() {
                let o = p.pair_offset();
                x[o] = c * x0[o] - s * x0[o + 1];
                x[o + 1] = s * x0[o] + c * x0[o + 1];
                if p.role == PortRole::Generator {
                    x[p.offset + 3] += w0 * t;
                }
            }
            tr.push(t, &x);
        }
        let rot = rotating_frame(&sys, &tr, w0);
        for i in 0..rot.len() {
            for (a, b) in rot.state(i).iter().zip(&x0) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }
}

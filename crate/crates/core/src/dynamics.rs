//! Closed-system vector field, Hamiltonian and energy diagnostics.
//!
//! States are kept in physical co-energy variables. Per port:
//!
//! * generator: `ω` (rad/s), `Iα`, `Iβ` (A), `θ` (rad, unwrapped)
//! * capacitor: `Vα`, `Vβ` (V)
//! * line or RL load branch: `Iα`, `Iβ` (A)
//!
//! The energy variables are `Jω`, `L·I` and `C·V`, so the gradient of the
//! Hamiltonian with respect to them is the co-energy state itself. The
//! mechanical source enters as the explicit power `T0·ω` rather than through
//! a time-shifted momentum coordinate.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::integrator::EnergyChannels;
use crate::netmodel::{
    assemble_network_matrix, ports, EdgeKind, NetworkMatrix, Port, PortRole, PowerNetwork,
};

/// Generator constants gathered once per system.
#[derive(Debug, Clone, Copy)]
struct Machine {
    inertia: f64,
    damping: f64,
    torque: f64,
    stator_resistance: f64,
    stator_inductance: f64,
    flux: f64,
    poles: f64,
}

/// Compiled, validated network ready for evaluation. Immutable and `Sync`.
#[derive(Debug, Clone)]
pub struct System {
    net: PowerNetwork,
    ports: Vec<Port>,
    w: NetworkMatrix,
    // Nonzero entries of W per row.
    coupling: Vec<Vec<(usize, f64)>>,
    machines: Vec<Option<Machine>>,
    dim: usize,
}

/// Stored energy per port and the power terms of the energy balance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    /// Stored energy per port (J), in port order.
    pub parts: Vec<f64>,
    /// Total Hamiltonian (J).
    pub total: f64,
    /// Mechanical source power `Σ T0ᵢ ωᵢ` (W).
    pub source: f64,
    /// Dissipated power `∇Hᵀ R ∇H` (W).
    pub dissipation: f64,
}

/// `T_e = Re{jψ e^{-jθ} I} = ψ (sin θ · Iα − cos θ · Iβ)`.
pub fn electrical_torque(flux: f64, theta: f64, i_alpha: f64, i_beta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    flux * (s * i_alpha - c * i_beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Full,
    /// No damping, no torque.
    Lossless,
    /// Lossless with rotor angles frozen: the field `J(x)∇H`.
    Frozen,
}

impl System {
    pub fn new(net: PowerNetwork) -> Result<Self> {
        let w = assemble_network_matrix(&net)?;
        let ports = ports(&net);
        let coupling = (0..w.dim())
            .map(|r| {
                (0..w.dim())
                    .filter(|&c| w.w[(r, c)] != 0)
                    .map(|c| (c, w.w[(r, c)] as f64))
                    .collect()
            })
            .collect();
        let machines = ports
            .iter()
            .map(|p| match (p.role, net.edges[p.edge].kind) {
                (PortRole::Generator, EdgeKind::Sg(sg)) => Some(Machine {
                    inertia: sg.inertia,
                    damping: sg.damping,
                    torque: sg.torque,
                    stator_resistance: sg.stator_resistance,
                    stator_inductance: sg.stator_inductance,
                    flux: sg.flux,
                    poles: if net.pole_pair_scaling {
                        sg.pole_pairs as f64
                    } else {
                        1.0
                    },
                }),
                _ => None,
            })
            .collect();
        let dim = ports.iter().map(Port::width).sum();
        Ok(System {
            net,
            ports,
            w,
            coupling,
            machines,
            dim,
        })
    }

    pub fn net(&self) -> &PowerNetwork {
        &self.net
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    pub fn network_matrix(&self) -> &NetworkMatrix {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Offsets of the rotor-angle slots.
    pub fn angle_slots(&self) -> Vec<usize> {
        self.ports
            .iter()
            .filter(|p| p.role == PortRole::Generator)
            .map(|p| p.offset + 3)
            .collect()
    }

    /// Offsets of the rotor-speed slots.
    pub fn speed_slots(&self) -> Vec<usize> {
        self.ports
            .iter()
            .filter(|p| p.role == PortRole::Generator)
            .map(|p| p.offset)
            .collect()
    }

    /// Storage coefficient of each slot (`J`, `Ls`, `C`, `L`); zero for
    /// rotor angles. Energy variable of slot `i` is `storage[i] * x[i]`.
    pub fn storage(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (p, m) in self.ports.iter().zip(&self.machines) {
            match m {
                Some(m) => {
                    out[p.offset] = m.inertia;
                    out[p.offset + 1] = m.stator_inductance;
                    out[p.offset + 2] = m.stator_inductance;
                }
                None => {
                    out[p.offset] = p.storage;
                    out[p.offset + 1] = p.storage;
                }
            }
        }
        out
    }

    /// Diagonal of the damping matrix per slot (`F`, `Rs`, `Re Y`, `R`);
    /// zero for rotor angles and for capacitors whose load is an RL branch.
    pub fn damping(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (p, m) in self.ports.iter().zip(&self.machines) {
            match m {
                Some(m) => {
                    out[p.offset] = m.damping;
                    out[p.offset + 1] = m.stator_resistance;
                    out[p.offset + 2] = m.stator_resistance;
                }
                None => {
                    out[p.offset] = p.damping;
                    out[p.offset + 1] = p.damping;
                }
            }
        }
        out
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Port output `y`: current for inductive ports, voltage for capacitors.
    #[inline]
    fn output(&self, x: &[f64], k: usize) -> (f64, f64) {
        let o = self.ports[k].pair_offset();
        (x[o], x[o + 1])
    }

    /// Port input `u = W y`.
    #[inline]
    fn input(&self, x: &[f64], k: usize) -> (f64, f64) {
        let mut u = (0.0, 0.0);
        for &(c, s) in &self.coupling[k] {
            let y = self.output(x, c);
            u.0 += s * y.0;
            u.1 += s * y.1;
        }
        u
    }

    /// Evaluates `dx/dt` into `dx`.
    ///
    /// Generator: `J dω/dt = −Fω − T_e + T0`, `Ls dI/dt = −jψω e^{jθ} − Rs I + V`,
    /// `dθ/dt = ω`. Capacitor: `C dV/dt = −Y V + I_in`. Line or load branch:
    /// `L dI/dt = −R I + V_in`. Signs between ports come only from W.
    pub fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        self.field(x, dx, Mode::Full);
        if let Some(slot) = dx.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t, slot });
        }
        Ok(())
    }

    /// Like [`System::rhs`] with every damping entry and every mechanical
    /// torque set to zero: the closed lossless network, which conserves H.
    pub fn rhs_lossless(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        self.field(x, dx, Mode::Lossless);
        if let Some(slot) = dx.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t, slot });
        }
        Ok(())
    }

    fn field(&self, x: &[f64], dx: &mut [f64], mode: Mode) {
        let on = if mode == Mode::Full { 1.0 } else { 0.0 };
        for (k, p) in self.ports.iter().enumerate() {
            let o = p.offset;
            let u = self.input(x, k);
            match (&self.machines[k], p.role) {
                (Some(m), _) => {
                    let omega = x[o];
                    let (ia, ib) = (x[o + 1], x[o + 2]);
                    let (s, c) = (m.poles * x[o + 3]).sin_cos();
                    let k_e = m.poles * m.flux;
                    let te = k_e * (s * ia - c * ib);
                    dx[o] = (on * (m.torque - m.damping * omega) - te) / m.inertia;
                    let emf = (k_e * omega * s, -k_e * omega * c);
                    let r = on * m.stator_resistance;
                    dx[o + 1] = (emf.0 - r * ia + u.0) / m.stator_inductance;
                    dx[o + 2] = (emf.1 - r * ib + u.1) / m.stator_inductance;
                    dx[o + 3] = if mode == Mode::Frozen { 0.0 } else { omega };
                }
                (None, PortRole::Capacitor) => {
                    let (va, vb) = (x[o], x[o + 1]);
                    let g = on * p.damping;
                    let b = p.susceptance;
                    dx[o] = (-(g * va - b * vb) + u.0) / p.storage;
                    dx[o + 1] = (-(g * vb + b * va) + u.1) / p.storage;
                }
                (None, _) => {
                    let r = on * p.damping;
                    dx[o] = (-r * x[o] + u.0) / p.storage;
                    dx[o + 1] = (-r * x[o + 1] + u.1) / p.storage;
                }
            }
        }
    }

    /// Conservative part `J(x)∇H` in energy coordinates, full state layout
    /// with zero in the angle slots.
    pub fn conservative_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut v = vec![0.0; self.dim];
        self.field(x, &mut v, Mode::Frozen);
        for (vi, s) in v.iter_mut().zip(self.storage()) {
            *vi *= s;
        }
        Ok(v)
    }

    pub fn hamiltonian(&self, x: &[f64]) -> Result<EnergyBreakdown> {
        self.check_dim(x)?;
        let mut parts = Vec::with_capacity(self.ports.len());
        let mut source = 0.0;
        let mut dissipation = 0.0;
        for (p, m) in self.ports.iter().zip(&self.machines) {
            let o = p.offset;
            match m {
                Some(m) => {
                    let omega = x[o];
                    let i2 = x[o + 1] * x[o + 1] + x[o + 2] * x[o + 2];
                    parts.push(0.5 * m.inertia * omega * omega + 0.5 * m.stator_inductance * i2);
                    source += m.torque * omega;
                    dissipation += m.damping * omega * omega + m.stator_resistance * i2;
                }
                None => {
                    let a2 = x[o] * x[o] + x[o + 1] * x[o + 1];
                    parts.push(0.5 * p.storage * a2);
                    dissipation += p.damping * a2;
                }
            }
        }
        let total = parts.iter().sum();
        Ok(EnergyBreakdown {
            parts,
            total,
            source,
            dissipation,
        })
    }

    /// Gradient of H with respect to the energy variables. Same layout as the
    /// state; the co-energy slots equal the state and angle slots are zero.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut g = x.to_vec();
        for s in self.angle_slots() {
            g[s] = 0.0;
        }
        Ok(g)
    }

    /// Uniform lower bound of the real Hessian `D²H` in energy variables:
    /// the smallest of `1/J`, `1/Ls`, `1/C`, `1/L`.
    pub fn hessian_floor(&self) -> f64 {
        self.storage()
            .into_iter()
            .filter(|&s| s > 0.0)
            .map(|s| 1.0 / s)
            .fold(f64::INFINITY, f64::min)
    }

    /// Dense real interconnection matrix `J(x)` over the non-angle slots, in
    /// energy-variable ordering. Includes the generator EMF blocks, the
    /// admittance susceptances and the network coupling `G W Gᵀ`.
    pub fn interconnection(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let n = self.dim;
        let mut j = DMatrix::zeros(n, n);
        for (k, p) in self.ports.iter().enumerate() {
            let o = p.offset;
            if let Some(m) = &self.machines[k] {
                let (s, c) = (m.poles * x[o + 3]).sin_cos();
                let k_e = m.poles * m.flux;
                j[(o, o + 1)] = -k_e * s;
                j[(o, o + 2)] = k_e * c;
                j[(o + 1, o)] = k_e * s;
                j[(o + 2, o)] = -k_e * c;
            }
            if p.role == PortRole::Capacitor {
                j[(o, o + 1)] = p.susceptance;
                j[(o + 1, o)] = -p.susceptance;
            }
            let ro = p.pair_offset();
            for &(cp, sign) in &self.coupling[k] {
                let co = self.ports[cp].pair_offset();
                j[(ro, co)] += sign;
                j[(ro + 1, co + 1)] += sign;
            }
        }
        Ok(j)
    }
}

/// Energy-balance defect `dH/dt − (source − dissipation)` at the interior
/// samples of a uniform grid, with `dH/dt` from 6th-order central
/// differences (a lower-order stencil would dominate the RK4 defect during
/// fast transients). Returns `(times, residual)`.
pub fn energy_balance_residual(
    times: &[f64],
    channels: &EnergyChannels,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = times.len();
    if n < STENCIL || channels.total.len() != n {
        return Err(Error::Grid(format!(
            "need at least {STENCIL} samples with energy channels (got {n})"
        )));
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-6 * h {
            return Err(Error::Grid("samples are not uniformly spaced".into()));
        }
    }
    let e = &channels.total;
    let mut ts = Vec::with_capacity(n - STENCIL + 1);
    let mut r = Vec::with_capacity(n - STENCIL + 1);
    for i in 3..n - 3 {
        let d = |k: usize| e[i + k] - e[i - k];
        ts.push(times[i]);
        r.push(central_derivative(d(1), d(2), d(3), h) - (channels.source[i] - channels.dissipation[i]));
    }
    Ok((ts, r))
}

const STENCIL: usize = 7;

/// 6th-order central derivative from the symmetric differences
/// `d_k = f(t + kh) − f(t − kh)`.
#[inline]
fn central_derivative(d1: f64, d2: f64, d3: f64, h: f64) -> f64 {
    (45.0 * d1 - 9.0 * d2 + d3) / (60.0 * h)
}

/// Streaming energy-balance check at every sample of a uniformly stepped
/// run. Keeps the last seven states only, and forms H differences per slot
/// as `½ s (a − b)(a + b)` so the finite difference does not cancel.
#[derive(Debug)]
pub struct BalanceMonitor<'a> {
    sys: &'a System,
    storage: Vec<f64>,
    window: VecDeque<(f64, Vec<f64>, f64)>,
    max_residual: f64,
    peak_source: f64,
    samples: usize,
}

impl<'a> BalanceMonitor<'a> {
    pub fn new(sys: &'a System) -> Self {
        BalanceMonitor {
            sys,
            storage: sys.storage(),
            window: VecDeque::with_capacity(STENCIL),
            max_residual: 0.0,
            peak_source: 0.0,
            samples: 0,
        }
    }

    fn delta_h(&self, a: &[f64], b: &[f64]) -> f64 {
        self.storage
            .iter()
            .zip(a.iter().zip(b))
            .map(|(s, (x, y))| 0.5 * s * (x - y) * (x + y))
            .sum()
    }

    pub fn push(&mut self, t: f64, x: &[f64]) -> Result<()> {
        let e = self.sys.hamiltonian(x)?;
        self.peak_source = self.peak_source.max(e.source.abs());
        let mut buf = match self.window.len() {
            STENCIL => self.window.pop_front().expect("full window").1,
            _ => Vec::with_capacity(x.len()),
        };
        buf.clear();
        buf.extend_from_slice(x);
        self.window.push_back((t, buf, e.source - e.dissipation));
        self.samples += 1;
        if self.window.len() == STENCIL {
            let w = &self.window;
            let h = (w[6].0 - w[0].0) / 6.0;
            let d = |k: usize| self.delta_h(&w[3 + k].1, &w[3 - k].1);
            let dh = central_derivative(d(1), d(2), d(3), h);
            self.max_residual = self.max_residual.max((dh - w[3].2).abs());
        }
        Ok(())
    }

    /// Largest `|dH/dt − (source − dissipation)|` seen so far (W).
    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    /// Largest source power `|Σ T0 ω|` seen so far (W).
    pub fn peak_source(&self) -> f64 {
        self.peak_source
    }

    pub fn samples(&self) -> usize {
        self.samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Edge, Load, SgParams, ShuntParams};
    use num_complex::Complex64;

    fn one_machine(flux: f64, torque: f64) -> System {
        let sg = SgParams {
            inertia: 2.0,
            damping: 0.5,
            torque,
            stator_resistance: 0.1,
            stator_inductance: 4.0,
            flux,
            pole_pairs: 4,
        };
        let sh = ShuntParams {
            capacitance: 8.0,
            load: Load::Admittance(Complex64::new(0.3, 0.0)),
        };
        System::new(PowerNetwork::new(1, vec![Edge::sg(0, sg), Edge::shunt(0, sh)])).unwrap()
    }

    #[test]
    fn bare_machine_terms() {
        let sys = one_machine(0.0, 0.0);
        // ω = 1, I = 0, V = (2, -1)
        let x = [1.0, 0.0, 0.0, 0.3, 2.0, -1.0];
        let mut dx = [0.0; 6];
        sys.rhs(0.0, &x, &mut dx).unwrap();
        assert_eq!(dx[0], -0.5 / 2.0);
        assert_eq!(dx[3], 1.0);
        assert_eq!(dx[1], 2.0 / 4.0);
        assert_eq!(dx[2], -1.0 / 4.0);
    }

    #[test]
    fn rc_decay() {
        let sh = ShuntParams {
            capacitance: 2.0,
            load: Load::Admittance(Complex64::new(0.5, 0.0)),
        };
        let sys = System::new(PowerNetwork::new(1, vec![Edge::shunt(0, sh)])).unwrap();
        let mut dx = [0.0; 2];
        sys.rhs(0.0, &[1.0, 0.0], &mut dx).unwrap();
        assert_eq!(dx, [-0.25, 0.0]);
    }

    #[test]
    fn torque_unit_case() {
        assert_eq!(electrical_torque(1.0, 0.0, 0.0, -1.0), 1.0);
        assert_eq!(electrical_torque(3.0, 1.2, 0.0, 0.0), 0.0);
    }

    #[test]
    fn zero_state_energy() {
        let sys = one_machine(1.0, 5.0);
        let e = sys.hamiltonian(&[0.0; 6]).unwrap();
        assert_eq!(e.total, 0.0);
        assert!(e.parts.iter().all(|&p| p == 0.0));
        assert_eq!(sys.gradient(&[0.0; 6]).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn gradient_is_coenergy() {
        let sys = one_machine(1.0, 5.0);
        let g = sys.gradient(&[3.0, 1.0, 2.0, 9.0, 4.0, 5.0]).unwrap();
        assert_eq!(g, vec![3.0, 1.0, 2.0, 0.0, 4.0, 5.0]);
    }

    #[test]
    fn hessian_floor_reciprocals() {
        // J = 2, Ls = 4, C = 8
        assert_eq!(one_machine(1.0, 0.0).hessian_floor(), 0.125);
    }

    #[test]
    fn nonfinite_is_reported() {
        let sys = one_machine(1.0, 0.0);
        let mut dx = [0.0; 6];
        let err = sys.rhs(0.5, &[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0], &mut dx);
        assert!(matches!(err, Err(Error::NonFinite { .. })));
        assert!(matches!(
            sys.rhs(0.0, &[0.0; 3], &mut dx),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn interconnection_is_skew() {
        let sys = one_machine(2.0, 1.0);
        let j = sys.interconnection(&[1.0, 2.0, 3.0, 0.7, 4.0, 5.0]).unwrap();
        assert_eq!(j, -j.transpose());
    }

    #[test]
    fn lossless_field_drops_damping_and_torque() {
        let sys = one_machine(0.0, 3.0);
        let x = [1.0, 0.5, 0.0, 0.3, 2.0, -1.0];
        let mut dx = [0.0; 6];
        sys.rhs_lossless(0.0, &x, &mut dx).unwrap();
        assert_eq!(dx, [0.0, 2.0 / 4.0, -1.0 / 4.0, 1.0, -0.5 / 8.0, 0.0]);
    }

    #[test]
    fn balance_monitor_on_small_machine() {
        use crate::integrator::{solve, IntegratorConfig};
        let sys = one_machine(1.0, 5.0);
        let mut mon = BalanceMonitor::new(&sys);
        let cfg = IntegratorConfig::rk4(1e-3, 1e-3);
        solve(
            |t, x, dx| sys.rhs(t, x, dx),
            &[1.0, 0.2, -0.1, 0.0, 0.5, 0.3],
            (0.0, 2.0),
            &cfg,
            |t, x| mon.push(t, x),
        )
        .unwrap();
        assert_eq!(mon.samples(), 2001);
        assert!(mon.max_residual() < 1e-6 * mon.peak_source(), "{}", mon.max_residual());
    }

    #[test]
    fn residual_on_analytic_rc_decay() {
        // V(t) = V0 e^{−t/τ}, τ = C/G: H = ½CV², dissipation GV².
        let (c, g, v0) = (2.0, 0.5, 3.0);
        let tau = c / g;
        let times: Vec<f64> = (0..400).map(|k| k as f64 * 0.01).collect();
        let v: Vec<f64> = times.iter().map(|t| v0 * (-t / tau).exp()).collect();
        let ch = EnergyChannels {
            total: v.iter().map(|v| 0.5 * c * v * v).collect(),
            source: vec![0.0; v.len()],
            dissipation: v.iter().map(|v| g * v * v).collect(),
            parts: Vec::new(),
        };
        let (_, r) = energy_balance_residual(&times, &ch).unwrap();
        let peak = g * v0 * v0;
        assert!(r.iter().all(|x| x.abs() < 1e-8 * peak));
    }

    #[test]
    fn residual_grid_checks() {
        let ch = EnergyChannels::default();
        assert!(matches!(energy_balance_residual(&[0.0, 1.0], &ch), Err(Error::Grid(_))));
        let t = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        // H = t², power 2t: zero residual at interior points.
        let ch = EnergyChannels {
            total: t.iter().map(|t| t * t).collect(),
            source: t.iter().map(|t| 2.0 * t).collect(),
            dissipation: vec![0.0; 8],
            parts: Vec::new(),
        };
        let (ts, r) = energy_balance_residual(&t, &ch).unwrap();
        assert_eq!(ts, vec![3.0, 4.0]);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        let bad = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.5];
        assert!(energy_balance_residual(&bad, &ch).is_err());
    }
}

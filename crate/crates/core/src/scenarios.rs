//! Built-in two-machine test system, its case studies and parameter sweeps.

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{classify_system, Classification, ClassifierConfig};
use crate::dynamics::System;
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig, Trajectory};
use crate::netmodel::{
    validate_network, Edge, EdgeKind, LineParams, Load, PowerNetwork, SgParams, ShuntParams,
};

/// Environment variable holding the default sweep thread count.
pub const THREADS_ENV: &str = "PHGRID_THREADS";

/// Damping multiplier of the desk-scale variants.
pub const DESK_DAMPING_FACTOR: f64 = 10.0;
/// Horizon of the desk-scale variants (s).
pub const DESK_HORIZON: f64 = 400.0;
/// Horizon of the full-scale variants (s).
pub const FULL_HORIZON: f64 = 700.0;

pub fn table_sg() -> SgParams {
    SgParams {
        inertia: 2.846e4,
        damping: 85.5601,
        torque: 1e4,
        stator_resistance: 1.542e-3,
        stator_inductance: 6.341e-3,
        flux: 39.7877,
        pole_pairs: 4,
    }
}

fn rl_shunt(c: f64, r: f64, l: f64) -> ShuntParams {
    ShuntParams {
        capacitance: c,
        load: Load::RlBranch {
            resistance: r,
            inductance: l,
        },
    }
}

/// Two generators feeding a middle load bus through two R-L lines.
///
/// Buses: 0 hosts SG 1, 1 hosts SG 2, 2 is the middle bus. Edge order
/// `sg1, sg2, sh3, sh4, sh5, ln6, ln7`, with `ln6: 0 → 2` and `ln7: 1 → 2`.
/// The heavy load and the large capacitor sit on the middle bus so the
/// network is mirror-symmetric.
pub fn two_machine_default() -> PowerNetwork {
    let line = LineParams {
        resistance: 3.0,
        inductance: 1.061,
    };
    PowerNetwork::new(
        3,
        vec![
            Edge::sg(0, table_sg()),
            Edge::sg(1, table_sg()),
            Edge::shunt(0, rl_shunt(50e-3, 1000.0, 10.0)),
            Edge::shunt(1, rl_shunt(50e-3, 1000.0, 10.0)),
            Edge::shunt(2, rl_shunt(100e-3, 4.0, 1.0)),
            Edge::line(0, 2, line),
            Edge::line(1, 2, line),
        ],
    )
}

/// Uniform `[0, scale)` coordinates from a ChaCha8 stream seeded with
/// `seed_from_u64(seed)`.
pub fn random_initial(dim: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| scale * rng.random::<f64>()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialPolicy {
    /// Each machine at its no-load speed `T0/F`, all other states zero.
    SteadyGuess,
    Random { seed: u64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub network: PowerNetwork,
    pub initial: InitialPolicy,
    /// Simulated span (s).
    pub horizon: f64,
    pub integrator: IntegratorConfig,
    pub expected: Option<Classification>,
}

/// RK4 at 50 µs, sampled every 10 ms.
pub fn default_integrator() -> IntegratorConfig {
    IntegratorConfig::rk4(50e-6, 0.01)
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::Config("horizon must be > 0".into()));
        }
        if let InitialPolicy::Random { scale, .. } = self.initial {
            if !(scale >= 0.0) {
                return Err(Error::Config("initial scale must be >= 0".into()));
            }
        }
        self.integrator.validate()?;
        let v = validate_network(&self.network);
        if !v.is_empty() {
            return Err(Error::Structural(v));
        }
        Ok(())
    }

    pub fn initial_state(&self, sys: &System) -> Vec<f64> {
        match self.initial {
            InitialPolicy::Random { seed, scale } => random_initial(sys.dim(), seed, scale),
            InitialPolicy::SteadyGuess => {
                let mut x = vec![0.0; sys.dim()];
                for p in sys.ports() {
                    if let EdgeKind::Sg(sg) = sys.net().edges[p.edge].kind {
                        x[p.offset] = sg.torque / sg.damping;
                    }
                }
                x
            }
        }
    }

    /// Simulates `[0, horizon]` and returns the trajectory with energy
    /// channels.
    pub fn run(&self) -> Result<(System, Trajectory)> {
        self.validate()?;
        let sys = System::new(self.network.clone())?;
        let x0 = self.initial_state(&sys);
        let traj = integrate(&sys, &x0, (0.0, self.horizon), &self.integrator)?;
        Ok((sys, traj))
    }

    /// Desk-scale variant: every damping entry ×10, horizon 400 s.
    pub fn desk(mut self) -> Self {
        self.network.scale_damping(DESK_DAMPING_FACTOR);
        self.horizon = DESK_HORIZON;
        self.name.push_str("-desk");
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    Symmetric,
    TorqueMismatch,
    HighFlux,
}

impl CaseKind {
    pub const ALL: [CaseKind; 3] = [CaseKind::Symmetric, CaseKind::TorqueMismatch, CaseKind::HighFlux];

    pub fn name(self) -> &'static str {
        match self {
            CaseKind::Symmetric => "symmetric",
            CaseKind::TorqueMismatch => "torque-mismatch",
            CaseKind::HighFlux => "high-flux",
        }
    }
}

/// Full-scale case study from a random start (seed 1, scale 100).
pub fn case_variant(kind: CaseKind) -> Scenario {
    let mut network = two_machine_default();
    let expected = match kind {
        CaseKind::Symmetric => Classification::Synchronized,
        CaseKind::TorqueMismatch => {
            network.map_generators(|k, sg| {
                if k == 1 {
                    sg.torque = 1.5e4;
                }
            });
            Classification::LowFreqOscillation
        }
        CaseKind::HighFlux => {
            network.map_generators(|_, sg| sg.flux *= 2.5);
            Classification::Collapse
        }
    };
    Scenario {
        name: kind.name().to_string(),
        network,
        initial: InitialPolicy::Random {
            seed: 1,
            scale: 100.0,
        },
        horizon: FULL_HORIZON,
        integrator: default_integrator(),
        expected: Some(expected),
    }
}

/// Every shipped scenario: the three cases at full and desk scale.
pub fn builtin_scenarios() -> Vec<Scenario> {
    CaseKind::ALL
        .iter()
        .flat_map(|&k| [case_variant(k), case_variant(k).desk()])
        .collect()
}

pub fn scenario_by_name(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    /// Every damping entry ×factor.
    DampingScale,
    /// Both inertias ×factor; the horizon is stretched by the same factor.
    InertiaScale,
    /// Mechanical torque of SG 2 ×factor.
    TorqueSg2,
    /// Both fluxes ×factor.
    FluxScale,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::DampingScale => "damping",
            SweepParameter::InertiaScale => "inertia",
            SweepParameter::TorqueSg2 => "torque-sg2",
            SweepParameter::FluxScale => "flux",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        [
            SweepParameter::DampingScale,
            SweepParameter::InertiaScale,
            SweepParameter::TorqueSg2,
            SweepParameter::FluxScale,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::Format(format!("unknown sweep parameter {s:?}")))
    }

    /// The base scenario modified by `factor`.
    pub fn apply(self, base: &Scenario, factor: f64) -> Scenario {
        let mut s = base.clone();
        match self {
            SweepParameter::DampingScale => s.network.scale_damping(factor),
            SweepParameter::InertiaScale => {
                s.network.map_generators(|_, sg| sg.inertia *= factor);
                s.horizon *= factor.max(1.0);
            }
            SweepParameter::TorqueSg2 => s.network.map_generators(|k, sg| {
                if k == 1 {
                    sg.torque *= factor;
                }
            }),
            SweepParameter::FluxScale => s.network.map_generators(|_, sg| sg.flux *= factor),
        }
        s.name = format!("{}@{}x{}", base.name, self.name(), factor);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub factors: Vec<f64>,
    pub base: Scenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub factor: f64,
    /// First time after which `|H − H_terminal| < 1 % H_terminal` (s).
    pub transient_time: f64,
    pub classification: Classification,
    pub terminal_h: f64,
}

/// First sample time after which `|h − h_end| < band · |h_end|` holds for
/// every remaining sample.
pub fn transient_time(times: &[f64], h: &[f64], band: f64) -> f64 {
    let Some(&last) = h.last() else {
        return f64::NAN;
    };
    let tol = band * last.abs();
    match h.iter().rposition(|v| (v - last).abs() >= tol) {
        None => times[0],
        Some(i) if i + 1 < times.len() => times[i + 1],
        Some(i) => times[i],
    }
}

/// Thread count: `PHGRID_THREADS` if set and positive, else the available
/// parallelism.
pub fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_leg(spec: &SweepSpec, factor: f64) -> Result<SweepRow> {
    let sc = spec.parameter.apply(&spec.base, factor);
    let (sys, traj) = sc.run()?;
    let h = &traj.energy.as_ref().expect("integrate records energy").total;
    let report = classify_system(&sys, &traj, &ClassifierConfig::default())?;
    Ok(SweepRow {
        factor,
        transient_time: transient_time(&traj.times, h, 0.01),
        classification: report.classification,
        terminal_h: *h.last().unwrap_or(&f64::NAN),
    })
}

/// Runs every leg of the sweep on up to `threads` workers. Rows come back in
/// factor order.
pub fn run_sweep(spec: &SweepSpec, threads: usize) -> Result<Vec<SweepRow>> {
    if spec.factors.is_empty() || spec.factors.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::Config("sweep factors must be positive and nonempty".into()));
    }
    let next = Mutex::new(0usize);
    let results: Vec<Mutex<Option<Result<SweepRow>>>> =
        spec.factors.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, spec.factors.len()) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(&f) = spec.factors.get(i) else { break };
                *results[i].lock().unwrap() = Some(run_leg(spec, f));
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every leg ran"))
        .collect()
}

//! File formats: network and scenario files (TOML), sweep specs, trajectory
//! and sweep CSV, and structured reports.
//!
//! Network file:
//!
//! ```toml
//! [network]
//! pole_pair_scaling = false   # optional
//!
//! [[bus]]
//! id = 0
//!
//! [[sg]]
//! edge = 1                    # 1-based position in the edge list
//! bus = 0
//! inertia = 28460.0
//! damping = 85.5601
//! torque = 10000.0
//! stator_resistance = 0.001542
//! stator_inductance = 0.006341
//! flux = 39.7877
//! pole_pairs = 4
//!
//! [[shunt]]
//! edge = 3
//! bus = 0
//! capacitance = 0.05
//! load = { kind = "rl_branch", resistance = 1000.0, inductance = 10.0 }
//! # or load = { kind = "admittance", g = 0.25, b = 0.0 }
//!
//! [[line]]
//! edge = 6
//! from = 0
//! to = 2
//! resistance = 3.0
//! inductance = 1.061
//! ```
//!
//! `edge` may be omitted on every entry, in which case edges are ordered
//! generators, shunts, lines, each in file order. A scenario file is a
//! network file with an extra `[scenario]` table.

use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::Classification;
use crate::dynamics::System;
use crate::error::{Error, Result};
use crate::integrator::{EnergyChannels, IntegratorConfig, Method, Trajectory};
use crate::netmodel::{
    BusId, Edge, EdgeKind, LineParams, Load, PortRole, PowerNetwork, SgParams, ShuntParams,
    Terminal,
};
use crate::scenarios::{scenario_by_name, InitialPolicy, Scenario, SweepParameter, SweepRow, SweepSpec};

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    #[serde(default)]
    pole_pair_scaling: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusEntry {
    id: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SgEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge: Option<usize>,
    bus: usize,
    inertia: f64,
    damping: f64,
    torque: f64,
    stator_resistance: f64,
    stator_inductance: f64,
    flux: f64,
    pole_pairs: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LoadEntry {
    Admittance { g: f64, b: f64 },
    RlBranch { resistance: f64, inductance: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShuntEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge: Option<usize>,
    bus: usize,
    capacitance: f64,
    load: LoadEntry,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge: Option<usize>,
    from: usize,
    to: usize,
    resistance: f64,
    inductance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum InitialEntry {
    SteadyGuess,
    Random { seed: u64, scale: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
enum IntegratorEntry {
    Rk4 {
        dt: f64,
        sample_every: f64,
    },
    Rk45 {
        abs_tol: f64,
        rel_tol: f64,
        dt_min: f64,
        dt_max: f64,
        sample_every: f64,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    name: String,
    horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expected: Option<Classification>,
    initial: InitialEntry,
    integrator: IntegratorEntry,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    #[serde(default)]
    network: NetworkSection,
    #[serde(default)]
    bus: Vec<BusEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    sg: Vec<SgEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    shunt: Vec<ShuntEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    line: Vec<LineEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scenario: Option<ScenarioSection>,
}

fn format_err(e: impl std::fmt::Display) -> Error {
    Error::Format(e.to_string())
}

impl NetworkFile {
    fn into_network(self) -> Result<PowerNetwork> {
        let n = self.sg.len() + self.shunt.len() + self.line.len();
        let mut tagged: Vec<(Option<usize>, Edge)> = Vec::with_capacity(n);
        for s in self.sg {
            tagged.push((
                s.edge,
                Edge::sg(
                    s.bus,
                    SgParams {
                        inertia: s.inertia,
                        damping: s.damping,
                        torque: s.torque,
                        stator_resistance: s.stator_resistance,
                        stator_inductance: s.stator_inductance,
                        flux: s.flux,
                        pole_pairs: s.pole_pairs,
                    },
                ),
            ));
        }
        for s in self.shunt {
            let load = match s.load {
                LoadEntry::Admittance { g, b } => Load::Admittance(Complex64::new(g, b)),
                LoadEntry::RlBranch {
                    resistance,
                    inductance,
                } => Load::RlBranch {
                    resistance,
                    inductance,
                },
            };
            tagged.push((
                s.edge,
                Edge::shunt(
                    s.bus,
                    ShuntParams {
                        capacitance: s.capacitance,
                        load,
                    },
                ),
            ));
        }
        for l in self.line {
            tagged.push((
                l.edge,
                Edge::line(
                    l.from,
                    l.to,
                    LineParams {
                        resistance: l.resistance,
                        inductance: l.inductance,
                    },
                ),
            ));
        }
        let numbered = tagged.iter().filter(|(e, _)| e.is_some()).count();
        let edges = if numbered == 0 {
            tagged.into_iter().map(|(_, e)| e).collect()
        } else if numbered == n {
            let mut slots: Vec<Option<Edge>> = vec![None; n];
            for (k, e) in tagged {
                let k = k.expect("all numbered");
                if k == 0 || k > n || slots[k - 1].is_some() {
                    return Err(Error::Format(format!(
                        "edge numbers must be a permutation of 1..={n} (bad or repeated {k})"
                    )));
                }
                slots[k - 1] = Some(e);
            }
            slots.into_iter().map(|e| e.expect("filled")).collect()
        } else {
            return Err(Error::Format("either every edge has an `edge` number or none does".into()));
        };
        Ok(PowerNetwork {
            buses: self.bus.iter().map(|b| BusId(b.id)).collect(),
            edges,
            pole_pair_scaling: self.network.pole_pair_scaling,
        })
    }

    fn from_network(net: &PowerNetwork) -> Result<Self> {
        let mut f = NetworkFile {
            network: NetworkSection {
                pole_pair_scaling: net.pole_pair_scaling,
            },
            bus: net.buses.iter().map(|b| BusEntry { id: b.0 }).collect(),
            ..Default::default()
        };
        for (i, e) in net.edges.iter().enumerate() {
            let edge = Some(i + 1);
            match (&e.kind, e.to) {
                (EdgeKind::Sg(p), Terminal::Ground) => f.sg.push(SgEntry {
                    edge,
                    bus: e.from.0,
                    inertia: p.inertia,
                    damping: p.damping,
                    torque: p.torque,
                    stator_resistance: p.stator_resistance,
                    stator_inductance: p.stator_inductance,
                    flux: p.flux,
                    pole_pairs: p.pole_pairs,
                }),
                (EdgeKind::Shunt(s), Terminal::Ground) => f.shunt.push(ShuntEntry {
                    edge,
                    bus: e.from.0,
                    capacitance: s.capacitance,
                    load: match s.load {
                        Load::Admittance(y) => LoadEntry::Admittance { g: y.re, b: y.im },
                        Load::RlBranch {
                            resistance,
                            inductance,
                        } => LoadEntry::RlBranch {
                            resistance,
                            inductance,
                        },
                    },
                }),
                (EdgeKind::Line(l), Terminal::Bus(to)) => f.line.push(LineEntry {
                    edge,
                    from: e.from.0,
                    to: to.0,
                    resistance: l.resistance,
                    inductance: l.inductance,
                }),
                _ => {
                    return Err(Error::Format(format!(
                        "{}{} has endpoints the file format cannot express",
                        e.kind.prefix(),
                        i + 1
                    )))
                }
            }
        }
        Ok(f)
    }
}

pub fn parse_network(text: &str) -> Result<PowerNetwork> {
    let f: NetworkFile = toml::from_str(text).map_err(format_err)?;
    f.into_network()
}

pub fn network_to_string(net: &PowerNetwork) -> Result<String> {
    toml::to_string(&NetworkFile::from_network(net)?).map_err(format_err)
}

pub fn read_network(path: &Path) -> Result<PowerNetwork> {
    parse_network(&std::fs::read_to_string(path)?)
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut f: NetworkFile = toml::from_str(text).map_err(format_err)?;
    let sc = f
        .scenario
        .take()
        .ok_or_else(|| Error::Format("missing [scenario] table".into()))?;
    let network = f.into_network()?;
    let initial = match sc.initial {
        InitialEntry::SteadyGuess => InitialPolicy::SteadyGuess,
        InitialEntry::Random { seed, scale } => InitialPolicy::Random { seed, scale },
    };
    let integrator = match sc.integrator {
        IntegratorEntry::Rk4 { dt, sample_every } => IntegratorConfig::rk4(dt, sample_every),
        IntegratorEntry::Rk45 {
            abs_tol,
            rel_tol,
            dt_min,
            dt_max,
            sample_every,
        } => IntegratorConfig {
            method: Method::Rk45 {
                abs_tol,
                rel_tol,
                dt_min,
                dt_max,
            },
            sample_every,
        },
    };
    Ok(Scenario {
        name: sc.name,
        network,
        initial,
        horizon: sc.horizon,
        integrator,
        expected: sc.expected,
    })
}

pub fn scenario_to_string(sc: &Scenario) -> Result<String> {
    let mut f = NetworkFile::from_network(&sc.network)?;
    let every = sc.integrator.sample_every;
    f.scenario = Some(ScenarioSection {
        name: sc.name.clone(),
        horizon: sc.horizon,
        expected: sc.expected,
        initial: match sc.initial {
            InitialPolicy::SteadyGuess => InitialEntry::SteadyGuess,
            InitialPolicy::Random { seed, scale } => InitialEntry::Random { seed, scale },
        },
        integrator: match sc.integrator.method {
            Method::Rk4 { dt } => IntegratorEntry::Rk4 {
                dt,
                sample_every: every,
            },
            Method::Rk45 {
                abs_tol,
                rel_tol,
                dt_min,
                dt_max,
            } => IntegratorEntry::Rk45 {
                abs_tol,
                rel_tol,
                dt_min,
                dt_max,
                sample_every: every,
            },
        },
    });
    toml::to_string(&f).map_err(format_err)
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    parameter: String,
    factors: Vec<f64>,
    /// Built-in scenario name.
    #[serde(default)]
    base: Option<String>,
    /// Scenario file, relative to the spec file.
    #[serde(default)]
    base_file: Option<String>,
}

/// Sweep spec file:
///
/// ```toml
/// parameter = "damping"       # damping | inertia | torque-sg2 | flux
/// factors = [1.0, 2.0, 4.0]
/// base = "symmetric-desk"     # or base_file = "scenario.toml"
/// ```
pub fn read_sweep_spec(path: &Path) -> Result<SweepSpec> {
    let f: SweepFile = toml::from_str(&std::fs::read_to_string(path)?).map_err(format_err)?;
    let base = match (f.base, f.base_file) {
        (Some(name), None) => {
            scenario_by_name(&name).ok_or_else(|| Error::Format(format!("unknown scenario {name:?}")))?
        }
        (None, Some(file)) => {
            let dir = path.parent().unwrap_or(Path::new("."));
            read_scenario(&dir.join(file))?
        }
        _ => return Err(Error::Format("give exactly one of `base` and `base_file`".into())),
    };
    Ok(SweepSpec {
        parameter: SweepParameter::from_name(&f.parameter)?,
        factors: f.factors,
        base,
    })
}

/// Column names of the state slots, in state order.
pub fn state_columns(sys: &System) -> Vec<String> {
    let mut out = Vec::with_capacity(sys.dim());
    for p in sys.ports() {
        let names: &[&str] = match p.role {
            PortRole::Generator => &["omega", "Ia", "Ib", "theta"],
            PortRole::Capacitor => &["Va", "Vb"],
            PortRole::Inductor => &["Ia", "Ib"],
        };
        out.extend(names.iter().map(|n| format!("{}_{n}", p.label)));
    }
    out
}

const ENERGY_COLUMNS: [&str; 3] = ["H_total_J", "source_W", "dissipation_W"];

/// 17 significant digits: enough to round-trip every `f64`.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `t_s`, the state columns and the energy channels.
pub fn write_trajectory_csv(mut w: impl Write, columns: &[String], traj: &Trajectory) -> Result<()> {
    if columns.len() != traj.dim {
        return Err(Error::Dimension {
            expected: traj.dim,
            got: columns.len(),
        });
    }
    let energy = traj
        .energy
        .as_ref()
        .filter(|e| e.total.len() == traj.len())
        .ok_or_else(|| Error::Format("trajectory has no energy channels".into()))?;
    let header: Vec<&str> = std::iter::once("t_s")
        .chain(columns.iter().map(String::as_str))
        .chain(ENERGY_COLUMNS)
        .collect();
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for i in 0..traj.len() {
        line.clear();
        line.push_str(&fmt17(traj.times[i]));
        for &v in traj
            .state(i)
            .iter()
            .chain([&energy.total[i], &energy.source[i], &energy.dissipation[i]])
        {
            line.push(',');
            line.push_str(&fmt17(v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads a trajectory CSV; returns the state column names and the
/// trajectory with its energy channels.
pub fn read_trajectory_csv(r: impl BufRead) -> Result<(Vec<String>, Trajectory)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format("empty trajectory file".into()))?;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    let n = cols.len();
    if n < 5 || cols[0] != "t_s" || cols[n - 3..] != ENERGY_COLUMNS {
        return Err(Error::Format(
            "header must start with t_s and end with H_total_J,source_W,dissipation_W".into(),
        ));
    }
    let columns: Vec<String> = cols[1..n - 3].iter().map(|s| s.to_string()).collect();
    let mut traj = Trajectory::new(columns.len());
    let mut energy = EnergyChannels::default();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .trim_end()
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("row {}: {e}", k + 2)))?;
        if vals.len() != n {
            return Err(Error::Format(format!("row {} has {} fields, expected {n}", k + 2, vals.len())));
        }
        traj.push(vals[0], &vals[1..n - 3]);
        energy.total.push(vals[n - 3]);
        energy.source.push(vals[n - 2]);
        energy.dissipation.push(vals[n - 1]);
    }
    traj.energy = Some(energy);
    Ok((columns, traj))
}

pub fn write_sweep_csv(mut w: impl Write, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "factor,transient_time_s,classification,terminal_H_J")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt17(r.factor),
            fmt17(r.transient_time),
            r.classification,
            fmt17(r.terminal_h)
        )?;
    }
    Ok(())
}

/// Any serializable report as TOML.
pub fn report_to_string<T: Serialize>(report: &T) -> Result<String> {
    toml::to_string(report).map_err(format_err)
}

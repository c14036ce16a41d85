//! Network data model: buses, typed edges, port layout and the skew-symmetric
//! network matrix that couples edge outputs to edge inputs.
//!
//! Every edge is an open port-Hamiltonian subsystem. Synchronous generators,
//! lines and RL load branches are inductive ports (output current, input
//! voltage); shunt capacitors are capacitive ports (output voltage, input
//! current). The edge orientation follows the consumer convention: positive
//! edge voltage times positive edge current is power absorbed by the edge.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub usize);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bus {}", self.0)
    }
}

/// Synchronous generator with constant field flux and a droop-controlled
/// mechanical source, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgParams {
    /// Rotational inertia (kg·m²).
    pub inertia: f64,
    /// Total viscous damping including the torque droop (N·m·s).
    pub damping: f64,
    /// Projected zero-frequency torque (N·m).
    pub torque: f64,
    /// Stator resistance (Ω).
    pub stator_resistance: f64,
    /// Stator inductance (H).
    pub stator_inductance: f64,
    /// Field flux (V·s).
    pub flux: f64,
    /// Pole pairs. Only used when the network enables pole-pair scaling.
    pub pole_pairs: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Load {
    /// Constant complex admittance (S) acting directly on the bus voltage.
    Admittance(Complex64),
    /// Series R-L branch from the bus to ground, simulated as its own
    /// inductive port.
    RlBranch { resistance: f64, inductance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShuntParams {
    /// Capacitance (F).
    pub capacitance: f64,
    pub load: Load,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    /// Series resistance (Ω).
    pub resistance: f64,
    /// Series inductance (H).
    pub inductance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    Bus(BusId),
    Ground,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeKind {
    Sg(SgParams),
    Shunt(ShuntParams),
    Line(LineParams),
}

impl EdgeKind {
    pub fn prefix(&self) -> &'static str {
        match self {
            EdgeKind::Sg(_) => "sg",
            EdgeKind::Shunt(_) => "sh",
            EdgeKind::Line(_) => "ln",
        }
    }
}

/// Oriented edge. Shunts and generators return to ground; lines join two
/// buses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub kind: EdgeKind,
    pub from: BusId,
    pub to: Terminal,
}

impl Edge {
    pub fn sg(bus: usize, params: SgParams) -> Self {
        Edge {
            kind: EdgeKind::Sg(params),
            from: BusId(bus),
            to: Terminal::Ground,
        }
    }

    pub fn shunt(bus: usize, params: ShuntParams) -> Self {
        Edge {
            kind: EdgeKind::Shunt(params),
            from: BusId(bus),
            to: Terminal::Ground,
        }
    }

    pub fn line(from: usize, to: usize, params: LineParams) -> Self {
        Edge {
            kind: EdgeKind::Line(params),
            from: BusId(from),
            to: Terminal::Bus(BusId(to)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerNetwork {
    pub buses: Vec<BusId>,
    pub edges: Vec<Edge>,
    /// Opt-in: treat the rotor state as a mechanical angle and scale the
    /// EMF and torque by each generator's pole-pair count. Off by default.
    pub pole_pair_scaling: bool,
}

impl PowerNetwork {
    pub fn new(bus_count: usize, edges: Vec<Edge>) -> Self {
        PowerNetwork {
            buses: (0..bus_count).map(BusId).collect(),
            edges,
            pole_pair_scaling: false,
        }
    }

    pub fn generators(&self) -> impl Iterator<Item = (usize, &SgParams)> {
        self.edges.iter().enumerate().filter_map(|(i, e)| match &e.kind {
            EdgeKind::Sg(p) => Some((i, p)),
            _ => None,
        })
    }

    pub fn generator_count(&self) -> usize {
        self.generators().count()
    }

    /// Index of the edge holding the shunt capacitor of `bus`, if any.
    pub fn shunt_of(&self, bus: BusId) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| matches!(e.kind, EdgeKind::Shunt(_)) && e.from == bus)
    }

    /// Applies `f` to every generator parameter block.
    pub fn map_generators(&mut self, mut f: impl FnMut(usize, &mut SgParams)) {
        let mut k = 0;
        for e in &mut self.edges {
            if let EdgeKind::Sg(p) = &mut e.kind {
                f(k, p);
                k += 1;
            }
        }
    }

    /// Multiplies every entry of the damping matrix by `factor`: viscous
    /// damping, stator/line/load-branch resistance and load conductance.
    pub fn scale_damping(&mut self, factor: f64) {
        for e in &mut self.edges {
            match &mut e.kind {
                EdgeKind::Sg(p) => {
                    p.damping *= factor;
                    p.stator_resistance *= factor;
                }
                EdgeKind::Shunt(s) => match &mut s.load {
                    Load::Admittance(y) => y.re *= factor,
                    Load::RlBranch { resistance, .. } => *resistance *= factor,
                },
                EdgeKind::Line(l) => l.resistance *= factor,
            }
        }
    }
}

/// What a port exchanges with the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortRole {
    /// Generator: output stator current, input terminal voltage.
    Generator,
    /// Shunt capacitor: output bus voltage, input injected current.
    Capacitor,
    /// Line or RL load branch: output current, input voltage difference.
    Inductor,
}

/// One port of the interconnection, with its slot offset in the state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    pub role: PortRole,
    /// Index of the owning edge in `PowerNetwork::edges`.
    pub edge: usize,
    pub from: BusId,
    pub to: Terminal,
    pub label: String,
    pub offset: usize,
    /// Energy-storage coefficient (J, L or C).
    pub storage: f64,
    /// Damping entry (F, R or Re Y).
    pub damping: f64,
    /// Susceptance of an admittance load, zero otherwise.
    pub susceptance: f64,
}

impl Port {
    /// Number of real slots: 4 for a generator (ω, Iα, Iβ, θ), 2 otherwise.
    pub fn width(&self) -> usize {
        match self.role {
            PortRole::Generator => 4,
            _ => 2,
        }
    }

    /// Offset of the complex αβ pair.
    pub fn pair_offset(&self) -> usize {
        match self.role {
            PortRole::Generator => self.offset + 1,
            _ => self.offset,
        }
    }
}

/// Ports in state order: declared edges first, then one inductive port per
/// RL load branch in shunt order.
pub fn ports(net: &PowerNetwork) -> Vec<Port> {
    let mut out = Vec::with_capacity(net.edges.len() + 4);
    let mut offset = 0;
    for (i, e) in net.edges.iter().enumerate() {
        let (role, storage, damping, susceptance) = match &e.kind {
            EdgeKind::Sg(p) => (PortRole::Generator, p.inertia, p.damping, 0.0),
            EdgeKind::Shunt(s) => match s.load {
                Load::Admittance(y) => (PortRole::Capacitor, s.capacitance, y.re, y.im),
                Load::RlBranch { .. } => (PortRole::Capacitor, s.capacitance, 0.0, 0.0),
            },
            EdgeKind::Line(l) => (PortRole::Inductor, l.inductance, l.resistance, 0.0),
        };
        let port = Port {
            role,
            edge: i,
            from: e.from,
            to: e.to,
            label: format!("{}{}", e.kind.prefix(), i + 1),
            offset,
            storage,
            damping,
            susceptance,
        };
        offset += port.width();
        out.push(port);
    }
    for (i, e) in net.edges.iter().enumerate() {
        if let EdgeKind::Shunt(ShuntParams {
            load: Load::RlBranch {
                resistance,
                inductance,
            },
            ..
        }) = e.kind
        {
            out.push(Port {
                role: PortRole::Inductor,
                edge: i,
                from: e.from,
                to: Terminal::Ground,
                label: format!("ld{}", i + 1),
                offset,
                storage: inductance,
                damping: resistance,
                susceptance: 0.0,
            });
            offset += 2;
        }
    }
    out
}

/// Total number of real state slots.
pub fn state_dim(net: &PowerNetwork) -> usize {
    ports(net).iter().map(Port::width).sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Network,
    Bus(BusId),
    Edge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: Location,
    pub message: String,
}

impl Violation {
    fn edge(i: usize, edge: &Edge, message: impl Into<String>) -> Self {
        Violation {
            location: Location::Edge(i),
            message: format!("{}{}: {}", edge.kind.prefix(), i + 1, message.into()),
        }
    }

    fn bus(b: BusId, message: impl Into<String>) -> Self {
        Violation {
            location: Location::Bus(b),
            message: format!("{b}: {}", message.into()),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Checks every structural and parameter invariant. An empty list means the
/// network can be assembled and simulated.
pub fn validate_network(net: &PowerNetwork) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = net.buses.len();

    for (k, b) in net.buses.iter().enumerate() {
        if b.0 != k {
            out.push(Violation {
                location: Location::Bus(*b),
                message: format!("bus list entry {k} is {b}; ids must be dense and ordered"),
            });
        }
    }
    if n == 0 {
        out.push(Violation {
            location: Location::Network,
            message: "network has no buses".into(),
        });
    }

    let defined = |b: BusId| b.0 < n;
    for (i, e) in net.edges.iter().enumerate() {
        if !defined(e.from) {
            out.push(Violation::edge(i, e, format!("endpoint {} is undefined", e.from)));
        }
        if let Terminal::Bus(b) = e.to {
            if !defined(b) {
                out.push(Violation::edge(i, e, format!("endpoint {b} is undefined")));
            }
            if b == e.from {
                out.push(Violation::edge(i, e, "both endpoints on the same bus"));
            }
        }
        check_params(i, e, &mut out);
    }

    let mut caps = vec![0usize; n];
    for e in &net.edges {
        if let EdgeKind::Shunt(_) = e.kind {
            if defined(e.from) {
                caps[e.from.0] += 1;
            }
        }
    }
    for (k, &c) in caps.iter().enumerate() {
        match c {
            1 => {}
            0 => out.push(Violation::bus(BusId(k), "no shunt capacitor")),
            c => out.push(Violation::bus(
                BusId(k),
                format!("{c} shunt capacitors (exactly one required)"),
            )),
        }
    }

    if n > 1 && !connected(net) {
        out.push(Violation {
            location: Location::Network,
            message: "bus graph is not connected".into(),
        });
    }
    out
}

fn check_params(i: usize, e: &Edge, out: &mut Vec<Violation>) {
    let mut need = |ok: bool, what: &str| {
        if !ok {
            out.push(Violation::edge(i, e, what.to_string()));
        }
    };
    let pos = |x: f64| x.is_finite() && x > 0.0;
    match &e.kind {
        EdgeKind::Sg(p) => {
            need(pos(p.inertia), "inertia J must be > 0");
            need(pos(p.damping), "damping F must be > 0");
            need(p.torque.is_finite(), "torque T0 must be finite");
            need(pos(p.stator_resistance), "stator resistance must be > 0");
            need(pos(p.stator_inductance), "stator inductance must be > 0");
            need(p.flux.is_finite() && p.flux >= 0.0, "field flux must be >= 0");
        }
        EdgeKind::Shunt(s) => {
            need(pos(s.capacitance), "capacitance C must be > 0");
            need(e.to == Terminal::Ground, "shunt must return to ground");
            match s.load {
                Load::Admittance(y) => {
                    need(pos(y.re), "load conductance Re Y must be > 0");
                    need(y.im.is_finite(), "load susceptance must be finite");
                }
                Load::RlBranch {
                    resistance,
                    inductance,
                } => {
                    need(pos(resistance), "load resistance must be > 0");
                    need(pos(inductance), "load inductance must be > 0");
                }
            }
        }
        EdgeKind::Line(l) => {
            need(pos(l.resistance), "line resistance must be > 0");
            need(pos(l.inductance), "line inductance must be > 0");
            need(matches!(e.to, Terminal::Bus(_)), "line must join two buses");
        }
    }
}

fn connected(net: &PowerNetwork) -> bool {
    let n = net.buses.len();
    let mut adj = vec![Vec::new(); n];
    for e in &net.edges {
        if let Terminal::Bus(b) = e.to {
            if e.from.0 < n && b.0 < n {
                adj[e.from.0].push(b.0);
                adj[b.0].push(e.from.0);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Skew-symmetric interconnection over ports: `u = W y`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMatrix {
    pub w: DMatrix<i32>,
}

impl NetworkMatrix {
    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_skew_symmetric(&self) -> bool {
        self.w == -self.w.transpose()
    }

    /// Nonzero entries as `(row, col, sign)`.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for r in 0..self.w.nrows() {
            for c in 0..self.w.ncols() {
                let v = self.w[(r, c)];
                if v != 0 {
                    out.push((r, c, v as f64));
                }
            }
        }
        out
    }
}

/// Builds W from KCL at each capacitor bus and KVL across each inductive
/// port.
pub fn assemble_network_matrix(net: &PowerNetwork) -> Result<NetworkMatrix> {
    let violations = validate_network(net);
    if !violations.is_empty() {
        return Err(Error::Structural(violations));
    }
    let ports = ports(net);
    let mut cap_port = vec![usize::MAX; net.buses.len()];
    for (k, p) in ports.iter().enumerate() {
        if p.role == PortRole::Capacitor {
            cap_port[p.from.0] = k;
        }
    }
    let n = ports.len();
    let mut w = DMatrix::<i32>::zeros(n, n);
    for (k, p) in ports.iter().enumerate() {
        if p.role == PortRole::Capacitor {
            continue;
        }
        // Edge voltage = V(from) - V(to); edge current leaves `from` and
        // enters `to`.
        let c = cap_port[p.from.0];
        w[(k, c)] += 1;
        w[(c, k)] -= 1;
        if let Terminal::Bus(b) = p.to {
            let c = cap_port[b.0];
            w[(k, c)] -= 1;
            w[(c, k)] += 1;
        }
    }
    Ok(NetworkMatrix { w })
}

/// Contraction certificate: `rate_c = hessian_floor_a * lambda_min_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionCertificate {
    pub lambda_min_r: f64,
    pub hessian_floor_a: f64,
    pub rate_c: f64,
    /// `min Re Y / max J`, the mechanically dominated rate estimate.
    pub remark_estimate: f64,
}

/// Real load conductance seen at the bus. RL branches are converted to an
/// admittance at `omega`: `R / (R² + ω²L²)`.
pub fn load_conductance(load: &Load, omega: f64) -> f64 {
    match *load {
        Load::Admittance(y) => y.re,
        Load::RlBranch {
            resistance,
            inductance,
        } => resistance / (resistance * resistance + (omega * inductance).powi(2)),
    }
}

/// Frequency (rad/s) at which RL load branches are converted to an
/// admittance for the mechanical rate estimate: 50 Hz.
pub const NOMINAL_OMEGA: f64 = 2.0 * std::f64::consts::PI * 50.0;

pub fn contraction_certificate(net: &PowerNetwork) -> Result<ContractionCertificate> {
    let violations = validate_network(net);
    if !violations.is_empty() {
        return Err(Error::Structural(violations));
    }
    let ports = ports(net);
    // A capacitor whose load is an RL branch has no damping of its own; the
    // branch port carries that load's resistance instead.
    let lambda_min_r = ports
        .iter()
        .filter(|p| !(p.role == PortRole::Capacitor && p.damping == 0.0))
        .flat_map(|p| {
            let stator = match net.edges[p.edge].kind {
                EdgeKind::Sg(sg) => Some(sg.stator_resistance),
                _ => None,
            };
            std::iter::once(p.damping).chain(stator)
        })
        .fold(f64::INFINITY, f64::min);
    let hessian_floor_a = ports
        .iter()
        .flat_map(|p| {
            let stator = match net.edges[p.edge].kind {
                EdgeKind::Sg(sg) => Some(1.0 / sg.stator_inductance),
                _ => None,
            };
            std::iter::once(1.0 / p.storage).chain(stator)
        })
        .fold(f64::INFINITY, f64::min);

    let min_conductance = net
        .edges
        .iter()
        .filter_map(|e| match &e.kind {
            EdgeKind::Shunt(s) => Some(load_conductance(&s.load, NOMINAL_OMEGA)),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    let max_inertia = net
        .generators()
        .map(|(_, p)| p.inertia)
        .fold(f64::NEG_INFINITY, f64::max);
    let remark_estimate = if max_inertia.is_finite() && min_conductance.is_finite() {
        min_conductance / max_inertia
    } else {
        f64::NAN
    };

    Ok(ContractionCertificate {
        lambda_min_r,
        hessian_floor_a,
        rate_c: hessian_floor_a * lambda_min_r,
        remark_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sg() -> SgParams {
        SgParams {
            inertia: 1.0,
            damping: 1.0,
            torque: 0.0,
            stator_resistance: 1.0,
            stator_inductance: 1.0,
            flux: 1.0,
            pole_pairs: 1,
        }
    }

    fn shunt(c: f64, g: f64) -> ShuntParams {
        ShuntParams {
            capacitance: c,
            load: Load::Admittance(Complex64::new(g, 0.0)),
        }
    }

    #[test]
    fn single_sg_matrix() {
        let net = PowerNetwork::new(1, vec![Edge::sg(0, sg()), Edge::shunt(0, shunt(1.0, 1.0))]);
        let w = assemble_network_matrix(&net).unwrap();
        assert_eq!(w.w, DMatrix::from_row_slice(2, 2, &[0, 1, -1, 0]));
    }

    #[test]
    fn zero_capacitance_is_named() {
        let net = PowerNetwork::new(1, vec![Edge::sg(0, sg()), Edge::shunt(0, shunt(0.0, 1.0))]);
        let v = validate_network(&net);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].location, Location::Edge(1));
        assert!(v[0].message.contains("capacitance"));
    }

    #[test]
    fn double_capacitor_flagged_once() {
        let net = PowerNetwork::new(
            1,
            vec![
                Edge::sg(0, sg()),
                Edge::shunt(0, shunt(1.0, 1.0)),
                Edge::shunt(0, shunt(1.0, 1.0)),
            ],
        );
        let v = validate_network(&net);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].location, Location::Bus(BusId(0)));
    }

    #[test]
    fn missing_capacitor_and_undefined_endpoint() {
        let net = PowerNetwork::new(
            2,
            vec![
                Edge::shunt(0, shunt(1.0, 1.0)),
                Edge::line(0, 1, LineParams { resistance: 1.0, inductance: 1.0 }),
                Edge::line(0, 5, LineParams { resistance: 1.0, inductance: 1.0 }),
            ],
        );
        let v = validate_network(&net);
        assert!(v.iter().any(|x| x.location == Location::Bus(BusId(1))));
        assert!(v.iter().any(|x| x.location == Location::Edge(2)));
        assert!(matches!(assemble_network_matrix(&net), Err(Error::Structural(_))));
    }

    #[test]
    fn disconnected_buses() {
        let net = PowerNetwork::new(
            2,
            vec![Edge::shunt(0, shunt(1.0, 1.0)), Edge::shunt(1, shunt(1.0, 1.0))],
        );
        let v = validate_network(&net);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].location, Location::Network);
    }

    #[test]
    fn synthetic_certificate_minima() {
        // D²H diagonal {1/C, 1/J, 1/Ls} = {2, 3, 3}; R diagonal {G, F, Rs} = {4, 5, 5}.
        let p = SgParams {
            inertia: 1.0 / 3.0,
            damping: 5.0,
            stator_resistance: 5.0,
            stator_inductance: 1.0 / 3.0,
            ..sg()
        };
        let net = PowerNetwork::new(1, vec![Edge::sg(0, p), Edge::shunt(0, shunt(0.5, 4.0))]);
        let c = contraction_certificate(&net).unwrap();
        assert_eq!(c.hessian_floor_a, 2.0);
        assert_eq!(c.lambda_min_r, 4.0);
        assert_eq!(c.rate_c, 8.0);
    }

    #[test]
    fn rl_branch_adds_port() {
        let net = PowerNetwork::new(
            1,
            vec![
                Edge::sg(0, sg()),
                Edge::shunt(
                    0,
                    ShuntParams {
                        capacitance: 1.0,
                        load: Load::RlBranch { resistance: 2.0, inductance: 3.0 },
                    },
                ),
            ],
        );
        let ps = ports(&net);
        assert_eq!(ps.len(), 3);
        assert_eq!(ps[2].label, "ld2");
        assert_eq!(state_dim(&net), 8);
        let w = assemble_network_matrix(&net).unwrap();
        assert_eq!(w.w, DMatrix::from_row_slice(3, 3, &[0, 1, 0, -1, 0, -1, 0, 1, 0]));
    }
}

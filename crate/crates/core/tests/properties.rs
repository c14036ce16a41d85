//! Property tests over randomly generated networks and states.

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use phgrid::analysis::{horizontal_project, matrix_measure, InnerProductWeight, Projector};
use phgrid::dynamics::System;
use phgrid::io::{network_to_string, parse_network};
use phgrid::netmodel::{
    assemble_network_matrix, state_dim, validate_network, Edge, LineParams, Load, PowerNetwork,
    ShuntParams,
};
use phgrid::scenarios::table_sg;

fn positive() -> impl Strategy<Value = f64> {
    (1e-3f64..1e3).prop_map(|v| (v * 1e6).round() / 1e6 + 1e-3)
}

fn load() -> impl Strategy<Value = Load> {
    prop_oneof![
        (positive(), -1.0f64..1.0).prop_map(|(g, b)| Load::Admittance(Complex64::new(g, b))),
        (positive(), positive()).prop_map(|(r, l)| Load::RlBranch {
            resistance: r,
            inductance: l,
        }),
    ]
}

/// Connected network: a shunt on every bus, a random spanning tree of
/// lines plus extra chords, and generators on a random subset of buses.
fn network() -> impl Strategy<Value = PowerNetwork> {
    (2usize..6).prop_flat_map(|buses| {
        (
            proptest::collection::vec((positive(), load()), buses),
            proptest::collection::vec((0usize..1000, positive(), positive()), buses - 1),
            proptest::collection::vec((0usize..buses, 0usize..buses), 0..3),
            proptest::collection::vec(any::<bool>(), buses),
            any::<bool>(),
        )
            .prop_map(move |(shunts, tree, chords, gens, reversed)| {
                let mut edges = Vec::new();
                for (b, &g) in gens.iter().enumerate() {
                    if g || b == 0 {
                        let mut p = table_sg();
                        p.torque *= 1.0 + b as f64 * 0.1;
                        edges.push(Edge::sg(b, p));
                    }
                }
                for (b, (c, load)) in shunts.into_iter().enumerate() {
                    edges.push(Edge::shunt(b, ShuntParams { capacitance: c, load }));
                }
                let line = |r, l| LineParams {
                    resistance: r,
                    inductance: l,
                };
                for (k, (parent, r, l)) in tree.into_iter().enumerate() {
                    let child = k + 1;
                    let parent = parent % child;
                    edges.push(if reversed {
                        Edge::line(child, parent, line(r, l))
                    } else {
                        Edge::line(parent, child, line(r, l))
                    });
                }
                for (a, b) in chords {
                    if a != b {
                        edges.push(Edge::line(a, b, line(1.0, 0.1)));
                    }
                }
                PowerNetwork::new(buses, edges)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_networks_are_valid_with_skew_w(net in network()) {
        prop_assert!(validate_network(&net).is_empty());
        let w = assemble_network_matrix(&net).unwrap();
        prop_assert!(w.is_skew_symmetric());
        // Every nonzero entry is ±1.
        prop_assert!(w.entries().iter().all(|&(_, _, v)| v == 1.0 || v == -1.0));
        prop_assert_eq!(System::new(net.clone()).unwrap().dim(), state_dim(&net));
    }

    #[test]
    fn network_file_round_trips(net in network()) {
        let text = network_to_string(&net).unwrap();
        let back = parse_network(&text).unwrap();
        prop_assert_eq!(back, net);
    }

    #[test]
    fn projection_is_idempotent_and_contractive(
        net in network(),
        seed in 0u64..1000,
        raw in proptest::collection::vec(-1.0f64..1.0, 64),
    ) {
        let sys = System::new(net).unwrap();
        let n = sys.dim();
        let x = phgrid::scenarios::random_initial(n, seed, 50.0);
        let delta = &raw[..n.min(raw.len())];
        prop_assume!(delta.len() == n);
        let proj = Projector::for_system(&sys);
        let Ok(p1) = horizontal_project(&sys, &x, delta, &proj) else {
            return Ok(());
        };
        let p2 = horizontal_project(&sys, &x, &p1, &proj).unwrap();
        let diff: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| a - b).collect();
        prop_assert!(proj.norm(&diff) <= 1e-12 * proj.norm(&p1).max(f64::MIN_POSITIVE));
        prop_assert!(proj.norm(&p1) <= proj.norm(delta) * (1.0 + 1e-12));
    }

    #[test]
    fn measure_shifts_with_identity_and_vanishes_on_skew(
        re in proptest::collection::vec(-1.0f64..1.0, 9),
        im in proptest::collection::vec(-1.0f64..1.0, 9),
        weights in proptest::collection::vec(0.1f64..10.0, 3),
        shift in -5.0f64..5.0,
    ) {
        let a = DMatrix::from_fn(3, 3, |i, j| Complex64::new(re[3 * i + j], im[3 * i + j]));
        let w = InnerProductWeight::diagonal(&weights).unwrap();
        let mu = matrix_measure(&a, &w).unwrap();
        let shifted = &a + DMatrix::<Complex64>::identity(3, 3).scale(shift);
        prop_assert!((matrix_measure(&shifted, &w).unwrap() - mu - shift).abs() < 1e-10);
        // P⁻¹K with K skew-Hermitian is skew-adjoint in the P inner product.
        let k = (&a - a.adjoint()).scale(0.5);
        let p_inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            3,
            weights.iter().map(|&v| Complex64::new(1.0 / v, 0.0)),
        ));
        prop_assert!(matrix_measure(&(p_inv * k), &w).unwrap().abs() < 1e-10);
    }
}

#![allow(dead_code)]

use nalgebra::dmatrix;
use pcons_core::graph::{DirectedGraph, Network, PinningSet};
use pcons_core::synthesis::{PlantModel, SynthesisConfig};
use pcons_core::Matrix;

pub fn plant1() -> PlantModel {
    PlantModel::new(
        dmatrix![-10.18, 9.98; 10.3, -9.84],
        dmatrix![0.698, -0.26; 0.682, -0.34],
        dmatrix![0.7; 0.7],
        dmatrix![0.7, -0.3; 0.1, 0.6],
        1.0,
        0.9,
        1.2,
    )
    .unwrap()
}

pub fn plant2() -> PlantModel {
    PlantModel::new(
        dmatrix![-13.23, 8.72; 9.41, -11.35],
        dmatrix![0.853, -0.35; 0.841, -0.44],
        dmatrix![0.82; 0.82],
        dmatrix![0.8, -0.4; 0.2, 0.5],
        1.0,
        0.9,
        1.2,
    )
    .unwrap()
}

pub fn e0_ex1() -> Matrix {
    dmatrix![17.1333, 21.8667; 12.3644, -3.5511]
}

pub fn e0_ex2() -> Matrix {
    dmatrix![8.7937, 20.4750; 10.7813, -6.0750]
}

/// Four followers, Laplacian spectrum {0, 3, 1.5 ± 0.866i}, node 1 pinned.
pub fn net1() -> Network {
    let adj = dmatrix![
        0.0, 1.0, 1.0, 0.0;
        0.0, 0.0, 0.0, 1.0;
        1.0, 1.0, 0.0, 0.0;
        1.0, 0.0, 0.0, 0.0
    ];
    Network::new(DirectedGraph::new(adj).unwrap(), PinningSet::new(4, &[0]).unwrap()).unwrap()
}

/// Nine followers with undirected links, node 1 pinned.
pub fn net2() -> Network {
    let links = [(0, 3), (0, 5), (0, 8), (1, 3), (1, 8), (2, 6), (2, 7), (3, 8), (4, 8), (5, 6)];
    let mut edges = Vec::new();
    for (a, b) in links {
        edges.push((a, b));
        edges.push((b, a));
    }
    let g = DirectedGraph::from_edges(9, &edges).unwrap();
    Network::new(g, PinningSet::new(9, &[0]).unwrap()).unwrap()
}

pub fn cfg1() -> SynthesisConfig {
    let mut cfg = SynthesisConfig::new(0.6, 10.0, 15.0, 0.02).unwrap();
    cfg.search.initial_observer_gains = vec![e0_ex1()];
    cfg
}

pub fn cfg2() -> SynthesisConfig {
    let mut cfg = SynthesisConfig::new(0.6, 30.0, 410.0, 0.02).unwrap();
    cfg.search.initial_observer_gains = vec![e0_ex2()];
    cfg
}

pub struct Published {
    pub e: Matrix,
    pub pi: f64,
    pub k: f64,
}

pub fn published_ex1_alg1() -> Published {
    Published { e: dmatrix![-0.1724, 3.7982; 3.7982, 3.0183], pi: 1.05, k: -0.4410 }
}

pub fn published_ex1_alg2() -> Published {
    Published { e: dmatrix![-0.0124, 0.0905; 0.0905, 0.0784], pi: 1.05, k: -0.4410 }
}

pub fn published_ex2_alg1() -> Published {
    Published { e: dmatrix![-0.1345, 2.3014; 2.3014, 2.6486], pi: 0.85, k: -0.4182 }
}

pub fn published_ex2_alg2() -> Published {
    Published { e: dmatrix![-0.0005, 0.0019; 0.0019, 0.0041], pi: 1.20, k: -0.5904 }
}

use pcons_core::sim::{AgentNonlinearity, PinningSign, Protocol, Scenario, SectorNonlinearity};
use pcons_core::Vector;

/// Example 1 loop with the given gains; deterministic initial states in [0, 2].
pub fn scenario1(protocol: Protocol, e: Matrix, k: Matrix) -> Scenario {
    let net = net1();
    let n = net.n();
    let mut state = 0x5eed_u64;
    let mut draw = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        2.0 * ((state >> 11) as f64 / (1u64 << 53) as f64)
    };
    let s0 = Vector::from_fn(2, |_, _| draw());
    let x0 = (0..n).map(|_| Vector::from_fn(2, |_, _| draw())).collect();
    let xhat0 = (0..n).map(|_| Vector::from_fn(2, |_, _| draw())).collect();
    Scenario {
        plant: plant1(),
        graph: net.graph.clone(),
        pinning: net.pinning.clone(),
        protocol,
        pinning_sign: PinningSign::Attractive,
        e,
        k,
        phi: 10.0,
        mu: 15.0,
        sector: SectorNonlinearity::sine_ripple(),
        g: AgentNonlinearity::Oscillating { rate: 0.31 },
        s0,
        x0,
        xhat0,
        horizon: 20.0,
        step: 1e-3,
        record_every: 1,
        clamp: false,
        positivity_tol: 1e-8,
        divergence_bound: 1e10,
    }
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hsue::cli::parse_network;
use hsue::{DualPoint, Edge, LevelGraph, LinkCost, Network, NetworkHierarchy, OdPair};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture(name: &str) -> Network {
    Network::new(parse_network(&fixtures().join(name)).expect("fixture parses"))
        .expect("fixture compiles")
}

pub const ACYCLIC_FIXTURES: [&str; 4] = [
    "two_edge.json",
    "symmetric.json",
    "two_level.json",
    "three_level.json",
];

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * ((self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
    }

    /// Integer in `lo..=hi`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn cost(&mut self) -> LinkCost {
        match self.int(0, 5) {
            0 => LinkCost::constant(self.uniform(0.5, 3.0)).unwrap(),
            1 | 2 => LinkCost::affine(self.uniform(0.2, 2.0), self.uniform(0.1, 1.5)).unwrap(),
            _ => {
                let mu = [1.0, 2.0, 4.0][self.int(0, 2)];
                LinkCost::power(self.uniform(0.5, 2.0), 0.15, self.uniform(0.5, 3.0), mu).unwrap()
            }
        }
    }
}

/// Random layered DAG hierarchy with at most `max_levels` levels and at most
/// `max_plain` plain edges in total. Every inner OD is bound to exactly one
/// portal of the level above.
pub fn random_network(rng: &mut Rng, max_levels: usize, max_plain: usize) -> Network {
    let m = rng.int(1, max_levels);
    let per_level = (max_plain / m).max(2);
    // ODs per level, drawn bottom-up so portals know their targets
    let mut levels: Vec<LevelGraph> = vec![LevelGraph::default(); m];
    let mut gammas = vec![0.0; m];
    let mut next_ods = 0usize;
    for k in (0..m).rev() {
        gammas[k] = rng.uniform(0.2, 2.0);
        let n = rng.int(3, 5);
        let nodes: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let mut edges = Vec::new();
        for i in 0..n - 1 {
            edges.push(Edge::plain(
                &format!("c{i}"),
                &nodes[i],
                &nodes[i + 1],
                rng.cost(),
            ));
        }
        let extra = per_level.saturating_sub(n - 1);
        for j in 0..rng.int(0, extra) {
            let a = rng.int(0, n - 2);
            let b = rng.int(a + 1, n - 1);
            edges.push(Edge::plain(
                &format!("x{j}"),
                &nodes[a],
                &nodes[b],
                rng.cost(),
            ));
        }
        for od in 0..next_ods {
            let a = rng.int(0, n - 2);
            let b = rng.int(a + 1, n - 1);
            edges.push(Edge::portal(
                &format!("p{od}"),
                &nodes[a],
                &nodes[b],
                k + 1,
                od,
            ));
        }
        let n_ods = rng.int(1, 2);
        let od_pairs = (0..n_ods)
            .map(|_| {
                let a = rng.int(0, n - 2);
                let b = rng.int(a + 1, n - 1);
                let demand = if k == 0 {
                    Some(rng.uniform(0.5, 3.0))
                } else {
                    None
                };
                OdPair::new(&nodes[a], &nodes[b], demand)
            })
            .collect();
        levels[k] = LevelGraph {
            nodes,
            edges,
            od_pairs,
        };
        next_ods = n_ods;
    }
    Network::new(NetworkHierarchy {
        gammas,
        levels,
        walk_cap: None,
    })
    .expect("random network is valid")
}

/// Free-flow times plus uniform noise in `[-0.5, 2]`, clamped into every conjugate domain.
pub fn random_times(rng: &mut Rng, net: &Network) -> DualPoint {
    let t = DualPoint::free_flow(net)
        .0
        .iter()
        .zip(net.plain_costs())
        .map(|(t, c)| (t + rng.uniform(-0.5, 2.0)).min(c.domain().upper))
        .collect();
    DualPoint(t)
}

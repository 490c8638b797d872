use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Appliance, Edge, Network};
use crate::error::{Error, Result};

/// Graph shape of a random network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    /// Uniform random spanning tree plus `extra` distinct chords.
    RandomTree { extra: usize },
    /// Fixed zero-based edge list over generators `0..N` then loads `N..N+M`.
    EdgeList { edges: Vec<(usize, usize)> },
}

impl Default for Topology {
    fn default() -> Self {
        Topology::RandomTree { extra: 0 }
    }
}

/// Sampling ranges of a random network; all draws are uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomNetworkParams {
    pub m: (f64, f64),
    pub d: (f64, f64),
    pub b: f64,
    pub y: (f64, f64),
    /// Range of the grounding admittance. `(0, 0)` gives the ungrounded model.
    pub shunt: (f64, f64),
    pub topology: Topology,
}

impl Default for RandomNetworkParams {
    fn default() -> Self {
        Self {
            m: (0.01, 1.0),
            d: (0.007, 0.01),
            b: 1.0,
            y: (0.5, 2.0),
            shunt: (0.05, 0.2),
            topology: Topology::default(),
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64), what: &str) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidArgument(format!("bad {what} range [{lo}, {hi}]")));
    }
    Ok(if lo == hi { lo } else { rng.random_range(lo..=hi) })
}

/// Seeded random network with `generators` generators and `loads` loads.
pub fn random_network(seed: u64, generators: usize, loads: usize, params: &RandomNetworkParams) -> Result<Network> {
    if generators == 0 {
        return Err(Error::InvalidArgument("a network needs at least one generator".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = generators + loads;
    let mut appliances = Vec::with_capacity(total);
    for k in 0..total {
        let m = draw(&mut rng, params.m, "inertia")?;
        let d = draw(&mut rng, params.d, "damping")?;
        let shunt = draw(&mut rng, params.shunt, "shunt")?;
        let a = if k < generators {
            Appliance::generator(format!("g{}", k + 1), m, d, params.b)
        } else {
            Appliance::load(format!("l{}", k - generators + 1), m, d)
        };
        appliances.push(a.with_shunt(shunt));
    }
    let pairs: Vec<(usize, usize)> = match &params.topology {
        Topology::EdgeList { edges } => edges.clone(),
        Topology::RandomTree { extra } => {
            // random attachment order gives a random labeled tree
            let mut order: Vec<usize> = (0..total).collect();
            for i in (1..total).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let mut pairs: Vec<(usize, usize)> = (1..total).map(|k| (order[rng.random_range(0..k)], order[k])).collect();
            let max_edges = total * (total - 1) / 2;
            let target = (pairs.len() + extra).min(max_edges);
            let mut present: std::collections::HashSet<(usize, usize)> = pairs.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
            while pairs.len() < target {
                let (i, j) = (rng.random_range(0..total), rng.random_range(0..total));
                if i != j && present.insert((i.min(j), i.max(j))) {
                    pairs.push((i, j));
                }
            }
            pairs
        }
    };
    let mut edges = Vec::with_capacity(pairs.len());
    for (i, j) in pairs {
        edges.push(Edge {
            i,
            j,
            y: draw(&mut rng, params.y, "admittance")?,
        });
    }
    Network::new(appliances, edges, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powergrid::assemble;

    #[test]
    fn deterministic() {
        let p = RandomNetworkParams::default();
        assert_eq!(random_network(7, 4, 5, &p).unwrap(), random_network(7, 4, 5, &p).unwrap());
        assert_ne!(random_network(7, 4, 5, &p).unwrap(), random_network(8, 4, 5, &p).unwrap());
    }

    #[test]
    fn dimensions() {
        let p = RandomNetworkParams::default();
        let net = random_network(1, 54, 64, &p).unwrap();
        assert_eq!(assemble(&net).unwrap().0.n(), 236);
        assert_eq!(assemble(&random_network(1, 2, 1, &p).unwrap()).unwrap().0.n(), 6);
    }

    #[test]
    fn tree_is_connected_with_extra_edges() {
        let p = RandomNetworkParams {
            topology: Topology::RandomTree { extra: 4 },
            ..Default::default()
        };
        let net = random_network(3, 5, 7, &p).unwrap();
        assert!(net.is_connected());
        assert_eq!(net.edges().len(), 11 + 4);
    }

    #[test]
    fn parameters_in_range() {
        let p = RandomNetworkParams::default();
        let net = random_network(11, 6, 9, &p).unwrap();
        for a in net.appliances() {
            assert!((0.01..=1.0).contains(&a.m));
            assert!((0.007..=0.01).contains(&a.d));
            assert!((0.05..=0.2).contains(&a.shunt));
        }
        assert!(net.edges().iter().all(|e| (0.5..=2.0).contains(&e.y)));
    }
}

//! Linearized swing dynamics of generator/load networks, the broadcast AGC
//! controller and local fault scenarios.

mod file;
mod random;

use std::collections::{HashMap, VecDeque};

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::ContinuousLti;

pub use file::{parse_network, read_network, write_network};
pub use random::{random_network, RandomNetworkParams, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Generator,
    Load,
}

/// A rotary appliance `θ̇ = ω`, `m ω̇ = -d ω - b u - Σ_j Y_ij (θ_i - θ_j) - g θ_i`.
///
/// `b` is ignored for loads. `shunt` (`g`) is an admittance to the reference
/// bus; zero reproduces the ungrounded swing model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appliance {
    pub id: String,
    pub kind: Kind,
    pub m: f64,
    pub d: f64,
    pub b: f64,
    pub shunt: f64,
}

impl Appliance {
    pub fn generator(id: impl Into<String>, m: f64, d: f64, b: f64) -> Self {
        Self {
            id: id.into(),
            kind: Kind::Generator,
            m,
            d,
            b,
            shunt: 0.0,
        }
    }

    pub fn load(id: impl Into<String>, m: f64, d: f64) -> Self {
        Self {
            id: id.into(),
            kind: Kind::Load,
            m,
            d,
            b: 0.0,
            shunt: 0.0,
        }
    }

    pub fn with_shunt(mut self, shunt: f64) -> Self {
        self.shunt = shunt;
        self
    }
}

/// Undirected admittance edge between appliance positions `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub y: f64,
}

/// Generators and loads with their admittance graph and the assignment of
/// each load to a generator's subsystem.
///
/// Appliances are stored generators first; `partition[k]` is the generator
/// position owning load `k` (load positions counted from zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    appliances: Vec<Appliance>,
    edges: Vec<Edge>,
    partition: Vec<usize>,
}

impl Network {
    /// Validates and normalizes a network. Generators are moved in front of
    /// the loads (relative order kept) and edge endpoints are remapped. When
    /// `partition` is `None`, each load joins the generator nearest in hop
    /// count, ties going to the lower generator position.
    ///
    /// Edge endpoints and partition entries refer to positions in the input
    /// `appliances` list; a partition entry is `(load position, generator position)`.
    pub fn new(appliances: Vec<Appliance>, edges: Vec<Edge>, partition: Option<Vec<(usize, usize)>>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (k, a) in appliances.iter().enumerate() {
            if let Some(prev) = seen.insert(a.id.as_str(), k) {
                return Err(Error::Network(format!("appliance id '{}' used at positions {prev} and {k}", a.id)));
            }
            check_appliance(a)?;
        }
        let n_gen = appliances.iter().filter(|a| a.kind == Kind::Generator).count();
        if n_gen == 0 {
            return Err(Error::Network("network has no generator".into()));
        }
        let mut order: Vec<usize> = (0..appliances.len()).filter(|&k| appliances[k].kind == Kind::Generator).collect();
        order.extend((0..appliances.len()).filter(|&k| appliances[k].kind == Kind::Load));
        let mut position = vec![0; appliances.len()];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let total = appliances.len();
        let mut pairs = HashMap::new();
        let mut mapped = Vec::with_capacity(edges.len());
        for e in &edges {
            if e.i >= total || e.j >= total {
                return Err(Error::Network(format!("edge ({}, {}) refers to a missing appliance", e.i, e.j)));
            }
            if e.i == e.j {
                return Err(Error::Network(format!("self-loop at appliance '{}'", appliances[e.i].id)));
            }
            if !(e.y.is_finite() && e.y > 0.0) {
                return Err(Error::Network(format!(
                    "edge '{}'-'{}' has non-positive admittance {}",
                    appliances[e.i].id, appliances[e.j].id, e.y
                )));
            }
            let key = (e.i.min(e.j), e.i.max(e.j));
            if pairs.insert(key, ()).is_some() {
                return Err(Error::Network(format!(
                    "duplicate edge '{}'-'{}'",
                    appliances[key.0].id, appliances[key.1].id
                )));
            }
            mapped.push(Edge {
                i: position[e.i],
                j: position[e.j],
                y: e.y,
            });
        }
        let appliances: Vec<Appliance> = order.iter().map(|&k| appliances[k].clone()).collect();
        let mut net = Self {
            appliances,
            edges: mapped,
            partition: Vec::new(),
        };
        let n_load = total - n_gen;
        net.partition = match partition {
            None => net.nearest_generator_partition(),
            Some(list) => {
                let mut part = vec![usize::MAX; n_load];
                for (load, gen) in list {
                    if load >= total || gen >= total {
                        return Err(Error::Network(format!("partition entry ({load}, {gen}) out of range")));
                    }
                    let (l, g) = (position[load], position[gen]);
                    if l < n_gen {
                        return Err(Error::Network(format!("partition assigns generator '{}' as a load", net.appliances[l].id)));
                    }
                    if g >= n_gen {
                        return Err(Error::Network(format!("partition target '{}' is not a generator", net.appliances[g].id)));
                    }
                    if part[l - n_gen] != usize::MAX {
                        return Err(Error::Network(format!("load '{}' assigned twice", net.appliances[l].id)));
                    }
                    part[l - n_gen] = g;
                }
                if let Some(k) = part.iter().position(|&g| g == usize::MAX) {
                    return Err(Error::Network(format!("load '{}' missing from the partition", net.appliances[n_gen + k].id)));
                }
                part
            }
        };
        if !net.is_connected() {
            warn!("network graph is disconnected");
        }
        Ok(net)
    }

    pub fn appliances(&self) -> &[Appliance] {
        &self.appliances
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Generator position owning each load.
    pub fn partition(&self) -> &[usize] {
        &self.partition
    }

    pub fn generators(&self) -> usize {
        self.appliances.iter().filter(|a| a.kind == Kind::Generator).count()
    }

    pub fn loads(&self) -> usize {
        self.appliances.len() - self.generators()
    }

    /// State dimension `2 (N + M)`.
    pub fn state_dim(&self) -> usize {
        2 * self.appliances.len()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.appliances.iter().position(|a| a.id == id)
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.appliances.len()];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        adj
    }

    fn hops_from(&self, adj: &[Vec<usize>], source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; adj.len()];
        dist[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.appliances.is_empty() || self.hops_from(&self.adjacency(), 0).iter().all(|&d| d != usize::MAX)
    }

    fn nearest_generator_partition(&self) -> Vec<usize> {
        let adj = self.adjacency();
        let n_gen = self.generators();
        let dists: Vec<Vec<usize>> = (0..n_gen).map(|g| self.hops_from(&adj, g)).collect();
        (n_gen..self.appliances.len())
            .map(|l| {
                // strict comparison keeps the lowest generator on ties; an
                // unreachable load falls back to generator 0
                let mut best = 0;
                for g in 1..n_gen {
                    if dists[g][l] < dists[best][l] {
                        best = g;
                    }
                }
                best
            })
            .collect()
    }

    /// Sub-network on the given generator and load positions with all
    /// boundary edges dropped. Loads keep their generator when it is kept,
    /// otherwise they join the nearest kept generator.
    pub fn subnetwork(&self, generators: &[usize], loads: &[usize]) -> Result<Network> {
        let n_gen = self.generators();
        if generators.is_empty() {
            return Err(Error::Network("isolated area needs at least one generator".into()));
        }
        if let Some(&g) = generators.iter().find(|&&g| g >= n_gen) {
            return Err(Error::Network(format!("position {g} is not a generator")));
        }
        if let Some(&l) = loads.iter().find(|&&l| l < n_gen || l >= self.appliances.len()) {
            return Err(Error::Network(format!("position {l} is not a load")));
        }
        let keep: Vec<usize> = generators.iter().chain(loads).copied().collect();
        let mut local = vec![usize::MAX; self.appliances.len()];
        for (k, &old) in keep.iter().enumerate() {
            if local[old] != usize::MAX {
                return Err(Error::Network(format!("appliance '{}' listed twice in the area", self.appliances[old].id)));
            }
            local[old] = k;
        }
        let appliances = keep.iter().map(|&k| self.appliances[k].clone()).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| local[e.i] != usize::MAX && local[e.j] != usize::MAX)
            .map(|e| Edge {
                i: local[e.i],
                j: local[e.j],
                y: e.y,
            })
            .collect();
        let mut sub = Network::new(appliances, edges, None)?;
        for (k, &l) in loads.iter().enumerate() {
            let owner = self.partition[l - n_gen];
            if local[owner] != usize::MAX {
                sub.partition[k] = local[owner];
            }
        }
        Ok(sub)
    }

    /// Mask over state coordinates keeping every frequency entry.
    pub fn frequency_mask(&self, map: &IndexMap) -> Vec<bool> {
        let mut keep = vec![false; self.state_dim()];
        for &w in &map.omega {
            keep[w] = true;
        }
        keep
    }
}

fn check_appliance(a: &Appliance) -> Result<()> {
    let pos = |v: f64| v.is_finite() && v > 0.0;
    if !pos(a.m) {
        return Err(Error::Network(format!("appliance '{}' has non-positive inertia m = {}", a.id, a.m)));
    }
    if !pos(a.d) {
        return Err(Error::Network(format!("appliance '{}' has non-positive damping d = {}", a.id, a.d)));
    }
    if !a.b.is_finite() || !a.shunt.is_finite() || a.shunt < 0.0 {
        return Err(Error::Network(format!("appliance '{}' has an invalid input gain or shunt", a.id)));
    }
    Ok(())
}

/// Location of each appliance's `(θ, ω)` in the global state.
///
/// Subsystem `i` stacks generator `i` followed by its loads, in load order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMap {
    pub theta: Vec<usize>,
    pub omega: Vec<usize>,
    /// State range of each generator's subsystem.
    pub subsystems: Vec<std::ops::Range<usize>>,
}

impl IndexMap {
    fn build(net: &Network) -> Self {
        let total = net.appliances.len();
        let n_gen = net.generators();
        let mut theta = vec![0; total];
        let mut omega = vec![0; total];
        let mut subsystems = Vec::with_capacity(n_gen);
        let mut next = 0;
        for g in 0..n_gen {
            let start = next;
            let members = std::iter::once(g).chain((0..net.loads()).filter(|&l| net.partition[l] == g).map(|l| n_gen + l));
            for k in members {
                theta[k] = next;
                omega[k] = next + 1;
                next += 2;
            }
            subsystems.push(start..next);
        }
        Self { theta, omega, subsystems }
    }

    pub fn state_dim(&self) -> usize {
        2 * self.theta.len()
    }
}

/// Continuous-time plant `(A^c, B^c, C^c)` with one input and one frequency
/// output per generator.
pub fn assemble(net: &Network) -> Result<(ContinuousLti, IndexMap)> {
    if !net.is_connected() {
        warn!("assembling a disconnected network");
    }
    let map = IndexMap::build(net);
    let n = net.state_dim();
    let n_gen = net.generators();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n_gen);
    let mut c = DMatrix::zeros(n_gen, n);
    for (k, app) in net.appliances.iter().enumerate() {
        if app.m.is_nan() || app.m <= 0.0 {
            return Err(Error::Network(format!("appliance '{}' has non-positive inertia", app.id)));
        }
        let (th, om) = (map.theta[k], map.omega[k]);
        a[(th, om)] = 1.0;
        a[(om, om)] = -app.d / app.m;
        a[(om, th)] = -app.shunt / app.m;
        if app.kind == Kind::Generator {
            b[(om, k)] = -app.b / app.m;
            c[(k, om)] = 1.0;
        }
    }
    for e in &net.edges {
        for (p, q) in [(e.i, e.j), (e.j, e.i)] {
            let m = net.appliances[p].m;
            let om = map.omega[p];
            a[(om, map.theta[p])] -= e.y / m;
            a[(om, map.theta[q])] += e.y / m;
        }
    }
    Ok((ContinuousLti::new(a, b, c)?, map))
}

/// `F = κ diag(a) 1 1^T`: every generator receives its share of the summed
/// frequency deviation.
pub fn broadcast_agc(generators: usize, kappa: f64, participation: Option<&[f64]>) -> Result<DMatrix<f64>> {
    let a: Vec<f64> = match participation {
        None => vec![1.0; generators],
        Some(p) if p.len() == generators => p.to_vec(),
        Some(p) => return Err(Error::dim("participation factors", generators, p.len())),
    };
    Ok(DMatrix::from_fn(generators, generators, |i, _| kappa * a[i]))
}

/// A local fault at generator position `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    pub alpha: usize,
}

/// `n x 2` basis placing `(θ_α, ω_α)` deflections.
pub fn fault_domain(net: &Network, map: &IndexMap, scenario: &FaultScenario) -> Result<DMatrix<f64>> {
    if scenario.alpha >= net.generators() {
        return Err(Error::Network(format!("fault location {} is not a generator", scenario.alpha)));
    }
    let n = map.state_dim();
    let mut x = DMatrix::zeros(n, 2);
    x[(map.theta[scenario.alpha], 0)] = 1.0;
    x[(map.omega[scenario.alpha], 1)] = 1.0;
    Ok(x)
}

/// Swing model of an isolated area: the sub-network on the given positions
/// with boundary edges dropped.
pub fn isolated_area_model(net: &Network, generators: &[usize], loads: &[usize]) -> Result<(ContinuousLti, IndexMap, Network)> {
    let sub = net.subnetwork(generators, loads)?;
    let (sys, map) = assemble(&sub)?;
    Ok((sys, map, sub))
}

//! Undirected simple graphs for the network games, with the three
//! topologies used in the experiments and a plain edge-list format.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::Rng;

use super::rng::{rng_from_seed, SimRng};
use crate::error::{invalid, Error, Result};

/// Undirected simple graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    adjacency: Vec<Vec<u32>>,
}

impl Network {
    /// Builds a network from an edge list, rejecting self-loops, duplicate
    /// edges and out-of-range endpoints.
    pub fn from_edges(num_nodes: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); num_nodes];
        for &(u, v) in edges {
            if u == v {
                return Err(invalid(format!("self-loop at node {u}")));
            }
            if u as usize >= num_nodes || v as usize >= num_nodes {
                return Err(invalid(format!("edge ({u}, {v}) outside {num_nodes} nodes")));
            }
            if !sets[u as usize].insert(v) {
                return Err(invalid(format!("duplicate edge ({u}, {v})")));
            }
            sets[v as usize].insert(u);
        }
        Ok(Self::from_sets(sets))
    }

    fn from_sets(sets: Vec<BTreeSet<u32>>) -> Self {
        Self {
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.num_edges() as f64 / self.num_nodes() as f64
    }

    pub fn min_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Edges `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (u, nbrs) in self.adjacency.iter().enumerate() {
            for &v in nbrs {
                if (u as u32) < v {
                    out.push((u as u32, v));
                }
            }
        }
        out
    }

    /// Checks simplicity, symmetry and sortedness of the adjacency lists.
    pub fn validate(&self) -> Result<()> {
        for (u, nbrs) in self.adjacency.iter().enumerate() {
            if nbrs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(format!("neighbors of {u} unsorted or duplicated")));
            }
            for &v in nbrs {
                if v as usize == u {
                    return Err(invalid(format!("self-loop at {u}")));
                }
                if self.adjacency[v as usize].binary_search(&(u as u32)).is_err() {
                    return Err(invalid(format!("edge ({u}, {v}) is not symmetric")));
                }
            }
        }
        Ok(())
    }

    /// Writes `# nodes=<N>` followed by one `u v` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# nodes={}", self.num_nodes())?;
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))??;
        let num_nodes: usize = header
            .trim()
            .strip_prefix("# nodes=")
            .ok_or_else(|| Error::Parse(format!("expected '# nodes=<N>' header, got {header:?}")))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad node count: {e}")))?;
        let mut edges = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let mut next = || -> Result<u32> {
                parts
                    .next()
                    .ok_or_else(|| Error::Parse(format!("line {}: expected 'u v'", k + 2)))?
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", k + 2)))
            };
            let (u, v) = (next()?, next()?);
            edges.push((u, v));
        }
        Self::from_edges(num_nodes, &edges)
    }
}

fn lattice_sets(side: usize, periodic: bool) -> Result<Vec<BTreeSet<u32>>> {
    if side < 2 {
        return Err(invalid(format!("lattice side must be >= 2, got {side}")));
    }
    let n = side * side;
    if n > u32::MAX as usize {
        return Err(invalid("lattice too large"));
    }
    let mut sets = vec![BTreeSet::new(); n];
    let id = |r: usize, c: usize| (r * side + c) as u32;
    for r in 0..side {
        for c in 0..side {
            let u = id(r, c);
            let mut link = |v: u32| {
                if v != u {
                    sets[u as usize].insert(v);
                    sets[v as usize].insert(u);
                }
            };
            if c + 1 < side {
                link(id(r, c + 1));
            } else if periodic {
                link(id(r, 0));
            }
            if r + 1 < side {
                link(id(r + 1, c));
            } else if periodic {
                link(id(0, c));
            }
        }
    }
    Ok(sets)
}

/// `side x side` grid with von Neumann neighborhoods. Node `(row, col)` has
/// index `row * side + col`.
pub fn build_square_lattice(side: usize, periodic: bool) -> Result<Network> {
    Ok(Network::from_sets(lattice_sets(side, periodic)?))
}

/// Attaches every isolated node to one uniformly chosen other node.
fn repair_isolated(sets: &mut [BTreeSet<u32>], rng: &mut SimRng) {
    let n = sets.len();
    for u in 0..n {
        if sets[u].is_empty() {
            let mut v = rng.gen_range(0..n - 1);
            if v >= u {
                v += 1;
            }
            sets[u].insert(v as u32);
            sets[v].insert(u as u32);
        }
    }
}

/// Watts-Strogatz rewiring of the periodic square lattice. Edges are visited
/// in sorted `(u, v)` order; each is rewired with probability `rewire_p` by
/// keeping `u` and moving the other end to a uniformly random node that is
/// neither `u` nor already adjacent to it.
pub fn build_small_world(side: usize, rewire_p: f64, seed: u64) -> Result<Network> {
    if !(0.0..=1.0).contains(&rewire_p) {
        return Err(invalid(format!("rewiring probability must lie in [0, 1], got {rewire_p}")));
    }
    let mut sets = lattice_sets(side, true)?;
    let n = sets.len();
    let mut rng = rng_from_seed(seed);
    let original: Vec<(u32, u32)> = Network::from_sets(sets.clone()).edges();
    for (u, v) in original {
        if !rng.gen_bool(rewire_p) {
            continue;
        }
        let (ui, vi) = (u as usize, v as usize);
        if sets[ui].len() >= n - 1 {
            continue;
        }
        let w = loop {
            let w = rng.gen_range(0..n);
            if w != ui && !sets[ui].contains(&(w as u32)) {
                break w;
            }
        };
        sets[ui].remove(&v);
        sets[vi].remove(&u);
        sets[ui].insert(w as u32);
        sets[w].insert(u);
    }
    repair_isolated(&mut sets, &mut rng);
    Ok(Network::from_sets(sets))
}

/// `G(n, p)` with `p = avg_degree / (n - 1)`, sampled by geometric skipping
/// over the pairs `(u, v)`, `v < u`, in row order. Isolated nodes are then
/// attached to one random partner.
pub fn build_erdos_renyi(num_nodes: usize, avg_degree: f64, seed: u64) -> Result<Network> {
    if num_nodes < 2 {
        return Err(invalid(format!("need at least 2 nodes, got {num_nodes}")));
    }
    if !(avg_degree > 0.0) || avg_degree >= (num_nodes - 1) as f64 {
        return Err(invalid(format!(
            "average degree must lie in (0, {}), got {avg_degree}",
            num_nodes - 1
        )));
    }
    let p = avg_degree / (num_nodes - 1) as f64;
    let mut rng = rng_from_seed(seed);
    let mut sets = vec![BTreeSet::new(); num_nodes];
    let log_q = (1.0 - p).ln();
    let (mut u, mut v): (i64, i64) = (1, -1);
    let n = num_nodes as i64;
    while u < n {
        let r: f64 = rng.gen();
        let skip = ((1.0 - r).ln() / log_q).floor();
        v += 1 + if skip.is_finite() { skip.min(n as f64 * n as f64) as i64 } else { n * n };
        while v >= u && u < n {
            v -= u;
            u += 1;
        }
        if u < n {
            sets[u as usize].insert(v as u32);
            sets[v as usize].insert(u as u32);
        }
    }
    repair_isolated(&mut sets, &mut rng);
    Ok(Network::from_sets(sets))
}

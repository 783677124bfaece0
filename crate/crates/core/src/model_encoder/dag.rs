//! Architecture graphs and their Weisfeiler–Lehman hashed embedding.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::stable_hash;

const WL_SALT: u64 = 0x5745_494c_4548_4d4e;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagNode {
    pub id: String,
    pub op_label: String,
}

/// Directed acyclic graph of operations; edges are `(src, dst)` node ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagGraph {
    pub nodes: Vec<DagNode>,
    pub edges: Vec<(String, String)>,
}

impl DagGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, id: &str, op_label: &str) -> Self {
        self.nodes.push(DagNode {
            id: id.into(),
            op_label: op_label.into(),
        });
        self
    }

    pub fn edge(mut self, src: &str, dst: &str) -> Self {
        self.edges.push((src.into(), dst.into()));
        self
    }

    /// A straight chain `labels[0] -> labels[1] -> ...` with ids `n0, n1, ...`.
    pub fn chain(labels: &[&str]) -> Self {
        let mut g = DagGraph::new();
        for (i, l) in labels.iter().enumerate() {
            g = g.node(&format!("n{i}"), l);
            if i > 0 {
                g = g.edge(&format!("n{}", i - 1), &format!("n{i}"));
            }
        }
        g
    }

    /// Check ids and endpoints, then return a topological order of node
    /// indices. A cycle is reported with one witness path.
    pub fn validate(&self) -> Result<Vec<usize>> {
        let mut index = HashMap::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            if index.insert(n.id.as_str(), i).is_some() {
                return Err(invalid!("duplicate DAG node id `{}`", n.id));
            }
        }
        let (succ, _) = self.adjacency(&index)?;
        let mut indeg = vec![0usize; self.nodes.len()];
        for s in &succ {
            for &d in s {
                indeg[d] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(v) = ready.pop() {
            order.push(v);
            for &d in &succ[v] {
                indeg[d] -= 1;
                if indeg[d] == 0 {
                    ready.push(d);
                }
            }
        }
        if order.len() == self.nodes.len() {
            return Ok(order);
        }
        Err(Error::Cycle(self.cycle_witness(&succ, &indeg)))
    }

    fn adjacency(&self, index: &HashMap<&str, usize>) -> Result<(Vec<Vec<usize>>, Vec<Vec<usize>>)> {
        let mut succ = vec![Vec::new(); self.nodes.len()];
        let mut pred = vec![Vec::new(); self.nodes.len()];
        for (s, d) in &self.edges {
            let si = *index
                .get(s.as_str())
                .ok_or_else(|| invalid!("edge source `{s}` is not a node"))?;
            let di = *index
                .get(d.as_str())
                .ok_or_else(|| invalid!("edge target `{d}` is not a node"))?;
            succ[si].push(di);
            pred[di].push(si);
        }
        Ok((succ, pred))
    }

    // Nodes left with positive in-degree after Kahn's pass all lie on or
    // downstream of a cycle; walking predecessors-in-the-remainder from any
    // of them must revisit a node.
    fn cycle_witness(&self, succ: &[Vec<usize>], indeg: &[usize]) -> Vec<String> {
        let remaining: HashSet<usize> = (0..indeg.len()).filter(|&i| indeg[i] > 0).collect();
        let mut pred_in_rest = vec![None; indeg.len()];
        for (s, ds) in succ.iter().enumerate() {
            for &d in ds {
                if remaining.contains(&s) && remaining.contains(&d) && pred_in_rest[d].is_none() {
                    pred_in_rest[d] = Some(s);
                }
            }
        }
        let mut start = *remaining.iter().min().unwrap();
        let mut seen = HashMap::new();
        let mut path = Vec::new();
        while !seen.contains_key(&start) {
            seen.insert(start, path.len());
            path.push(start);
            start = pred_in_rest[start].expect("every remaining node has a remaining predecessor");
        }
        let mut cycle: Vec<usize> = path[seen[&start]..].to_vec();
        cycle.reverse();
        cycle.push(cycle[0]);
        cycle.into_iter().map(|i| self.nodes[i].id.clone()).collect()
    }
}

fn hash_label(text: &str) -> u64 {
    stable_hash(WL_SALT, text)
}

/// Weisfeiler–Lehman subtree features hashed into `dim` signed buckets and
/// L2-normalized. Labels start from each node's `op_label`; every refinement
/// combines a node's label with the sorted labels of its predecessors and
/// successors. Labels from all iterations (including the initial one) are
/// counted. Empty graphs map to the zero vector.
pub fn wl_topo_embedding(dag: &DagGraph, iterations: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(invalid!("embedding width must be positive"));
    }
    dag.validate()?;
    let mut out = vec![0.0; dim];
    if dag.nodes.is_empty() {
        return Ok(out);
    }
    let index: HashMap<&str, usize> = dag
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let (succ, pred) = dag.adjacency(&index)?;

    let mut labels: Vec<String> = dag.nodes.iter().map(|n| n.op_label.clone()).collect();
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for iter in 0..=iterations {
        if iter > 0 {
            labels = (0..labels.len())
                .map(|v| {
                    let mut ins: Vec<&str> = pred[v].iter().map(|&u| labels[u].as_str()).collect();
                    let mut outs: Vec<&str> = succ[v].iter().map(|&u| labels[u].as_str()).collect();
                    ins.sort_unstable();
                    outs.sort_unstable();
                    let sig = format!("{}|<{}|>{}", labels[v], ins.join(","), outs.join(","));
                    format!("{:016x}", hash_label(&sig))
                })
                .collect();
        }
        for l in &labels {
            *counts.entry(hash_label(&format!("{iter}:{l}"))).or_default() += 1;
        }
    }
    for (h, c) in counts {
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        out[bucket] += sign * c as f64;
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(out)
}

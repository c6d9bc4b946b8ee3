//! Pairwise spin systems, pinnings and conditioning.
//!
//! Spins are stored as small indices (`0..q_v`) into each vertex's label
//! list. For the hardcore model index 0 is "unoccupied" and index 1 is
//! "occupied"; for list colorings index `i` is the `i`-th color of the
//! vertex's (sorted, deduplicated) list.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::graph::{Graph, VertexSet};

/// Which model a system was built as. Conditioning keeps the kind, since the
/// model-specific constants are uniform over pinnings.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Hardcore { lambda: f64 },
    Coloring,
    General,
}

/// Partial assignment: vertex id -> spin index.
pub type Pinning = BTreeMap<usize, usize>;

#[derive(Debug, Clone)]
pub struct SpinSystem {
    graph: Graph,
    labels: Vec<Vec<u32>>,
    vertex_weights: Vec<Vec<f64>>,
    /// For `u < v`, row-major table indexed by `(spin_u, spin_v)`.
    edge_tables: BTreeMap<(usize, usize), Vec<f64>>,
    kind: ModelKind,
    /// Vertex id in the system this one was conditioned from (identity for
    /// unconditioned systems).
    origin: Vec<usize>,
    warnings: Vec<String>,
}

/// Largest supported domain size; spins are stored as `u8`.
pub const MAX_DOMAIN: usize = 255;

impl SpinSystem {
    /// General pairwise system. `edge_table(u, v)` must return a row-major
    /// `q_u × q_v` table for every edge `u < v`.
    pub fn general(
        graph: Graph,
        labels: Vec<Vec<u32>>,
        vertex_weights: Vec<Vec<f64>>,
        mut edge_table: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let n = graph.n();
        if labels.len() != n || vertex_weights.len() != n {
            return input(format!("expected {n} domains and vertex tables"));
        }
        for v in 0..n {
            let q = labels[v].len();
            if q == 0 {
                return input(format!("vertex {v} has an empty domain"));
            }
            if q > MAX_DOMAIN {
                return input(format!("vertex {v} has domain size {q} > {MAX_DOMAIN}"));
            }
            if vertex_weights[v].len() != q {
                return input(format!("vertex {v}: field table has wrong length"));
            }
            check_weights(&vertex_weights[v], &format!("vertex {v}"))?;
        }
        let mut edge_tables = BTreeMap::new();
        for (u, v) in graph.edges() {
            let t = edge_table(u, v);
            if t.len() != labels[u].len() * labels[v].len() {
                return input(format!("edge ({u}, {v}): table has wrong size"));
            }
            check_weights(&t, &format!("edge ({u}, {v})"))?;
            edge_tables.insert((u, v), t);
        }
        Ok(SpinSystem {
            origin: (0..n).collect(),
            graph,
            labels,
            vertex_weights,
            edge_tables,
            kind: ModelKind::General,
            warnings: Vec::new(),
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn domain_size(&self, v: usize) -> usize {
        self.labels[v].len()
    }

    pub fn labels(&self, v: usize) -> &[u32] {
        &self.labels[v]
    }

    pub fn vertex_weight(&self, v: usize, a: usize) -> f64 {
        self.vertex_weights[v][a]
    }

    /// `φ_{uv}(a, b)` where `a` is the spin of `u` and `b` that of `v`.
    pub fn edge_weight(&self, u: usize, a: usize, v: usize, b: usize) -> f64 {
        if u < v {
            self.edge_tables[&(u, v)][a * self.labels[v].len() + b]
        } else {
            self.edge_tables[&(v, u)][b * self.labels[u].len() + a]
        }
    }

    /// Original vertex id of each vertex of this system.
    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Unnormalized weight of a full configuration.
    pub fn weight(&self, config: &[usize]) -> f64 {
        let mut w = 1.0;
        for (v, &a) in config.iter().enumerate() {
            w *= self.vertex_weights[v][a];
        }
        for (&(u, v), t) in &self.edge_tables {
            w *= t[config[u] * self.labels[v].len() + config[v]];
        }
        w
    }

    /// Unnormalized conditional weights of the spins at `v` given the spins
    /// of its neighbors in `config`.
    pub fn local_weights(&self, v: usize, config: &[usize]) -> Vec<f64> {
        (0..self.domain_size(v))
            .map(|c| {
                let mut w = self.vertex_weights[v][c];
                for &u in self.graph.neighbors(v) {
                    w *= self.edge_weight(v, c, u, config[u]);
                }
                w
            })
            .collect()
    }

    /// Converts a label-valued assignment into spin indices.
    pub fn pinning_from_labels(&self, labels: &BTreeMap<usize, u32>) -> Result<Pinning> {
        let mut pin = Pinning::new();
        for (&v, &l) in labels {
            if v >= self.n() {
                return input(format!("pinned vertex {v} out of range"));
            }
            let idx = self.labels[v]
                .iter()
                .position(|&x| x == l)
                .ok_or_else(|| Error::Input(format!("label {l} not in domain of vertex {v}")))?;
            pin.insert(v, idx);
        }
        Ok(pin)
    }

    fn check_pinning(&self, pin: &Pinning) -> Result<()> {
        for (&v, &a) in pin {
            if v >= self.n() {
                return input(format!("pinned vertex {v} out of range"));
            }
            if a >= self.domain_size(v) {
                return input(format!("spin {a} out of range at vertex {v}"));
            }
        }
        Ok(())
    }
}

fn check_weights(w: &[f64], what: &str) -> Result<()> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return input(format!("{what}: weights must be finite and nonnegative"));
    }
    Ok(())
}

/// Hardcore model with fugacity `lambda` (spin 1 = occupied).
pub fn hardcore(g: &Graph, lambda: f64) -> Result<SpinSystem> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return input(format!("hardcore fugacity must be positive, got {lambda}"));
    }
    let n = g.n();
    let mut sys = SpinSystem::general(
        g.clone(),
        vec![vec![0, 1]; n],
        vec![vec![1.0, lambda]; n],
        |_, _| vec![1.0, 1.0, 1.0, 0.0],
    )?;
    sys.kind = ModelKind::Hardcore { lambda };
    Ok(sys)
}

/// Uniform proper list colorings. Lists are sorted and deduplicated; a list
/// shorter than `deg + 2` is recorded as a warning.
pub fn list_coloring(g: &Graph, lists: &[Vec<u32>]) -> Result<SpinSystem> {
    let n = g.n();
    if lists.len() != n {
        return input(format!("expected {n} color lists, got {}", lists.len()));
    }
    let labels: Vec<Vec<u32>> = lists
        .iter()
        .map(|l| {
            let mut l = l.clone();
            l.sort_unstable();
            l.dedup();
            l
        })
        .collect();
    let mut warnings = Vec::new();
    for v in 0..n {
        if labels[v].is_empty() {
            return input(format!("vertex {v} has an empty color list"));
        }
        if labels[v].len() < g.degree(v) + 2 {
            warnings.push(format!(
                "vertex {v}: list size {} < deg + 2 = {}",
                labels[v].len(),
                g.degree(v) + 2
            ));
        }
    }
    let fields = labels.iter().map(|l| vec![1.0; l.len()]).collect();
    let table_labels = labels.clone();
    let mut sys = SpinSystem::general(g.clone(), labels, fields, |u, v| {
        let (lu, lv) = (&table_labels[u], &table_labels[v]);
        let mut t = Vec::with_capacity(lu.len() * lv.len());
        for a in lu {
            for b in lv {
                t.push(if a == b { 0.0 } else { 1.0 });
            }
        }
        t
    })?;
    sys.kind = ModelKind::Coloring;
    sys.warnings = warnings;
    Ok(sys)
}

/// Proper `q`-colorings with the common list `1..=q`.
pub fn coloring(g: &Graph, q: u32) -> Result<SpinSystem> {
    list_coloring(g, &vec![(1..=q).collect(); g.n()])
}

/// True iff the pinning has positive marginal mass.
pub fn is_feasible_pinning(sys: &SpinSystem, pin: &Pinning) -> Result<bool> {
    sys.check_pinning(pin)?;
    let n = sys.n();
    let mut config = vec![usize::MAX; n];
    for (&v, &a) in pin {
        config[v] = a;
    }
    for (&v, &a) in pin {
        if sys.vertex_weight(v, a) <= 0.0 {
            return Ok(false);
        }
        for &u in sys.graph.neighbors(v) {
            if let Some(&b) = pin.get(&u) {
                if u < v && sys.edge_weight(v, a, u, b) <= 0.0 {
                    return Ok(false);
                }
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|v| !pin.contains_key(v)).collect();
    Ok(extend(sys, &free, 0, &mut config))
}

/// Depth-first search for a positive-weight completion of `config` on
/// `free[i..]`, pruning assignments with a zero local factor.
fn extend(sys: &SpinSystem, free: &[usize], i: usize, config: &mut [usize]) -> bool {
    if i == free.len() {
        return true;
    }
    let v = free[i];
    for c in 0..sys.domain_size(v) {
        if sys.vertex_weight(v, c) <= 0.0 {
            continue;
        }
        let ok = sys
            .graph
            .neighbors(v)
            .iter()
            .all(|&u| config[u] == usize::MAX || sys.edge_weight(v, c, u, config[u]) > 0.0);
        if ok {
            config[v] = c;
            if extend(sys, free, i + 1, config) {
                config[v] = usize::MAX;
                return true;
            }
        }
    }
    config[v] = usize::MAX;
    false
}

/// The conditional system on `G[V \ Λ]`. Free vertices keep their relative
/// order and are renumbered `0..`; pinned edges are folded into the fields.
pub fn condition(sys: &SpinSystem, pin: &Pinning) -> Result<SpinSystem> {
    if !is_feasible_pinning(sys, pin)? {
        return Err(Error::Domain(format!("infeasible pinning {pin:?}")));
    }
    let free: Vec<usize> = (0..sys.n()).filter(|v| !pin.contains_key(v)).collect();
    let new_id: BTreeMap<usize, usize> = free.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let edges: Vec<(usize, usize)> = sys
        .graph
        .edges()
        .into_iter()
        .filter_map(|(u, v)| Some((*new_id.get(&u)?, *new_id.get(&v)?)))
        .collect();
    let graph = Graph::from_edges(free.len(), &edges)?;
    let mut fields = Vec::with_capacity(free.len());
    for &v in &free {
        let mut psi = sys.vertex_weights[v].clone();
        for &u in sys.graph.neighbors(v) {
            if let Some(&b) = pin.get(&u) {
                for (c, w) in psi.iter_mut().enumerate() {
                    *w *= sys.edge_weight(v, c, u, b);
                }
            }
        }
        fields.push(psi);
    }
    let edge_tables = edges
        .iter()
        .map(|&(a, b)| ((a, b), sys.edge_tables[&(free[a], free[b])].clone()))
        .collect();
    Ok(SpinSystem {
        graph,
        labels: free.iter().map(|&v| sys.labels[v].clone()).collect(),
        vertex_weights: fields,
        edge_tables,
        kind: sys.kind.clone(),
        origin: free.iter().map(|&v| sys.origin[v]).collect(),
        warnings: sys.warnings.clone(),
    })
}

/// The system restricted to the induced subgraph on `keep`, with no
/// boundary pinning (vertices renumbered in increasing order).
pub fn restrict(sys: &SpinSystem, keep: &VertexSet) -> Result<SpinSystem> {
    sys.graph.check_set(keep)?;
    let idx: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let edges: Vec<(usize, usize)> = sys
        .graph
        .edges()
        .into_iter()
        .filter_map(|(u, v)| Some((*idx.get(&u)?, *idx.get(&v)?)))
        .collect();
    let graph = Graph::from_edges(keep.len(), &edges)?;
    let edge_tables = edges
        .iter()
        .map(|&(a, b)| {
            let (u, v) = (keep.as_slice()[a], keep.as_slice()[b]);
            ((a, b), sys.edge_tables[&(u, v)].clone())
        })
        .collect();
    Ok(SpinSystem {
        graph,
        labels: keep.iter().map(|v| sys.labels[v].clone()).collect(),
        vertex_weights: keep.iter().map(|v| sys.vertex_weights[v].clone()).collect(),
        edge_tables,
        kind: sys.kind.clone(),
        origin: keep.iter().map(|v| sys.origin[v]).collect(),
        warnings: sys.warnings.clone(),
    })
}

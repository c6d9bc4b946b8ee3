//! Balanced separators, separator decomposition trees and low-diameter
//! partitions by randomized ball carving.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::audit::stream_rng;
use crate::error::{input, Error, Result};
use crate::graph::{
    ball, connected_components, distance_power, induced_diameter, Diameter, Graph, VertexSet,
};
use crate::par::{self, Execution};

/// Exhaustive separator search is used for vertex sets up to this size.
pub const EXHAUSTIVE_LIMIT: usize = 20;

/// Bags up to this size contribute all their small subsets as candidates.
const BAG_SUBSET_LIMIT: usize = 16;

/// Ordering key for candidate separators: size, then largest remaining
/// component, then the vertex list.
fn separator_key(g: &Graph, u: &VertexSet, s: &VertexSet) -> Option<(usize, usize, Vec<usize>)> {
    let rest = u.difference(s);
    let comps = connected_components(g, &rest).ok()?;
    let largest = comps.iter().map(VertexSet::len).max().unwrap_or(0);
    // Balanced: every component has at most 2|U|/3 vertices.
    (3 * largest <= 2 * u.len()).then(|| (s.len(), largest, s.as_slice().to_vec()))
}

/// Min-fill elimination on `g[u]`; returns the bags `{v} ∪ N_later(v)`.
fn min_fill_bags(g: &Graph, u: &VertexSet) -> Vec<VertexSet> {
    let mut adj: std::collections::BTreeMap<usize, BTreeSet<usize>> = u
        .iter()
        .map(|v| (v, g.neighbors(v).iter().copied().filter(|&w| u.contains(w)).collect()))
        .collect();
    let mut bags = Vec::new();
    while !adj.is_empty() {
        let mut best: Option<(usize, usize, usize)> = None;
        for (&v, nb) in &adj {
            let nbv: Vec<usize> = nb.iter().copied().collect();
            let mut fill = 0;
            for i in 0..nbv.len() {
                for j in i + 1..nbv.len() {
                    if !adj[&nbv[i]].contains(&nbv[j]) {
                        fill += 1;
                    }
                }
            }
            let key = (fill, nb.len(), v);
            if best.map_or(true, |b| key < b) {
                best = Some(key);
            }
        }
        let v = best.expect("nonempty").2;
        let nb: Vec<usize> = adj[&v].iter().copied().collect();
        let mut bag: VertexSet = nb.iter().copied().collect();
        bag.insert(v);
        bags.push(bag);
        for i in 0..nb.len() {
            for j in i + 1..nb.len() {
                adj.get_mut(&nb[i]).unwrap().insert(nb[j]);
                adj.get_mut(&nb[j]).unwrap().insert(nb[i]);
            }
        }
        for w in &nb {
            adj.get_mut(w).unwrap().remove(&v);
        }
        adj.remove(&v);
    }
    bags
}

/// Calls `visit` on every subset of `items` of size `0..=k`, in
/// lexicographic order by size.
fn for_each_subset(items: &[usize], k: usize, mut visit: impl FnMut(&[usize])) {
    fn rec(items: &[usize], start: usize, left: usize, cur: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if left == 0 {
            visit(cur);
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, i + 1, left - 1, cur, visit);
            cur.pop();
        }
    }
    for size in 0..=k.min(items.len()) {
        rec(items, 0, size, &mut Vec::new(), &mut visit);
    }
}

/// A set `S ⊆ U`, `|S| <= budget`, such that every component of
/// `G[U \ S]` has at most `2|U|/3` vertices. Candidates come first from
/// the bags of a min-fill tree decomposition, then (for `|U| <= 20`) from
/// exhaustive search. Among valid candidates the smallest, then the one
/// leaving the smallest largest component, then the lexicographically
/// smallest is returned.
pub fn balanced_separator(g: &Graph, u: &VertexSet, budget: usize) -> Result<Option<VertexSet>> {
    g.check_set(u)?;
    if u.is_empty() {
        return input("separator search on an empty set");
    }
    type Key = (usize, usize, Vec<usize>);
    fn consider(g: &Graph, u: &VertexSet, s: &[usize], best: &mut Option<Key>) {
        if let Some(key) = separator_key(g, u, &VertexSet::from(s.to_vec())) {
            if best.as_ref().map_or(true, |b| key < *b) {
                *best = Some(key);
            }
        }
    }
    let mut best: Option<Key> = None;
    for bag in min_fill_bags(g, u) {
        if bag.len() <= BAG_SUBSET_LIMIT {
            for_each_subset(bag.as_slice(), budget, |s| consider(g, u, s, &mut best));
        } else if bag.len() <= budget {
            consider(g, u, bag.as_slice(), &mut best);
        }
    }
    if best.is_none() && u.len() <= EXHAUSTIVE_LIMIT {
        for_each_subset(u.as_slice(), budget, |s| consider(g, u, s, &mut best));
    }
    Ok(best.map(|(_, _, s)| VertexSet::from(s)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeNode {
    pub u: VertexSet,
    pub s: VertexSet,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Rooted tree of `(U, S)` pairs; node 0 is the root, nodes in
/// breadth-first order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparatorTree {
    pub nodes: Vec<TreeNode>,
}

impl SeparatorTree {
    pub fn height(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Node ids from the root to `id`, inclusive.
    pub fn path_to(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Builds a tree from explicit `(U, S)` choices: `choose(U)` returns the
    /// separator of `U`; children are the components of `G[U \ S]`.
    pub fn from_chooser(
        g: &Graph,
        mut choose: impl FnMut(&VertexSet) -> Result<VertexSet>,
    ) -> Result<Self> {
        let mut nodes: Vec<TreeNode> = Vec::new();
        let mut queue: std::collections::VecDeque<(VertexSet, Option<usize>, usize)> =
            std::collections::VecDeque::new();
        queue.push_back((g.vertices(), None, 0usize));
        while let Some((u, parent, depth)) = queue.pop_front() {
            let s = choose(&u)?;
            if !s.is_subset(&u) {
                return input(format!("separator {s:?} is not inside {u:?}"));
            }
            let id = nodes.len();
            if let Some(p) = parent {
                nodes[p].children.push(id);
            }
            let comps = connected_components(g, &u.difference(&s))?;
            for c in comps {
                queue.push_back((c, Some(id), depth + 1));
            }
            nodes.push(TreeNode {
                u,
                s,
                parent,
                children: Vec::new(),
                depth,
            });
        }
        Ok(SeparatorTree { nodes })
    }
}

/// Recursively splits `V` with balanced separators of size `<= budget`;
/// sets with at most `leaf_size` vertices become leaves `(U, U)`.
pub fn build_separator_tree(g: &Graph, budget: usize, leaf_size: usize) -> Result<SeparatorTree> {
    if budget == 0 {
        return input("separator budget must be >= 1");
    }
    if g.n() == 0 {
        return input("cannot decompose an empty graph");
    }
    let leaf_size = leaf_size.max(1);
    SeparatorTree::from_chooser(g, |u| {
        if u.len() <= leaf_size {
            return Ok(u.clone());
        }
        balanced_separator(g, u, budget)?.ok_or_else(|| Error::SeparatorNotFound {
            component: u.as_slice().to_vec(),
            budget,
        })
    })
}

/// Result of one structural check, with a witness when it fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Re-checks every structural invariant of a separator tree. `budget`
/// (if given) bounds internal separators.
pub fn verify_tree(g: &Graph, tree: &SeparatorTree, budget: Option<usize>) -> VerificationReport {
    let mut checks = Vec::new();
    let n = g.n();
    let root_ok = tree.nodes.first().map(|r| r.u == g.vertices() && r.parent.is_none());
    checks.push(Check::new(
        "root_covers_vertices",
        root_ok == Some(true),
        if root_ok == Some(true) { "" } else { "root is not (V, S_V)" },
    ));

    let bad_sub = tree.nodes.iter().position(|nd| !nd.s.is_subset(&nd.u));
    checks.push(Check::new(
        "separator_inside_set",
        bad_sub.is_none(),
        bad_sub.map_or(String::new(), |i| format!("node {i}")),
    ));

    let bad_leaf = tree.nodes.iter().position(|nd| nd.is_leaf() && nd.s != nd.u);
    checks.push(Check::new(
        "leaves_are_full",
        bad_leaf.is_none(),
        bad_leaf.map_or(String::new(), |i| format!("leaf {i} has S != U")),
    ));

    let mut child_witness = None;
    for (i, nd) in tree.nodes.iter().enumerate() {
        let mut expect = connected_components(g, &nd.u.difference(&nd.s)).unwrap_or_default();
        let mut got: Vec<VertexSet> = nd
            .children
            .iter()
            .filter_map(|&c| tree.nodes.get(c).map(|x| x.u.clone()))
            .collect();
        expect.sort();
        got.sort();
        let parents_ok = nd
            .children
            .iter()
            .all(|&c| tree.nodes.get(c).is_some_and(|x| x.parent == Some(i)));
        if expect != got || !parents_ok {
            child_witness = Some(format!(
                "node {i}: children {got:?}, components of G[U \\ S] {expect:?}"
            ));
            break;
        }
    }
    checks.push(Check::new(
        "children_are_components",
        child_witness.is_none(),
        child_witness.unwrap_or_default(),
    ));

    let mut count = vec![0usize; n];
    for nd in &tree.nodes {
        for v in nd.s.iter().filter(|&v| v < n) {
            count[v] += 1;
        }
    }
    let bad_part = count.iter().position(|&c| c != 1);
    checks.push(Check::new(
        "separators_partition_vertices",
        bad_part.is_none(),
        bad_part.map_or(String::new(), |v| format!("vertex {v} is in {} separators", count[v])),
    ));

    let mut unbalanced = None;
    for nd in &tree.nodes {
        for &c in &nd.children {
            if let Some(ch) = tree.nodes.get(c) {
                if 3 * ch.u.len() > 2 * nd.u.len() {
                    unbalanced = Some(format!(
                        "child {c} has {} of {} vertices",
                        ch.u.len(),
                        nd.u.len()
                    ));
                }
            }
        }
    }
    checks.push(Check::new(
        "balanced",
        unbalanced.is_none(),
        unbalanced.unwrap_or_default(),
    ));

    let h = tree.height();
    let bound = 3.0 * (n.max(1) as f64).log2();
    let height_ok = n < 2 || (h as f64) < bound;
    checks.push(Check::new(
        "height_bound",
        height_ok,
        format!("height {h}, bound 3 log2 n = {bound:.3}"),
    ));

    if let Some(b) = budget {
        let big = tree
            .nodes
            .iter()
            .position(|nd| !nd.is_leaf() && nd.s.len() > b);
        checks.push(Check::new(
            "separator_budget",
            big.is_none(),
            big.map_or(String::new(), |i| format!("node {i} separator exceeds {b}")),
        ));
    }
    VerificationReport { checks }
}

/// Partition of `V` into clusters; `colors[i]` is the carving phase of
/// cluster `i` (clusters of the same phase are non-adjacent in the
/// distance-`2r` power graph).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterPartition {
    pub r: usize,
    pub seed: u64,
    pub attempt: usize,
    pub clusters: Vec<VertexSet>,
    pub colors: Vec<usize>,
}

/// Default number of attempts of [`low_diameter_partition`].
pub const DEFAULT_RETRIES: usize = 64;

/// Radius cap `max(1, floor(1.5 log2 n))` so clusters have power-graph
/// diameter at most `3 log2 n`. Radii are `1 + Geometric(1/2)` truncated
/// at the cap.
fn radius_cap(n: usize) -> usize {
    ((1.5 * (n.max(2) as f64).log2()).floor() as usize).max(1)
}

/// One carving attempt on the power graph `gp`.
fn carve(gp: &Graph, r: usize, seed: u64, attempt: usize) -> ClusterPartition {
    let n = gp.n();
    let mut rng = stream_rng(seed, attempt as u64);
    let cap = radius_cap(n);
    let mut alive = vec![true; n];
    let mut clusters = Vec::new();
    let mut colors = Vec::new();
    let mut phase = 0;
    while alive.iter().any(|&a| a) {
        let mut order: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
        order.shuffle(&mut rng);
        let mut available = alive.clone();
        for c in order {
            if !available[c] {
                continue;
            }
            let mut rho = 1;
            while rho < cap && rng.random_bool(0.5) {
                rho += 1;
            }
            // BFS in gp[available] up to depth rho + 1.
            let mut dist = vec![usize::MAX; n];
            dist[c] = 0;
            let mut frontier = vec![c];
            let mut kernel = vec![c];
            let mut boundary = Vec::new();
            for d in 1..=rho + 1 {
                let mut next = Vec::new();
                for &x in &frontier {
                    for &w in gp.neighbors(x) {
                        if available[w] && dist[w] == usize::MAX {
                            dist[w] = d;
                            next.push(w);
                        }
                    }
                }
                if d <= rho {
                    kernel.extend_from_slice(&next);
                } else {
                    boundary = next.clone();
                }
                frontier = next;
            }
            for &v in &kernel {
                available[v] = false;
                alive[v] = false;
            }
            for &v in &boundary {
                available[v] = false;
            }
            clusters.push(VertexSet::from(kernel));
            colors.push(phase);
        }
        phase += 1;
    }
    ClusterPartition {
        r,
        seed,
        attempt,
        clusters,
        colors,
    }
}

/// Partitions `V` into clusters `V_i` such that each `G[B(V_i, r)]` has
/// diameter at most `6 r log2 n + 2 r` and every vertex lies in at most
/// `2 log2 n` of the balls `B(V_i, r)`. Attempts use streams `0, 1, ...`
/// of `seed`; the first attempt passing [`verify_partition`] is returned.
/// For `n < 10` the bounds are reported but not enforced.
pub fn low_diameter_partition(
    g: &Graph,
    r: usize,
    seed: u64,
    retries: usize,
    exec: Execution,
) -> Result<ClusterPartition> {
    if r == 0 {
        return input("partition radius must be >= 1");
    }
    if g.n() == 0 {
        return input("cannot partition an empty graph");
    }
    let gp = distance_power(g, 2 * r)?;
    let batch = if exec.is_parallel() { 4 } else { 1 };
    let mut attempt = 0;
    while attempt < retries {
        let ids: Vec<usize> = (attempt..(attempt + batch).min(retries)).collect();
        let results = par::map_slice(exec, &ids, |&a| {
            let p = carve(&gp, r, seed, a);
            let ok = verify_partition(g, &p).all_passed();
            (p, ok)
        });
        if let Some((p, _)) = results.into_iter().find(|(_, ok)| *ok) {
            return Ok(p);
        }
        attempt += ids.len();
    }
    Err(Error::Computational(format!(
        "no low-diameter partition passed verification in {retries} attempts"
    )))
}

/// Measured quantities of a partition.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionMeasures {
    pub max_ball_diameter: Option<usize>,
    pub diameter_bound: f64,
    pub max_coverage: usize,
    pub coverage_bound: f64,
    pub max_power_diameter: Option<usize>,
    pub power_diameter_bound: f64,
    pub colors: usize,
    pub enforced: bool,
}

pub fn measure_partition(g: &Graph, p: &ClusterPartition) -> Result<PartitionMeasures> {
    let n = g.n();
    let log = (n.max(2) as f64).log2();
    let r = p.r;
    let gp = distance_power(g, 2 * r.max(1))?;
    let mut max_ball: Option<usize> = Some(0);
    let mut max_pow: Option<usize> = Some(0);
    let mut coverage = vec![0usize; n];
    for c in &p.clusters {
        let b = ball(g, c, r)?;
        for v in b.iter() {
            coverage[v] += 1;
        }
        let d = induced_diameter(g, &b)?;
        max_ball = match (max_ball, d) {
            (Some(m), Diameter::Finite(x)) => Some(m.max(x)),
            _ => None,
        };
        let dp = induced_diameter(&gp, c)?;
        max_pow = match (max_pow, dp) {
            (Some(m), Diameter::Finite(x)) => Some(m.max(x)),
            _ => None,
        };
    }
    Ok(PartitionMeasures {
        max_ball_diameter: max_ball,
        diameter_bound: 6.0 * r as f64 * log + 2.0 * r as f64,
        max_coverage: coverage.iter().copied().max().unwrap_or(0),
        coverage_bound: 2.0 * log,
        max_power_diameter: max_pow,
        power_diameter_bound: 3.0 * log,
        colors: p.colors.iter().copied().max().map_or(0, |m| m + 1),
        enforced: n >= 10,
    })
}

/// Checks that the clusters partition `V`, plus the diameter, coverage and
/// power-graph diameter bounds (the bounds only count as failures when
/// `n >= 10`).
pub fn verify_partition(g: &Graph, p: &ClusterPartition) -> VerificationReport {
    let n = g.n();
    let mut count = vec![0usize; n];
    let mut out_of_range = false;
    for c in &p.clusters {
        for v in c.iter() {
            if v < n {
                count[v] += 1;
            } else {
                out_of_range = true;
            }
        }
    }
    let bad = count.iter().position(|&c| c != 1);
    let mut checks = vec![Check::new(
        "clusters_partition_vertices",
        bad.is_none() && !out_of_range && p.clusters.iter().all(|c| !c.is_empty()),
        bad.map_or(String::new(), |v| format!("vertex {v} is in {} clusters", count[v])),
    )];
    if !checks[0].passed {
        return VerificationReport { checks };
    }
    let m = match measure_partition(g, p) {
        Ok(m) => m,
        Err(e) => {
            checks.push(Check::new("measurement", false, e.to_string()));
            return VerificationReport { checks };
        }
    };
    let within = |x: Option<usize>, b: f64| x.is_some_and(|x| x as f64 <= b + 1e-9);
    let ball_ok = within(m.max_ball_diameter, m.diameter_bound);
    let cov_ok = (m.max_coverage as f64) <= m.coverage_bound + 1e-9;
    let pow_ok = within(m.max_power_diameter, m.power_diameter_bound);
    let note = if m.enforced { "" } else { " (not enforced, n < 10)" };
    checks.push(Check::new(
        "ball_diameter",
        ball_ok || !m.enforced,
        format!(
            "max diam G[B(V_i,r)] = {:?}, bound {:.3}{note}",
            m.max_ball_diameter, m.diameter_bound
        ),
    ));
    checks.push(Check::new(
        "coverage",
        cov_ok || !m.enforced,
        format!("max coverage {}, bound {:.3}{note}", m.max_coverage, m.coverage_bound),
    ));
    checks.push(Check::new(
        "power_graph_diameter",
        pow_ok || !m.enforced,
        format!(
            "max power-graph cluster diameter {:?}, bound {:.3}{note}",
            m.max_power_diameter, m.power_diameter_bound
        ),
    ));
    VerificationReport { checks }
}

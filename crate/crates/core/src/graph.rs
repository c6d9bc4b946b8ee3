//! Undirected simple graphs, vertex sets and the metric operations used by
//! the decomposition code (balls, components, induced diameter, distance
//! powers), plus edge-list ingestion and a few generators.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

/// Ordered set of vertex ids without duplicates.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexSet(Vec<usize>);

impl VertexSet {
    pub fn new() -> Self {
        VertexSet(Vec::new())
    }

    pub fn singleton(v: usize) -> Self {
        VertexSet(vec![v])
    }

    /// All of `0..n`.
    pub fn range(n: usize) -> Self {
        VertexSet((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    /// Position of `v` in the sorted member list.
    pub fn index_of(&self, v: usize) -> Option<usize> {
        self.0.binary_search(&v).ok()
    }

    pub fn insert(&mut self, v: usize) {
        if let Err(pos) = self.0.binary_search(&v) {
            self.0.insert(pos, v);
        }
    }

    pub fn union(&self, other: &VertexSet) -> VertexSet {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        VertexSet(out)
    }

    pub fn intersection(&self, other: &VertexSet) -> VertexSet {
        VertexSet(self.iter().filter(|&v| other.contains(v)).collect())
    }

    pub fn difference(&self, other: &VertexSet) -> VertexSet {
        VertexSet(self.iter().filter(|&v| !other.contains(v)).collect())
    }

    pub fn is_subset(&self, other: &VertexSet) -> bool {
        self.iter().all(|v| other.contains(v))
    }

    pub fn is_disjoint(&self, other: &VertexSet) -> bool {
        self.iter().all(|v| !other.contains(v))
    }
}

impl FromIterator<usize> for VertexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut v: Vec<usize> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        VertexSet(v)
    }
}

impl From<Vec<usize>> for VertexSet {
    fn from(v: Vec<usize>) -> Self {
        v.into_iter().collect()
    }
}

impl<const N: usize> From<[usize; N]> for VertexSet {
    fn from(v: [usize; N]) -> Self {
        v.into_iter().collect()
    }
}

impl fmt::Debug for VertexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

/// Diameter of an induced subgraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Diameter {
    Finite(usize),
    /// The induced subgraph is disconnected.
    Infinite,
}

impl Diameter {
    pub fn finite(self) -> Option<usize> {
        match self {
            Diameter::Finite(d) => Some(d),
            Diameter::Infinite => None,
        }
    }
}

/// Undirected simple graph on vertices `0..n` with sorted adjacency lists.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n())
            .field("edges", &self.edges())
            .finish()
    }
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            adj: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from an edge list. Duplicate edges are merged;
    /// self-loops and out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return input(format!("edge ({u}, {v}) out of range for n = {n}"));
            }
            if u == v {
                return input(format!("self-loop at vertex {u}"));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Graph { adj })
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n() && self.adj[u].binary_search(&v).is_ok()
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, list) in self.adj.iter().enumerate() {
            for &v in list {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn vertices(&self) -> VertexSet {
        VertexSet::range(self.n())
    }

    pub fn check_set(&self, s: &VertexSet) -> Result<()> {
        match s.as_slice().last() {
            Some(&v) if v >= self.n() => {
                input(format!("vertex {v} out of range for n = {}", self.n()))
            }
            _ => Ok(()),
        }
    }

    /// BFS distances from `sources`, restricted to vertices accepted by
    /// `allowed`, stopping at `limit`. Unreached vertices get `usize::MAX`.
    fn bfs(
        &self,
        sources: impl IntoIterator<Item = usize>,
        limit: usize,
        allowed: impl Fn(usize) -> bool,
    ) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        let mut queue = VecDeque::new();
        for s in sources {
            if dist[s] == usize::MAX && allowed(s) {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            if dist[u] >= limit {
                continue;
            }
            for &w in &self.adj[u] {
                if dist[w] == usize::MAX && allowed(w) {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Distances in the whole graph from the set `s` (unreached: `usize::MAX`).
    pub fn distances_from(&self, s: &VertexSet) -> Vec<usize> {
        self.bfs(s.iter(), usize::MAX, |_| true)
    }
}

/// `{v : dist_G(v, s) <= r}`.
pub fn ball(g: &Graph, s: &VertexSet, r: usize) -> Result<VertexSet> {
    g.check_set(s)?;
    let dist = g.bfs(s.iter(), r, |_| true);
    Ok((0..g.n()).filter(|&v| dist[v] <= r).collect())
}

/// `u ∩ ball(g, s, r)`, distances measured in the whole graph.
pub fn ball_within(g: &Graph, u: &VertexSet, s: &VertexSet, r: usize) -> Result<VertexSet> {
    Ok(ball(g, s, r)?.intersection(u))
}

/// Connected components of `g[u]`, ordered by smallest member.
pub fn connected_components(g: &Graph, u: &VertexSet) -> Result<Vec<VertexSet>> {
    g.check_set(u)?;
    let mut seen = vec![false; g.n()];
    let mut out = Vec::new();
    for start in u.iter() {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut i = 0;
        while i < comp.len() {
            let x = comp[i];
            i += 1;
            for &w in g.neighbors(x) {
                if !seen[w] && u.contains(w) {
                    seen[w] = true;
                    comp.push(w);
                }
            }
        }
        out.push(comp.into_iter().collect());
    }
    Ok(out)
}

/// Maximum shortest-path distance within `g[u]`.
pub fn induced_diameter(g: &Graph, u: &VertexSet) -> Result<Diameter> {
    g.check_set(u)?;
    if u.is_empty() {
        return input("diameter of an empty vertex set");
    }
    let mut best = 0;
    for s in u.iter() {
        let dist = g.bfs([s], usize::MAX, |v| u.contains(v));
        for v in u.iter() {
            if dist[v] == usize::MAX {
                return Ok(Diameter::Infinite);
            }
            best = best.max(dist[v]);
        }
    }
    Ok(Diameter::Finite(best))
}

/// Graph with an edge `uv` whenever `1 <= dist_G(u, v) <= k`.
pub fn distance_power(g: &Graph, k: usize) -> Result<Graph> {
    if k == 0 {
        return input("distance power requires k >= 1");
    }
    let mut adj = Vec::with_capacity(g.n());
    for v in 0..g.n() {
        let dist = g.bfs([v], k, |_| true);
        adj.push((0..g.n()).filter(|&w| w != v && dist[w] <= k).collect());
    }
    Ok(Graph { adj })
}

/// Path `0 - 1 - ... - (n-1)`.
pub fn path(n: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    Graph::from_edges(n, &edges).expect("valid path")
}

/// Cycle on `n >= 3` vertices.
pub fn cycle(n: usize) -> Result<Graph> {
    if n < 3 {
        return input("cycle needs at least 3 vertices");
    }
    let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    edges.push((n - 1, 0));
    Graph::from_edges(n, &edges)
}

/// `w × h` grid; vertex `(x, y)` has id `y * w + x`.
pub fn grid(w: usize, h: usize) -> Graph {
    let mut edges = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = y * w + x;
            if x + 1 < w {
                edges.push((v, v + 1));
            }
            if y + 1 < h {
                edges.push((v, v + w));
            }
        }
    }
    Graph::from_edges(w * h, &edges).expect("valid grid")
}

/// Complete `d`-ary tree of height `h` (a single root has height 0), in
/// breadth-first numbering: the children of `v` are `d*v + 1 ..= d*v + d`.
pub fn dary_tree(d: usize, h: usize) -> Result<Graph> {
    if d == 0 {
        return input("tree arity must be >= 1");
    }
    let mut n = 0usize;
    let mut level = 1usize;
    for _ in 0..=h {
        n = n
            .checked_add(level)
            .ok_or_else(|| Error::Input("tree too large".into()))?;
        level = level.saturating_mul(d);
    }
    let edges: Vec<_> = (1..n).map(|v| ((v - 1) / d, v)).collect();
    Graph::from_edges(n, &edges)
}

pub fn complete(n: usize) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            edges.push((u, v));
        }
    }
    Graph::from_edges(n, &edges).expect("valid complete graph")
}

/// Star `K_{1,k}` with center 0.
pub fn star(k: usize) -> Graph {
    let edges: Vec<_> = (1..=k).map(|v| (0, v)).collect();
    Graph::from_edges(k + 1, &edges).expect("valid star")
}

/// Erdős–Rényi `G(n, p)`; reproducible for a given seed.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return input(format!("edge probability {p} outside [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges)
}

/// A parsed edge list: the graph and the original vertex names by id.
#[derive(Debug, Clone)]
pub struct EdgeList {
    pub graph: Graph,
    pub names: Vec<String>,
}

/// Parses whitespace-separated `u v` lines (`#` starts a comment). A line
/// with a single token declares an isolated vertex. If every token is a
/// non-negative integer the integers are used as ids and `n` is one more
/// than the largest; otherwise names get ids in order of first appearance.
pub fn parse_edge_list(text: &str) -> Result<EdgeList> {
    let mut lines: Vec<Vec<&str>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.len() {
            0 => continue,
            1 | 2 => lines.push(toks),
            _ => {
                return input(format!(
                    "line {}: expected `u v`, got {} tokens",
                    lineno + 1,
                    toks.len()
                ))
            }
        }
    }
    let numeric: Option<Vec<Vec<usize>>> = lines
        .iter()
        .map(|toks| toks.iter().map(|t| t.parse::<usize>().ok()).collect())
        .collect();
    let (n, ids, names) = match numeric {
        Some(ids) => {
            let n = ids.iter().flatten().max().map_or(0, |m| m + 1);
            let names = (0..n).map(|i| i.to_string()).collect();
            (n, ids, names)
        }
        None => {
            let mut map: BTreeMap<&str, usize> = BTreeMap::new();
            let mut names = Vec::new();
            let ids = lines
                .iter()
                .map(|toks| {
                    toks.iter()
                        .map(|t| {
                            *map.entry(t).or_insert_with(|| {
                                names.push(t.to_string());
                                names.len() - 1
                            })
                        })
                        .collect()
                })
                .collect();
            (names.len(), ids, names)
        }
    };
    let edges: Vec<(usize, usize)> = ids
        .iter()
        .filter(|l| l.len() == 2)
        .map(|l| (l[0], l[1]))
        .collect();
    if let Some(&(u, _)) = edges.iter().find(|(u, v)| u == v) {
        return input(format!("self-loop at vertex {}", names[u]));
    }
    Ok(EdgeList {
        graph: Graph::from_edges(n, &edges)?,
        names,
    })
}

/// Serializes a graph as a numeric edge list, isolated vertices declared on
/// their own line.
pub fn to_edge_list(g: &Graph) -> String {
    let mut out = String::new();
    for v in 0..g.n() {
        if g.degree(v) == 0 {
            out.push_str(&format!("{v}\n"));
        }
    }
    for (u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_pairs_bfs(g: &Graph, u: &VertexSet) -> Vec<Vec<usize>> {
        // Floyd-Warshall on the induced subgraph as an independent oracle.
        let m = u.len();
        let idx = u.as_slice();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; m]; m];
        for i in 0..m {
            d[i][i] = 0;
            for j in 0..m {
                if g.has_edge(idx[i], idx[j]) {
                    d[i][j] = 1;
                }
            }
        }
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    fn union_find_components(g: &Graph, u: &VertexSet) -> Vec<VertexSet> {
        let mut parent: Vec<usize> = (0..g.n()).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for (a, b) in g.edges() {
            if u.contains(a) && u.contains(b) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in u.iter() {
            let r = find(&mut parent, v);
            groups.entry(r).or_default().push(v);
        }
        let mut out: Vec<VertexSet> = groups.into_values().map(VertexSet::from).collect();
        out.sort_by_key(|s| s.as_slice()[0]);
        out
    }

    #[test]
    fn ball_examples() {
        let p = path(4);
        assert_eq!(ball(&p, &[0].into(), 1).unwrap(), [0, 1].into());
        assert_eq!(ball(&p, &[0].into(), 0).unwrap(), [0].into());
        assert_eq!(ball(&p, &p.vertices(), 5).unwrap(), p.vertices());
        let g = grid(3, 3);
        assert_eq!(ball(&g, &[4].into(), 1).unwrap(), [1, 3, 4, 5, 7].into());
        assert!(ball(&p, &[9].into(), 1).is_err());
    }

    #[test]
    fn components_examples() {
        let p = path(3);
        assert_eq!(
            connected_components(&p, &[0, 2].into()).unwrap(),
            vec![VertexSet::from([0]), VertexSet::from([2])]
        );
        assert!(connected_components(&p, &VertexSet::new()).unwrap().is_empty());
        let g = erdos_renyi(8, 0.2, 3).unwrap();
        assert_eq!(
            connected_components(&g, &g.vertices()).unwrap(),
            union_find_components(&g, &g.vertices())
        );
    }

    #[test]
    fn diameter_examples() {
        let p = path(4);
        assert_eq!(induced_diameter(&p, &p.vertices()).unwrap(), Diameter::Finite(3));
        assert_eq!(induced_diameter(&p, &[2].into()).unwrap(), Diameter::Finite(0));
        assert_eq!(induced_diameter(&p, &[0, 2].into()).unwrap(), Diameter::Infinite);
        assert!(induced_diameter(&p, &VertexSet::new()).is_err());
        let t = dary_tree(2, 3).unwrap();
        assert_eq!(t.n(), 15);
        assert_eq!(induced_diameter(&t, &t.vertices()).unwrap(), Diameter::Finite(6));
    }

    #[test]
    fn distance_power_examples() {
        assert_eq!(distance_power(&path(3), 2).unwrap(), complete(3));
        let p = path(5);
        assert_eq!(distance_power(&p, 1).unwrap(), p);
        assert_eq!(distance_power(&cycle(4).unwrap(), 2).unwrap(), complete(4));
        assert!(distance_power(&p, 0).is_err());
    }

    #[test]
    fn diameter_matches_floyd_warshall_on_small_graphs() {
        for seed in 0..60 {
            let n = 2 + (seed as usize % 9);
            let g = erdos_renyi(n, 0.35, seed).unwrap();
            let u: VertexSet = (0..n).filter(|v| (v + seed as usize) % 3 != 0).collect();
            if u.is_empty() {
                continue;
            }
            let d = all_pairs_bfs(&g, &u);
            let max = d.iter().flatten().copied().max().unwrap();
            let expect = if max >= usize::MAX / 4 {
                Diameter::Infinite
            } else {
                Diameter::Finite(max)
            };
            assert_eq!(induced_diameter(&g, &u).unwrap(), expect, "seed {seed}");
            assert_eq!(
                connected_components(&g, &u).unwrap(),
                union_find_components(&g, &u)
            );
        }
    }

    #[test]
    fn generators() {
        assert_eq!(path(1).edge_count(), 0);
        assert_eq!(cycle(5).unwrap().edge_count(), 5);
        assert_eq!(grid(4, 3).edge_count(), 3 * 3 + 4 * 2);
        assert_eq!(dary_tree(3, 2).unwrap().n(), 13);
        assert_eq!(star(3).max_degree(), 3);
        assert_eq!(complete(5).edge_count(), 10);
        assert_eq!(erdos_renyi(10, 0.5, 1).unwrap(), erdos_renyi(10, 0.5, 1).unwrap());
    }

    #[test]
    fn edge_list_parsing() {
        let el = parse_edge_list("# comment\n0 1\n1 2 # trailing\n\n2 1\n4\n").unwrap();
        assert_eq!(el.graph.n(), 5);
        assert_eq!(el.graph.edges(), vec![(0, 1), (1, 2)]);
        let named = parse_edge_list("a b\nb c\n").unwrap();
        assert_eq!(named.names, vec!["a", "b", "c"]);
        assert_eq!(named.graph, path(3));
        assert!(parse_edge_list("1 1\n").is_err());
        assert!(parse_edge_list("1 2 3\n").is_err());
        let g = grid(3, 2);
        assert_eq!(parse_edge_list(&to_edge_list(&g)).unwrap().graph, g);
    }

    #[test]
    fn vertex_set_ops() {
        let a = VertexSet::from([3, 1, 2, 3]);
        assert_eq!(a.as_slice(), &[1, 2, 3]);
        let b = VertexSet::from([2, 5]);
        assert_eq!(a.union(&b), [1, 2, 3, 5].into());
        assert_eq!(a.intersection(&b), [2].into());
        assert_eq!(a.difference(&b), [1, 3].into());
        assert!(VertexSet::from([1, 3]).is_subset(&a));
    }
}

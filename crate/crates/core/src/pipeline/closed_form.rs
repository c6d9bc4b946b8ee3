//! Model-specific node constants that hold uniformly over pinnings, and
//! the single-site marginal lower bound for list colorings.

use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::exact::{enumerate, GibbsTable};
use crate::graph::{ball_within, VertexSet};
use crate::spin::{ModelKind, Pinning, SpinSystem};

/// `C_{U,S}` for the split `{B_U(S,r), U \ S}` and `C_S` for approximate
/// tensorization on `B_U(S,r)` (variance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeClosedForm {
    pub c_us: f64,
    pub c_s: f64,
}

fn ball_size(sys: &SpinSystem, u: &VertexSet, s: &VertexSet, r: usize) -> Result<usize> {
    if !s.is_subset(u) {
        return input("separator must lie inside U");
    }
    Ok(ball_within(sys.graph(), u, s, r)?.len())
}

/// Hardcore: `C_{U,S} = 2(1+λ)^{|S|}` (the all-empty configuration of `S`
/// has conditional mass at least `(1+λ)^{-|S|}`) and
/// `C_S = (1+λ)^{k-1}` with `k = |B_U(S,r)|`.
pub fn hardcore_node_constants(
    sys: &SpinSystem,
    u: &VertexSet,
    s: &VertexSet,
    r: usize,
) -> Result<NodeClosedForm> {
    let ModelKind::Hardcore { lambda } = *sys.kind() else {
        return Err(Error::Domain("system is not a hardcore model".into()));
    };
    let k = ball_size(sys, u, s, r)?;
    Ok(NodeClosedForm {
        c_us: 2.0 * (1.0 + lambda).powi(s.len() as i32),
        c_s: (1.0 + lambda).powi(k.max(1) as i32 - 1),
    })
}

/// Maximum degree and largest list size of a list coloring whose lists
/// satisfy `|L_v| >= deg(v) + 2`.
pub fn coloring_parameters(sys: &SpinSystem) -> Result<(usize, usize)> {
    if *sys.kind() != ModelKind::Coloring {
        return Err(Error::Domain("system is not a list coloring".into()));
    }
    let g = sys.graph();
    for v in 0..sys.n() {
        if sys.domain_size(v) < g.degree(v) + 2 {
            return Err(Error::Domain(format!(
                "vertex {v} has {} colors but degree {}; need at least degree + 2",
                sys.domain_size(v),
                g.degree(v)
            )));
        }
    }
    let q = (0..sys.n()).map(|v| sys.domain_size(v)).max().unwrap_or(1);
    Ok((g.max_degree(), q))
}

/// `1 / (2^Δ q)`: lower bound on every feasible single-site marginal.
pub fn coloring_marginal_bound(delta: usize, q: usize) -> f64 {
    1.0 / (2f64.powi(delta as i32) * q as f64)
}

/// List colorings: `C_{U,S} = 2(2^Δ q)^{|S|}` and `C_S = (2^Δ q)^{k-1}` with
/// `k = |B_U(S,r)|`.
pub fn coloring_node_constants(
    sys: &SpinSystem,
    u: &VertexSet,
    s: &VertexSet,
    r: usize,
) -> Result<NodeClosedForm> {
    let (delta, q) = coloring_parameters(sys)?;
    let k = ball_size(sys, u, s, r)?;
    let base = 1.0 / coloring_marginal_bound(delta, q);
    Ok(NodeClosedForm {
        c_us: 2.0 * base.powi(s.len() as i32),
        c_s: base.powi(k.max(1) as i32 - 1),
    })
}

/// Closed-form constants for whichever model `sys` is.
pub fn model_node_constants(
    sys: &SpinSystem,
    u: &VertexSet,
    s: &VertexSet,
    r: usize,
) -> Result<NodeClosedForm> {
    match sys.kind() {
        ModelKind::Hardcore { .. } => hardcore_node_constants(sys, u, s, r),
        ModelKind::Coloring => coloring_node_constants(sys, u, s, r),
        ModelKind::General => Err(Error::Domain("no closed form for a general system".into())),
    }
}

/// Smallest conditional single-site marginal over every partial pinning,
/// free vertex and color of positive mass.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalFloor {
    pub bound: f64,
    pub min_marginal: f64,
    /// Number of (pinning, vertex, color) cases checked.
    pub cases: u64,
    pub violations: u64,
    /// A case attaining the minimum: pinning, vertex, spin index.
    pub argmin: Option<(Pinning, usize, usize)>,
}

impl MarginalFloor {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `µ^η_v(c) >= 1/(2^Δ q)` by enumerating all partial pinnings. Each
/// vertex is either left free or pinned to a spin; pinnings are grown one
/// vertex at a time while filtering the compatible configurations, so the
/// total work is `|Ω| · 2^n`.
pub fn coloring_marginal_floor(sys: &SpinSystem) -> Result<MarginalFloor> {
    let (delta, q) = coloring_parameters(sys)?;
    let t = enumerate(sys)?;
    let mut out = MarginalFloor {
        bound: coloring_marginal_bound(delta, q),
        min_marginal: f64::INFINITY,
        cases: 0,
        violations: 0,
        argmin: None,
    };
    let all: Vec<usize> = (0..t.len()).collect();
    let mut pin = vec![None; t.n()];
    floor_rec(&t, 0, &all, &mut pin, &mut out);
    Ok(out)
}

fn floor_rec(
    t: &GibbsTable,
    pos: usize,
    rows: &[usize],
    pin: &mut Vec<Option<usize>>,
    out: &mut MarginalFloor,
) {
    if rows.is_empty() {
        return;
    }
    if pos == t.n() {
        let mass: f64 = rows.iter().map(|&i| t.prob(i)).sum();
        for p in 0..t.n() {
            if pin[p].is_some() {
                continue;
            }
            let mut m = vec![0.0; t.radices()[p]];
            for &i in rows {
                m[t.config(i)[p] as usize] += t.prob(i);
            }
            for (c, &w) in m.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                let x = w / mass;
                out.cases += 1;
                if x < out.bound * (1.0 - 1e-12) {
                    out.violations += 1;
                }
                if x < out.min_marginal {
                    out.min_marginal = x;
                    let verts = t.vertices().as_slice();
                    let pinning = pin
                        .iter()
                        .enumerate()
                        .filter_map(|(j, a)| a.map(|a| (verts[j], a)))
                        .collect();
                    out.argmin = Some((pinning, verts[p], c));
                }
            }
        }
        return;
    }
    pin[pos] = None;
    floor_rec(t, pos + 1, rows, pin, out);
    for c in 0..t.radices()[pos] {
        let sub: Vec<usize> = rows.iter().copied().filter(|&i| t.config(i)[pos] as usize == c).collect();
        pin[pos] = Some(c);
        floor_rec(t, pos + 1, &sub, pin, out);
    }
    pin[pos] = None;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete, path, star, Graph};
    use crate::spin::{coloring, hardcore, list_coloring};

    #[test]
    fn hardcore_formulas() {
        let sys = hardcore(&path(3), 1.0).unwrap();
        let c = hardcore_node_constants(&sys, &VertexSet::range(3), &VertexSet::from([1]), 0).unwrap();
        assert_eq!(c, NodeClosedForm { c_us: 4.0, c_s: 1.0 });
        let tiny = hardcore(&path(3), 1e-12).unwrap();
        let c = hardcore_node_constants(&tiny, &VertexSet::range(3), &VertexSet::from([0, 2]), 0).unwrap();
        assert!((c.c_us - 2.0).abs() < 1e-9 && (c.c_s - 1.0).abs() < 1e-9);
        // With r = 1 the ball {0,1,2} gives k = 3.
        let c = hardcore_node_constants(&sys, &VertexSet::range(3), &VertexSet::from([1]), 1).unwrap();
        assert_eq!(c.c_s, 4.0);
    }

    #[test]
    fn coloring_formulas_and_precondition() {
        // K_{1,3} with 5 colors: Δ = 3, |L| >= deg + 2 everywhere.
        let sys = coloring(&star(3), 5).unwrap();
        let c = coloring_node_constants(&sys, &VertexSet::range(4), &VertexSet::from([0]), 0).unwrap();
        assert_eq!(c.c_us, 80.0);
        assert_eq!(c.c_s, 1.0);
        let bad = coloring(&complete(3), 3).unwrap();
        assert!(matches!(
            coloring_node_constants(&bad, &VertexSet::range(3), &VertexSet::from([0]), 0),
            Err(Error::Domain(_))
        ));
        let hc = hardcore(&path(2), 1.0).unwrap();
        assert!(coloring_parameters(&hc).is_err());
    }

    /// Direct oracle: every partial pinning as an explicit map, marginals
    /// by conditioning.
    fn brute_floor(sys: &SpinSystem) -> f64 {
        use crate::exact::enumerate_pinned;
        use crate::spin::is_feasible_pinning;
        let n = sys.n();
        let mut best = f64::INFINITY;
        let mut digits = vec![0usize; n];
        loop {
            let pin: Pinning = (0..n)
                .filter(|&v| digits[v] > 0)
                .map(|v| (v, digits[v] - 1))
                .collect();
            if pin.len() < n && is_feasible_pinning(sys, &pin).unwrap() {
                let t = enumerate_pinned(sys, &pin, 1 << 20).unwrap();
                for p in 0..t.n() {
                    let mut marg = vec![0.0; t.radices()[p]];
                    for i in 0..t.len() {
                        marg[t.config(i)[p] as usize] += t.prob(i);
                    }
                    for x in marg.into_iter().filter(|&x| x > 0.0) {
                        best = best.min(x);
                    }
                }
            }
            let mut i = 0;
            while i < n {
                digits[i] += 1;
                if digits[i] <= sys.domain_size(i) {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
            if i == n {
                return best;
            }
        }
    }

    #[test]
    fn marginal_floor_on_star() {
        let sys = coloring(&star(3), 5).unwrap();
        let f = coloring_marginal_floor(&sys).unwrap();
        assert!(f.holds());
        assert_eq!(f.bound, 1.0 / 40.0);
        assert!((f.min_marginal - brute_floor(&sys)).abs() < 1e-12);
        // A free leaf next to a free center, the other leaves pinned to two
        // distinct colors: a third color has mass 2/12.
        assert!((f.min_marginal - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn marginal_floor_on_triangle_is_one_third() {
        // Lists of size 4 on a triangle meet deg + 2; the unpinned
        // marginal of 1/4 is the minimum.
        let sys = coloring(&complete(3), 4).unwrap();
        let f = coloring_marginal_floor(&sys).unwrap();
        assert!(f.holds());
        assert!((f.min_marginal - 0.25).abs() < 1e-12);
        assert!((f.min_marginal - brute_floor(&sys)).abs() < 1e-12);
    }

    #[test]
    fn marginal_floor_with_uneven_lists() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (1, 3)]).unwrap();
        let lists = vec![vec![1, 2, 3], vec![1, 2, 3, 4, 5], vec![2, 3, 4], vec![1, 3, 5]];
        let sys = list_coloring(&g, &lists).unwrap();
        let f = coloring_marginal_floor(&sys).unwrap();
        assert!(f.holds());
        assert!((f.min_marginal - brute_floor(&sys)).abs() < 1e-12);
    }
}

//! Recursive composition of approximate-tensorization constants over a
//! separator decomposition tree, model-specific node constants, the
//! spatial-mixing checker and the `φ` recursion solver.
//!
//! For a node `(U, S)` with ball `B = B_U(S, r)` the composer needs
//!
//! * `C_{U,S}`: factorization of `µ^η_U` into the blocks `B` and `U \ S`,
//! * `C_S`: approximate tensorization of `µ^η_B`,
//!
//! uniformly over pinnings `η` outside the region. The multiplier is
//! `A · max_nodes C_S · Π_{path} C_{U',S'}` where `A` is the largest number
//! of balls covering one vertex (`A = 1` when `r = 0`).

pub mod closed_form;
pub mod phi;
pub mod regions;
pub mod ssm;

use serde::{Deserialize, Serialize};

use crate::audit::{audit_blocks, AuditSummary};
use crate::bounds::{crude_multivariable_constant, strong_correlation_constant, weak_correlation_constant, TwoBlockView};
use crate::decomp::SeparatorTree;
use crate::error::{input, Error, Result};
use crate::exact::{enumerate_with_cap, optimal_at_variance, optimal_variance_constant, Functional, GibbsTable};
use crate::graph::{ball_within, VertexSet};
use crate::par::{self, Execution};
use crate::spin::{ModelKind, SpinSystem};

pub use closed_form::{
    coloring_marginal_bound, coloring_marginal_floor, coloring_node_constants, coloring_parameters,
    hardcore_node_constants, model_node_constants, MarginalFloor, NodeClosedForm,
};
pub use phi::{minimal_log_k0, phi_recursion_solve, PhiForm, PhiParams, PhiRow, PhiTable};
pub use regions::{outer_boundary, region_table, region_tables, PinningOptions, RegionTables};
pub use ssm::{ssm_check, ssm_factorization_constant, SsmFactorization, SsmOptions, SsmSample, SsmStatus, SsmEstimate};

/// A way of obtaining a node constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Closed forms for the hardcore model and list colorings (variance).
    ModelClosedForm,
    /// Pointwise ratio bound `|π_X^y(x)/π_X(x) - 1| <= ε < 1/2`.
    MeasuredWeak,
    /// Total-variation bound between conditionals of each block.
    MeasuredStrong,
    /// Uniform single-site influence bound (sites only).
    MeasuredCrude,
    /// Spectral gap of the heat-bath block dynamics (variance only).
    ExactVariance,
}

impl Strategy {
    pub const DEFAULT_ORDER: [Strategy; 4] = [
        Strategy::ModelClosedForm,
        Strategy::MeasuredStrong,
        Strategy::MeasuredCrude,
        Strategy::ExactVariance,
    ];

    pub const ALL: [Strategy; 5] = [
        Strategy::ModelClosedForm,
        Strategy::MeasuredWeak,
        Strategy::MeasuredStrong,
        Strategy::MeasuredCrude,
        Strategy::ExactVariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::ModelClosedForm => "model-closed-form",
            Strategy::MeasuredWeak => "measured-weak",
            Strategy::MeasuredStrong => "measured-strong",
            Strategy::MeasuredCrude => "measured-crude",
            Strategy::ExactVariance => "exact-variance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComposeOptions {
    pub r: usize,
    pub kind: Functional,
    pub strategies: Vec<Strategy>,
    pub pinning: PinningOptions,
    #[serde(skip)]
    pub exec: Execution,
}

impl ComposeOptions {
    pub fn new(r: usize, kind: Functional) -> Self {
        ComposeOptions {
            r,
            kind,
            strategies: Strategy::DEFAULT_ORDER.to_vec(),
            pinning: PinningOptions::default(),
            exec: Execution::default(),
        }
    }
}

/// Default ball radius: 1 for colorings, 0 otherwise.
pub fn default_radius(sys: &SpinSystem) -> usize {
    match sys.kind() {
        ModelKind::Coloring => 1,
        _ => 0,
    }
}

/// Where a node constant came from: a strategy name, `leaf` or `trivial`.
pub type Source = String;

#[derive(Debug, Clone, Serialize)]
pub struct NodeConstants {
    pub node: usize,
    pub u: VertexSet,
    pub s: VertexSet,
    pub ball: VertexSet,
    pub c_us: f64,
    pub c_us_source: Source,
    pub c_s: f64,
    pub c_s_source: Source,
    /// `C_S · Π` of `C_{U',S'}` along the path from the root to this node.
    pub path_product: f64,
    /// Number of boundary pinnings the measured constants were maximized
    /// over (0 if no table was needed).
    pub pinnings: usize,
    pub sampled: bool,
}

/// Largest number of balls `B_U(S, r)` containing one vertex, and the
/// bounds it is compared against.
#[derive(Debug, Clone, Serialize)]
pub struct Coverage {
    pub measured: usize,
    /// `1 + Δ Σ_{i<r} (Δ-1)^i`: vertices within distance `r` of a vertex.
    pub degree_bound: f64,
    /// `height + 1`: nodes whose `U` contains a given vertex.
    pub height_bound: f64,
    /// `4 log2 n`, reported for balanced trees.
    pub balanced_log_bound: Option<f64>,
    pub bound: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport {
    pub kind: Functional,
    pub radius_r: usize,
    pub strategies: Vec<Strategy>,
    pub tree: SeparatorTree,
    pub per_node: Vec<NodeConstants>,
    pub coverage: Coverage,
    pub coverage_a: f64,
    pub composed_c: f64,
    /// True if any node maximized over sampled rather than all pinnings.
    pub sampled: bool,
}

pub fn coverage(sys: &SpinSystem, tree: &SeparatorTree, r: usize) -> Result<Coverage> {
    let g = sys.graph();
    let n = g.n();
    let mut count = vec![0usize; n];
    for node in &tree.nodes {
        for v in ball_within(g, &node.u, &node.s, r)?.iter() {
            count[v] += 1;
        }
    }
    let measured = count.into_iter().max().unwrap_or(0);
    let delta = g.max_degree() as f64;
    let degree_bound = 1.0 + delta * (0..r).map(|i| (delta - 1.0).max(0.0).powi(i as i32)).sum::<f64>();
    let height_bound = (tree.height() + 1) as f64;
    let balanced = tree.nodes.iter().all(|node| {
        node.children
            .iter()
            .all(|&c| 3 * tree.nodes[c].u.len() <= 2 * node.u.len())
    });
    let balanced_log_bound = (balanced && n >= 3).then(|| 4.0 * (n as f64).log2());
    let bound = degree_bound.min(height_bound);
    Ok(Coverage {
        measured,
        degree_bound,
        height_bound,
        balanced_log_bound,
        bound,
        within_bound: measured as f64 <= bound + 1e-12,
    })
}

/// Lazily built conditional tables for a region.
struct Lazy<'a> {
    sys: &'a SpinSystem,
    region: VertexSet,
    opts: &'a PinningOptions,
    tables: Option<RegionTables>,
}

impl<'a> Lazy<'a> {
    fn new(sys: &'a SpinSystem, region: VertexSet, opts: &'a PinningOptions) -> Self {
        Lazy {
            sys,
            region,
            opts,
            tables: None,
        }
    }

    fn get(&mut self) -> Result<&RegionTables> {
        if self.tables.is_none() {
            self.tables = Some(region_tables(self.sys, &self.region, self.opts)?);
        }
        Ok(self.tables.as_ref().unwrap())
    }
}

/// Maximum of `f` over the tables, or `None` if `f` is inapplicable for
/// some table.
fn max_over(tables: &[GibbsTable], mut f: impl FnMut(&GibbsTable) -> Result<Option<f64>>) -> Result<Option<f64>> {
    let mut best: f64 = 1.0;
    for t in tables {
        match f(t)? {
            Some(c) if c.is_finite() => best = best.max(c),
            _ => return Ok(None),
        }
    }
    Ok(Some(best))
}

/// Two-block constant for `(X, Y)` on each table (after marginalizing to
/// `X ∪ Y` when the blocks do not cover the table).
fn two_block(tables: &[GibbsTable], x: &VertexSet, y: &VertexSet, strategy: Strategy, kind: Functional) -> Result<Option<f64>> {
    let xy = x.union(y);
    max_over(tables, |t| {
        let marg;
        let t = if t.vertices() == &xy {
            t
        } else {
            marg = t.marginal(&xy)?;
            &marg
        };
        let view = TwoBlockView::new(t, x, y)?;
        Ok(match strategy {
            Strategy::MeasuredWeak => weak_correlation_constant(&view).constant,
            Strategy::MeasuredStrong => strong_correlation_constant(&view).constant(kind),
            _ => None,
        })
    })
}

fn node_constants(sys: &SpinSystem, tree: &SeparatorTree, id: usize, opts: &ComposeOptions) -> Result<NodeConstants> {
    let node = &tree.nodes[id];
    let (u, s) = (&node.u, &node.s);
    let ball = ball_within(sys.graph(), u, s, opts.r)?;
    let t_far = u.difference(&ball);
    let rest = u.difference(s);
    let closed = if opts.kind == Functional::Variance {
        model_node_constants(sys, u, s, opts.r).ok()
    } else {
        None
    };
    let mut reasons = Vec::new();

    let mut tables_u = Lazy::new(sys, u.clone(), &opts.pinning);
    let (c_us, c_us_source) = if node.is_leaf() || s == u {
        (1.0, "leaf".to_string())
    } else if s.is_empty() || t_far.is_empty() {
        // One block is all of U.
        (1.0, "trivial".to_string())
    } else {
        let mut found = None;
        for &st in &opts.strategies {
            let c = match st {
                Strategy::ModelClosedForm => closed.map(|c| c.c_us),
                Strategy::MeasuredWeak | Strategy::MeasuredStrong => {
                    two_block(&tables_u.get()?.tables, s, &t_far, st, opts.kind)?
                }
                Strategy::MeasuredCrude => None,
                Strategy::ExactVariance if opts.kind == Functional::Variance => {
                    let blocks = [ball.clone(), rest.clone()];
                    let tables = &tables_u.get()?.tables;
                    dense_or_skip(max_over(tables, |t| Ok(Some(optimal_variance_constant(t, &blocks)?))))?
                }
                Strategy::ExactVariance => None,
            };
            if let Some(c) = c {
                found = Some((c.max(1.0), st.name().to_string()));
                break;
            }
            reasons.push(format!("C_US: {} inapplicable", st.name()));
        }
        found.ok_or_else(|| composition_error(id, u, s, &reasons))?
    };

    let mut tables_b = Lazy::new(sys, ball.clone(), &opts.pinning);
    let (c_s, c_s_source) = if ball.len() <= 1 {
        (1.0, "trivial".to_string())
    } else {
        let mut found = None;
        for &st in &opts.strategies {
            let c = match st {
                Strategy::ModelClosedForm => closed.map(|c| c.c_s),
                Strategy::MeasuredWeak | Strategy::MeasuredStrong if ball.len() == 2 => {
                    let x = VertexSet::singleton(ball.as_slice()[0]);
                    let y = VertexSet::singleton(ball.as_slice()[1]);
                    two_block(&tables_b.get()?.tables, &x, &y, st, opts.kind)?
                }
                Strategy::MeasuredWeak | Strategy::MeasuredStrong => None,
                Strategy::MeasuredCrude => max_over(&tables_b.get()?.tables, |t| {
                    if t.n() < 2 {
                        return Ok(Some(1.0));
                    }
                    Ok(crude_multivariable_constant(t, Execution::Sequential)?.constant(opts.kind))
                })?,
                Strategy::ExactVariance if opts.kind == Functional::Variance => {
                    let tables = &tables_b.get()?.tables;
                    dense_or_skip(max_over(tables, |t| Ok(Some(optimal_at_variance(t)?))))?
                }
                Strategy::ExactVariance => None,
            };
            if let Some(c) = c {
                found = Some((c.max(1.0), st.name().to_string()));
                break;
            }
            reasons.push(format!("C_S: {} inapplicable", st.name()));
        }
        found.ok_or_else(|| composition_error(id, u, s, &reasons))?
    };

    let mut pinnings = 0;
    let mut sampled = false;
    for t in [&tables_u.tables, &tables_b.tables].into_iter().flatten() {
        pinnings = pinnings.max(t.tables.len());
        sampled |= t.sampled;
    }
    Ok(NodeConstants {
        node: id,
        u: u.clone(),
        s: s.clone(),
        ball,
        c_us,
        c_us_source,
        c_s,
        c_s_source,
        path_product: f64::NAN,
        pinnings,
        sampled,
    })
}

/// A state space too large for a dense matrix makes the strategy
/// inapplicable rather than failing the composition.
fn dense_or_skip(r: Result<Option<f64>>) -> Result<Option<f64>> {
    match r {
        Err(Error::Resource { .. }) => Ok(None),
        other => other,
    }
}

fn composition_error(node: usize, u: &VertexSet, s: &VertexSet, reasons: &[String]) -> Error {
    Error::Composition {
        node,
        u: u.as_slice().to_vec(),
        s: s.as_slice().to_vec(),
        reason: format!("every strategy was inapplicable ({})", reasons.join("; ")),
    }
}

/// `max_nodes C_S · Π_{path} C_{U',S'}`, filling in each node's
/// `path_product`.
pub fn separator_composition(tree: &SeparatorTree, per_node: &mut [NodeConstants]) -> f64 {
    let mut best: f64 = 1.0;
    for id in 0..per_node.len() {
        let prod: f64 = tree.path_to(id).iter().map(|&p| per_node[p].c_us).product();
        per_node[id].path_product = per_node[id].c_s * prod;
        best = best.max(per_node[id].path_product);
    }
    best
}

/// Composes node constants into an approximate-tensorization multiplier.
pub fn compose_at(sys: &SpinSystem, tree: &SeparatorTree, opts: &ComposeOptions) -> Result<FactorizationReport> {
    if tree.nodes.is_empty() || tree.nodes[0].u != sys.graph().vertices() {
        return input("tree root must cover every vertex of the system");
    }
    if opts.strategies.is_empty() {
        return input("at least one strategy is required");
    }
    let results = par::map_range(opts.exec, tree.nodes.len(), |id| node_constants(sys, tree, id, opts));
    let mut per_node = results.into_iter().collect::<Result<Vec<_>>>()?;
    let cov = coverage(sys, tree, opts.r)?;
    let coverage_a = if opts.r == 0 { 1.0 } else { cov.measured.max(1) as f64 };
    let inner = separator_composition(tree, &mut per_node);
    Ok(FactorizationReport {
        kind: opts.kind,
        radius_r: opts.r,
        strategies: opts.strategies.clone(),
        tree: tree.clone(),
        sampled: per_node.iter().any(|n| n.sampled),
        per_node,
        coverage: cov,
        coverage_a,
        composed_c: coverage_a * inner,
    })
}

/// Audits the composed multiplier as a single-site constant on the exact
/// table of `sys`: `count` random functions plus site indicators.
pub fn audit_report(
    sys: &SpinSystem,
    report: &FactorizationReport,
    count: usize,
    seed: u64,
    cap: u64,
    exec: Execution,
) -> Result<AuditSummary> {
    let t = enumerate_with_cap(sys, cap)?;
    let sites: Vec<VertexSet> = t.vertices().iter().map(VertexSet::singleton).collect();
    audit_blocks(&t, &sites, report.composed_c, report.kind, count, seed, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::AUDIT_TOLERANCE;
    use crate::decomp::build_separator_tree;
    use crate::exact::enumerate;
    use crate::graph::{dary_tree, grid, path, Graph};
    use crate::spin::{coloring, hardcore};

    fn middle_tree(n: usize) -> SeparatorTree {
        let g = path(n);
        build_separator_tree(&g, 1, 1).unwrap()
    }

    #[test]
    fn product_system_composes_to_one() {
        let g = Graph::empty(4);
        let sys = coloring(&g, 3).unwrap();
        let tree = build_separator_tree(&g, 1, 1).unwrap();
        for kind in [Functional::Variance, Functional::Entropy] {
            let mut opts = ComposeOptions::new(0, kind);
            opts.strategies = vec![Strategy::MeasuredStrong, Strategy::MeasuredCrude];
            let rep = compose_at(&sys, &tree, &opts).unwrap();
            assert_eq!(rep.composed_c, 1.0);
            assert!(rep.per_node.iter().all(|n| n.c_us == 1.0 && n.c_s == 1.0));
        }
    }

    #[test]
    fn hardcore_p3_measured_composition_is_valid() {
        let sys = hardcore(&path(3), 1.0).unwrap();
        let tree = middle_tree(3);
        assert_eq!(tree.nodes[0].s, VertexSet::from([1]));
        let mut opts = ComposeOptions::new(0, Functional::Variance);
        opts.strategies = vec![Strategy::MeasuredStrong];
        let rep = compose_at(&sys, &tree, &opts).unwrap();
        assert_eq!(rep.per_node[0].c_us_source, "measured-strong");
        let audit = audit_report(&sys, &rep, 1000, 3, 1 << 20, Execution::Parallel).unwrap();
        assert!(audit.passed(), "{audit:?}");
        let optimal = optimal_at_variance(&enumerate(&sys).unwrap()).unwrap();
        assert!(rep.composed_c >= optimal - 1e-9);
        // The closed form dominates the measured constant.
        let closed = hardcore_node_constants(&sys, &tree.nodes[0].u, &tree.nodes[0].s, 0).unwrap();
        assert_eq!(closed.c_us, 4.0);
        assert!(rep.per_node[0].c_us <= closed.c_us);
    }

    #[test]
    fn closed_form_default_on_hardcore_grid() {
        let g = grid(3, 3);
        let sys = hardcore(&g, 0.5).unwrap();
        let tree = build_separator_tree(&g, 3, 1).unwrap();
        let rep = compose_at(&sys, &tree, &ComposeOptions::new(0, Functional::Variance)).unwrap();
        assert!(rep.per_node.iter().all(|n| n.c_us_source != "measured-strong"));
        let t = enumerate(&sys).unwrap();
        assert!(rep.composed_c >= optimal_at_variance(&t).unwrap() - 1e-9);
        let audit = audit_report(&sys, &rep, 200, 1, 1 << 20, Execution::Parallel).unwrap();
        assert!(audit.passed());
    }

    #[test]
    fn binary_tree_coloring_scheme() {
        // Subtree nodes (T_v, {v}) with singleton separators.
        let g = dary_tree(2, 3).unwrap();
        let sys = coloring(&g, 3).unwrap();
        let tree = SeparatorTree::from_chooser(&g, |u| Ok(VertexSet::singleton(u.as_slice()[0]))).unwrap();
        assert_eq!(tree.nodes.len(), 15);
        let mut opts = ComposeOptions::new(0, Functional::Variance);
        opts.strategies = vec![Strategy::MeasuredStrong, Strategy::ExactVariance];
        let rep = compose_at(&sys, &tree, &opts).unwrap();
        assert!(rep.per_node.iter().all(|n| n.c_s == 1.0));
        assert!(rep.composed_c.is_finite() && rep.composed_c >= 1.0);
        // Height 2 is small enough for the exact optimum.
        let g = dary_tree(2, 2).unwrap();
        let sys = coloring(&g, 3).unwrap();
        let tree = SeparatorTree::from_chooser(&g, |u| Ok(VertexSet::singleton(u.as_slice()[0]))).unwrap();
        let rep = compose_at(&sys, &tree, &opts).unwrap();
        let t = enumerate(&sys).unwrap();
        assert!(rep.composed_c >= optimal_at_variance(&t).unwrap() - 1e-9);
    }

    #[test]
    fn radius_zero_recovers_the_separator_formula() {
        let g = path(6);
        let sys = hardcore(&g, 1.0).unwrap();
        let tree = build_separator_tree(&g, 1, 1).unwrap();
        let rep = compose_at(&sys, &tree, &ComposeOptions::new(0, Functional::Variance)).unwrap();
        assert_eq!(rep.coverage.measured, 1);
        assert_eq!(rep.coverage_a, 1.0);
        let mut nodes = rep.per_node.clone();
        assert_eq!(separator_composition(&rep.tree, &mut nodes).to_bits(), rep.composed_c.to_bits());
    }

    #[test]
    fn ball_composition_on_colorings_is_valid() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let sys = coloring(&g, 4).unwrap();
        let tree = build_separator_tree(&g, 1, 1).unwrap();
        let mut opts = ComposeOptions::new(1, Functional::Variance);
        let rep = compose_at(&sys, &tree, &opts).unwrap();
        assert!(rep.coverage.within_bound);
        assert!(rep.coverage_a >= 1.0);
        assert!(rep.per_node.iter().any(|n| n.c_us_source == "model-closed-form"));
        let t = enumerate(&sys).unwrap();
        assert!(rep.composed_c >= optimal_at_variance(&t).unwrap() - 1e-9);
        // Measured constants on the same tree, both functionals.
        opts.strategies = vec![Strategy::MeasuredStrong, Strategy::MeasuredCrude];
        for kind in [Functional::Variance, Functional::Entropy] {
            opts.kind = kind;
            let rep = compose_at(&sys, &tree, &opts).unwrap();
            let audit = audit_report(&sys, &rep, 300, 2, 1 << 20, Execution::Parallel).unwrap();
            assert!(audit.passed(), "{audit:?}");
            assert!(audit.min_relative_slack >= -AUDIT_TOLERANCE);
        }
    }

    #[test]
    fn composition_error_names_the_node() {
        let sys = hardcore(&path(3), 1.0).unwrap();
        let tree = middle_tree(3);
        let mut opts = ComposeOptions::new(0, Functional::Entropy);
        opts.strategies = vec![Strategy::ModelClosedForm, Strategy::ExactVariance];
        match compose_at(&sys, &tree, &opts) {
            Err(Error::Composition { node, s, .. }) => {
                assert_eq!(node, 0);
                assert_eq!(s, vec![1]);
            }
            other => panic!("expected composition error, got {other:?}"),
        }
    }

    #[test]
    fn execution_modes_agree() {
        let g = path(7);
        let sys = hardcore(&g, 2.0).unwrap();
        let tree = build_separator_tree(&g, 1, 2).unwrap();
        let mut opts = ComposeOptions::new(0, Functional::Entropy);
        opts.strategies = vec![Strategy::MeasuredStrong, Strategy::MeasuredCrude];
        let a = compose_at(&sys, &tree, &opts).unwrap();
        opts.exec = Execution::Sequential;
        let b = compose_at(&sys, &tree, &opts).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(Strategy::parse(s.name()).unwrap(), s);
        }
        assert!(Strategy::parse("nope").is_err());
    }
}

//! Exact enumeration: Gibbs tables, variance/entropy functionals (full,
//! conditional, block), block-dynamics and Glauber transition matrices,
//! spectral gaps and the gap/log-Sobolev comparison bounds.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::graph::VertexSet;
use crate::spin::{condition, Pinning, SpinSystem};

/// Default cap on the raw product of domain sizes enumerated.
pub const DEFAULT_ENUM_CAP: u64 = 1 << 24;

/// Largest state space for which dense transition matrices are built.
pub const MAX_DENSE_STATES: usize = 4096;

/// Function values indexed like the configurations of a [`GibbsTable`].
pub type TestFunction = Vec<f64>;

/// Which functional an inequality is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Functional {
    Variance,
    Entropy,
}

impl Functional {
    pub fn name(self) -> &'static str {
        match self {
            Functional::Variance => "variance",
            Functional::Entropy => "entropy",
        }
    }
}

/// Compensated (Neumaier) sum.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// An exactly enumerated distribution over the positive-weight
/// configurations of a set of vertices, in lexicographic order.
#[derive(Debug, Clone)]
pub struct GibbsTable {
    vertices: VertexSet,
    radices: Vec<usize>,
    configs: Vec<Vec<u8>>,
    codes: Vec<u64>,
    probs: Vec<f64>,
    z: f64,
}

impl GibbsTable {
    /// Builds a table from explicit weights. `vertices` names the
    /// coordinates; zero-weight entries are dropped and duplicates summed.
    pub fn from_weights(
        vertices: VertexSet,
        radices: Vec<usize>,
        entries: impl IntoIterator<Item = (Vec<u8>, f64)>,
    ) -> Result<Self> {
        if radices.len() != vertices.len() {
            return input("one radix per vertex required");
        }
        let mut total: u64 = 1;
        for &r in &radices {
            if r == 0 {
                return input("empty coordinate domain");
            }
            total = total
                .checked_mul(r as u64)
                .ok_or_else(|| Error::Resource {
                    what: "state space".into(),
                    cap: u64::MAX,
                })?;
        }
        let mut acc: BTreeMap<u64, (Vec<u8>, Vec<f64>)> = BTreeMap::new();
        for (c, w) in entries {
            if c.len() != radices.len() || c.iter().zip(&radices).any(|(&a, &r)| a as usize >= r) {
                return input(format!("configuration {c:?} does not fit the radices"));
            }
            if !(w.is_finite() && w >= 0.0) {
                return input("weights must be finite and nonnegative");
            }
            if w > 0.0 {
                let code = encode(&c, &radices);
                acc.entry(code).or_insert_with(|| (c, Vec::new())).1.push(w);
            }
        }
        let mut configs = Vec::with_capacity(acc.len());
        let mut codes = Vec::with_capacity(acc.len());
        let mut weights = Vec::with_capacity(acc.len());
        for (code, (c, ws)) in acc {
            codes.push(code);
            configs.push(c);
            weights.push(neumaier_sum(ws));
        }
        Self::normalize(vertices, radices, configs, codes, weights)
    }

    fn normalize(
        vertices: VertexSet,
        radices: Vec<usize>,
        configs: Vec<Vec<u8>>,
        codes: Vec<u64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let z = neumaier_sum(weights.iter().copied());
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::Domain(format!("partition function is {z}")));
        }
        let probs = weights.iter().map(|w| w / z).collect();
        Ok(GibbsTable {
            vertices,
            radices,
            configs,
            codes,
            probs,
            z,
        })
    }

    /// Number of coordinates (free vertices).
    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    /// Number of positive-probability configurations.
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn vertices(&self) -> &VertexSet {
        &self.vertices
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn config(&self, i: usize) -> &[u8] {
        &self.configs[i]
    }

    pub fn configs(&self) -> &[Vec<u8>] {
        &self.configs
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Partition function of the enumerated system.
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Index of a configuration, if it has positive probability.
    pub fn index_of(&self, config: &[u8]) -> Option<usize> {
        self.codes.binary_search(&encode(config, &self.radices)).ok()
    }

    /// Coordinate positions of the vertices in `b`.
    pub fn positions(&self, b: &VertexSet) -> Result<Vec<usize>> {
        b.iter()
            .map(|v| {
                self.vertices
                    .index_of(v)
                    .ok_or_else(|| Error::Input(format!("vertex {v} is not free in this table")))
            })
            .collect()
    }

    /// Groups configurations by their restriction to the complement of `b`.
    pub fn block_index(&self, b: &VertexSet) -> Result<BlockIndex> {
        let inside = self.positions(b)?;
        let outside: Vec<usize> = (0..self.n()).filter(|p| !inside.contains(p)).collect();
        Ok(self.group_by(&outside))
    }

    /// Groups configurations by the values at `positions`; groups ordered by
    /// those values, members in table order.
    fn group_by(&self, positions: &[usize]) -> BlockIndex {
        let radices: Vec<usize> = positions.iter().map(|&p| self.radices[p]).collect();
        let mut keyed: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut buf = Vec::with_capacity(positions.len());
        for (i, c) in self.configs.iter().enumerate() {
            buf.clear();
            buf.extend(positions.iter().map(|&p| c[p]));
            keyed.entry(encode(&buf, &radices)).or_default().push(i);
        }
        let mut group_of = vec![0; self.len()];
        let mut groups = Vec::with_capacity(keyed.len());
        let mut masses = Vec::with_capacity(keyed.len());
        for (g, members) in keyed.into_values().enumerate() {
            for &i in &members {
                group_of[i] = g;
            }
            masses.push(neumaier_sum(members.iter().map(|&i| self.probs[i])));
            groups.push(members);
        }
        BlockIndex {
            groups,
            group_of,
            masses,
        }
    }

    /// Marginal table on `w` together with the map from each configuration
    /// of `self` to its restriction's index in the marginal.
    pub fn marginal_with_map(&self, w: &VertexSet) -> Result<(GibbsTable, Vec<usize>)> {
        let pos = self.positions(w)?;
        let idx = self.group_by(&pos);
        let radices: Vec<usize> = pos.iter().map(|&p| self.radices[p]).collect();
        let configs: Vec<Vec<u8>> = idx
            .groups
            .iter()
            .map(|g| pos.iter().map(|&p| self.configs[g[0]][p]).collect())
            .collect();
        let codes = configs.iter().map(|c| encode(c, &radices)).collect();
        let mut table = GibbsTable {
            vertices: w.clone(),
            radices,
            configs,
            codes,
            probs: idx.masses.clone(),
            z: 1.0,
        };
        let total = neumaier_sum(table.probs.iter().copied());
        for p in &mut table.probs {
            *p /= total;
        }
        Ok((table, idx.group_of))
    }

    pub fn marginal(&self, w: &VertexSet) -> Result<GibbsTable> {
        Ok(self.marginal_with_map(w)?.0)
    }

    /// Distribution of the coordinates `w` given that the coordinates
    /// outside `w` agree with configuration `i`: (configuration indices,
    /// conditional probabilities).
    pub fn conditional_at(&self, index: &BlockIndex, i: usize) -> (Vec<usize>, Vec<f64>) {
        let g = index.group_of[i];
        let members = index.groups[g].clone();
        let probs = members
            .iter()
            .map(|&j| self.probs[j] / index.masses[g])
            .collect();
        (members, probs)
    }
}

fn encode(config: &[u8], radices: &[usize]) -> u64 {
    config
        .iter()
        .zip(radices)
        .fold(0u64, |acc, (&a, &r)| acc * r as u64 + a as u64)
}

/// Configurations grouped by their value outside a block `B`: each group is
/// the support of one conditional distribution `µ_B^η`.
#[derive(Debug, Clone)]
pub struct BlockIndex {
    pub groups: Vec<Vec<usize>>,
    pub group_of: Vec<usize>,
    pub masses: Vec<f64>,
}

/// Exact Gibbs table of `sys` (all vertices free) with the default cap.
pub fn enumerate(sys: &SpinSystem) -> Result<GibbsTable> {
    enumerate_with_cap(sys, DEFAULT_ENUM_CAP)
}

/// Exact Gibbs table by depth-first enumeration in lexicographic order,
/// pruning zero-weight partial assignments. Fails if the raw product of
/// domain sizes exceeds `cap`.
pub fn enumerate_with_cap(sys: &SpinSystem, cap: u64) -> Result<GibbsTable> {
    let n = sys.n();
    let mut raw: u64 = 1;
    for v in 0..n {
        raw = raw.saturating_mul(sys.domain_size(v) as u64);
        if raw > cap {
            return Err(Error::Resource {
                what: format!("raw state space of {n} vertices"),
                cap,
            });
        }
    }
    let radices: Vec<usize> = (0..n).map(|v| sys.domain_size(v)).collect();
    let mut configs = Vec::new();
    let mut weights = Vec::new();
    let mut config = vec![0usize; n];
    dfs(sys, 0, 1.0, &mut config, &mut configs, &mut weights);
    let codes = configs.iter().map(|c: &Vec<u8>| encode(c, &radices)).collect();
    let vertices = VertexSet::from(sys.origin().to_vec());
    if vertices.len() != n {
        return input("system has repeated origin ids");
    }
    // The table is keyed by original vertex ids; `origin` is increasing, so
    // coordinate order matches the system's vertex order.
    GibbsTable::normalize(vertices, radices, configs, codes, weights)
}

fn dfs(
    sys: &SpinSystem,
    v: usize,
    w: f64,
    config: &mut [usize],
    configs: &mut Vec<Vec<u8>>,
    weights: &mut Vec<f64>,
) {
    if v == sys.n() {
        configs.push(config.iter().map(|&a| a as u8).collect());
        weights.push(w);
        return;
    }
    for c in 0..sys.domain_size(v) {
        let mut f = sys.vertex_weight(v, c);
        for &u in sys.graph().neighbors(v) {
            if u < v && f > 0.0 {
                f *= sys.edge_weight(v, c, u, config[u]);
            }
        }
        if f > 0.0 {
            config[v] = c;
            dfs(sys, v + 1, w * f, config, configs, weights);
        }
    }
}

/// Gibbs table of the conditional distribution `µ^η` on the free vertices,
/// keyed by original vertex ids.
pub fn enumerate_pinned(sys: &SpinSystem, pin: &Pinning, cap: u64) -> Result<GibbsTable> {
    enumerate_with_cap(&condition(sys, pin)?, cap)
}

pub fn mean(t: &GibbsTable, f: &[f64]) -> f64 {
    assert_eq!(f.len(), t.len(), "test function length mismatch");
    neumaier_sum(t.probs.iter().zip(f).map(|(p, x)| p * x))
}

pub fn variance(t: &GibbsTable, f: &[f64]) -> f64 {
    let m = mean(t, f);
    neumaier_sum(t.probs.iter().zip(f).map(|(p, x)| p * (x - m) * (x - m)))
}

pub fn entropy(t: &GibbsTable, f: &[f64]) -> Result<f64> {
    check_nonneg(f)?;
    let m = mean(t, f);
    Ok(entropy_of(t.probs.iter().copied().zip(f.iter().copied()), m))
}

fn check_nonneg(f: &[f64]) -> Result<()> {
    if f.iter().any(|&x| x < 0.0 || x.is_nan()) {
        return input("entropy requires a nonnegative function");
    }
    Ok(())
}

/// `Σ p f log(f / m)` with `0 log 0 = 0`, clamped at 0.
fn entropy_of(pf: impl Iterator<Item = (f64, f64)>, m: f64) -> f64 {
    if m <= 0.0 {
        return 0.0;
    }
    neumaier_sum(pf.map(|(p, x)| if x > 0.0 { p * x * (x / m).ln() } else { 0.0 })).max(0.0)
}

/// `E[Var_B f]` or `E[Ent_B f]` for the block described by `index`.
pub fn expected_block_with(
    t: &GibbsTable,
    index: &BlockIndex,
    f: &[f64],
    kind: Functional,
) -> Result<f64> {
    assert_eq!(f.len(), t.len(), "test function length mismatch");
    if kind == Functional::Entropy {
        check_nonneg(f)?;
    }
    let terms = index.groups.iter().zip(&index.masses).map(|(g, &m)| {
        let m_f = neumaier_sum(g.iter().map(|&i| t.probs[i] * f[i])) / m;
        let inner = match kind {
            Functional::Variance => {
                neumaier_sum(g.iter().map(|&i| t.probs[i] * (f[i] - m_f) * (f[i] - m_f))) / m
            }
            Functional::Entropy => {
                entropy_of(g.iter().map(|&i| (t.probs[i] / m, f[i])), m_f)
            }
        };
        m * inner
    });
    Ok(neumaier_sum(terms))
}

/// `E[Var_B f]` or `E[Ent_B f]`: the average over outer pinnings of the
/// conditional functional on `b`.
pub fn expected_block_functional(
    t: &GibbsTable,
    b: &VertexSet,
    f: &[f64],
    kind: Functional,
) -> Result<f64> {
    expected_block_with(t, &t.block_index(b)?, f, kind)
}

/// `E_B f` as a function on configurations.
pub fn block_mean_with(t: &GibbsTable, index: &BlockIndex, f: &[f64]) -> TestFunction {
    assert_eq!(f.len(), t.len(), "test function length mismatch");
    let means: Vec<f64> = index
        .groups
        .iter()
        .zip(&index.masses)
        .map(|(g, &m)| neumaier_sum(g.iter().map(|&i| t.probs[i] * f[i])) / m)
        .collect();
    index.group_of.iter().map(|&g| means[g]).collect()
}

pub fn block_mean(t: &GibbsTable, b: &VertexSet, f: &[f64]) -> Result<TestFunction> {
    Ok(block_mean_with(t, &t.block_index(b)?, f))
}

/// Sum over single sites of `E[Var_v f]` (or entropy).
pub fn site_sum(t: &GibbsTable, f: &[f64], kind: Functional) -> Result<f64> {
    let mut terms = Vec::with_capacity(t.n());
    for v in t.vertices().iter() {
        terms.push(expected_block_functional(t, &VertexSet::singleton(v), f, kind)?);
    }
    Ok(neumaier_sum(terms))
}

/// Residuals of the law of total variance/entropy
/// `E[F_A f] - E[F_B f] - E[F_A(E_B f)]` for `B ⊆ A`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityResidual {
    pub variance: f64,
    /// Present only when `f >= 0`.
    pub entropy: Option<f64>,
}

pub fn decomposition_identity_check(
    t: &GibbsTable,
    a: &VertexSet,
    b: &VertexSet,
    f: &[f64],
) -> Result<IdentityResidual> {
    if !b.is_subset(a) {
        return input("identity check requires B ⊆ A");
    }
    let ia = t.block_index(a)?;
    let ib = t.block_index(b)?;
    let eb = block_mean_with(t, &ib, f);
    let residual = |kind| -> Result<f64> {
        Ok(expected_block_with(t, &ia, f, kind)?
            - expected_block_with(t, &ib, f, kind)?
            - expected_block_with(t, &ia, &eb, kind)?)
    };
    let entropy = if f.iter().all(|&x| x >= 0.0) {
        Some(residual(Functional::Entropy)?)
    } else {
        None
    };
    Ok(IdentityResidual {
        variance: residual(Functional::Variance)?,
        entropy,
    })
}

/// `Σ E[F_{B_i} f] - E[F_B f]` for `B = ∪ B_i`; nonnegative whenever the
/// parts are pairwise non-adjacent.
pub fn subadditivity_slack(
    t: &GibbsTable,
    parts: &[VertexSet],
    f: &[f64],
    kind: Functional,
) -> Result<f64> {
    let union = parts.iter().fold(VertexSet::new(), |acc, p| acc.union(p));
    let mut sum = Vec::new();
    for p in parts {
        sum.push(expected_block_functional(t, p, f, kind)?);
    }
    Ok(neumaier_sum(sum) - expected_block_functional(t, &union, f, kind)?)
}

/// `E[F_A(E_{A∩B} f)] - E[F_A(E_B f)]`; nonnegative when there are no edges
/// between `A` and `B \ A`.
pub fn projection_slack(
    t: &GibbsTable,
    a: &VertexSet,
    b: &VertexSet,
    f: &[f64],
    kind: Functional,
) -> Result<f64> {
    let ia = t.block_index(a)?;
    let e_ab = block_mean(t, &a.intersection(b), f)?;
    let e_b = block_mean(t, b, f)?;
    Ok(expected_block_with(t, &ia, &e_ab, kind)? - expected_block_with(t, &ia, &e_b, kind)?)
}

/// A dense transition matrix over the configurations of a table.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    pub matrix: DMatrix<f64>,
    /// Number of communicating classes of the chain (1 iff irreducible).
    pub classes: usize,
}

impl TransitionMatrix {
    pub fn is_irreducible(&self) -> bool {
        self.classes == 1
    }
}

/// Heat-bath block dynamics: pick a block uniformly and resample it from
/// its conditional distribution.
pub fn block_dynamics_matrix(t: &GibbsTable, blocks: &[VertexSet]) -> Result<TransitionMatrix> {
    if blocks.is_empty() {
        return input("block dynamics needs at least one block");
    }
    let s = t.len();
    if s > MAX_DENSE_STATES {
        return Err(Error::Resource {
            what: format!("dense transition matrix over {s} states"),
            cap: MAX_DENSE_STATES as u64,
        });
    }
    let mut p = DMatrix::<f64>::zeros(s, s);
    let w = 1.0 / blocks.len() as f64;
    for b in blocks {
        let idx = t.block_index(b)?;
        for (g, &m) in idx.groups.iter().zip(&idx.masses) {
            for &i in g {
                for &j in g {
                    p[(i, j)] += w * t.probs[j] / m;
                }
            }
        }
    }
    let classes = count_classes(&p);
    Ok(TransitionMatrix { matrix: p, classes })
}

/// Glauber dynamics: uniform site, heat-bath update.
pub fn glauber_matrix(t: &GibbsTable) -> Result<TransitionMatrix> {
    let blocks: Vec<VertexSet> = t.vertices().iter().map(VertexSet::singleton).collect();
    if blocks.is_empty() {
        return Ok(TransitionMatrix {
            matrix: DMatrix::from_element(1, 1, 1.0),
            classes: 1,
        });
    }
    block_dynamics_matrix(t, &blocks)
}

/// Connected components of the support graph. For reversible chains these
/// are the communicating classes.
fn count_classes(p: &DMatrix<f64>) -> usize {
    let s = p.nrows();
    let mut seen = vec![false; s];
    let mut classes = 0;
    for start in 0..s {
        if seen[start] {
            continue;
        }
        classes += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for j in 0..s {
                if !seen[j] && (p[(i, j)] > 0.0 || p[(j, i)] > 0.0) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    classes
}

/// Spectral gap `1 - λ_2` of a chain reversible with respect to `t`, plus
/// the (stationary-weighted) eigenfunction of `λ_2`, which is a worst-case
/// test function for the variance inequality.
#[derive(Debug, Clone)]
pub struct GapResult {
    pub gap: f64,
    pub witness: TestFunction,
}

/// Symmetrized `D^{1/2} P D^{-1/2}`, whose spectrum is that of `P`.
fn symmetrized(p: &TransitionMatrix, t: &GibbsTable) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let s = t.len();
    if p.matrix.nrows() != s {
        return input("transition matrix does not match the table");
    }
    let sq: Vec<f64> = t.probs.iter().map(|x| x.sqrt()).collect();
    let mut m = DMatrix::<f64>::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            m[(i, j)] = sq[i] * p.matrix[(i, j)] / sq[j];
        }
    }
    Ok(((&m + m.transpose()) * 0.5, sq))
}

fn second_largest(eigenvalues: &[f64]) -> Result<(usize, f64)> {
    if eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::Computational("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    Ok((order[1], eigenvalues[order[1]]))
}

pub fn spectral_gap_with_witness(p: &TransitionMatrix, t: &GibbsTable) -> Result<GapResult> {
    let (sym, sq) = symmetrized(p, t)?;
    if t.len() == 1 {
        return Ok(GapResult {
            gap: 1.0,
            witness: vec![0.0],
        });
    }
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Computational("symmetric eigensolver did not converge".into()))?;
    let (second, lambda2) = second_largest(eig.eigenvalues.as_slice())?;
    let witness = (0..t.len())
        .map(|i| eig.eigenvectors[(i, second)] / sq[i])
        .collect();
    Ok(GapResult {
        gap: (1.0 - lambda2).max(0.0),
        witness,
    })
}

/// Gap only; skips the eigenvectors, which dominate the cost on large tables.
pub fn spectral_gap(p: &TransitionMatrix, t: &GibbsTable) -> Result<f64> {
    let (sym, _) = symmetrized(p, t)?;
    if t.len() == 1 {
        return Ok(1.0);
    }
    let (_, lambda2) = second_largest(sym.symmetric_eigenvalues().as_slice())?;
    Ok((1.0 - lambda2).max(0.0))
}

/// Lower bounds on the standard log-Sobolev constant from the gap.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LogSobolevBound {
    /// `λ / (2 + log(1/π_min))`.
    pub basic: f64,
    /// `(1 - 2π_min) / log(1/π_min - 1) · λ`, when `π_min <= 1/2`.
    pub sharp: Option<f64>,
}

impl LogSobolevBound {
    pub fn best(&self) -> f64 {
        self.sharp.map_or(self.basic, |s| s.max(self.basic))
    }
}

pub fn log_sobolev_lower(gap: f64, pi_min: f64) -> LogSobolevBound {
    let basic = gap / (2.0 + (1.0 / pi_min).ln());
    let sharp = if pi_min < 0.5 {
        let denom = (1.0 / pi_min - 1.0).ln();
        // The ratio tends to 1/2 as π_min -> 1/2.
        Some(if denom > 1e-12 {
            (1.0 - 2.0 * pi_min) / denom * gap
        } else {
            0.5 * gap
        })
    } else if pi_min == 0.5 {
        Some(0.5 * gap)
    } else {
        None
    };
    LogSobolevBound { basic, sharp }
}

/// Both sides of an inequality `lhs <= rhs` and their relative slack.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Slack {
    pub lhs: f64,
    pub rhs: f64,
    pub relative: f64,
}

impl Slack {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        let scale = lhs.abs().max(rhs.abs());
        let relative = if scale == 0.0 { 0.0 } else { (rhs - lhs) / scale };
        Slack { lhs, rhs, relative }
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.relative >= -tol || self.rhs - self.lhs >= -1e-15
    }
}

/// `Var f <= (1/(λn)) Σ E[Var_i f]` and `Ent f <= (1/(ρn)) Σ E[Ent_i f]`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AtFromGapCheck {
    pub variance: Slack,
    pub entropy: Option<Slack>,
}

pub fn at_from_gap(t: &GibbsTable, f: &[f64], gap: f64, lsi: f64) -> Result<AtFromGapCheck> {
    let n = t.n().max(1) as f64;
    let variance = Slack::new(
        variance(t, f),
        site_sum(t, f, Functional::Variance)? / (gap * n),
    );
    let entropy = if f.iter().all(|&x| x >= 0.0) {
        Some(Slack::new(
            entropy(t, f)?,
            site_sum(t, f, Functional::Entropy)? / (lsi * n),
        ))
    } else {
        None
    };
    Ok(AtFromGapCheck { variance, entropy })
}

/// Least `C` with `Var f <= C Σ_B E[Var_B f]` for all `f`: `1 / (m · gap)`
/// of the block dynamics over the `m` blocks. Infinite if the block
/// dynamics is reducible.
pub fn optimal_variance_constant(t: &GibbsTable, blocks: &[VertexSet]) -> Result<f64> {
    if t.len() == 1 {
        return Ok(1.0);
    }
    let p = block_dynamics_matrix(t, blocks)?;
    if !p.is_irreducible() {
        return Ok(f64::INFINITY);
    }
    let gap = spectral_gap(&p, t)?;
    Ok(if gap > 0.0 {
        1.0 / (blocks.len() as f64 * gap)
    } else {
        f64::INFINITY
    })
}

/// Optimal variance AT constant `1 / (n · gap)` of the Glauber dynamics.
pub fn optimal_at_variance(t: &GibbsTable) -> Result<f64> {
    let blocks: Vec<VertexSet> = t.vertices().iter().map(VertexSet::singleton).collect();
    if blocks.is_empty() {
        return Ok(1.0);
    }
    optimal_variance_constant(t, &blocks)
}

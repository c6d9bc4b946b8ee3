//! Factorization-constant calculators for two blocks (weak and strong
//! correlation) and many sites (crude bound), influence matrices and the
//! spectral-independence gap bound, and the marginal-equivalence check.
//!
//! An unmet premise is a value (`None` constants with a reason), not an
//! error, so callers can fall back to another calculator.

use nalgebra::{DMatrix, Schur};
use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::exact::{
    block_mean_with, expected_block_with, neumaier_sum, optimal_variance_constant, Functional,
    GibbsTable, Slack,
};
use crate::graph::VertexSet;
use crate::par::{self, Execution};
use crate::spin::Pinning;

/// Largest number of coordinates for which all pinnings are enumerated.
pub const MAX_PINNING_VERTICES: usize = 16;

/// A joint distribution viewed as a pair of blocks `(X, Y)`.
#[derive(Debug, Clone)]
pub struct TwoBlockView<'a> {
    table: &'a GibbsTable,
    x: VertexSet,
    y: VertexSet,
    nx: usize,
    ny: usize,
    px: Vec<f64>,
    py: Vec<f64>,
    /// Dense joint `π(x, y)` indexed `ix * ny + iy`.
    joint: Vec<f64>,
}

impl<'a> TwoBlockView<'a> {
    pub fn new(table: &'a GibbsTable, x: &VertexSet, y: &VertexSet) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return input("both blocks must be nonempty");
        }
        if !x.is_disjoint(y) || &x.union(y) != table.vertices() {
            return input("blocks must partition the table's vertices");
        }
        let (mx, map_x) = table.marginal_with_map(x)?;
        let (my, map_y) = table.marginal_with_map(y)?;
        let (nx, ny) = (mx.len(), my.len());
        let mut joint = vec![0.0; nx * ny];
        for i in 0..table.len() {
            joint[map_x[i] * ny + map_y[i]] += table.prob(i);
        }
        Ok(TwoBlockView {
            table,
            x: x.clone(),
            y: y.clone(),
            nx,
            ny,
            px: mx.probs().to_vec(),
            py: my.probs().to_vec(),
            joint,
        })
    }

    pub fn table(&self) -> &GibbsTable {
        self.table
    }

    pub fn x(&self) -> &VertexSet {
        &self.x
    }

    pub fn y(&self) -> &VertexSet {
        &self.y
    }

    fn p(&self, ix: usize, iy: usize) -> f64 {
        self.joint[ix * self.ny + iy]
    }

    /// Largest TV distance between `π_X^y` and `π_X^{y'}` over feasible
    /// `y, y'` (or the `Y` side when `swap`).
    fn max_conditional_tv(&self, swap: bool) -> f64 {
        let (na, nb) = if swap { (self.ny, self.nx) } else { (self.nx, self.ny) };
        let pb = if swap { &self.px } else { &self.py };
        let cond = |b: usize, a: usize| {
            let p = if swap { self.p(b, a) } else { self.p(a, b) };
            p / pb[b]
        };
        let mut best: f64 = 0.0;
        for b1 in 0..nb {
            for b2 in b1 + 1..nb {
                let tv = 0.5 * neumaier_sum((0..na).map(|a| (cond(b1, a) - cond(b2, a)).abs()));
                best = best.max(tv);
            }
        }
        best.min(1.0)
    }
}

/// Constant from a pointwise bound on `π_X^y(x) / π_X(x)`.
#[derive(Debug, Clone, Serialize)]
pub struct WeakCorrelation {
    pub epsilon: f64,
    /// `1 + ε/(1-2ε)`, present iff `ε < 1/2`.
    pub constant: Option<f64>,
}

pub fn weak_correlation_constant(v: &TwoBlockView) -> WeakCorrelation {
    let mut eps: f64 = 0.0;
    for iy in 0..v.ny {
        for ix in 0..v.nx {
            let ratio = v.p(ix, iy) / v.py[iy] / v.px[ix];
            eps = eps.max((ratio - 1.0).abs());
        }
    }
    WeakCorrelation {
        epsilon: eps,
        constant: (eps < 0.5).then(|| 1.0 + eps / (1.0 - 2.0 * eps)),
    }
}

/// Constants from TV bounds between conditionals of each block.
#[derive(Debug, Clone, Serialize)]
pub struct StrongCorrelation {
    pub eps_x: f64,
    pub eps_y: f64,
    pub pi_min: f64,
    /// `2 / (ε_X + ε_Y)`.
    pub var_constant: Option<f64>,
    /// `(4 + 2 log(1/π_min)) / (ε_X + ε_Y)`.
    pub ent_constant: Option<f64>,
}

impl StrongCorrelation {
    pub fn constant(&self, kind: Functional) -> Option<f64> {
        match kind {
            Functional::Variance => self.var_constant,
            Functional::Entropy => self.ent_constant,
        }
    }
}

/// The constants are reported whenever `ε_X + ε_Y > 0`: the spectral
/// argument behind them only needs the 2×2 influence matrix to have
/// spectral radius below 1, which one positive side already ensures.
pub fn strong_correlation_constant(v: &TwoBlockView) -> StrongCorrelation {
    let eps_x = 1.0 - v.max_conditional_tv(false);
    let eps_y = 1.0 - v.max_conditional_tv(true);
    let pi_min = v.table.min_prob();
    let s = eps_x + eps_y;
    let ok = s > 1e-12;
    StrongCorrelation {
        eps_x,
        eps_y,
        pi_min,
        var_constant: ok.then(|| 2.0 / s),
        ent_constant: ok.then(|| (4.0 + 2.0 * (1.0 / pi_min).ln()) / s),
    }
}

/// Pairwise influences under one pinning.
#[derive(Debug, Clone)]
pub struct InfluenceMatrix {
    /// Free vertices indexing rows and columns.
    pub vertices: Vec<usize>,
    pub entries: DMatrix<f64>,
}

impl InfluenceMatrix {
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.entries)
    }

    pub fn max_row_sum(&self) -> f64 {
        (0..self.entries.nrows())
            .map(|i| self.entries.row(i).sum())
            .fold(0.0, f64::max)
    }
}

/// Iteration cap for the real Schur decomposition; nalgebra's default is
/// unbounded and can cycle on some nonsymmetric inputs.
const SCHUR_MAX_ITER: usize = 10_000;

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        0 => 0.0,
        1 => m[(0, 0)].abs(),
        _ => match Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER) {
            Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
            None => gelfand_upper_bound(m),
        },
    }
}

/// `‖A^k‖_∞^{1/k}` for `k = 2^40` by repeated squaring: never below the
/// spectral radius, so a fallback that only weakens downstream bounds.
fn gelfand_upper_bound(m: &DMatrix<f64>) -> f64 {
    let inf_norm = |a: &DMatrix<f64>| (0..a.nrows()).map(|i| a.row(i).abs().sum()).fold(0.0, f64::max);
    let mut a = m.clone();
    let mut log_scale = 0.0;
    let mut k = 1.0;
    for _ in 0..40 {
        let n = inf_norm(&a);
        if n == 0.0 {
            return 0.0;
        }
        a /= n;
        log_scale += n.ln() / k;
        a = &a * &a;
        k *= 2.0;
    }
    (log_scale + inf_norm(&a).ln() / k).exp()
}

/// Influence matrix among the coordinates `free` (positions) for the
/// configurations `members` (all agreeing outside `free`).
fn influence_in_group(t: &GibbsTable, members: &[usize], free: &[usize]) -> DMatrix<f64> {
    let k = free.len();
    let mut m = DMatrix::zeros(k, k);
    for (a, &i) in free.iter().enumerate() {
        let ri = t.radices()[i];
        // Feasible spins at i and their mass.
        let mut pi = vec![0.0; ri];
        for &c in members {
            pi[t.config(c)[i] as usize] += t.prob(c);
        }
        let feasible: Vec<usize> = (0..ri).filter(|&s| pi[s] > 0.0).collect();
        if feasible.len() < 2 {
            continue;
        }
        for (b, &j) in free.iter().enumerate() {
            if i == j {
                continue;
            }
            let rj = t.radices()[j];
            let mut joint = vec![0.0; ri * rj];
            for &c in members {
                let cfg = t.config(c);
                joint[cfg[i] as usize * rj + cfg[j] as usize] += t.prob(c);
            }
            let mut best: f64 = 0.0;
            for (s1, &x1) in feasible.iter().enumerate() {
                for &x2 in &feasible[s1 + 1..] {
                    let tv = 0.5
                        * (0..rj)
                            .map(|y| (joint[x1 * rj + y] / pi[x1] - joint[x2 * rj + y] / pi[x2]).abs())
                            .sum::<f64>();
                    best = best.max(tv);
                }
            }
            m[(a, b)] = best.min(1.0);
        }
    }
    m
}

/// `Ψ^{x_Λ}` for a feasible pinning of some table vertices (keys are
/// table vertex ids, values spin indices).
pub fn influence_matrix(t: &GibbsTable, pin: &Pinning) -> Result<InfluenceMatrix> {
    let pinned: VertexSet = pin.keys().copied().collect();
    let pos = t.positions(&pinned)?;
    let free_ids = t.vertices().difference(&pinned);
    let free = t.positions(&free_ids)?;
    let members: Vec<usize> = (0..t.len())
        .filter(|&c| {
            pos.iter()
                .zip(pin.values())
                .all(|(&p, &s)| t.config(c)[p] as usize == s)
        })
        .collect();
    if members.is_empty() {
        return Err(Error::Domain(format!("infeasible pinning {pin:?}")));
    }
    Ok(InfluenceMatrix {
        vertices: free_ids.into_vec(),
        entries: influence_in_group(t, &members, &free),
    })
}

/// Maxima of influence statistics over all feasible pinnings of size `k`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InfluenceLevel {
    pub k: usize,
    pub pinnings: usize,
    pub max_entry: f64,
    pub max_spectral_radius: f64,
    pub max_row_sum: f64,
}

/// Influence statistics for every pinning level `0..=n-2`.
pub fn influence_levels(t: &GibbsTable, exec: Execution) -> Result<Vec<InfluenceLevel>> {
    let n = t.n();
    if n > MAX_PINNING_VERTICES {
        return Err(Error::Resource {
            what: format!("pinning enumeration over {n} vertices"),
            cap: MAX_PINNING_VERTICES as u64,
        });
    }
    if n < 2 {
        return Ok(Vec::new());
    }
    let masks: Vec<u32> = (0u32..(1 << n))
        .filter(|m| (m.count_ones() as usize) <= n - 2)
        .collect();
    let per_mask = par::map_slice(exec, &masks, |&mask| {
        let pinned: Vec<usize> = (0..n).filter(|p| mask >> p & 1 == 1).collect();
        let free: Vec<usize> = (0..n).filter(|p| mask >> p & 1 == 0).collect();
        let mut groups: std::collections::BTreeMap<Vec<u8>, Vec<usize>> = Default::default();
        for c in 0..t.len() {
            let key = pinned.iter().map(|&p| t.config(c)[p]).collect();
            groups.entry(key).or_default().push(c);
        }
        let mut stats = (0usize, 0.0f64, 0.0f64, 0.0f64);
        for members in groups.values() {
            let m = influence_in_group(t, members, &free);
            let im = InfluenceMatrix {
                vertices: Vec::new(),
                entries: m,
            };
            stats.0 += 1;
            stats.1 = stats.1.max(im.entries.max());
            stats.2 = stats.2.max(im.spectral_radius());
            stats.3 = stats.3.max(im.max_row_sum());
        }
        (pinned.len(), stats)
    });
    let mut levels: Vec<InfluenceLevel> = (0..=n - 2)
        .map(|k| InfluenceLevel {
            k,
            pinnings: 0,
            max_entry: 0.0,
            max_spectral_radius: 0.0,
            max_row_sum: 0.0,
        })
        .collect();
    for (k, (count, e, r, s)) in per_mask {
        let l = &mut levels[k];
        l.pinnings += count;
        l.max_entry = l.max_entry.max(e);
        l.max_spectral_radius = l.max_spectral_radius.max(r);
        l.max_row_sum = l.max_row_sum.max(s);
    }
    Ok(levels)
}

/// Multi-site constants from a uniform bound `1 - ε` on all influences.
#[derive(Debug, Clone, Serialize)]
pub struct CrudeConstant {
    pub n: usize,
    pub epsilon: f64,
    pub pi_min: f64,
    /// `1 / ε^{n-1}`.
    pub var_constant: Option<f64>,
    /// `(2 + log(1/π_min)) / ε^{n-1}`.
    pub ent_constant: Option<f64>,
}

impl CrudeConstant {
    pub fn constant(&self, kind: Functional) -> Option<f64> {
        match kind {
            Functional::Variance => self.var_constant,
            Functional::Entropy => self.ent_constant,
        }
    }
}

pub fn crude_multivariable_constant(t: &GibbsTable, exec: Execution) -> Result<CrudeConstant> {
    let n = t.n();
    if n < 2 {
        return input("the multi-site bound needs at least 2 free vertices");
    }
    let levels = influence_levels(t, exec)?;
    let max_tv = levels.iter().map(|l| l.max_entry).fold(0.0, f64::max);
    let epsilon = 1.0 - max_tv;
    let pi_min = t.min_prob();
    let ok = epsilon > 1e-12;
    let denom = epsilon.powi(n as i32 - 1);
    Ok(CrudeConstant {
        n,
        epsilon,
        pi_min,
        var_constant: ok.then(|| 1.0 / denom),
        ent_constant: ok.then(|| (2.0 + (1.0 / pi_min).ln()) / denom),
    })
}

/// Gap lower bound `(1/n) Π_k (1 - η_k/(n-k-1))`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralIndependenceBound {
    pub n: usize,
    pub eta: Vec<f64>,
    /// Absent if some `η_k >= n-k-1`.
    pub bound: Option<f64>,
}

pub fn spectral_independence_from_levels(n: usize, levels: &[InfluenceLevel]) -> SpectralIndependenceBound {
    let eta: Vec<f64> = levels.iter().map(|l| l.max_spectral_radius).collect();
    let mut prod = 1.0 / n.max(1) as f64;
    let mut ok = true;
    for (k, &e) in eta.iter().enumerate() {
        let m = (n - k - 1) as f64;
        if e >= m {
            ok = false;
            break;
        }
        prod *= 1.0 - e / m;
    }
    SpectralIndependenceBound {
        n,
        eta,
        bound: ok.then_some(prod),
    }
}

pub fn spectral_independence_gap(
    t: &GibbsTable,
    exec: Execution,
) -> Result<SpectralIndependenceBound> {
    Ok(spectral_independence_from_levels(t.n(), &influence_levels(t, exec)?))
}

/// Optimal variance constants for `{X},{Y}` on the marginal `π_XY` and for
/// `{X∪Z},{Y∪Z}` on `π`; they coincide.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MarginalEquivalence {
    pub c_marginal: f64,
    pub c_block: f64,
    pub residual: f64,
}

pub fn marginal_equivalence_check(
    t: &GibbsTable,
    x: &VertexSet,
    y: &VertexSet,
    z: &VertexSet,
) -> Result<MarginalEquivalence> {
    check_triple(t, x, y, z)?;
    let xy = x.union(y);
    let marg = t.marginal(&xy)?;
    let c_marginal = optimal_variance_constant(&marg, &[x.clone(), y.clone()])?;
    let c_block = optimal_variance_constant(t, &[x.union(z), y.union(z)])?;
    let residual = if c_marginal.is_infinite() && c_block.is_infinite() {
        0.0
    } else {
        (c_marginal - c_block).abs()
    };
    Ok(MarginalEquivalence {
        c_marginal,
        c_block,
        residual,
    })
}

fn check_triple(t: &GibbsTable, x: &VertexSet, y: &VertexSet, z: &VertexSet) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return input("X and Y must be nonempty");
    }
    let all = x.union(y).union(z);
    if x.len() + y.len() + z.len() != all.len() || &all != t.vertices() {
        return input("X, Y, Z must partition the table's vertices");
    }
    Ok(())
}

/// Ratio `F(f) / (E[F_A f] + E[F_B f])` (0 when both sides vanish).
pub fn two_block_ratio(
    t: &GibbsTable,
    a: &crate::exact::BlockIndex,
    b: &crate::exact::BlockIndex,
    f: &[f64],
    kind: Functional,
) -> Result<f64> {
    let whole = match kind {
        Functional::Variance => crate::exact::variance(t, f),
        Functional::Entropy => crate::exact::entropy(t, f)?,
    };
    let parts = expected_block_with(t, a, f, kind)? + expected_block_with(t, b, f, kind)?;
    Ok(if parts > 0.0 {
        whole / parts
    } else if whole <= 1e-15 {
        0.0
    } else {
        f64::INFINITY
    })
}

/// Entropy-side marginal-equivalence audit for one pair of functions: a
/// function `g` on the marginal and a function `f` on the full table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EntropyEquivalenceAudit {
    /// Ratio for `g` on `π_XY` with blocks `{X},{Y}`.
    pub ratio_marginal: f64,
    /// Ratio for the lift `ḡ(x,y,z) = g(x,y)` on `π` with `{X∪Z},{Y∪Z}`.
    pub ratio_lifted: f64,
    /// Ratio for `f` on `π` with `{X∪Z},{Y∪Z}`.
    pub ratio_block: f64,
    /// Ratio for `E_Z f` on the marginal; `ratio_block <= max(1, this)`.
    pub ratio_projected: f64,
}

impl EntropyEquivalenceAudit {
    pub fn holds(&self, tol: f64) -> bool {
        // Perfectly correlated blocks give infinite ratios on both sides.
        let lift_ok = self.ratio_marginal == self.ratio_lifted
            || (self.ratio_marginal - self.ratio_lifted).abs() <= tol * self.ratio_marginal.abs().max(1.0);
        let transfer_ok = self.ratio_block <= self.ratio_projected.max(1.0) * (1.0 + tol) + tol;
        lift_ok && transfer_ok
    }
}

/// Precomputed structure for repeated entropy-equivalence audits.
pub struct EquivalenceAuditor<'a> {
    t: &'a GibbsTable,
    marg: GibbsTable,
    map: Vec<usize>,
    mx: crate::exact::BlockIndex,
    my: crate::exact::BlockIndex,
    bxz: crate::exact::BlockIndex,
    byz: crate::exact::BlockIndex,
    bz: crate::exact::BlockIndex,
}

impl<'a> EquivalenceAuditor<'a> {
    pub fn new(t: &'a GibbsTable, x: &VertexSet, y: &VertexSet, z: &VertexSet) -> Result<Self> {
        check_triple(t, x, y, z)?;
        let (marg, map) = t.marginal_with_map(&x.union(y))?;
        Ok(EquivalenceAuditor {
            mx: marg.block_index(x)?,
            my: marg.block_index(y)?,
            bxz: t.block_index(&x.union(z))?,
            byz: t.block_index(&y.union(z))?,
            bz: t.block_index(z)?,
            t,
            marg,
            map,
        })
    }

    pub fn marginal(&self) -> &GibbsTable {
        &self.marg
    }

    /// `g` is indexed by marginal configurations, `f` by full ones.
    pub fn audit(&self, g: &[f64], f: &[f64]) -> Result<EntropyEquivalenceAudit> {
        let e = Functional::Entropy;
        let lifted: Vec<f64> = self.map.iter().map(|&k| g[k]).collect();
        let ez = block_mean_with(self.t, &self.bz, f);
        let mut projected = vec![0.0; self.marg.len()];
        for (i, &k) in self.map.iter().enumerate() {
            projected[k] = ez[i];
        }
        Ok(EntropyEquivalenceAudit {
            ratio_marginal: two_block_ratio(&self.marg, &self.mx, &self.my, g, e)?,
            ratio_lifted: two_block_ratio(self.t, &self.bxz, &self.byz, &lifted, e)?,
            ratio_block: two_block_ratio(self.t, &self.bxz, &self.byz, f, e)?,
            ratio_projected: two_block_ratio(&self.marg, &self.mx, &self.my, &projected, e)?,
        })
    }
}

/// `4 TV(ν_X, π_X) TV(ν_Y, π_Y) <= KL(ν_X‖π_X) + KL(ν_Y‖π_Y)` for
/// `ν = f π / E f`.
pub fn pinsker_audit(v: &TwoBlockView, f: &[f64]) -> Result<Slack> {
    let t = v.table;
    if f.iter().any(|&x| x < 0.0) {
        return input("Pinsker audit requires a nonnegative function");
    }
    let m = crate::exact::mean(t, f);
    if m <= 0.0 {
        return input("Pinsker audit requires a function with positive mean");
    }
    let (_, map_x) = t.marginal_with_map(&v.x)?;
    let (_, map_y) = t.marginal_with_map(&v.y)?;
    let mut nu_x = vec![0.0; v.nx];
    let mut nu_y = vec![0.0; v.ny];
    for i in 0..t.len() {
        let w = t.prob(i) * f[i] / m;
        nu_x[map_x[i]] += w;
        nu_y[map_y[i]] += w;
    }
    let tv = |nu: &[f64], pi: &[f64]| 0.5 * nu.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let kl = |nu: &[f64], pi: &[f64]| {
        neumaier_sum(
            nu.iter()
                .zip(pi)
                .map(|(a, b)| if *a > 0.0 { a * (a / b).ln() } else { 0.0 }),
        )
        .max(0.0)
    };
    Ok(Slack::new(
        4.0 * tv(&nu_x, &v.px) * tv(&nu_y, &v.py),
        kl(&nu_x, &v.px) + kl(&nu_y, &v.py),
    ))
}

//! Glauber dynamics: simulation, exact total-variation mixing times and a
//! coupling-based estimator.
//!
//! The chain is the plain (non-lazy) heat-bath update: pick a vertex
//! uniformly and resample its spin from the conditional marginal given the
//! other spins. All randomness comes from ChaCha8 streams, so runs are
//! bit-reproducible.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::audit::stream_rng;
use crate::error::{input, Error, Result};
use crate::exact::{enumerate_with_cap, neumaier_sum, GibbsTable, DEFAULT_ENUM_CAP};
use crate::graph::{Graph, VertexSet};
use crate::par::{self, Execution};
use crate::spin::{is_feasible_pinning, ModelKind, Pinning, SpinSystem};

/// Name of the generator recorded in reports.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha), seed_from_u64 + set_stream";

/// Default state-space cap for exact mixing times.
pub const EXACT_STATE_CAP: u64 = 1 << 16;

/// Default step limit for exact mixing times.
pub const EXACT_STEP_LIMIT: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct ChainState {
    pub config: Vec<usize>,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

impl ChainState {
    /// A chain at `config` driven by stream `stream` of `seed`.
    pub fn new(sys: &SpinSystem, config: Vec<usize>, seed: u64, stream: u64) -> Result<Self> {
        if config.len() != sys.n() {
            return input("configuration length does not match the system");
        }
        if config.iter().enumerate().any(|(v, &a)| a >= sys.domain_size(v)) {
            return input("spin out of range");
        }
        if !(sys.weight(&config) > 0.0) {
            return Err(Error::Domain("starting configuration has zero weight".into()));
        }
        Ok(ChainState {
            config,
            step: 0,
            rng: stream_rng(seed, stream),
        })
    }
}

/// Heat-bath update of `v` driven by the uniform `u ∈ [0,1)`: the spin is
/// the inverse CDF of the conditional marginal at `u`. Zero-weight spins
/// are never chosen, so feasibility is preserved.
pub fn update_site(sys: &SpinSystem, config: &mut [usize], v: usize, u: f64) {
    let w = sys.local_weights(v, config);
    let total: f64 = w.iter().sum();
    debug_assert!(total > 0.0, "update from an infeasible configuration");
    let target = u * total;
    let mut acc = 0.0;
    let mut last = config[v];
    for (c, &x) in w.iter().enumerate() {
        if x <= 0.0 {
            continue;
        }
        acc += x;
        last = c;
        if target < acc {
            config[v] = c;
            return;
        }
    }
    config[v] = last;
}

/// One Glauber step.
pub fn step(sys: &SpinSystem, state: &mut ChainState) {
    let n = sys.n();
    if n > 0 {
        let v = state.rng.random_range(0..n);
        let u: f64 = state.rng.random();
        update_site(sys, &mut state.config, v, u);
    }
    state.step += 1;
}

/// A positive-weight configuration found greedily: vertices in index order
/// take the lowest (or, if `descending`, highest) spin index that keeps the
/// pinning feasible.
pub fn feasible_configuration(sys: &SpinSystem, descending: bool) -> Result<Vec<usize>> {
    let n = sys.n();
    let mut pin = Pinning::new();
    if !is_feasible_pinning(sys, &pin)? {
        return Err(Error::Domain("the system has no feasible configuration".into()));
    }
    for v in 0..n {
        let q = sys.domain_size(v);
        let spins: Vec<usize> = if descending { (0..q).rev().collect() } else { (0..q).collect() };
        let mut placed = false;
        for c in spins {
            pin.insert(v, c);
            if is_feasible_pinning(sys, &pin)? {
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Computational(format!("greedy completion failed at vertex {v}")));
        }
    }
    Ok((0..n).map(|v| pin[&v]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingMethod {
    ExactTv,
    Coupling,
}

#[derive(Debug, Clone, Serialize)]
pub struct MixingEstimate {
    pub method: MixingMethod,
    /// Least `t` with worst-start distance `<= 1/4`; `None` if the chain is
    /// reducible or the estimate is censored.
    pub t_mix: Option<u64>,
    /// `(t, worst-start TV)` for exact runs, `(t, coalesced fraction)` for
    /// coupling runs.
    pub tv_curve: Vec<(u64, f64)>,
    pub states: Option<usize>,
    /// Communicating classes of the chain (exact runs).
    pub classes: Option<usize>,
    /// Sizes of the classes when the chain is reducible.
    pub class_sizes: Vec<usize>,
    pub trials: usize,
    pub censored: usize,
    pub quantiles: Vec<(f64, Option<u64>)>,
    pub note: String,
    pub rng: String,
}

/// Sparse Glauber kernel on the configurations of a table.
struct SparseKernel {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseKernel {
    fn new(t: &GibbsTable) -> Result<Self> {
        let s = t.len();
        let n = t.n();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); s];
        if n == 0 {
            rows[0].push((0, 1.0));
            return Ok(SparseKernel { rows });
        }
        let w = 1.0 / n as f64;
        for v in t.vertices().iter() {
            let idx = t.block_index(&VertexSet::singleton(v))?;
            for (g, &m) in idx.groups.iter().zip(&idx.masses) {
                for &i in g {
                    for &j in g {
                        rows[i].push((j, w * t.prob(j) / m));
                    }
                }
            }
        }
        for r in rows.iter_mut() {
            r.sort_by_key(|e| e.0);
            r.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
        }
        Ok(SparseKernel { rows })
    }

    /// `x ↦ x P`.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for &(j, p) in row {
                out[j] += xi * p;
            }
        }
    }

    /// Sizes of the connected components of the support.
    fn class_sizes(&self) -> Vec<usize> {
        let s = self.rows.len();
        let mut comp = vec![usize::MAX; s];
        let mut sizes = Vec::new();
        for start in 0..s {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            comp[start] = id;
            let mut stack = vec![start];
            let mut size = 0;
            while let Some(i) = stack.pop() {
                size += 1;
                for &(j, _) in &self.rows[i] {
                    if comp[j] == usize::MAX {
                        comp[j] = id;
                        stack.push(j);
                    }
                }
            }
            sizes.push(size);
        }
        sizes
    }
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * neumaier_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}

/// TV distances `d_x(0..=steps)` from start `x`, stopping early once the
/// distance is at most `stop_at` if `stop_at` is set.
fn start_curve(k: &SparseKernel, pi: &[f64], x: usize, steps: u64, stop_at: Option<f64>) -> Vec<f64> {
    let s = pi.len();
    let mut cur = vec![0.0; s];
    cur[x] = 1.0;
    let mut next = vec![0.0; s];
    let mut curve = vec![tv(&cur, pi)];
    for _ in 0..steps {
        if stop_at.is_some_and(|th| *curve.last().unwrap() <= th) {
            break;
        }
        k.apply(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        curve.push(tv(&cur, pi));
    }
    curve
}

/// Exact mixing time from the full kernel: the worst start's distance
/// `max_x TV(P^t(x,·), µ)` is tracked until it drops to 1/4.
pub fn exact_mixing_time(sys: &SpinSystem, cap: u64, step_limit: u64, exec: Execution) -> Result<MixingEstimate> {
    let t = enumerate_with_cap(sys, DEFAULT_ENUM_CAP.max(cap))?;
    if t.len() as u64 > cap {
        return Err(Error::Resource {
            what: format!("{} feasible states", t.len()),
            cap,
        });
    }
    exact_mixing_time_table(&t, step_limit, exec)
}

pub fn exact_mixing_time_table(t: &GibbsTable, step_limit: u64, exec: Execution) -> Result<MixingEstimate> {
    let k = SparseKernel::new(t)?;
    let sizes = k.class_sizes();
    let mut est = MixingEstimate {
        method: MixingMethod::ExactTv,
        t_mix: None,
        tv_curve: Vec::new(),
        states: Some(t.len()),
        classes: Some(sizes.len()),
        class_sizes: Vec::new(),
        trials: 0,
        censored: 0,
        quantiles: Vec::new(),
        note: "worst start over all feasible configurations; non-lazy heat-bath kernel".into(),
        rng: String::new(),
    };
    if sizes.len() > 1 {
        est.class_sizes = sizes;
        est.note = "chain is reducible: the distance to stationarity never reaches 1/4 from every start".into();
        return Ok(est);
    }
    let pi = t.probs();
    // Each start's distance is non-increasing, so the worst start's hitting
    // time is the largest individual one.
    let hits = par::map_range(exec, t.len(), |x| start_curve(&k, pi, x, step_limit, Some(0.25)));
    let t_mix = hits.iter().map(|c| c.len() as u64 - 1).max().unwrap_or(0);
    if hits.iter().any(|c| *c.last().unwrap() > 0.25) {
        est.note = format!("distance above 1/4 after {step_limit} steps");
        return Ok(est);
    }
    let curves = par::map_range(exec, t.len(), |x| start_curve(&k, pi, x, t_mix, None));
    est.tv_curve = (0..=t_mix)
        .map(|s| (s, curves.iter().map(|c| c[s as usize]).fold(0.0, f64::max)))
        .collect();
    est.t_mix = Some(t_mix);
    Ok(est)
}

/// 2-coloring of `g` if it is bipartite.
fn bipartition(g: &Graph) -> Option<Vec<bool>> {
    let n = g.n();
    let mut side: Vec<Option<bool>> = vec![None; n];
    for s in 0..n {
        if side[s].is_some() {
            continue;
        }
        side[s] = Some(false);
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            let sv = side[v].unwrap();
            for &u in g.neighbors(v) {
                match side[u] {
                    None => {
                        side[u] = Some(!sv);
                        stack.push(u);
                    }
                    Some(su) if su == sv => return None,
                    _ => {}
                }
            }
        }
    }
    Some(side.into_iter().map(|s| s.unwrap()).collect())
}

/// Extreme configurations of a hardcore model on a bipartite graph under
/// the order "occupied on one side, empty on the other", or `None` if the
/// system is not of that kind.
fn monotone_extremes(sys: &SpinSystem) -> Option<(Vec<usize>, Vec<usize>)> {
    if !matches!(sys.kind(), ModelKind::Hardcore { .. }) {
        return None;
    }
    let side = bipartition(sys.graph())?;
    let occ = |v: usize, want: bool| usize::from(want && sys.vertex_weight(v, 1) > 0.0);
    let top: Vec<usize> = (0..sys.n()).map(|v| occ(v, !side[v])).collect();
    let bottom: Vec<usize> = (0..sys.n()).map(|v| occ(v, side[v])).collect();
    (sys.weight(&top) > 0.0 && sys.weight(&bottom) > 0.0).then_some((top, bottom))
}

/// Coalescence time of two chains sharing vertex choices and uniforms.
fn coalescence(sys: &SpinSystem, a: &[usize], b: &[usize], seed: u64, stream: u64, horizon: u64) -> Option<u64> {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    let mut rng = stream_rng(seed, stream);
    let n = sys.n();
    for t in 0..=horizon {
        if x == y {
            return Some(t);
        }
        if t == horizon || n == 0 {
            break;
        }
        let v = rng.random_range(0..n);
        let u: f64 = rng.random();
        update_site(sys, &mut x, v, u);
        update_site(sys, &mut y, v, u);
    }
    None
}

/// Coalescence-time estimate: a grand coupling of the two extremes for
/// hardcore models on bipartite graphs (an upper bound on the mixing time
/// in distribution), otherwise two chains from distinct greedy starts
/// sharing randomness (heuristic). Trial `i` uses stream `i` of `seed`.
pub fn coupling_mixing_estimate(
    sys: &SpinSystem,
    trials: usize,
    horizon: u64,
    seed: u64,
    exec: Execution,
) -> Result<MixingEstimate> {
    if trials == 0 {
        return input("at least one trial is required");
    }
    let (a, b, note) = match monotone_extremes(sys) {
        Some((top, bottom)) => (top, bottom, "heuristic: monotone grand coupling from the two extremes"),
        None => (
            feasible_configuration(sys, false)?,
            feasible_configuration(sys, true)?,
            "heuristic: identity-coupled pair chains from two greedy starts",
        ),
    };
    // A single step is always needed to forget the start (the chain is
    // non-lazy), so identical starts still count one step.
    let times: Vec<Option<u64>> = par::map_range(exec, trials, |i| {
        if a == b {
            Some(u64::from(sys.n() > 0))
        } else {
            coalescence(sys, &a, &b, seed, i as u64, horizon)
        }
    });
    let censored = times.iter().filter(|t| t.is_none()).count();
    let mut done: Vec<u64> = times.iter().flatten().copied().collect();
    done.sort_unstable();
    let quantile = |p: f64| -> Option<u64> {
        let rank = ((p * trials as f64).ceil() as usize).clamp(1, trials);
        done.get(rank - 1).copied()
    };
    let quantiles: Vec<(f64, Option<u64>)> = [0.5, 0.75, 0.9, 0.95, 1.0].iter().map(|&p| (p, quantile(p))).collect();
    let mut curve: Vec<(u64, f64)> = Vec::new();
    for (k, &t) in done.iter().enumerate() {
        let frac = (k + 1) as f64 / trials as f64;
        match curve.last_mut() {
            Some(last) if last.0 == t => last.1 = frac,
            _ => curve.push((t, frac)),
        }
    }
    Ok(MixingEstimate {
        method: MixingMethod::Coupling,
        t_mix: quantile(0.75),
        tv_curve: curve,
        states: None,
        classes: None,
        class_sizes: Vec::new(),
        trials,
        censored,
        quantiles,
        note: if censored > 0 {
            format!("{note}; {censored} of {trials} trials censored at horizon {horizon}")
        } else {
            note.to_string()
        },
        rng: RNG_NAME.into(),
    })
}

/// Comparison of the exact mixing time with `c · C · n²`.
#[derive(Debug, Clone, Serialize)]
pub struct MixingConsistency {
    pub n: usize,
    pub t_mix: Option<u64>,
    pub multiplier: f64,
    /// `t_mix / (C n²)`.
    pub ratio: Option<f64>,
    pub c: f64,
    pub within: bool,
    /// `-log(µ_min) / n`, which should stay bounded.
    pub neg_log_min_prob_per_site: f64,
}

pub fn at_mixing_consistency(t: &GibbsTable, estimate: &MixingEstimate, multiplier: f64, c: f64) -> MixingConsistency {
    let n = t.n();
    let ratio = match estimate.t_mix {
        Some(tm) if n > 0 && multiplier > 0.0 => Some(tm as f64 / (multiplier * (n * n) as f64)),
        _ => None,
    };
    MixingConsistency {
        n,
        t_mix: estimate.t_mix,
        multiplier,
        ratio,
        c,
        within: ratio.is_some_and(|r| r <= c),
        neg_log_min_prob_per_site: if n > 0 { -t.min_prob().ln() / n as f64 } else { 0.0 },
    }
}

/// Empirical distribution of `steps` states visited after `burn_in`.
pub fn empirical_distribution(
    sys: &SpinSystem,
    t: &GibbsTable,
    start: Vec<usize>,
    burn_in: u64,
    steps: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut state = ChainState::new(sys, start, seed, 0)?;
    for _ in 0..burn_in {
        step(sys, &mut state);
    }
    let mut counts = vec![0u64; t.len()];
    let mut buf = vec![0u8; sys.n()];
    for _ in 0..steps {
        step(sys, &mut state);
        for (b, &c) in buf.iter_mut().zip(&state.config) {
            *b = c as u8;
        }
        let i = t
            .index_of(&buf)
            .ok_or_else(|| Error::Computational("chain left the feasible set".into()))?;
        counts[i] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / steps as f64).collect())
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    tv(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{enumerate, glauber_matrix};
    use crate::graph::{dary_tree, path, Graph};
    use crate::spin::{coloring, hardcore, SpinSystem};
    use nalgebra::DMatrix;

    #[test]
    fn one_step_on_a_single_vertex_is_stationary() {
        let sys = hardcore(&Graph::empty(1), 1.0).unwrap();
        let mut occupied = 0;
        for seed in 0..4000 {
            let mut s = ChainState::new(&sys, vec![seed as usize % 2], seed, 0).unwrap();
            step(&sys, &mut s);
            occupied += s.config[0];
        }
        assert!((occupied as f64 / 4000.0 - 0.5).abs() < 0.03);
        let est = exact_mixing_time(&sys, EXACT_STATE_CAP, 100, Execution::Sequential).unwrap();
        assert_eq!(est.t_mix, Some(1));
        let c = coupling_mixing_estimate(&sys, 50, 100, 1, Execution::Sequential).unwrap();
        assert!(c.quantiles.iter().all(|q| q.1 == Some(1)));
    }

    #[test]
    fn isolated_vertex_marginal_is_its_field() {
        let g = Graph::empty(1);
        let sys = SpinSystem::general(g, vec![vec![0, 1, 2]], vec![vec![1.0, 2.0, 1.0]], |_, _| vec![]).unwrap();
        let mut counts = [0usize; 3];
        let mut config = vec![0];
        for i in 0..40000 {
            update_site(&sys, &mut config, 0, (i as f64 + 0.5) / 40000.0);
            counts[config[0]] += 1;
        }
        assert_eq!(counts, [10000, 20000, 10000]);
    }

    #[test]
    fn hardcore_edge_flip_probability() {
        let lambda = 1.5;
        let sys = hardcore(&path(2), lambda).unwrap();
        let w = sys.local_weights(0, &[0, 0]);
        assert!((w[1] / (w[0] + w[1]) - lambda / (1.0 + lambda)).abs() < 1e-15);
        let mut occupied = 0;
        let trials = 20000;
        for i in 0..trials {
            let mut c = vec![0, 0];
            update_site(&sys, &mut c, 0, (i as f64 + 0.5) / trials as f64);
            occupied += c[0];
        }
        assert!((occupied as f64 / trials as f64 - 0.6).abs() < 1e-3);
    }

    /// Mixing time by dense matrix powers.
    fn brute_mixing(t: &GibbsTable) -> u64 {
        let p = glauber_matrix(t).unwrap().matrix;
        let s = t.len();
        let mut m = DMatrix::<f64>::identity(s, s);
        for step in 0..10_000u64 {
            let d = (0..s)
                .map(|x| (0..s).map(|j| (m[(x, j)] - t.prob(j)).abs()).sum::<f64>() * 0.5)
                .fold(0.0, f64::max);
            if d <= 0.25 {
                return step;
            }
            m = &m * &p;
        }
        panic!("no mixing");
    }

    #[test]
    fn exact_mixing_matches_matrix_powers() {
        for sys in [
            hardcore(&path(2), 1.0).unwrap(),
            hardcore(&path(4), 2.0).unwrap(),
            coloring(&path(3), 3).unwrap(),
        ] {
            let t = enumerate(&sys).unwrap();
            let est = exact_mixing_time(&sys, EXACT_STATE_CAP, 10_000, Execution::Parallel).unwrap();
            assert_eq!(est.t_mix, Some(brute_mixing(&t)));
            assert!(est.tv_curve.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12));
            assert!(est.tv_curve.last().unwrap().1 <= 0.25);
        }
    }

    #[test]
    fn reducible_chain_is_reported() {
        // Two colors on an edge: the two proper colorings do not communicate.
        let sys = coloring(&path(2), 2).unwrap();
        let est = exact_mixing_time(&sys, EXACT_STATE_CAP, 100, Execution::Sequential).unwrap();
        assert_eq!(est.t_mix, None);
        assert_eq!(est.classes, Some(2));
        assert_eq!(est.class_sizes, vec![1, 1]);
    }

    #[test]
    fn state_cap_is_enforced() {
        let sys = hardcore(&path(12), 1.0).unwrap();
        assert!(matches!(
            exact_mixing_time(&sys, 100, 10, Execution::Sequential),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn coupling_is_reproducible() {
        let sys = hardcore(&path(3), 1.0).unwrap();
        let a = coupling_mixing_estimate(&sys, 1000, 10_000, 7, Execution::Parallel).unwrap();
        let b = coupling_mixing_estimate(&sys, 1000, 10_000, 7, Execution::Sequential).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.censored, 0);
        assert!(a.note.contains("monotone"));
    }

    #[test]
    fn coupling_on_tree_colorings_coalesces() {
        let sys = coloring(&dary_tree(2, 3).unwrap(), 3).unwrap();
        let est = coupling_mixing_estimate(&sys, 20, 1_000_000, 1, Execution::Parallel).unwrap();
        assert_eq!(est.censored, 0);
        assert!(est.t_mix.is_some());
        assert!(est.note.contains("pair chains"));
    }

    #[test]
    fn long_runs_match_the_gibbs_distribution() {
        let sys = hardcore(&path(4), 1.0).unwrap();
        let t = enumerate(&sys).unwrap();
        let tm = exact_mixing_time(&sys, EXACT_STATE_CAP, 1000, Execution::Sequential)
            .unwrap()
            .t_mix
            .unwrap();
        let emp = empirical_distribution(&sys, &t, vec![0; 4], tm, 1_000_000, 3).unwrap();
        assert!(total_variation(&emp, t.probs()) < 0.02);
    }

    #[test]
    fn mixing_time_is_invariant_under_relabeling() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let h = Graph::from_edges(4, &[(2, 0), (0, 3), (3, 1)]).unwrap();
        let a = exact_mixing_time(&hardcore(&g, 1.3).unwrap(), EXACT_STATE_CAP, 1000, Execution::Sequential).unwrap();
        let b = exact_mixing_time(&hardcore(&h, 1.3).unwrap(), EXACT_STATE_CAP, 1000, Execution::Sequential).unwrap();
        assert_eq!(a.t_mix, b.t_mix);
        for (x, y) in a.tv_curve.iter().zip(&b.tv_curve) {
            assert!((x.1 - y.1).abs() < 1e-12);
        }
    }

    #[test]
    fn feasible_starts_differ() {
        let sys = coloring(&path(3), 3).unwrap();
        let a = feasible_configuration(&sys, false).unwrap();
        let b = feasible_configuration(&sys, true).unwrap();
        assert!(sys.weight(&a) > 0.0 && sys.weight(&b) > 0.0);
        assert_ne!(a, b);
    }

    #[test]
    fn consistency_ratio_guards_degenerate_inputs() {
        let sys = hardcore(&path(3), 1.0).unwrap();
        let t = enumerate(&sys).unwrap();
        let est = exact_mixing_time(&sys, EXACT_STATE_CAP, 1000, Execution::Sequential).unwrap();
        let c = at_mixing_consistency(&t, &est, 0.0, 2.0);
        assert!(c.ratio.is_none() && !c.within);
        let c = at_mixing_consistency(&t, &est, 3.0, 2.0);
        assert!(c.within);
    }
}

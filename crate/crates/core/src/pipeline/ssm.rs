//! Empirical strong spatial mixing and the factorization constant it
//! yields for a separator split.
//!
//! For a vertex `v`, a distance `d` and a pinning `η` of vertices closer
//! than `d`, the largest deviation `|µ(c | η, τ) / µ(c | η, ξ) - 1|` over
//! sets `W` at distance `d` is attained by `W` = all vertices at distance
//! `>= d`: a smaller `W` only averages the conditionals of the larger one.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::audit::stream_rng;
use crate::bounds::{weak_correlation_constant, TwoBlockView};
use crate::error::{input, Result};
use crate::exact::{enumerate_with_cap, GibbsTable, DEFAULT_ENUM_CAP};
use crate::graph::{ball_within, VertexSet};
use crate::spin::SpinSystem;

use super::regions::{region_tables, PinningOptions};

#[derive(Debug, Clone, Serialize)]
pub struct SsmOptions {
    pub radius_cap: usize,
    /// Largest number of near-side pinnings per (vertex, distance); beyond
    /// it a seeded uniform sample of this size is used.
    pub pinning_budget: usize,
    pub seed: u64,
    pub enum_cap: u64,
}

impl Default for SsmOptions {
    fn default() -> Self {
        SsmOptions {
            radius_cap: 4,
            pinning_budget: 4096,
            seed: 0,
            enum_cap: DEFAULT_ENUM_CAP,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SsmSample {
    pub distance: usize,
    /// `None` when some spin is possible under one far configuration and
    /// impossible under another (unbounded ratio).
    pub max_deviation: Option<f64>,
    pub cases: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SsmStatus {
    /// Decay with a fitted rate `δ > 0`.
    Holds,
    /// Every deviation is zero.
    Vacuous,
    /// Fewer than two usable distances.
    Degenerate,
    /// Unbounded deviation beyond distance 1, growth, or `δ <= 0`.
    Fails,
}

#[derive(Debug, Clone, Serialize)]
pub struct SsmEstimate {
    pub samples: Vec<SsmSample>,
    /// Least `C` with every usable deviation `<= C (1-δ)^d`.
    pub fitted_c: f64,
    pub fitted_delta: f64,
    /// Intercept `e^a` of the least-squares fit `log dev = a + d log(1-δ)`.
    pub least_squares_c: f64,
    /// Distances used in the fit (distance 1 is dropped when unbounded).
    pub fit_distances: Vec<usize>,
    pub status: SsmStatus,
    pub holds: bool,
    pub sampled: bool,
}

/// Largest deviation for vertex position `p`, far positions `far`, over the
/// given near-side pinnings (`None` entries are free).
fn deviation_for(t: &GibbsTable, p: usize, near: &[usize], far: &[usize], pins: &[Vec<Option<usize>>]) -> Option<f64> {
    let q = t.radices()[p];
    let mut worst: f64 = 0.0;
    for pin in pins {
        // far configuration -> weights of each spin at p
        let mut groups: BTreeMap<Vec<u8>, Vec<f64>> = BTreeMap::new();
        for i in 0..t.len() {
            let cfg = t.config(i);
            if near.iter().zip(pin).any(|(&j, a)| a.is_some_and(|a| cfg[j] as usize != a)) {
                continue;
            }
            let key: Vec<u8> = far.iter().map(|&j| cfg[j]).collect();
            groups.entry(key).or_insert_with(|| vec![0.0; q])[cfg[p] as usize] += t.prob(i);
        }
        for c in 0..q {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for w in groups.values() {
                let m = w[c] / w.iter().sum::<f64>();
                lo = lo.min(m);
                hi = hi.max(m);
            }
            if hi <= 0.0 {
                continue;
            }
            if lo <= 0.0 {
                return None;
            }
            worst = worst.max(hi / lo - 1.0);
        }
    }
    Some(worst)
}

/// Near-side pinnings: all of them, or a seeded sample of `budget`.
fn near_pinnings(t: &GibbsTable, near: &[usize], budget: usize, seed: u64, stream: u64) -> (Vec<Vec<Option<usize>>>, bool) {
    let radices: Vec<usize> = near.iter().map(|&j| t.radices()[j] + 1).collect();
    let total = radices.iter().try_fold(1usize, |a, &r| a.checked_mul(r));
    let decode = |digits: &[usize]| digits.iter().map(|&d| d.checked_sub(1)).collect::<Vec<_>>();
    match total {
        Some(total) if total <= budget => {
            let mut out = Vec::with_capacity(total);
            let mut digits = vec![0usize; near.len()];
            for _ in 0..total {
                out.push(decode(&digits));
                for (d, &r) in digits.iter_mut().zip(&radices) {
                    *d += 1;
                    if *d < r {
                        break;
                    }
                    *d = 0;
                }
            }
            (out, false)
        }
        _ => {
            let mut rng = stream_rng(seed, stream);
            let out = (0..budget)
                .map(|_| decode(&radices.iter().map(|&r| rng.random_range(0..r)).collect::<Vec<_>>()))
                .collect();
            (out, true)
        }
    }
}

pub fn ssm_check(sys: &SpinSystem, opts: &SsmOptions) -> Result<SsmEstimate> {
    if opts.radius_cap == 0 {
        return input("radius cap must be >= 1");
    }
    let t = enumerate_with_cap(sys, opts.enum_cap)?;
    let g = sys.graph();
    let n = sys.n();
    let dist: Vec<Vec<usize>> = (0..n).map(|v| g.distances_from(&VertexSet::singleton(v))).collect();
    let mut samples = Vec::new();
    let mut sampled = false;
    for d in 1..=opts.radius_cap {
        let mut sample = SsmSample {
            distance: d,
            max_deviation: Some(0.0),
            cases: 0,
        };
        let mut any = false;
        for v in 0..n {
            if !dist[v].contains(&d) {
                continue;
            }
            any = true;
            let far: Vec<usize> = (0..n).filter(|&u| dist[v][u] >= d).collect();
            let near: Vec<usize> = (0..n).filter(|&u| u != v && dist[v][u] < d).collect();
            let stream = (v * (opts.radius_cap + 1) + d) as u64;
            let (pins, s) = near_pinnings(&t, &near, opts.pinning_budget, opts.seed, stream);
            sampled |= s;
            sample.cases += pins.len() as u64;
            let dev = deviation_for(&t, v, &near, &far, &pins);
            sample.max_deviation = match (sample.max_deviation, dev) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
        }
        if any {
            samples.push(sample);
        }
    }
    Ok(fit(samples, sampled))
}

fn fit(samples: Vec<SsmSample>, sampled: bool) -> SsmEstimate {
    let mut est = SsmEstimate {
        samples,
        fitted_c: 0.0,
        fitted_delta: 0.0,
        least_squares_c: 0.0,
        fit_distances: Vec::new(),
        status: SsmStatus::Degenerate,
        holds: false,
        sampled,
    };
    let unbounded: Vec<usize> = est
        .samples
        .iter()
        .filter(|s| s.max_deviation.is_none())
        .map(|s| s.distance)
        .collect();
    if unbounded.iter().any(|&d| d > 1) {
        est.status = SsmStatus::Fails;
        return est;
    }
    let usable: Vec<(usize, f64)> = est
        .samples
        .iter()
        .filter_map(|s| s.max_deviation.map(|x| (s.distance, x)))
        .collect();
    est.fit_distances = usable.iter().map(|p| p.0).collect();
    if unbounded.is_empty() && usable.iter().all(|p| p.1 <= 1e-14) {
        est.status = SsmStatus::Vacuous;
        est.fitted_delta = 1.0;
        est.holds = true;
        return est;
    }
    let positive: Vec<(f64, f64)> = usable
        .iter()
        .filter(|p| p.1 > 1e-14)
        .map(|&(d, x)| (d as f64, x.ln()))
        .collect();
    if positive.len() < 2 {
        return est;
    }
    let m = positive.len() as f64;
    let mx = positive.iter().map(|p| p.0).sum::<f64>() / m;
    let my = positive.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = positive.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = positive.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    est.least_squares_c = (my - slope * mx).exp();
    est.fitted_delta = 1.0 - slope.exp();
    let non_increasing = usable.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12) + 1e-15);
    if est.fitted_delta <= 0.0 || !non_increasing {
        est.status = SsmStatus::Fails;
        return est;
    }
    est.fitted_c = usable
        .iter()
        .map(|&(d, x)| x / (1.0 - est.fitted_delta).powi(d as i32))
        .fold(0.0, f64::max);
    est.status = SsmStatus::Holds;
    est.holds = true;
    est
}

/// Weak-correlation test for the marginal on `S ∪ T`, `T = U \ B_U(S, r)`.
#[derive(Debug, Clone, Serialize)]
pub struct SsmFactorization {
    /// Largest `|µ_S^τ(σ)/µ_S(σ) - 1|` over pinnings of `∂U` and `τ` on `T`.
    pub epsilon: f64,
    /// `1 / (2γ)`.
    pub target: f64,
    pub applicable: bool,
    /// `e^{1/γ}` when applicable.
    pub constant: Option<f64>,
    pub pinnings: usize,
    pub sampled: bool,
}

pub fn ssm_factorization_constant(
    sys: &SpinSystem,
    u: &VertexSet,
    s: &VertexSet,
    r: usize,
    gamma: f64,
    pinning: &PinningOptions,
) -> Result<SsmFactorization> {
    if !(gamma >= 10.0) {
        return input(format!("gamma must be >= 10, got {gamma}"));
    }
    if !s.is_subset(u) {
        return input("separator must lie inside U");
    }
    let target = 1.0 / (2.0 * gamma);
    let far = u.difference(&ball_within(sys.graph(), u, s, r)?);
    if far.is_empty() || s.is_empty() {
        return Ok(SsmFactorization {
            epsilon: 0.0,
            target,
            applicable: true,
            constant: Some(1.0),
            pinnings: 0,
            sampled: false,
        });
    }
    let tables = region_tables(sys, u, pinning)?;
    let xy = s.union(&far);
    let mut epsilon: f64 = 0.0;
    for t in &tables.tables {
        let m = t.marginal(&xy)?;
        epsilon = epsilon.max(weak_correlation_constant(&TwoBlockView::new(&m, s, &far)?).epsilon);
    }
    let applicable = epsilon <= target;
    Ok(SsmFactorization {
        epsilon,
        target,
        applicable,
        constant: applicable.then(|| (1.0 / gamma).exp()),
        pinnings: tables.tables.len(),
        sampled: tables.sampled,
    })
}

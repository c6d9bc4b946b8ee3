//! Conditional distributions on a vertex region under pinnings of its
//! outer boundary.
//!
//! Given the spins on the outer boundary `∂W`, the distribution on `W` no
//! longer depends on anything else, so maximizing a constant over the
//! feasible boundary pinnings maximizes it over every pinning of `V \ W`.

use std::collections::BTreeSet;

use rand::Rng;
use serde::Serialize;

use crate::audit::stream_rng;
use crate::error::{Error, Result};
use crate::exact::{enumerate_with_cap, GibbsTable, DEFAULT_ENUM_CAP};
use crate::graph::VertexSet;
use crate::spin::{condition, is_feasible_pinning, restrict, Pinning, SpinSystem};

/// How boundary pinnings are chosen.
#[derive(Debug, Clone, Serialize)]
pub struct PinningOptions {
    /// Enumerate every boundary pinning when there are at most this many.
    pub max_exhaustive: u64,
    /// Otherwise draw this many distinct feasible pinnings uniformly.
    pub samples: usize,
    pub seed: u64,
    /// Cap on the raw state space of each conditional table.
    pub enum_cap: u64,
}

impl Default for PinningOptions {
    fn default() -> Self {
        PinningOptions {
            max_exhaustive: 4096,
            samples: 256,
            seed: 0,
            enum_cap: DEFAULT_ENUM_CAP,
        }
    }
}

/// The conditional tables of a region, one per feasible boundary pinning.
#[derive(Debug, Clone)]
pub struct RegionTables {
    pub region: VertexSet,
    pub boundary: VertexSet,
    pub tables: Vec<GibbsTable>,
    /// True when the pinnings were sampled rather than enumerated.
    pub sampled: bool,
}

/// Vertices outside `w` adjacent to `w`.
pub fn outer_boundary(sys: &SpinSystem, w: &VertexSet) -> VertexSet {
    let g = sys.graph();
    let mut out = BTreeSet::new();
    for v in w.iter() {
        for &u in g.neighbors(v) {
            if !w.contains(u) {
                out.insert(u);
            }
        }
    }
    out.into_iter().collect()
}

/// Gibbs table of `µ^η_W` for a pinning `η` of (a superset of) `∂W`.
pub fn region_table(sys: &SpinSystem, w: &VertexSet, pin: &Pinning, cap: u64) -> Result<GibbsTable> {
    let cond = condition(sys, pin)?;
    // Free vertices keep their order, so positions in `cond` are ranks.
    let keep: VertexSet = w
        .iter()
        .map(|v| (0..v).filter(|x| !pin.contains_key(x)).count())
        .collect();
    enumerate_with_cap(&restrict(&cond, &keep)?, cap)
}

pub fn region_tables(sys: &SpinSystem, w: &VertexSet, opts: &PinningOptions) -> Result<RegionTables> {
    sys.graph().check_set(w)?;
    let boundary = outer_boundary(sys, w);
    let radices: Vec<usize> = boundary.iter().map(|v| sys.domain_size(v)).collect();
    let total = radices
        .iter()
        .try_fold(1u64, |acc, &q| acc.checked_mul(q as u64))
        .unwrap_or(u64::MAX);
    let to_pin = |digits: &[usize]| -> Pinning { boundary.iter().zip(digits).map(|(v, &a)| (v, a)).collect() };
    let mut pins = Vec::new();
    let sampled = total > opts.max_exhaustive;
    if !sampled {
        let mut digits = vec![0usize; radices.len()];
        loop {
            let pin = to_pin(&digits);
            if is_feasible_pinning(sys, &pin)? {
                pins.push(pin);
            }
            let mut i = 0;
            while i < digits.len() {
                digits[i] += 1;
                if digits[i] < radices[i] {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
            if i == digits.len() {
                break;
            }
        }
    } else {
        let mut rng = stream_rng(opts.seed, 0);
        let mut seen = BTreeSet::new();
        let attempts = opts.samples.saturating_mul(64);
        for _ in 0..attempts {
            if seen.len() >= opts.samples {
                break;
            }
            let digits: Vec<usize> = radices.iter().map(|&q| rng.random_range(0..q)).collect();
            if seen.contains(&digits) {
                continue;
            }
            let pin = to_pin(&digits);
            if is_feasible_pinning(sys, &pin)? {
                seen.insert(digits);
                pins.push(pin);
            }
        }
    }
    if pins.is_empty() {
        return Err(Error::Domain(format!("no feasible pinning of the boundary of {w:?}")));
    }
    let tables = pins
        .iter()
        .map(|p| region_table(sys, w, p, opts.enum_cap))
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionTables {
        region: w.clone(),
        boundary,
        tables,
        sampled,
    })
}

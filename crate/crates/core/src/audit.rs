//! Randomized audits of factorization inequalities against exact tables.
//!
//! Test functions are drawn i.i.d. per configuration: uniform on `[-1, 1]`
//! for variance and on `[0.1, 2]` for entropy. Every function `i` uses its
//! own ChaCha8 stream (`seed`, stream `i`), so results do not depend on how
//! the work is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::exact::{
    entropy, expected_block_with, neumaier_sum, variance, BlockIndex, Functional, GibbsTable,
    Slack, TestFunction,
};
use crate::graph::VertexSet;
use crate::par::{self, Execution};

/// Relative slack below which an inequality counts as violated.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

/// RNG for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One random test function of length `len`.
pub fn random_function(rng: &mut impl Rng, len: usize, kind: Functional) -> TestFunction {
    (0..len)
        .map(|_| match kind {
            Functional::Variance => rng.random_range(-1.0..=1.0),
            Functional::Entropy => rng.random_range(0.1..=2.0),
        })
        .collect()
}

/// `count` random functions, function `i` drawn from stream `i`.
pub fn random_functions(t: &GibbsTable, kind: Functional, count: usize, seed: u64) -> Vec<TestFunction> {
    (0..count)
        .map(|i| random_function(&mut stream_rng(seed, i as u64), t.len(), kind))
        .collect()
}

/// Indicators of the single-site events `{σ_v = c}` that are neither
/// impossible nor certain.
pub fn site_indicators(t: &GibbsTable) -> Vec<TestFunction> {
    let mut out = Vec::new();
    for p in 0..t.n() {
        for c in 0..t.radices()[p] {
            let f: Vec<f64> = t
                .configs()
                .iter()
                .map(|cfg| if cfg[p] as usize == c { 1.0 } else { 0.0 })
                .collect();
            let s: f64 = f.iter().sum();
            if s > 0.0 && s < t.len() as f64 {
                out.push(f);
            }
        }
    }
    out
}

/// Outcome of checking `F(f) <= C Σ_B E[F_B f]` over a family of functions.
#[derive(Debug, Clone, Serialize)]
pub struct AuditSummary {
    pub functional: Functional,
    pub constant: f64,
    pub functions: usize,
    pub violations: usize,
    /// Smallest relative slack seen (1 if every function is constant).
    pub min_relative_slack: f64,
    /// Largest observed `F(f) / Σ_B E[F_B f]`: a lower bound on the
    /// optimal constant.
    pub max_ratio: f64,
}

impl AuditSummary {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Precomputed block structure for repeated audits.
pub struct BlockAuditor<'a> {
    t: &'a GibbsTable,
    blocks: Vec<BlockIndex>,
}

impl<'a> BlockAuditor<'a> {
    pub fn new(t: &'a GibbsTable, blocks: &[VertexSet]) -> Result<Self> {
        let blocks = blocks.iter().map(|b| t.block_index(b)).collect::<Result<_>>()?;
        Ok(BlockAuditor { t, blocks })
    }

    /// Single-site blocks.
    pub fn sites(t: &'a GibbsTable) -> Result<Self> {
        let blocks: Vec<VertexSet> = t.vertices().iter().map(VertexSet::singleton).collect();
        Self::new(t, &blocks)
    }

    /// `(F(f), Σ_B E[F_B f])`.
    pub fn sides(&self, f: &[f64], kind: Functional) -> Result<(f64, f64)> {
        let whole = match kind {
            Functional::Variance => variance(self.t, f),
            Functional::Entropy => entropy(self.t, f)?,
        };
        let mut parts = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            parts.push(expected_block_with(self.t, b, f, kind)?);
        }
        Ok((whole, neumaier_sum(parts)))
    }

    pub fn slack(&self, f: &[f64], kind: Functional, constant: f64) -> Result<Slack> {
        let (whole, parts) = self.sides(f, kind)?;
        Ok(Slack::new(whole, constant * parts))
    }

    pub fn audit(
        &self,
        functions: &[TestFunction],
        kind: Functional,
        constant: f64,
        exec: Execution,
    ) -> Result<AuditSummary> {
        let results = par::map_slice(exec, functions, |f| self.sides(f, kind));
        let mut summary = AuditSummary {
            functional: kind,
            constant,
            functions: functions.len(),
            violations: 0,
            min_relative_slack: 1.0,
            max_ratio: 0.0,
        };
        for r in results {
            let (whole, parts) = r?;
            let s = Slack::new(whole, constant * parts);
            if whole <= 1e-14 && parts <= 1e-14 {
                continue;
            }
            if !s.holds(AUDIT_TOLERANCE) {
                summary.violations += 1;
            }
            summary.min_relative_slack = summary.min_relative_slack.min(s.relative);
            let ratio = if parts > 0.0 { whole / parts } else { f64::INFINITY };
            summary.max_ratio = summary.max_ratio.max(ratio);
        }
        Ok(summary)
    }
}

/// Audits `F(f) <= C Σ_B E[F_B f]` on `count` random functions plus the
/// site indicators.
pub fn audit_blocks(
    t: &GibbsTable,
    blocks: &[VertexSet],
    constant: f64,
    kind: Functional,
    count: usize,
    seed: u64,
    exec: Execution,
) -> Result<AuditSummary> {
    let mut functions = random_functions(t, kind, count, seed);
    functions.extend(site_indicators(t));
    BlockAuditor::new(t, blocks)?.audit(&functions, kind, constant, exec)
}

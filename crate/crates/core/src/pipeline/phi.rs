//! Numerical solution of the recursive bound on the worst AT multiplier
//! `φ(k)` over vertex sets of size at most `k`.
//!
//! Two recursions are supported (logs are natural):
//!
//! * polylog: `φ(k) <= max{100 log²k · φ(log^t k), φ(k0)}`, envelope
//!   `φ(k0) log³k`;
//! * growth: `φ(k) <= max{6 log k · φ(t log^{2d} k), φ(k0)}`, envelope
//!   `φ(k0) log²k`.
//!
//! `k0` is astronomically large for realistic `t`, so everything is done in
//! terms of `x = log k`.

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum PhiForm {
    Polylog { t: f64 },
    Growth { t: f64, d: f64 },
}

impl PhiForm {
    /// `log k'` for the recursive argument `k'` as a function of `x = log k`.
    fn inner(&self, x: f64) -> f64 {
        match *self {
            PhiForm::Polylog { t } => t * x.ln(),
            PhiForm::Growth { t, d } => t.ln() + 2.0 * d * x.ln(),
        }
    }

    fn factor(&self, x: f64) -> f64 {
        match *self {
            PhiForm::Polylog { .. } => 100.0 * x * x,
            PhiForm::Growth { .. } => 6.0 * x,
        }
    }

    pub fn envelope_power(&self) -> i32 {
        match self {
            PhiForm::Polylog { .. } => 3,
            PhiForm::Growth { .. } => 2,
        }
    }

    /// Side conditions as `c (α + β y)^m <= e^y` with `y = log log k`.
    fn conditions(&self) -> Vec<(f64, f64, f64, i32)> {
        match *self {
            // log^t k < k and 100 t³ (log log k)³ <= log k.
            PhiForm::Polylog { t } => vec![(t, 0.0, 1.0, 1), (100.0 * t.powi(3), 0.0, 1.0, 3)],
            // t log^{2d} k < k and 6 log²(t log^{2d} k) <= log k.
            PhiForm::Growth { t, d } => vec![(1.0, t.ln(), 2.0 * d, 1), (6.0, t.ln(), 2.0 * d, 2)],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PhiForm::Polylog { t } => t.is_finite() && t >= 1.0,
            PhiForm::Growth { t, d } => t.is_finite() && t >= 1.0 && d.is_finite() && d > 0.0,
        };
        if ok {
            Ok(())
        } else {
            input(format!("invalid recursion parameters {self:?}"))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiParams {
    pub form: PhiForm,
    /// `φ(k0)`.
    pub phi0: f64,
    /// `log k0`; the least valid value when absent.
    pub log_k0: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiRow {
    pub log2_k: f64,
    pub log_k: f64,
    pub phi: f64,
    pub envelope: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiTable {
    pub form: PhiForm,
    pub phi0: f64,
    pub log_k0: f64,
    pub min_log_k0: f64,
    pub rows: Vec<PhiRow>,
    pub all_hold: bool,
}

/// Least `y0` with `c (α+βy)^m <= e^y` for all `y >= y0` (and `α+βy >= 1`,
/// so the recursive argument stays at least `e`). `m log(α+βy) - y` is
/// concave, so the failure set is an interval.
fn threshold(c: f64, alpha: f64, beta: f64, m: i32) -> f64 {
    let g = |y: f64| c.ln() + m as f64 * (alpha + beta * y).ln() - y;
    let y_min = ((1.0 - alpha) / beta).max(0.0);
    let peak = (m as f64 - alpha / beta).max(y_min);
    if g(peak) <= 0.0 && g(y_min) <= 0.0 {
        return y_min;
    }
    let (mut lo, mut hi) = (peak, peak.max(1.0) * 2.0);
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Least `log k0` for which the side conditions hold for every `k >= k0`.
pub fn minimal_log_k0(form: &PhiForm) -> Result<f64> {
    form.validate()?;
    let y0 = form
        .conditions()
        .into_iter()
        .map(|(c, a, b, m)| threshold(c, a, b, m))
        .fold(0.0, f64::max);
    // Slightly above the root so the strict inequalities hold.
    Ok(y0.exp() * (1.0 + 1e-9))
}

fn phi_at(form: &PhiForm, phi0: f64, x0: f64, x: f64) -> f64 {
    if x <= x0 {
        return phi0;
    }
    let inner = form.inner(x);
    (form.factor(x) * phi_at(form, phi0, x0, inner)).max(phi0)
}

/// Iterates the recursion (taken with equality) on `k = 2^j`, `j = 2..=30`,
/// and on `log k = log k0 · 2^i`, `i = 0..=30`, checking the envelope.
pub fn phi_recursion_solve(params: &PhiParams) -> Result<PhiTable> {
    let form = params.form;
    if !(params.phi0 > 0.0 && params.phi0.is_finite()) {
        return input("phi0 must be positive");
    }
    let min = minimal_log_k0(&form)?;
    let x0 = match params.log_k0 {
        Some(x) if x >= min => x,
        Some(x) => {
            return input(format!(
                "side conditions fail for log k0 = {x}; the least valid log k0 is {min}"
            ))
        }
        None => min,
    };
    let ln2 = std::f64::consts::LN_2;
    let grid = (2..=30)
        .map(|j| j as f64 * ln2)
        .chain((0..=30).map(|i| x0 * 2f64.powi(i)));
    let rows: Vec<PhiRow> = grid
        .map(|x| {
            let phi = phi_at(&form, params.phi0, x0, x);
            let envelope = params.phi0 * x.powi(form.envelope_power());
            PhiRow {
                log2_k: x / ln2,
                log_k: x,
                phi,
                envelope,
                holds: phi <= envelope * (1.0 + 1e-12),
            }
        })
        .collect();
    Ok(PhiTable {
        form,
        phi0: params.phi0,
        log_k0: x0,
        min_log_k0: min,
        all_hold: rows.iter().all(|r| r.holds),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(form: PhiForm) -> PhiParams {
        PhiParams {
            form,
            phi0: 1.0,
            log_k0: None,
        }
    }

    #[test]
    fn base_case_is_constant() {
        let t = phi_recursion_solve(&params(PhiForm::Polylog { t: 2.0 })).unwrap();
        for r in t.rows.iter().filter(|r| r.log_k <= t.log_k0) {
            assert_eq!(r.phi, 1.0);
        }
    }

    #[test]
    fn polylog_envelope_holds() {
        for t in [1.0, 2.0, 3.0] {
            let tab = phi_recursion_solve(&params(PhiForm::Polylog { t })).unwrap();
            assert!(tab.all_hold);
            assert!(tab.rows.iter().any(|r| r.log2_k >= 30.0 - 1e-9));
            // The recursion is active beyond k0.
            assert!(tab.rows.last().unwrap().phi > 1.0);
        }
    }

    #[test]
    fn growth_envelope_holds() {
        for (t, d) in [(1.0, 1.0), (2.0, 1.0), (4.0, 2.0)] {
            let tab = phi_recursion_solve(&params(PhiForm::Growth { t, d })).unwrap();
            assert!(tab.all_hold, "{t} {d}");
        }
    }

    #[test]
    fn minimal_k0_meets_side_conditions() {
        let t: f64 = 2.0;
        let x0 = minimal_log_k0(&PhiForm::Polylog { t }).unwrap();
        for x in [x0, x0 * 1.5, x0 * 10.0, x0 * 1e6] {
            let y = x.ln();
            assert!(t * y < x);
            assert!(100.0 * t.powi(3) * y.powi(3) <= x);
        }
        // Just below the threshold the cubic condition fails.
        let y = (x0 * 0.99).ln();
        assert!(100.0 * t.powi(3) * y.powi(3) > x0 * 0.99);
    }

    #[test]
    fn too_small_k0_reports_the_minimum() {
        let mut p = params(PhiForm::Polylog { t: 2.0 });
        p.log_k0 = Some(20.0 * std::f64::consts::LN_2);
        let err = phi_recursion_solve(&p).unwrap_err().to_string();
        assert!(err.contains("least valid log k0"), "{err}");
    }
}

//! KKT power allocation under a sum-power budget.
//!
//! For a multiplier `mu` each UE's power is its water-filling response to the
//! current interference,
//!
//! ```text
//! p_k = max(1/mu - (sum_{j != k} p_j G[k][j] + N0) / G[k][k], 0)
//! ```
//!
//! which is a coupled fixed point in `p`. It is solved by Jacobi iteration
//! (switching to 0.5 damping once the step size stops shrinking) inside a
//! bisection on `mu` that drives `sum p` to the budget.
//!
//! With interference the map can have several equilibria, and `sum p` can
//! jump as `mu` moves between them. For small K every active set is therefore
//! solved exactly (`sum p = p_max` plus the active water-filling equations)
//! and the consistent point with the highest sum-rate is returned. The
//! iteration handles larger K and the cases where no active set meets the
//! budget. The result is a stationary point, not a certified global optimum.

use super::sumrate;
use crate::allocator::CouplingMatrix;
use crate::config::PowerMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktOptions {
    /// Inner loop stops when `max |dp| < inner_tolerance * max(p_max, max p)`.
    pub inner_tolerance: f64,
    pub max_inner_iterations: usize,
    /// Outer loop stops when `|sum p - p_max| < budget_tolerance * p_max`.
    pub budget_tolerance: f64,
    pub max_bisections: usize,
    pub damping: f64,
    /// Up to this many UEs, every active set is solved exactly and the best
    /// consistent point is returned; the iteration is only a fallback.
    pub exhaustive_max_ues: usize,
    pub mode: PowerMode,
}

impl Default for KktOptions {
    fn default() -> Self {
        KktOptions {
            inner_tolerance: 1e-10,
            max_inner_iterations: 1000,
            budget_tolerance: 1e-8,
            max_bisections: 200,
            damping: 0.5,
            exhaustive_max_ues: 10,
            mode: PowerMode::SumRate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    pub power: Vec<f64>,
    pub mu: f64,
    /// Inner fixed-point iterations summed over all bisection steps.
    pub inner_iterations: usize,
    pub bisections: usize,
    /// False when no equilibrium meets the budget exactly and the returned
    /// point is the nearest one below it.
    pub budget_tight: bool,
}

const MU_FLOOR: f64 = 1e-12;
const TRACE_LEN: usize = 8;
/// Hard cap on the exhaustive active-set search (`2^K - 1` linear solves).
const MAX_SUBSET_SEARCH: usize = 16;
/// Inner iterations between attempts at an exact active-set solve.
const EXACT_EVERY: usize = 25;
/// Powers below this fraction of the budget count as switched off.
const ACTIVE_TOLERANCE: f64 = 1e-12;

/// Water-filling response of UE `k` at water level `level = 1/mu`.
#[inline]
fn response(g: &CouplingMatrix, k: usize, p: &[f64], n0: f64, level: f64) -> f64 {
    let own = g.get(k, k);
    if own <= 0.0 {
        return 0.0;
    }
    (level - g.interference_plus_noise(k, p, n0) / own).max(0.0)
}

struct FixedPoint {
    power: Vec<f64>,
    iterations: usize,
}

fn fixed_point(g: &CouplingMatrix, n0: f64, level: f64, p_max: f64, opts: &KktOptions) -> Result<FixedPoint> {
    let k = g.ues();
    let tol = opts.inner_tolerance * p_max;
    let mut p = vec![p_max / k as f64; k];
    let mut next = vec![0.0; k];
    let mut damped = false;
    let mut prev = f64::INFINITY;
    let mut stalls = 0;
    let mut trace = Vec::with_capacity(TRACE_LEN);
    for it in 1..=opts.max_inner_iterations {
        for (i, n) in next.iter_mut().enumerate() {
            *n = response(g, i, &p, n0, level);
        }
        let mut delta: f64 = 0.0;
        for (pi, ni) in p.iter_mut().zip(&next) {
            let v = if damped {
                (1.0 - opts.damping) * *pi + opts.damping * ni
            } else {
                *ni
            };
            delta = delta.max((v - *pi).abs());
            *pi = v;
        }
        let scale = p.iter().fold(1.0f64, |m, &x| m.max(x / p_max));
        if delta < tol * scale {
            return Ok(FixedPoint {
                power: p,
                iterations: it,
            });
        }
        if !damped && delta >= prev {
            stalls += 1;
            if stalls >= 2 {
                damped = true;
            }
        }
        prev = delta;
        if it % EXACT_EVERY == 0 {
            if let Some(power) = exact_at_level(g, n0, level, &p, tol * scale) {
                return Ok(FixedPoint { power, iterations: it });
            }
        }
        if trace.len() == TRACE_LEN {
            trace.remove(0);
        }
        trace.push(delta);
    }
    Err(Error::NotConverged {
        iterations: opts.max_inner_iterations,
        mu: 1.0 / level,
        trace,
    })
}

/// Gauss-Jordan elimination with partial pivoting on an augmented matrix.
pub(super) fn gauss(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let dim = a.len();
    for col in 0..dim {
        let piv = (col..dim).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        let pivot = a[col].clone();
        for (row, r) in a.iter_mut().enumerate() {
            if row != col {
                let f = r[col] / pivot[col];
                if f != 0.0 {
                    for (x, p) in r[col..].iter_mut().zip(&pivot[col..]) {
                        *x -= f * p;
                    }
                }
            }
        }
    }
    Some((0..dim).map(|i| a[i][dim] / a[i][i]).collect())
}

/// Exact fixed point at a fixed water level, assuming the active set of `p`.
/// Accepted only if it reproduces itself under one response step.
fn exact_at_level(g: &CouplingMatrix, n0: f64, level: f64, p: &[f64], tol: f64) -> Option<Vec<f64>> {
    let active: Vec<usize> = (0..p.len()).filter(|&k| p[k] > tol).collect();
    let n = active.len();
    let mut out = vec![0.0; p.len()];
    if n > 0 {
        let mut a = vec![vec![0.0; n + 1]; n];
        for (r, &k) in active.iter().enumerate() {
            let own = g.get(k, k);
            for (c, &j) in active.iter().enumerate() {
                a[r][c] = if j == k { 1.0 } else { g.get(k, j) / own };
            }
            a[r][n] = level - n0 / own;
        }
        let x = gauss(a)?;
        for (i, &k) in active.iter().enumerate() {
            if !(x[i] >= 0.0) || !x[i].is_finite() {
                return None;
            }
            out[k] = x[i];
        }
    }
    let residual = (0..p.len())
        .map(|k| (response(g, k, &out, n0, level) - out[k]).abs())
        .fold(0.0, f64::max);
    (residual < tol).then_some(out)
}

/// Solve the active-set equations exactly: for active `k`,
/// `p_k + sum_{j active, j != k} G[k][j]/G[k][k] p_j - level = -N0/G[k][k]`,
/// plus `sum p = p_max`. The active set is read off `p`; entries still
/// decaying towards zero are dropped, smallest first, until the solution is
/// consistent.
fn polish(g: &CouplingMatrix, n0: f64, p_max: f64, p: &[f64]) -> Option<(Vec<f64>, f64)> {
    let mut order: Vec<usize> = (0..p.len()).filter(|&k| p[k] > 0.0).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    (1..=order.len()).rev().find_map(|n| {
        let mut active = order[..n].to_vec();
        active.sort_unstable();
        polish_with(g, n0, p_max, &active)
    })
}

/// Every active set with an exact budget-tight solution, best sum-rate first.
fn best_active_set(g: &CouplingMatrix, n0: f64, p_max: f64) -> Option<(Vec<f64>, f64)> {
    (1u32..1 << g.ues())
        .filter_map(|mask| {
            let active: Vec<usize> = (0..g.ues()).filter(|&k| mask >> k & 1 == 1).collect();
            polish_with(g, n0, p_max, &active)
        })
        .max_by(|a, b| g.sum_rate(&a.0, n0).total_cmp(&g.sum_rate(&b.0, n0)))
}

fn polish_with(g: &CouplingMatrix, n0: f64, p_max: f64, active: &[usize]) -> Option<(Vec<f64>, f64)> {
    let eps = ACTIVE_TOLERANCE * p_max;
    let n = active.len();
    let p = vec![0.0; g.ues()];
    if n == 0 {
        return None;
    }
    // unknowns: p_active (n) then level; augmented matrix (n+1) x (n+2)
    let dim = n + 1;
    let mut a = vec![vec![0.0; dim + 1]; dim];
    for (r, &k) in active.iter().enumerate() {
        let own = g.get(k, k);
        for (c, &j) in active.iter().enumerate() {
            a[r][c] = if j == k { 1.0 } else { g.get(k, j) / own };
        }
        a[r][n] = -1.0;
        a[r][dim] = -n0 / own;
    }
    a[n][..n].fill(1.0);
    a[n][dim] = p_max;

    let x = gauss(a)?;
    let level = x[n];
    if !(level > 0.0) || x[..n].iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return None;
    }
    let mut out = vec![0.0; p.len()];
    for (i, &k) in active.iter().enumerate() {
        out[k] = x[i];
    }
    // inactive UEs must stay switched off at the new point
    for k in 0..p.len() {
        if out[k] == 0.0 && response(g, k, &out, n0, level) > eps {
            return None;
        }
    }
    let total: f64 = out.iter().sum();
    if (total - p_max).abs() > 1e-12 * p_max {
        return None;
    }
    Some((out, level))
}

/// Priced water-filling response: the selfish response with the water level
/// lowered by `pi_k`, the marginal rate UE k's power costs the other UEs.
pub(super) fn response_priced(g: &CouplingMatrix, k: usize, p: &[f64], n0: f64, mu: f64) -> f64 {
    let own = g.get(k, k);
    if own <= 0.0 {
        return 0.0;
    }
    let d = sumrate::gradient(g, p, n0);
    let ipn = g.interference_plus_noise(k, p, n0);
    let price = own / (ipn + own * p[k]) - d[k];
    (1.0 / (mu + price) - ipn / own).max(0.0)
}

/// Largest `|p_k - response_k(p, mu)|` under the stationarity map of `mode`.
pub fn kkt_residual(g: &CouplingMatrix, sol: &PowerSolution, n0: f64, mode: PowerMode) -> f64 {
    (0..g.ues())
        .map(|k| {
            let r = match mode {
                PowerMode::SumRate => response_priced(g, k, &sol.power, n0, sol.mu),
                PowerMode::Selfish => response(g, k, &sol.power, n0, 1.0 / sol.mu),
            };
            (r - sol.power[k]).abs()
        })
        .fold(0.0, f64::max)
}

/// Power allocation under `sum p <= p_max`, returning a point that satisfies
/// the stationarity conditions of `opts.mode`.
pub fn power_allocate_kkt(g: &CouplingMatrix, p_max: f64, n0: f64, opts: &KktOptions) -> Result<PowerSolution> {
    if !(p_max > 0.0) {
        return Err(Error::domain(format!("power budget must be positive, got {p_max}")));
    }
    if !(n0 > 0.0) {
        return Err(Error::domain(format!("noise power must be positive, got {n0}")));
    }
    let k = g.ues();
    if k == 0 || (0..k).all(|i| g.get(i, i) <= 0.0) {
        return Err(Error::domain("at least one UE needs a positive own gain"));
    }
    let selfish_result = selfish(g, p_max, n0, opts);
    if opts.mode == PowerMode::Selfish {
        return selfish_result;
    }

    let mut starts = vec![vec![p_max / k as f64; k]];
    if let Ok(s) = &selfish_result {
        starts.push(s.power.clone());
    }
    for i in 0..k {
        if g.get(i, i) > 0.0 {
            let mut v = vec![0.0; k];
            v[i] = p_max;
            starts.push(v);
        }
    }
    let st = sumrate::best_stationary(g, n0, p_max, &starts);
    Ok(PowerSolution {
        power: st.power,
        mu: st.mu,
        inner_iterations: st.iterations + selfish_result.as_ref().map_or(0, |s| s.inner_iterations),
        bisections: 0,
        budget_tight: true,
    })
}

/// Bisection on `mu` around the per-UE water-filling fixed point.
fn selfish(g: &CouplingMatrix, p_max: f64, n0: f64, opts: &KktOptions) -> Result<PowerSolution> {
    let k = g.ues();
    if k <= opts.exhaustive_max_ues.min(MAX_SUBSET_SEARCH) {
        if let Some((power, level)) = best_active_set(g, n0, p_max) {
            return Ok(PowerSolution {
                power,
                mu: 1.0 / level,
                inner_iterations: 0,
                bisections: 0,
                budget_tight: true,
            });
        }
    }

    let mut iterations = 0;
    let mut eval = |mu: f64| -> Result<(Vec<f64>, f64)> {
        let fp = fixed_point(g, n0, 1.0 / mu, p_max, opts)?;
        iterations += fp.iterations;
        let total = fp.power.iter().sum();
        Ok((fp.power, total))
    };

    // Bracket: sum p is nonincreasing in mu.
    let mut mu_hi = 1.0;
    let mut hi = eval(mu_hi)?;
    let mut mu_lo = MU_FLOOR;
    if hi.1 >= p_max {
        mu_lo = mu_hi;
        while hi.1 >= p_max {
            mu_lo = mu_hi;
            mu_hi *= 2.0;
            if !mu_hi.is_finite() {
                return Err(Error::domain("could not bracket the multiplier"));
            }
            hi = eval(mu_hi)?;
        }
    }

    let mut bisections = 0;
    let mut chosen: Option<(Vec<f64>, f64, f64)> = None;
    while bisections < opts.max_bisections {
        bisections += 1;
        let mid = (mu_lo * mu_hi).sqrt();
        let (p, total) = eval(mid)?;
        if (total - p_max).abs() < opts.budget_tolerance * p_max {
            chosen = Some((p, total, mid));
            break;
        }
        if total >= p_max {
            mu_lo = mid;
        } else {
            mu_hi = mid;
            hi = (p, total);
        }
        if mu_hi / mu_lo - 1.0 < 1e-15 {
            break;
        }
    }

    let (p, total, mu) = chosen.unwrap_or_else(|| (hi.0.clone(), hi.1, mu_hi));
    let (power, mu) = match polish(g, n0, p_max, &p) {
        Some((pp, level)) => (pp, 1.0 / level),
        None if total <= p_max => (p, mu),
        None => (hi.0, mu_hi),
    };
    let budget_tight = (power.iter().sum::<f64>() - p_max).abs() <= opts.budget_tolerance * p_max;
    Ok(PowerSolution {
        power,
        mu,
        inner_iterations: iterations,
        bisections,
        budget_tight,
    })
}

//! Stationary points of the sum-rate on the budget face `sum p = p_max`.
//!
//! Rates are in nats here. With `T_j = N0 + sum_l G[j][l] p_l` and
//! `U_j = T_j - G[j][j] p_j`,
//!
//! ```text
//! dR/dp_k      = sum_j G[j][k] / T_j - sum_{j != k} G[j][k] / U_j
//! d2R/dp_k dp_l = sum_j -G[j][k] G[j][l] / T_j^2 + sum_{j != k, l} G[j][k] G[j][l] / U_j^2
//! ```
//!
//! Scaling every power up raises every SINR, so the maximum sits on the
//! budget face. Each start is refined by projected gradient ascent with
//! backtracking, then Newton's method on the active set solves
//! `dR/dp_k = mu` to machine precision.

use super::power::response_priced;
use super::CouplingMatrix;

const MAX_ASCENT: usize = 3000;
const MAX_NEWTON: usize = 40;
const ARMIJO: f64 = 1e-4;

pub(super) struct Stationary {
    pub power: Vec<f64>,
    pub mu: f64,
    pub iterations: usize,
}

fn totals(g: &CouplingMatrix, p: &[f64], n0: f64) -> (Vec<f64>, Vec<f64>) {
    let k = g.ues();
    let mut t = vec![n0; k];
    for (j, tj) in t.iter_mut().enumerate() {
        for (l, pl) in p.iter().enumerate() {
            *tj += g.get(j, l) * pl;
        }
    }
    let u = (0..k).map(|j| t[j] - g.get(j, j) * p[j]).collect();
    (t, u)
}

pub(super) fn rate(g: &CouplingMatrix, p: &[f64], n0: f64) -> f64 {
    let (t, u) = totals(g, p, n0);
    t.iter().zip(&u).map(|(t, u)| (t / u).ln()).sum()
}

pub(super) fn gradient(g: &CouplingMatrix, p: &[f64], n0: f64) -> Vec<f64> {
    let (t, u) = totals(g, p, n0);
    let k = g.ues();
    (0..k)
        .map(|c| {
            (0..k)
                .map(|j| {
                    let gjc = g.get(j, c);
                    if j == c {
                        gjc / t[j]
                    } else {
                        gjc / t[j] - gjc / u[j]
                    }
                })
                .sum()
        })
        .collect()
}

fn hessian(g: &CouplingMatrix, p: &[f64], n0: f64) -> Vec<Vec<f64>> {
    let (t, u) = totals(g, p, n0);
    let k = g.ues();
    let mut h = vec![vec![0.0; k]; k];
    for (a, row) in h.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            for j in 0..k {
                let prod = g.get(j, a) * g.get(j, b);
                *v -= prod / (t[j] * t[j]);
                if j != a && j != b {
                    *v += prod / (u[j] * u[j]);
                }
            }
        }
    }
    h
}

/// Euclidean projection onto `{p >= 0, sum p = total}`.
pub(super) fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - total) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn ascend(g: &CouplingMatrix, n0: f64, p_max: f64, start: &[f64]) -> (Vec<f64>, usize) {
    let mut p = project_simplex(start, p_max);
    let mut f = rate(g, &p, n0);
    let mut step = f64::NAN;
    for it in 1..=MAX_ASCENT {
        let d = gradient(g, &p, n0);
        if step.is_nan() {
            let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if scale == 0.0 {
                return (p, it);
            }
            step = 0.1 * p_max / scale;
        }
        let mut moved = None;
        while step > 1e-300 {
            let trial: Vec<f64> = p.iter().zip(&d).map(|(pi, di)| pi + step * di).collect();
            let q = project_simplex(&trial, p_max);
            let gain: f64 = d.iter().zip(q.iter().zip(&p)).map(|(di, (qi, pi))| di * (qi - pi)).sum();
            let fq = rate(g, &q, n0);
            if fq >= f + ARMIJO * gain {
                moved = Some((q, fq));
                break;
            }
            step *= 0.5;
        }
        let Some((q, fq)) = moved else {
            return (p, it);
        };
        let change = q.iter().zip(&p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        p = q;
        f = fq;
        step *= 2.0;
        if change < 1e-15 * p_max {
            return (p, it);
        }
    }
    (p, MAX_ASCENT)
}

/// Newton on `dR/dp_S = mu, sum p_S = p_max`. Returns `None` if the active
/// set is not consistent at the solution.
fn newton(g: &CouplingMatrix, n0: f64, p_max: f64, p: &[f64]) -> Option<(Vec<f64>, f64)> {
    let k = g.ues();
    let active: Vec<usize> = (0..k).filter(|&i| p[i] > 1e-12 * p_max).collect();
    let n = active.len();
    if n == 0 {
        return None;
    }
    let mut x: Vec<f64> = (0..k).map(|i| if active.contains(&i) { p[i] } else { 0.0 }).collect();
    let d = gradient(g, &x, n0);
    let mut mu = active.iter().map(|&i| d[i]).sum::<f64>() / n as f64;
    for _ in 0..MAX_NEWTON {
        let d = gradient(g, &x, n0);
        let scale = active.iter().fold(0.0f64, |m, &i| m.max(d[i].abs()));
        let sum: f64 = active.iter().map(|&i| x[i]).sum();
        let resid = active.iter().fold((sum - p_max).abs() / p_max, |m, &i| m.max((d[i] - mu).abs() / scale));
        if resid < 1e-14 {
            break;
        }
        let h = hessian(g, &x, n0);
        let mut a = vec![vec![0.0; n + 2]; n + 1];
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                a[r][c] = h[i][j];
            }
            a[r][n] = -1.0;
            a[r][n + 1] = mu - d[i];
        }
        a[n][..n].fill(1.0);
        a[n][n + 1] = p_max - sum;
        let delta = super::power::gauss(a)?;
        for (r, &i) in active.iter().enumerate() {
            x[i] += delta[r];
        }
        mu += delta[n];
        if active.iter().any(|&i| !(x[i] > 0.0)) || !mu.is_finite() {
            return None;
        }
    }
    let d = gradient(g, &x, n0);
    let scale = active.iter().fold(0.0f64, |m, &i| m.max(d[i].abs()));
    let stationary = active.iter().all(|&i| (d[i] - mu).abs() <= 1e-10 * scale);
    let inactive_ok = (0..k).filter(|i| !active.contains(i)).all(|i| d[i] <= mu + 1e-10 * scale);
    (stationary && inactive_ok && mu > 0.0).then_some((x, mu))
}

/// Best stationary point over the given starts.
pub(super) fn best_stationary(g: &CouplingMatrix, n0: f64, p_max: f64, starts: &[Vec<f64>]) -> Stationary {
    let mut best: Option<(f64, Stationary)> = None;
    for start in starts {
        let (p, iterations) = ascend(g, n0, p_max, start);
        let ascent_rate = rate(g, &p, n0);
        let (power, mu) = match newton(g, n0, p_max, &p) {
            Some((x, mu)) if rate(g, &x, n0) >= ascent_rate - 1e-12 * ascent_rate.abs().max(1.0) => (x, mu),
            _ => {
                let d = gradient(g, &p, n0);
                let mu = (0..p.len()).filter(|&i| p[i] > 0.0).map(|i| d[i]).fold(0.0f64, f64::max);
                (p, mu)
            }
        };
        let r = rate(g, &power, n0);
        if best.as_ref().is_none_or(|(b, _)| r > *b) {
            best = Some((r, Stationary { power, mu, iterations }));
        }
    }
    let (_, mut s) = best.expect("at least one start");
    // exact zeros for UEs that cannot gain anything
    for (k, p) in s.power.iter_mut().enumerate() {
        if g.get(k, k) <= 0.0 {
            *p = 0.0;
        }
    }
    debug_assert!(s.power.iter().enumerate().all(|(k, &p)| p == 0.0 || response_priced(g, k, &s.power, n0, s.mu) >= 0.0));
    s
}

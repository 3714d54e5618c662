//! Joint beam assignment and power allocation.
//!
//! Every solver here works on an [`EffectiveChannels`] table, so the same
//! code runs on true channels (oracle) and on LS estimates from predicted
//! beam images.

mod conflict;
mod power;
mod search;
mod sumrate;

pub use conflict::{conflict_probability, conflict_probability_mc, ConflictEstimate};
pub use power::{kkt_residual, power_allocate_kkt, KktOptions, PowerSolution};
pub use search::{enumerate_optimal, falling_factorial, rank_beams, topm_allocate, TopmDiagnostics};

use serde::Serialize;

use crate::config::InterferenceModel;
use crate::error::{Error, Result};
use crate::estimator::EffectiveChannels;

/// Tolerance on the total power budget.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// `K x N` binary beam assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssignmentMatrix {
    ues: usize,
    beams: usize,
    /// Beam index assigned to each UE.
    assigned: Vec<usize>,
}

impl AssignmentMatrix {
    /// One beam per UE, no beam shared.
    pub fn new(beams: usize, assigned: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; beams];
        for &b in &assigned {
            if b >= beams {
                return Err(Error::domain(format!("beam {b} out of range 0..{beams}")));
            }
            if std::mem::replace(&mut seen[b], true) {
                return Err(Error::domain(format!("beam {b} assigned to more than one UE")));
            }
        }
        Ok(AssignmentMatrix {
            ues: assigned.len(),
            beams,
            assigned,
        })
    }

    pub fn beam_of(&self, ue: usize) -> usize {
        self.assigned[ue]
    }

    pub fn beams_per_ue(&self) -> &[usize] {
        &self.assigned
    }

    /// `u[k][n]`
    pub fn entry(&self, ue: usize, beam: usize) -> u8 {
        u8::from(self.assigned[ue] == beam)
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.ues)
            .map(|k| (0..self.beams).map(|n| self.entry(k, n)).collect())
            .collect()
    }

    /// Row sums equal one and column sums are at most one.
    pub fn is_feasible(&self) -> bool {
        let dense = self.to_dense();
        let rows_ok = dense.iter().all(|r| r.iter().map(|&x| u32::from(x)).sum::<u32>() == 1);
        let cols_ok = (0..self.beams).all(|n| dense.iter().map(|r| u32::from(r[n])).sum::<u32>() <= 1);
        rows_ok && cols_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerVector(pub Vec<f64>);

impl PowerVector {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Nonnegative and within `p_max (1 + 1e-9)`.
    pub fn is_feasible(&self, p_max: f64) -> bool {
        self.0.iter().all(|&p| p >= 0.0) && self.total() <= p_max * (1.0 + BUDGET_TOLERANCE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationResult {
    pub assignment: AssignmentMatrix,
    pub power: PowerVector,
    /// bits/s/Hz
    pub sum_rate: f64,
    pub combinations_evaluated: u64,
    pub mu: f64,
    pub inner_iterations: usize,
    /// Candidates whose power solve failed to converge (skipped).
    pub failed_candidates: u64,
    pub topm: Option<TopmDiagnostics>,
}

/// `coupling[k][j]` is the gain multiplying `p_j` in UE k's SINR: own gain
/// on the diagonal, interference gains elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    k: usize,
    g: Vec<f64>,
}

impl CouplingMatrix {
    pub fn new(k: usize, g: Vec<f64>) -> Result<Self> {
        if g.len() != k * k {
            return Err(Error::domain("coupling matrix must be K x K"));
        }
        if g.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::domain("coupling gains must be finite and nonnegative"));
        }
        Ok(CouplingMatrix { k, g })
    }

    pub fn from_channels(eff: &EffectiveChannels, beams: &[usize], model: InterferenceModel) -> Self {
        let k = beams.len();
        let mut g = Vec::with_capacity(k * k);
        for row in 0..k {
            for col in 0..k {
                let v = if row == col {
                    eff.gain(row, beams[row])
                } else {
                    match model {
                        InterferenceModel::OwnChannel => eff.gain(row, beams[col]),
                        InterferenceModel::Printed => eff.gain(col, beams[col]),
                    }
                };
                g.push(v);
            }
        }
        CouplingMatrix { k, g }
    }

    pub fn ues(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.g[row * self.k + col]
    }

    /// `sum_{j != k} p_j G[k][j] + n0`
    #[inline]
    pub fn interference_plus_noise(&self, k: usize, p: &[f64], n0: f64) -> f64 {
        let row = &self.g[k * self.k..(k + 1) * self.k];
        let mut acc = n0;
        for (j, (gj, pj)) in row.iter().zip(p).enumerate() {
            if j != k {
                acc += pj * gj;
            }
        }
        acc
    }

    pub fn sinr(&self, k: usize, p: &[f64], n0: f64) -> f64 {
        p[k] * self.get(k, k) / self.interference_plus_noise(k, p, n0)
    }

    pub fn sum_rate(&self, p: &[f64], n0: f64) -> f64 {
        (0..self.k).map(|k| (1.0 + self.sinr(k, p, n0)).log2()).sum()
    }
}

/// SINR of UE `k` under beams `beams[i]` for UE `i`.
pub fn sinr(
    k: usize,
    beams: &[usize],
    power: &PowerVector,
    eff: &EffectiveChannels,
    n0: f64,
    model: InterferenceModel,
) -> Result<f64> {
    check_inputs(beams, power, eff, n0)?;
    Ok(CouplingMatrix::from_channels(eff, beams, model).sinr(k, &power.0, n0))
}

/// `sum_k log2(1 + sinr_k)`.
pub fn sum_rate(
    beams: &[usize],
    power: &PowerVector,
    eff: &EffectiveChannels,
    n0: f64,
    model: InterferenceModel,
) -> Result<f64> {
    check_inputs(beams, power, eff, n0)?;
    Ok(CouplingMatrix::from_channels(eff, beams, model).sum_rate(&power.0, n0))
}

fn check_inputs(beams: &[usize], power: &PowerVector, eff: &EffectiveChannels, n0: f64) -> Result<()> {
    if beams.len() != eff.ues() || power.0.len() != eff.ues() {
        return Err(Error::domain("every UE needs one beam and one power value"));
    }
    if beams.iter().any(|&b| b >= eff.beams()) {
        return Err(Error::domain("beam index out of range"));
    }
    if !(n0 > 0.0) {
        return Err(Error::domain("noise power must be positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eff(gains: &[f64], k: usize, n: usize) -> EffectiveChannels {
        EffectiveChannels::from_gains(k, n, gains).unwrap()
    }

    #[test]
    fn single_ue_sinr() {
        let e = eff(&[0.0, 3.0], 1, 2);
        let p = PowerVector(vec![2.0]);
        let s = sinr(0, &[1], &p, &e, 0.5, InterferenceModel::OwnChannel).unwrap();
        assert!((s - 12.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_beams_no_interference() {
        // UE0 sees only beam 0, UE1 only beam 1
        let e = eff(&[1.0, 0.0, 0.0, 2.0], 2, 2);
        let p = PowerVector(vec![1.0, 1.0]);
        let s0 = sinr(0, &[0, 1], &p, &e, 1.0, InterferenceModel::OwnChannel).unwrap();
        let s1 = sinr(1, &[0, 1], &p, &e, 1.0, InterferenceModel::OwnChannel).unwrap();
        assert!((s0 - 1.0).abs() < 1e-15 && (s1 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hand_built_two_ue() {
        // own gain 1, cross gain 0.5 for both UEs
        let e = eff(&[1.0, 0.5, 0.5, 1.0], 2, 2);
        let p = PowerVector(vec![1.0, 1.0]);
        let s0 = sinr(0, &[0, 1], &p, &e, 1.0, InterferenceModel::OwnChannel).unwrap();
        assert!((s0 - 1.0 / 1.5).abs() < 1e-15);
        let r = sum_rate(&[0, 1], &p, &e, 1.0, InterferenceModel::OwnChannel).unwrap();
        let want = 2.0 * (1.0f64 + 2.0 / 3.0).log2();
        assert!((r - want).abs() < 1e-14);
    }

    #[test]
    fn sum_rate_examples() {
        let e = eff(&[1.0], 1, 1);
        assert!((sum_rate(&[0], &PowerVector(vec![1.0]), &e, 1.0, InterferenceModel::OwnChannel).unwrap() - 1.0).abs() < 1e-15);
        let e = eff(&[1.0, 0.5, 0.5, 1.0], 2, 2);
        assert_eq!(sum_rate(&[0, 1], &PowerVector(vec![0.0, 0.0]), &e, 1.0, InterferenceModel::OwnChannel).unwrap(), 0.0);
    }

    #[test]
    fn printed_interference_form() {
        // UE0 own 1 on beam 0, UE1 own 4 on beam 1; cross gains 0.1
        let e = eff(&[1.0, 0.1, 0.1, 4.0], 2, 2);
        let p = PowerVector(vec![1.0, 1.0]);
        let own = sinr(0, &[0, 1], &p, &e, 1.0, InterferenceModel::OwnChannel).unwrap();
        let printed = sinr(0, &[0, 1], &p, &e, 1.0, InterferenceModel::Printed).unwrap();
        assert!((own - 1.0 / 1.1).abs() < 1e-15);
        assert!((printed - 1.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn input_checks() {
        let e = eff(&[1.0, 0.5, 0.5, 1.0], 2, 2);
        let p = PowerVector(vec![1.0, 1.0]);
        assert!(sinr(0, &[0], &p, &e, 1.0, InterferenceModel::OwnChannel).is_err());
        assert!(sinr(0, &[0, 2], &p, &e, 1.0, InterferenceModel::OwnChannel).is_err());
        assert!(sinr(0, &[0, 1], &p, &e, 0.0, InterferenceModel::OwnChannel).is_err());
    }

    #[test]
    fn assignment_feasibility() {
        let a = AssignmentMatrix::new(4, vec![2, 0]).unwrap();
        assert!(a.is_feasible());
        assert_eq!(a.to_dense(), vec![vec![0, 0, 1, 0], vec![1, 0, 0, 0]]);
        assert!(AssignmentMatrix::new(4, vec![1, 1]).is_err());
        assert!(AssignmentMatrix::new(4, vec![4]).is_err());
    }

    proptest! {
        #[test]
        fn feasible_power_set_is_convex(
            a in proptest::collection::vec(0.0..1.0f64, 4),
            b in proptest::collection::vec(0.0..1.0f64, 4),
            lambda in 0.0..=1.0f64,
            p_max in 1e-4..1.0f64,
        ) {
            // scale random points onto the feasible set
            let scale = |v: &[f64]| {
                let s: f64 = v.iter().sum();
                let f = if s > 0.0 { p_max / s } else { 0.0 };
                PowerVector(v.iter().map(|x| x * f * 0.999).collect())
            };
            let (p, q) = (scale(&a), scale(&b));
            prop_assert!(p.is_feasible(p_max) && q.is_feasible(p_max));
            let mix = PowerVector(p.0.iter().zip(&q.0).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect());
            prop_assert!(mix.is_feasible(p_max));
        }
    }
}

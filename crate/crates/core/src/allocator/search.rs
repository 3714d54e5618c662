//! Beam-assignment search: exhaustive enumeration and the top-m policy.

use rayon::prelude::*;
use serde::Serialize;

use super::conflict::conflict_probability;
use super::power::{power_allocate_kkt, KktOptions, PowerSolution};
use super::{AllocationResult, AssignmentMatrix, CouplingMatrix, PowerVector};
use crate::config::InterferenceModel;
use crate::error::{Error, Result};
use crate::estimator::EffectiveChannels;
use crate::sweep::BeamImage;

/// `n! / (n - k)!`, saturating at `u64::MAX`.
pub fn falling_factorial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u64, |acc, i| acc.saturating_mul((n - i) as u64))
}

/// Beam indices by descending value; ties keep ascending index order.
pub fn rank_beams(power: &BeamImage) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..power.len()).collect();
    idx.sort_by(|&a, &b| power.values[b].total_cmp(&power.values[a]));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopmDiagnostics {
    /// UEs whose strongest beam is claimed by no other UE.
    pub gamma: usize,
    pub conflicted: Vec<usize>,
    /// Requested m.
    pub m: usize,
    /// Candidate list length actually used per conflicted UE.
    pub list_len: usize,
    /// `m! / (m - K + gamma)!` for the requested m (0 if `K - gamma > m`).
    pub i_prime: u64,
    /// Rank-by-rank extensions needed to find a conflict-free assignment.
    pub fallback_extensions: usize,
    /// `m >= N`: every UE, locked or not, was searched over the whole
    /// codebook, so the result matches the exhaustive search.
    pub full_coverage: bool,
    /// Conflict-free probability for the requested m.
    pub conflict_free_probability: f64,
}

struct Problem<'a> {
    eff: &'a EffectiveChannels,
    p_max: f64,
    n0: f64,
    model: InterferenceModel,
    opts: &'a KktOptions,
}

struct Best {
    rate: f64,
    /// Global enumeration order, for tie-breaks.
    order: (usize, u64),
    beams: Vec<usize>,
    solution: PowerSolution,
}

#[derive(Default)]
struct Tally {
    evaluated: u64,
    failed: u64,
    best: Option<Best>,
}

impl Tally {
    fn offer(&mut self, cand: Best) {
        let better = match &self.best {
            None => true,
            Some(b) => cand.rate > b.rate || (cand.rate == b.rate && cand.order < b.order),
        };
        if better {
            self.best = Some(cand);
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.evaluated += other.evaluated;
        self.failed += other.failed;
        if let Some(b) = other.best {
            self.offer(b);
        }
        self
    }
}

impl Problem<'_> {
    fn evaluate(&self, beams: &[usize], order: (usize, u64), tally: &mut Tally) {
        tally.evaluated += 1;
        let g = CouplingMatrix::from_channels(self.eff, beams, self.model);
        let solution = match power_allocate_kkt(&g, self.p_max, self.n0, self.opts) {
            Ok(s) => s,
            Err(Error::NotConverged { .. }) => {
                tally.failed += 1;
                return;
            }
            // no UE has a usable beam: transmitting gains nothing
            Err(_) => PowerSolution {
                power: vec![0.0; beams.len()],
                mu: f64::INFINITY,
                inner_iterations: 0,
                bisections: 0,
                budget_tight: false,
            },
        };
        let rate = g.sum_rate(&solution.power, self.n0);
        tally.offer(Best {
            rate,
            order,
            beams: beams.to_vec(),
            solution,
        });
    }

    /// Enumerate distinct-beam assignments for `free` UEs over their lists,
    /// with the `fixed` beams already taken. Parallel over the first free
    /// UE's choices; the reduction is order-independent.
    fn search(&self, base: &[usize], free: &[usize], lists: &[Vec<usize>]) -> Tally {
        if free.is_empty() {
            let mut t = Tally::default();
            self.evaluate(base, (0, 0), &mut t);
            return t;
        }
        lists[0]
            .par_iter()
            .enumerate()
            .map(|(chunk, &first)| {
                let mut t = Tally::default();
                if base.contains(&first) {
                    return t;
                }
                let mut beams = base.to_vec();
                beams[free[0]] = first;
                let mut counter = 0u64;
                self.dfs(&mut beams, free, lists, 1, chunk, &mut counter, &mut t);
                t
            })
            .reduce(Tally::default, Tally::merge)
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        beams: &mut Vec<usize>,
        free: &[usize],
        lists: &[Vec<usize>],
        depth: usize,
        chunk: usize,
        counter: &mut u64,
        tally: &mut Tally,
    ) {
        if depth == free.len() {
            self.evaluate(beams, (chunk, *counter), tally);
            *counter += 1;
            return;
        }
        let ue = free[depth];
        for &b in &lists[depth] {
            let taken = (0..beams.len()).any(|u| beams[u] == b && (!free.contains(&u) || free[..depth].contains(&u)));
            if taken {
                continue;
            }
            beams[ue] = b;
            self.dfs(beams, free, lists, depth + 1, chunk, counter, tally);
        }
        beams[ue] = usize::MAX;
    }

    fn finish(&self, tally: Tally, topm: Option<TopmDiagnostics>) -> Result<AllocationResult> {
        let best = tally.best.ok_or_else(|| {
            Error::domain(format!(
                "none of {} candidate assignments produced a converged power allocation",
                tally.evaluated
            ))
        })?;
        Ok(AllocationResult {
            assignment: AssignmentMatrix::new(self.eff.beams(), best.beams)?,
            power: PowerVector(best.solution.power),
            sum_rate: best.rate,
            combinations_evaluated: tally.evaluated,
            mu: best.solution.mu,
            inner_iterations: best.solution.inner_iterations,
            failed_candidates: tally.failed,
            topm,
        })
    }
}

/// Exhaustive search over all `N! / (N - K)!` ordered beam assignments, with
/// KKT power allocation per candidate. Ties go to the earliest candidate in
/// lexicographic order.
pub fn enumerate_optimal(
    eff: &EffectiveChannels,
    p_max: f64,
    n0: f64,
    model: InterferenceModel,
    opts: &KktOptions,
) -> Result<AllocationResult> {
    let (k, n) = (eff.ues(), eff.beams());
    if k == 0 {
        return Err(Error::domain("need at least one UE"));
    }
    if k > n {
        return Err(Error::domain(format!("{k} UEs cannot get distinct beams from {n}")));
    }
    let problem = Problem {
        eff,
        p_max,
        n0,
        model,
        opts,
    };
    let all: Vec<usize> = (0..n).collect();
    let free: Vec<usize> = (0..k).collect();
    let lists = vec![all; k];
    let tally = problem.search(&vec![usize::MAX; k], &free, &lists);
    problem.finish(tally, None)
}

/// Whether the lists admit an assignment of pairwise-distinct beams
/// (augmenting-path bipartite matching).
fn has_distinct_assignment(lists: &[Vec<usize>]) -> bool {
    fn augment(u: usize, lists: &[Vec<usize>], owner: &mut std::collections::HashMap<usize, usize>, seen: &mut Vec<usize>) -> bool {
        for &b in &lists[u] {
            if seen.contains(&b) {
                continue;
            }
            seen.push(b);
            let free = match owner.get(&b) {
                None => true,
                Some(&v) => augment(v, lists, owner, seen),
            };
            if free {
                owner.insert(b, u);
                return true;
            }
        }
        false
    }
    let mut owner = std::collections::HashMap::new();
    (0..lists.len()).all(|u| augment(u, lists, &mut owner, &mut Vec::new()))
}

/// Top-m policy. Each UE first takes its strongest beam; UEs whose strongest
/// beam is unique keep it, and the remaining (conflicted) UEs are searched
/// over their `m` best beams not already held by a unique UE. Once `m`
/// reaches the codebook size the locks are lifted and all UEs are searched
/// over every beam.
#[allow(clippy::too_many_arguments)]
pub fn topm_allocate(
    rankings: &[Vec<usize>],
    m: usize,
    eff: &EffectiveChannels,
    p_max: f64,
    n0: f64,
    model: InterferenceModel,
    opts: &KktOptions,
) -> Result<AllocationResult> {
    let (k, n) = (eff.ues(), eff.beams());
    if m == 0 {
        return Err(Error::domain("m must be at least 1"));
    }
    if k == 0 || rankings.len() != k {
        return Err(Error::domain("need one beam ranking per UE"));
    }
    if k > n {
        return Err(Error::domain(format!("{k} UEs cannot get distinct beams from {n}")));
    }
    if rankings.iter().any(|r| r.len() != n) {
        return Err(Error::domain("each ranking must list every beam"));
    }

    let strongest: Vec<usize> = rankings.iter().map(|r| r[0]).collect();
    let unique: Vec<bool> = (0..k)
        .map(|u| (0..k).all(|v| v == u || strongest[v] != strongest[u]))
        .collect();
    let gamma = unique.iter().filter(|&&x| x).count();
    let conflicted: Vec<usize> = (0..k).filter(|&u| !unique[u]).collect();
    let locked: Vec<usize> = (0..k).filter(|&u| unique[u]).map(|u| strongest[u]).collect();

    let filtered: Vec<Vec<usize>> = conflicted
        .iter()
        .map(|&u| rankings[u].iter().copied().filter(|b| !locked.contains(b)).collect())
        .collect();
    let available = n - locked.len();
    let mut list_len = m.min(available);
    let mut fallback_extensions = 0;
    let truncate = |len: usize| -> Vec<Vec<usize>> { filtered.iter().map(|l| l[..len].to_vec()).collect() };
    let mut lists = truncate(list_len);
    while !has_distinct_assignment(&lists) {
        // conflicted UEs never exceed the free beams, so this terminates
        list_len += 1;
        fallback_extensions += 1;
        lists = truncate(list_len);
    }

    let mut base = vec![usize::MAX; k];
    for u in 0..k {
        if unique[u] {
            base[u] = strongest[u];
        }
    }
    let problem = Problem {
        eff,
        p_max,
        n0,
        model,
        opts,
    };
    let full_coverage = m >= n;
    let tally = if full_coverage {
        let all: Vec<usize> = (0..n).collect();
        let every: Vec<usize> = (0..k).collect();
        problem.search(&vec![usize::MAX; k], &every, &vec![all; k])
    } else {
        problem.search(&base, &conflicted, &lists)
    };
    let d = k - gamma;
    let diag = TopmDiagnostics {
        gamma,
        conflicted,
        m,
        list_len,
        i_prime: falling_factorial(m, d),
        fallback_extensions,
        full_coverage,
        conflict_free_probability: conflict_probability(m, k, gamma)?.probability,
    };
    problem.finish(tally, Some(diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::ImageKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn img(v: &[f64]) -> BeamImage {
        BeamImage::new(1, v.len(), ImageKind::Power, v.to_vec()).unwrap()
    }

    fn random_eff(seed: u64, k: usize, n: usize) -> EffectiveChannels {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<f64> = (0..k * n).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
        EffectiveChannels::from_gains(k, n, &g).unwrap()
    }

    fn rankings(eff: &EffectiveChannels) -> Vec<Vec<usize>> {
        (0..eff.ues())
            .map(|u| rank_beams(&eff.gain_image(u, (1, eff.beams())).unwrap()))
            .collect()
    }

    const OWN: InterferenceModel = InterferenceModel::OwnChannel;

    #[test]
    fn falling_factorial_counts() {
        assert_eq!(falling_factorial(64, 4), 15_249_024);
        assert_eq!(falling_factorial(16, 3), 3360);
        assert_eq!(falling_factorial(4, 1), 4);
        assert_eq!(falling_factorial(5, 0), 1);
        assert_eq!(falling_factorial(3, 4), 0);
    }

    #[test]
    fn ranking_examples() {
        assert_eq!(rank_beams(&img(&[0.0, 0.0, 5.0, 0.0]))[0], 2);
        assert_eq!(rank_beams(&img(&[1.0; 5])), vec![0, 1, 2, 3, 4]);
        let v = [0.3, 0.9, 0.1, 0.9, 0.5];
        assert_eq!(rank_beams(&img(&v)), vec![1, 3, 4, 0, 2]);
    }

    #[test]
    fn ranking_matches_reference_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let v: Vec<f64> = (0..64).map(|_| (rng.random_range(0..20) as f64) / 4.0).collect();
            // reference: selection by (value desc, index asc) keys
            let mut keyed: Vec<(i64, usize)> = v.iter().enumerate().map(|(i, x)| (-(x * 4.0) as i64, i)).collect();
            keyed.sort();
            let want: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();
            assert_eq!(rank_beams(&img(&v)), want);
        }
    }

    #[test]
    fn single_ue_picks_best_beam() {
        let eff = EffectiveChannels::from_gains(1, 4, &[0.2, 0.9, 0.4, 0.1]).unwrap();
        let r = enumerate_optimal(&eff, 1.0, 0.1, OWN, &KktOptions::default()).unwrap();
        assert_eq!(r.combinations_evaluated, 4);
        assert_eq!(r.assignment.beam_of(0), 1);
        assert_eq!(r.power.0, vec![1.0]);
    }

    #[test]
    fn too_many_ues() {
        let eff = random_eff(0, 3, 2);
        assert!(enumerate_optimal(&eff, 1.0, 0.1, OWN, &KktOptions::default()).is_err());
    }

    #[test]
    fn optimal_counts_and_feasibility() {
        let eff = random_eff(5, 3, 6);
        let r = enumerate_optimal(&eff, 0.5, 0.01, OWN, &KktOptions::default()).unwrap();
        assert_eq!(r.combinations_evaluated, falling_factorial(6, 3));
        assert!(r.assignment.is_feasible());
        assert!(r.power.is_feasible(0.5));
    }

    #[test]
    fn unique_strongest_beams_skip_search() {
        let eff = EffectiveChannels::from_gains(2, 4, &[0.9, 0.1, 0.0, 0.0, 0.0, 0.0, 0.8, 0.1]).unwrap();
        let r = topm_allocate(&rankings(&eff), 2, &eff, 1.0, 0.1, OWN, &KktOptions::default()).unwrap();
        let d = r.topm.as_ref().unwrap();
        assert_eq!(d.gamma, 2);
        assert_eq!(r.combinations_evaluated, 1);
        assert_eq!(d.i_prime, 1);
        assert_eq!(r.assignment.beams_per_ue(), &[0, 2]);
    }

    #[test]
    fn shared_strongest_beam_two_candidates() {
        let eff = EffectiveChannels::from_gains(2, 4, &[0.9, 0.5, 0.1, 0.0, 0.8, 0.6, 0.2, 0.0]).unwrap();
        let r = topm_allocate(&rankings(&eff), 2, &eff, 1.0, 0.1, OWN, &KktOptions::default()).unwrap();
        let d = r.topm.as_ref().unwrap();
        assert_eq!(d.gamma, 0);
        assert_eq!(r.combinations_evaluated, 2);
        assert_eq!(d.i_prime, 2);
        assert!(r.assignment.is_feasible());
    }

    #[test]
    fn fallback_extends_lists() {
        // both UEs rank beam 0 first, m = 1 leaves no distinct assignment
        let eff = EffectiveChannels::from_gains(2, 3, &[0.9, 0.5, 0.1, 0.8, 0.6, 0.2]).unwrap();
        let r = topm_allocate(&rankings(&eff), 1, &eff, 1.0, 0.1, OWN, &KktOptions::default()).unwrap();
        let d = r.topm.as_ref().unwrap();
        assert_eq!(d.fallback_extensions, 1);
        assert_eq!(d.list_len, 2);
        assert_eq!(d.i_prime, 0);
        assert!(r.assignment.is_feasible());
    }

    #[test]
    fn identical_rankings_give_i_prime() {
        // three conflicted UEs with the same ordering of 8 beams
        let row = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2];
        let g: Vec<f64> = (0..3).flat_map(|u| row.iter().map(move |x| x * (1.0 + u as f64 * 0.1))).collect();
        let eff = EffectiveChannels::from_gains(3, 8, &g).unwrap();
        for m in 3..=8 {
            let r = topm_allocate(&rankings(&eff), m, &eff, 1.0, 0.1, OWN, &KktOptions::default()).unwrap();
            assert_eq!(r.combinations_evaluated, falling_factorial(m, 3));
            assert_eq!(r.topm.unwrap().i_prime, falling_factorial(m, 3));
        }
    }

    #[test]
    fn optimal_dominates_topm() {
        for seed in 0..30 {
            let eff = random_eff(seed, 3, 8);
            let ranks = rankings(&eff);
            let opt = enumerate_optimal(&eff, 0.3, 0.01, OWN, &KktOptions::default()).unwrap();
            for m in 1..=8 {
                let t = topm_allocate(&ranks, m, &eff, 0.3, 0.01, OWN, &KktOptions::default()).unwrap();
                assert!(t.sum_rate <= opt.sum_rate, "seed {seed} m {m}");
                assert!(t.assignment.is_feasible());
                assert!(t.power.is_feasible(0.3));
            }
        }
    }

    #[test]
    fn full_list_matches_optimal() {
        for seed in 0..20 {
            let eff = random_eff(100 + seed, 3, 6);
            let opt = enumerate_optimal(&eff, 0.3, 0.01, OWN, &KktOptions::default()).unwrap();
            let t = topm_allocate(&rankings(&eff), 6, &eff, 0.3, 0.01, OWN, &KktOptions::default()).unwrap();
            assert_eq!(t.sum_rate, opt.sum_rate, "seed {seed}");
            assert_eq!(t.assignment, opt.assignment);
            assert_eq!(t.combinations_evaluated, falling_factorial(6, 3));
            assert!(t.topm.unwrap().full_coverage);
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let eff = random_eff(11, 3, 10);
        let opts = KktOptions::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| enumerate_optimal(&eff, 0.2, 0.01, OWN, &opts).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn matching_check() {
        assert!(has_distinct_assignment(&[vec![0, 1], vec![0]]));
        assert!(!has_distinct_assignment(&[vec![0], vec![0]]));
        assert!(has_distinct_assignment(&[vec![0, 1, 2], vec![0, 1], vec![1]]));
    }
}

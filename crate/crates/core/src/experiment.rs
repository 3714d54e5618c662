//! End-to-end experiments: dataset generation, per-frame allocation and
//! sum-rate sweeps.
//!
//! Every allocation is planned on effective channels estimated from
//! predicted beam images and then scored on the true channels of the same
//! frame ("realized" sum-rate). With the oracle predictor and a noiseless
//! sweep both numbers coincide.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::allocator::{
    conflict_probability, conflict_probability_mc, enumerate_optimal, rank_beams, sum_rate, topm_allocate,
    AllocationResult, KktOptions,
};
use crate::channel::{synthesize_scenario, Scenario};
use crate::codebook::Codebook;
use crate::config::{dbm_to_watts, ScenarioConfig, SignMode};
use crate::error::{Error, Result};
use crate::estimator::EffectiveChannels;
use crate::interchange::{Dataset, Layout};
use crate::predictor::Predictor;
use crate::sweep::{derive_seed, sweep_scenario, TRAINING_SYMBOL};

/// Version of the JSON-lines allocation records and the CSV layouts.
pub const SCHEMA_VERSION: u32 = 1;

pub const EVALUATE_HEADER: &str = "policy,predictor,p_max_dbm,m,samples,mean_sum_rate,std_error,mean_planned_sum_rate";
pub const CONFLICT_HEADER: &str = "m,K,gamma,conflicted,closed_form,monte_carlo,trials,mc_std_error,within_3_sigma,certain_conflict";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Optimal,
    Topm,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Optimal => "optimal",
            Policy::Topm => "topm",
        })
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(Policy::Optimal),
            "topm" => Ok(Policy::Topm),
            other => Err(Error::Config(format!("unknown policy '{other}' (expected optimal or topm)"))),
        }
    }
}

pub fn dataset_layout(cfg: &ScenarioConfig, seed: u64) -> Layout {
    Layout {
        ues: cfg.ue_count,
        high: (cfg.array_vertical, cfg.array_horizontal),
        low: cfg.low_res_dims(),
        window: cfg.window,
        frames: cfg.frames,
        seed,
    }
}

/// Synthesize and sweep one seed's scenario.
pub fn generate(cfg: &ScenarioConfig, seed: u64) -> Result<(Scenario, Dataset)> {
    cfg.validate()?;
    let scenario = synthesize_scenario(cfg, seed)?;
    let records = sweep_scenario(cfg, &scenario, seed)?;
    let dataset = Dataset::new(dataset_layout(cfg, seed), records)?;
    Ok((scenario, dataset))
}

/// Reject a dataset that was not produced by `cfg` for its seed.
pub fn check_dataset(cfg: &ScenarioConfig, dataset: &Dataset) -> Result<()> {
    let want = dataset_layout(cfg, dataset.layout.seed);
    if dataset.layout != want {
        return Err(Error::Config(format!(
            "dataset layout {:?} does not match the configuration {:?}",
            dataset.layout, want
        )));
    }
    Ok(())
}

/// Everything an allocator needs for one frame.
#[derive(Debug, Clone)]
pub struct FrameProblem {
    pub seed: u64,
    pub frame: usize,
    pub estimated: EffectiveChannels,
    pub truth: EffectiveChannels,
    pub rankings: Vec<Vec<usize>>,
}

/// Predict every target frame of `dataset` and build the allocation
/// inputs. `scenario` supplies the true channels.
pub fn frame_problems(
    cfg: &ScenarioConfig,
    scenario: &Scenario,
    dataset: &Dataset,
    predictor: &Predictor,
) -> Result<Vec<FrameProblem>> {
    check_dataset(cfg, dataset)?;
    let layout = dataset.layout;
    let codebook = Codebook::dft(scenario.geometry);
    let p_sweep = cfg.sweep_power_watts();
    let mut out = Vec::new();
    for frame in layout.predicted_frames() {
        let mut preds = Vec::with_capacity(layout.ues);
        for ue in 0..layout.ues {
            let episode = crate::sweep::build_episode(ue, &dataset.records[ue], layout.window, frame - 1)?;
            preds.push(predictor.predict(&episode, layout.high)?);
        }
        let images: Vec<_> = preds
            .iter()
            .map(|p| {
                let signs = match cfg.sign_mode {
                    SignMode::Preserve => p.signs.as_ref(),
                    SignMode::Fidelity => None,
                };
                (&p.images.real_sq, &p.images.imag_sq, signs)
            })
            .collect();
        let estimated = EffectiveChannels::from_images(&images, TRAINING_SYMBOL, p_sweep)?;
        let rankings = preds.iter().map(|p| rank_beams(&p.images.power())).collect();
        let channels: Vec<_> = scenario.channels[frame].iter().map(|c| c.coeffs.as_slice()).collect();
        let truth = EffectiveChannels::oracle(&channels, &codebook)?;
        out.push(FrameProblem {
            seed: layout.seed,
            frame,
            estimated,
            truth,
            rankings,
        });
    }
    Ok(out)
}

pub fn kkt_options(cfg: &ScenarioConfig) -> KktOptions {
    KktOptions {
        mode: cfg.power_mode,
        ..Default::default()
    }
}

pub fn allocate(
    cfg: &ScenarioConfig,
    problem: &FrameProblem,
    policy: Policy,
    m: usize,
    p_max: f64,
) -> Result<AllocationResult> {
    let n0 = cfg.noise_power_watts();
    let opts = kkt_options(cfg);
    match policy {
        Policy::Optimal => enumerate_optimal(&problem.estimated, p_max, n0, cfg.interference, &opts),
        Policy::Topm => topm_allocate(&problem.rankings, m, &problem.estimated, p_max, n0, cfg.interference, &opts),
    }
}

/// One JSON line per (seed, frame).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationRecord {
    pub schema: u32,
    pub seed: u64,
    pub frame: usize,
    pub policy: Policy,
    pub predictor: String,
    pub p_max_dbm: f64,
    /// Requested m (top-m only).
    pub m: Option<usize>,
    /// Sum-rate on the estimated channels the decision was made with.
    pub planned_sum_rate: f64,
    /// Sum-rate of the same beams and powers on the true channels.
    pub realized_sum_rate: f64,
    pub beams: Vec<usize>,
    pub power_w: Vec<f64>,
    pub combinations_evaluated: u64,
    pub failed_candidates: u64,
    pub mu: f64,
    pub inner_iterations: usize,
    pub gamma: Option<usize>,
    pub i_prime: Option<u64>,
    pub fallback_extensions: Option<usize>,
    /// Negative squared parts clamped to zero while reconstructing amplitudes.
    pub clamped_pixels: usize,
}

pub fn allocation_record(
    cfg: &ScenarioConfig,
    problem: &FrameProblem,
    policy: Policy,
    m: usize,
    p_max_dbm: f64,
    predictor: &Predictor,
) -> Result<AllocationRecord> {
    let result = allocate(cfg, problem, policy, m, dbm_to_watts(p_max_dbm))?;
    let realized = sum_rate(
        result.assignment.beams_per_ue(),
        &result.power,
        &problem.truth,
        cfg.noise_power_watts(),
        cfg.interference,
    )?;
    let topm = result.topm.as_ref();
    Ok(AllocationRecord {
        schema: SCHEMA_VERSION,
        seed: problem.seed,
        frame: problem.frame,
        policy,
        predictor: predictor.to_string(),
        p_max_dbm,
        m: (policy == Policy::Topm).then_some(m),
        planned_sum_rate: result.sum_rate,
        realized_sum_rate: realized,
        beams: result.assignment.beams_per_ue().to_vec(),
        power_w: result.power.0.clone(),
        combinations_evaluated: result.combinations_evaluated,
        failed_candidates: result.failed_candidates,
        mu: result.mu,
        inner_iterations: result.inner_iterations,
        gamma: topm.map(|d| d.gamma),
        i_prime: topm.map(|d| d.i_prime),
        fallback_extensions: topm.map(|d| d.fallback_extensions),
        clamped_pixels: problem.estimated.clamped,
    })
}

/// Allocation records for every predicted frame of every seed, sorted by
/// (seed, frame). `datasets` are generated from `cfg` unless supplied.
pub fn run_allocate(
    cfg: &ScenarioConfig,
    seeds: &[u64],
    policy: Policy,
    m: usize,
    predictor: &Predictor,
    dataset: Option<&Dataset>,
) -> Result<Vec<AllocationRecord>> {
    let per_seed: Vec<Result<Vec<AllocationRecord>>> = seeds
        .par_iter()
        .map(|&seed| {
            let (scenario, generated) = generate(cfg, seed)?;
            let ds = match dataset {
                Some(d) => d,
                None => &generated,
            };
            frame_problems(cfg, &scenario, ds, predictor)?
                .iter()
                .map(|p| allocation_record(cfg, p, policy, m, cfg.p_max_dbm, predictor))
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per_seed {
        out.extend(r?);
    }
    out.sort_by_key(|r| (r.seed, r.frame));
    Ok(out)
}

/// Which (policy, m) pairs an evaluation visits.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatePlan {
    pub policies: Vec<Policy>,
    pub predictors: Vec<Predictor>,
    pub p_max_dbm: Vec<f64>,
    pub m_values: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Cap on evaluated frames per seed (from the first predicted frame).
    pub max_frames: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluateRow {
    pub policy: Policy,
    pub predictor: String,
    pub p_max_dbm: f64,
    pub m: Option<usize>,
    pub samples: usize,
    pub mean_sum_rate: f64,
    pub std_error: f64,
    pub mean_planned_sum_rate: f64,
}

impl EvaluateRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.10},{:.10},{:.10}",
            self.policy,
            self.predictor,
            self.p_max_dbm,
            self.m.map_or(String::new(), |m| m.to_string()),
            self.samples,
            self.mean_sum_rate,
            self.std_error,
            self.mean_planned_sum_rate
        )
    }
}

/// Sample mean and its standard error.
pub fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

type SeriesKey = (Policy, usize, u64, Option<usize>);
/// `((seed, frame), realized, planned)`
type Sample = ((u64, usize), f64, f64);

/// Mean realized sum-rate per (policy, predictor, P_max, m).
pub fn run_evaluate(cfg: &ScenarioConfig, plan: &EvaluatePlan) -> Result<Vec<EvaluateRow>> {
    if plan.p_max_dbm.iter().any(|p| !p.is_finite()) {
        return Err(Error::Config("P_max values must be finite".into()));
    }
    let per_seed: Vec<Result<Vec<(SeriesKey, Sample)>>> = plan
        .seeds
        .par_iter()
        .map(|&seed| {
            let (scenario, dataset) = generate(cfg, seed)?;
            let mut out = Vec::new();
            for (pi, predictor) in plan.predictors.iter().enumerate() {
                let mut problems = frame_problems(cfg, &scenario, &dataset, predictor)?;
                if let Some(cap) = plan.max_frames {
                    problems.truncate(cap);
                }
                for problem in &problems {
                    for &p_dbm in &plan.p_max_dbm {
                        for &policy in &plan.policies {
                            let ms: Vec<Option<usize>> = match policy {
                                Policy::Optimal => vec![None],
                                Policy::Topm => plan.m_values.iter().map(|&m| Some(m)).collect(),
                            };
                            for m in ms {
                                let rec = allocation_record(cfg, problem, policy, m.unwrap_or(0), p_dbm, predictor)?;
                                let key = (policy, pi, p_dbm.to_bits(), m);
                                out.push((key, ((seed, problem.frame), rec.realized_sum_rate, rec.planned_sum_rate)));
                            }
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect();

    let mut series: BTreeMap<SeriesKey, Vec<Sample>> = BTreeMap::new();
    for r in per_seed {
        for (key, sample) in r? {
            series.entry(key).or_default().push(sample);
        }
    }
    let mut rows = Vec::new();
    for (&(policy, pi, p_bits, m), samples) in &mut series {
        samples.sort_by_key(|s| s.0);
        let realized: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let planned: Vec<f64> = samples.iter().map(|s| s.2).collect();
        let (mean, se) = mean_and_std_error(&realized);
        rows.push(EvaluateRow {
            policy,
            predictor: plan.predictors[pi].to_string(),
            p_max_dbm: f64::from_bits(p_bits),
            m,
            samples: realized.len(),
            mean_sum_rate: mean,
            std_error: se,
            mean_planned_sum_rate: mean_and_std_error(&planned).0,
        });
    }
    rows.sort_by(|a, b| {
        (a.policy, &a.predictor, a.m)
            .cmp(&(b.policy, &b.predictor, b.m))
            .then(a.p_max_dbm.total_cmp(&b.p_max_dbm))
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictRow {
    pub m: usize,
    pub k: usize,
    pub gamma: usize,
    pub closed_form: f64,
    pub monte_carlo: f64,
    pub trials: u64,
    pub mc_std_error: f64,
    pub within_3_sigma: bool,
    pub certain_conflict: bool,
}

impl ConflictRow {
    pub fn conflicted(&self) -> usize {
        self.k - self.gamma
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.12},{:.12},{},{:.12},{},{}",
            self.m,
            self.k,
            self.gamma,
            self.conflicted(),
            self.closed_form,
            self.monte_carlo,
            self.trials,
            self.mc_std_error,
            self.within_3_sigma,
            self.certain_conflict
        )
    }
}

/// Closed form against Monte-Carlo for every `m` in `ms` and every
/// `gamma <= K` in `gammas`.
pub fn run_conflict(ms: &[usize], k: usize, gammas: &[usize], trials: u64, seed: u64) -> Result<Vec<ConflictRow>> {
    let mut jobs = Vec::new();
    for &m in ms {
        for &gamma in gammas {
            if gamma <= k {
                jobs.push((m, gamma));
            }
        }
    }
    let rows: Vec<Result<ConflictRow>> = jobs
        .par_iter()
        .map(|&(m, gamma)| {
            let exact = conflict_probability(m, k, gamma)?;
            let mc = conflict_probability_mc(m, k, gamma, trials, derive_seed(seed, m, gamma, 2))?;
            let p = exact.probability;
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            Ok(ConflictRow {
                m,
                k,
                gamma,
                closed_form: p,
                monte_carlo: mc,
                trials,
                mc_std_error: (mc * (1.0 - mc) / trials as f64).sqrt(),
                within_3_sigma: (mc - p).abs() <= 3.0 * sigma,
                certain_conflict: exact.certain_conflict,
            })
        })
        .collect();
    rows.into_iter().collect()
}

/// A gnuplot script plotting mean sum-rate against P_max, one curve per
/// (policy, predictor, m) series found in `rows`.
pub fn gnuplot_script(csv_path: &str, rows: &[EvaluateRow]) -> String {
    let mut series: Vec<(Policy, String, Option<usize>)> =
        rows.iter().map(|r| (r.policy, r.predictor.clone(), r.m)).collect();
    series.dedup();
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key left top\n");
    s.push_str("set xlabel 'P_max (dBm)'\n");
    s.push_str("set ylabel 'sum-rate (bits/s/Hz)'\n");
    s.push_str("set grid\n");
    let curves: Vec<String> = series
        .iter()
        .map(|(policy, predictor, m)| {
            let m_field = m.map_or(String::new(), |m| m.to_string());
            let title = match m {
                Some(m) => format!("{policy} m={m} ({predictor})"),
                None => format!("{policy} ({predictor})"),
            };
            format!(
                "'< awk -F, ''NR > 1 && $1 == \"{policy}\" && $2 == \"{predictor}\" && $4 == \"{m_field}\"'' {csv_path}' using 3:6:7 with yerrorlines title '{title}'"
            )
        })
        .collect();
    if curves.is_empty() {
        s.push_str("# no series\n");
    } else {
        s.push_str("plot ");
        s.push_str(&curves.join(", \\\n     "));
        s.push('\n');
    }
    s
}

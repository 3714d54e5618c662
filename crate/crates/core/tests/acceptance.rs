//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use beamcast::allocator::{
    conflict_probability, conflict_probability_mc, enumerate_optimal, falling_factorial, power_allocate_kkt,
    rank_beams, topm_allocate, AllocationResult, CouplingMatrix, KktOptions, PowerVector,
};
use beamcast::channel::{steering, synthesize_scenario, UpaGeometry};
use beamcast::codebook::{inner, Codebook};
use beamcast::config::{InterferenceModel, ScenarioConfig};
use beamcast::estimator::{ls_effective_channel, reconstruct_amplitude, EffectiveChannels};
use beamcast::experiment::{generate, run_evaluate, EvaluatePlan, Policy};
use beamcast::interchange::{Dataset, PredictionTable};
use beamcast::predictor::Predictor;
use beamcast::sweep::{sweep_high_res, TRAINING_SYMBOL};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn small_config(side: usize, ues: usize) -> ScenarioConfig {
    ScenarioConfig {
        array_vertical: side,
        array_horizontal: side,
        lowres_vertical: 1,
        lowres_horizontal: 1,
        ue_count: ues,
        frames: 2,
        window: 1,
        ..ScenarioConfig::default()
    }
}

/// Oracle effective channels of the first frame of `seed`.
fn oracle_instance(cfg: &ScenarioConfig, seed: u64) -> EffectiveChannels {
    let scenario = synthesize_scenario(cfg, seed).expect("scenario");
    let codebook = Codebook::dft(scenario.geometry);
    let channels: Vec<_> = scenario.channels[0].iter().map(|c| c.coeffs.as_slice()).collect();
    EffectiveChannels::oracle(&channels, &codebook).expect("oracle channels")
}

fn random_channel(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * 1e-4
        })
        .collect()
}

fn conflict_closed_form_vs_mc() -> Outcome {
    let trials = 100_000u64;
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for m in 2..=10usize {
        for d in 0..=m {
            let exact = conflict_probability(m, d, 0).map_err(|e| e.to_string())?.probability;
            let mc = conflict_probability_mc(m, d, 0, trials, 1000 + (m * 16 + d) as u64).map_err(|e| e.to_string())?;
            let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
            let dev = (mc - exact).abs();
            ensure(dev <= 3.0 * sigma, || format!("m={m} K-gamma={d}: closed {exact} vs MC {mc} (sigma {sigma:e})"))?;
            if sigma > 0.0 {
                worst = worst.max(dev / sigma);
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} cases, worst deviation {worst:.2} sigma"))
}

fn grid_sum_rate(g: &CouplingMatrix, p_max: f64, n0: f64) -> f64 {
    let steps = 1000;
    let mut best: f64 = 0.0;
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            let p = [p_max * i as f64 / steps as f64, p_max * j as f64 / steps as f64];
            best = best.max(g.sum_rate(&p, n0));
        }
    }
    best
}

fn kkt_vs_grid() -> Outcome {
    let cfg = small_config(2, 2);
    let (p_max, n0) = (cfg.p_max_watts(), cfg.noise_power_watts());
    let opts = KktOptions::default();
    let mut worst = f64::INFINITY;
    for seed in 0..50 {
        let eff = oracle_instance(&cfg, seed);
        let beams = [(seed % 4) as usize, ((seed / 4 + 1 + seed) % 4) as usize];
        let beams = if beams[0] == beams[1] { [beams[0], (beams[0] + 1) % 4] } else { beams };
        let g = CouplingMatrix::from_channels(&eff, &beams, cfg.interference);
        let sol = power_allocate_kkt(&g, p_max, n0, &opts).map_err(|e| e.to_string())?;
        ensure(PowerVector(sol.power.clone()).is_feasible(p_max), || format!("seed {seed}: infeasible power"))?;
        let kkt = g.sum_rate(&sol.power, n0);
        let grid = grid_sum_rate(&g, p_max, n0);
        worst = worst.min(kkt - grid);
        ensure(kkt >= grid - 1e-2, || format!("seed {seed} beams {beams:?}: KKT {kkt} vs grid {grid}"))?;
    }
    Ok(format!("50 instances, min(KKT - grid) = {worst:.3e} bits"))
}

/// Exhaustive search written against the raw channel vectors: SINR from
/// `|h_k^H w_j|^2` directly, power on a 10^-3 grid.
fn brute_force(h: &[Vec<Complex64>], codebook: &Codebook, p_max: f64, n0: f64) -> f64 {
    let gain = |k: usize, b: usize| {
        let v: Complex64 = h[k].iter().zip(codebook.beam(b)).map(|(x, w)| x.conj() * w).sum();
        v.norm_sqr()
    };
    let n = codebook.len();
    let steps = 1000;
    let mut best: f64 = 0.0;
    for b0 in 0..n {
        for b1 in 0..n {
            if b0 == b1 {
                continue;
            }
            let beams = [b0, b1];
            for i in 0..=steps {
                let p0 = p_max * i as f64 / steps as f64;
                let p1 = p_max - p0;
                let p = [p0, p1];
                let rate: f64 = (0..2)
                    .map(|k| {
                        let other = 1 - k;
                        let sinr = gain(k, beams[k]) * p[k] / (n0 + gain(k, beams[other]) * p[other]);
                        (1.0 + sinr).log2()
                    })
                    .sum();
                best = best.max(rate);
            }
        }
    }
    best
}

fn optimal_vs_brute_force() -> Outcome {
    let cfg = ScenarioConfig {
        interference: InterferenceModel::OwnChannel,
        ..small_config(2, 2)
    };
    let (p_max, n0) = (cfg.p_max_watts(), cfg.noise_power_watts());
    let mut worst: f64 = 0.0;
    for seed in 100..120 {
        let scenario = synthesize_scenario(&cfg, seed).map_err(|e| e.to_string())?;
        let codebook = Codebook::dft(scenario.geometry);
        let h: Vec<Vec<Complex64>> = scenario.channels[0].iter().map(|c| c.coeffs.clone()).collect();
        let eff = EffectiveChannels::oracle(&h, &codebook).map_err(|e| e.to_string())?;
        let opt = enumerate_optimal(&eff, p_max, n0, cfg.interference, &KktOptions::default())
            .map_err(|e| e.to_string())?;
        let brute = brute_force(&h, &codebook, p_max, n0);
        worst = worst.max((opt.sum_rate - brute).abs());
        ensure((opt.sum_rate - brute).abs() <= 1e-2, || {
            format!("seed {seed}: enumerate {} vs brute force {brute}", opt.sum_rate)
        })?;
    }
    Ok(format!("20 instances, max |difference| = {worst:.3e} bits"))
}

fn rankings_of(eff: &EffectiveChannels, grid: (usize, usize)) -> Vec<Vec<usize>> {
    (0..eff.ues()).map(|k| rank_beams(&eff.gain_image(k, grid).expect("image"))).collect()
}

fn topm_dominance() -> Outcome {
    let opts = KktOptions::default();
    let mut instances = 0;
    for (side, ues, seeds) in [(2usize, 2usize, 0..30u64), (2, 3, 30..45), (3, 2, 45..60)] {
        let cfg = small_config(side, ues);
        let (p_max, n0) = (cfg.p_max_watts(), cfg.noise_power_watts());
        let n = side * side;
        for seed in seeds {
            let eff = oracle_instance(&cfg, seed);
            let rankings = rankings_of(&eff, (side, side));
            let opt = enumerate_optimal(&eff, p_max, n0, cfg.interference, &opts).map_err(|e| e.to_string())?;
            let full = topm_allocate(&rankings, n, &eff, p_max, n0, cfg.interference, &opts).map_err(|e| e.to_string())?;
            ensure(full.sum_rate == opt.sum_rate, || {
                format!("{side}x{side} K={ues} seed {seed}: topm(m=M_tx) {} != optimal {}", full.sum_rate, opt.sum_rate)
            })?;
            for m in 1..n {
                let t = topm_allocate(&rankings, m, &eff, p_max, n0, cfg.interference, &opts).map_err(|e| e.to_string())?;
                ensure(t.sum_rate <= opt.sum_rate, || {
                    format!("{side}x{side} K={ues} seed {seed} m={m}: topm {} > optimal {}", t.sum_rate, opt.sum_rate)
                })?;
            }
            instances += 1;
        }
    }
    Ok(format!("{instances} instances"))
}

fn trend_in_m() -> Outcome {
    let cfg = ScenarioConfig {
        frames: 4,
        window: 3,
        ..ScenarioConfig::default()
    };
    let plan = EvaluatePlan {
        policies: vec![Policy::Topm],
        predictors: vec![Predictor::Oracle],
        p_max_dbm: vec![cfg.p_max_dbm],
        m_values: vec![4, 10, 30],
        seeds: (1..=100).collect(),
        max_frames: Some(1),
    };
    let rows = run_evaluate(&cfg, &plan).map_err(|e| e.to_string())?;
    ensure(rows.len() == 3, || format!("expected 3 series, got {}", rows.len()))?;
    let mut trend = Vec::new();
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let tol = 2.0 * a.std_error.max(b.std_error);
        ensure(b.mean_sum_rate >= a.mean_sum_rate - tol, || {
            format!("m={:?} mean {} drops below m={:?} mean {} by more than 2 SE", b.m, b.mean_sum_rate, a.m, a.mean_sum_rate)
        })?;
    }
    for r in &rows {
        trend.push(format!("m={}: {:.3}±{:.3}", r.m.unwrap_or(0), r.mean_sum_rate, r.std_error));
    }

    let reduced = ScenarioConfig {
        array_vertical: 4,
        array_horizontal: 4,
        lowres_vertical: 2,
        lowres_horizontal: 2,
        ue_count: 3,
        ..cfg
    };
    let plan = EvaluatePlan {
        policies: vec![Policy::Optimal, Policy::Topm],
        m_values: vec![30],
        seeds: (1..=20).collect(),
        ..plan
    };
    let rows = run_evaluate(&reduced, &plan).map_err(|e| e.to_string())?;
    let opt = rows.iter().find(|r| r.policy == Policy::Optimal).ok_or("missing optimal series")?;
    let topm = rows.iter().find(|r| r.policy == Policy::Topm).ok_or("missing top-m series")?;
    let ratio = topm.mean_planned_sum_rate / opt.mean_planned_sum_rate;
    ensure(ratio >= 0.95, || format!("4x4 K=3: topm(30) / optimal = {ratio:.4}"))?;
    Ok(format!("{}; 4x4 K=3 topm(30)/optimal = {ratio:.4}", trend.join(", ")))
}

fn ls_identity() -> Outcome {
    let geometry = UpaGeometry::from_frequency(8, 8, 60e9).map_err(|e| e.to_string())?;
    let codebook = Codebook::dft(geometry);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = 0.0158;
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let h = random_channel(&mut rng, geometry.antennas());
        let sweep = sweep_high_res(&h, &codebook, p, 0.0, i).map_err(|e| e.to_string())?;
        let rec = reconstruct_amplitude(&sweep.real_sq, &sweep.imag_sq, Some(&sweep.signs)).map_err(|e| e.to_string())?;
        for (b, r) in rec.values.iter().enumerate() {
            let est = ls_effective_channel(*r, TRAINING_SYMBOL, p).map_err(|e| e.to_string())?;
            let truth = inner(&h, codebook.beam(b)).map_err(|e| e.to_string())?;
            let rel = (est - truth).norm() / truth.norm();
            worst = worst.max(rel);
            ensure(rel <= 1e-12, || format!("channel {i} beam {b}: relative error {rel:e}"))?;
        }
    }
    Ok(format!("1000 channels, worst relative error {worst:.2e}"))
}

fn check_feasible(r: &AllocationResult, p_max: f64, what: &str) -> Result<(), String> {
    let dense = r.assignment.to_dense();
    let rows_ok = dense.iter().all(|row| row.iter().map(|&x| x as usize).sum::<usize>() == 1);
    let cols_ok = (0..dense[0].len()).all(|b| dense.iter().map(|row| row[b] as usize).sum::<usize>() <= 1);
    ensure(rows_ok && cols_ok && r.assignment.is_feasible(), || format!("{what}: infeasible assignment"))?;
    ensure(r.power.is_feasible(p_max), || format!("{what}: infeasible power {:?}", r.power.0))
}

fn structural_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    for (v, h) in [(2, 2), (4, 4), (8, 8), (4, 8)] {
        let codebook = Codebook::dft(UpaGeometry::from_frequency(v, h, 60e9).map_err(|e| e.to_string())?);
        for a in 0..codebook.len() {
            for b in 0..codebook.len() {
                let ip = inner(codebook.beam(a), codebook.beam(b)).map_err(|e| e.to_string())?;
                let want = if a == b { 1.0 } else { 0.0 };
                ensure((ip - Complex64::new(want, 0.0)).norm() <= 1e-10, || {
                    format!("{v}x{h} codebook: <w_{a}, w_{b}> = {ip}")
                })?;
            }
        }
    }

    let geometry = UpaGeometry::from_frequency(8, 8, 60e9).map_err(|e| e.to_string())?;
    for _ in 0..200 {
        let az = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let el = rng.random_range(0.0..std::f64::consts::PI);
        let a = steering(az, el, &geometry);
        ensure(a.iter().all(|x| (x.norm() - 1.0).abs() <= 1e-12), || format!("steering ({az}, {el}) not unit modulus"))?;
    }

    let codebook = Codebook::dft(geometry);
    for i in 0..50 {
        let h = random_channel(&mut rng, geometry.antennas());
        let sweep = sweep_high_res(&h, &codebook, 0.0158, 1e-10, i).map_err(|e| e.to_string())?;
        let sum = sweep.pair().power();
        for px in 0..sweep.power.len() {
            ensure(sweep.power.values[px] == sweep.real_sq.values[px] + sweep.imag_sq.values[px], || {
                format!("sweep {i} pixel {px}: power != real^2 + imag^2")
            })?;
            ensure(sum.values[px] == sweep.power.values[px], || format!("sweep {i} pixel {px}: pair power mismatch"))?;
        }
    }

    let cfg = small_config(3, 3);
    let (p_max, n0) = (cfg.p_max_watts(), cfg.noise_power_watts());
    let opts = KktOptions::default();
    for seed in 0..10 {
        let eff = oracle_instance(&cfg, seed);
        let opt = enumerate_optimal(&eff, p_max, n0, cfg.interference, &opts).map_err(|e| e.to_string())?;
        check_feasible(&opt, p_max, &format!("optimal seed {seed}"))?;
        ensure(opt.combinations_evaluated == falling_factorial(9, 3), || {
            format!("optimal evaluated {} candidates, expected 504", opt.combinations_evaluated)
        })?;
        let rankings = rankings_of(&eff, (3, 3));
        for m in [1, 3, 5, 9] {
            let t = topm_allocate(&rankings, m, &eff, p_max, n0, cfg.interference, &opts).map_err(|e| e.to_string())?;
            check_feasible(&t, p_max, &format!("topm m={m} seed {seed}"))?;
        }
    }

    for _ in 0..1000 {
        let k = rng.random_range(1..8);
        let p_max = rng.random_range(0.001..10.0);
        let mut draw = || {
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let scale = rng.random::<f64>() * p_max / raw.iter().sum::<f64>();
            raw.iter().map(|x| x * scale).collect::<Vec<f64>>()
        };
        let (p, q) = (draw(), draw());
        let lambda: f64 = rng.random();
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        ensure(PowerVector(p).is_feasible(p_max) && PowerVector(q).is_feasible(p_max), || "random draw infeasible".into())?;
        ensure(PowerVector(mix.clone()).is_feasible(p_max), || format!("convex combination {mix:?} infeasible"))?;
    }

    for (n, k, m) in [(4usize, 2usize, 3usize), (6, 3, 4), (9, 3, 9), (16, 3, 5)] {
        let gains: Vec<f64> = (0..k * n).map(|_| rng.random_range(1e-9..1e-6)).collect();
        let eff = EffectiveChannels::from_gains(k, n, &gains).map_err(|e| e.to_string())?;
        let opt = enumerate_optimal(&eff, 0.01, 1e-12, InterferenceModel::OwnChannel, &opts).map_err(|e| e.to_string())?;
        ensure(opt.combinations_evaluated == falling_factorial(n, k), || {
            format!("N={n} K={k}: {} candidates, expected {}", opt.combinations_evaluated, falling_factorial(n, k))
        })?;
        let shared: Vec<usize> = (0..n).collect();
        let rankings = vec![shared; k];
        let t = topm_allocate(&rankings, m, &eff, 0.01, 1e-12, InterferenceModel::OwnChannel, &opts)
            .map_err(|e| e.to_string())?;
        let diag = t.topm.as_ref().ok_or("missing top-m diagnostics")?;
        let want = falling_factorial(m, k);
        ensure(diag.gamma == 0 && diag.i_prime == want && t.combinations_evaluated == want, || {
            format!("N={n} K={k} m={m}: gamma {} I' {} evaluated {}, expected {want}", diag.gamma, diag.i_prime, t.combinations_evaluated)
        })?;
    }

    let cfg = ScenarioConfig {
        array_vertical: 4,
        array_horizontal: 4,
        lowres_vertical: 2,
        lowres_horizontal: 2,
        ue_count: 2,
        frames: 5,
        window: 2,
        ..ScenarioConfig::default()
    };
    let (_, dataset) = generate(&cfg, 3).map_err(|e| e.to_string())?;
    let bytes = dataset.to_bytes();
    let back = Dataset::from_bytes(&bytes).map_err(|e| e.to_string())?;
    ensure(back == dataset && back.to_bytes() == bytes, || "dataset round trip is not bit-exact".into())?;
    let table = PredictionTable {
        layout: dataset.layout,
        images: (0..2)
            .flat_map(|ue| dataset.layout.predicted_frames().map(move |f| (ue, f)))
            .map(|(ue, f)| ((ue, f), dataset.records[ue][f].high.clone()))
            .collect(),
    };
    let pbytes = table.to_bytes().map_err(|e| e.to_string())?;
    let pback = PredictionTable::from_bytes(&pbytes).map_err(|e| e.to_string())?;
    ensure(pback == table && pback.to_bytes().map_err(|e| e.to_string())? == pbytes, || {
        "predictions round trip is not bit-exact".into()
    })?;

    Ok("codebook, steering, power image, feasibility, convexity, counts, round trip".into())
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "conflict probability closed form vs Monte Carlo", budget: Some(Duration::from_secs(10)), run: conflict_closed_form_vs_mc },
        Criterion { name: "KKT power allocation vs grid search", budget: Some(Duration::from_secs(60)), run: kkt_vs_grid },
        Criterion { name: "optimal enumeration vs independent brute force", budget: None, run: optimal_vs_brute_force },
        Criterion { name: "top-m dominance and full coverage", budget: None, run: topm_dominance },
        Criterion { name: "sum-rate trend in m at desk scale", budget: Some(Duration::from_secs(600)), run: trend_in_m },
        Criterion { name: "LS identity on noiseless sweeps", budget: None, run: ls_identity },
        Criterion { name: "structural invariants", budget: None, run: structural_invariants },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.1?}, budget {b:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {} ({detail}; {elapsed:.2?})", c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL {} ({why}; {elapsed:.2?})", c.name);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

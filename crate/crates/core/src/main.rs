use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use beamcast::config::ScenarioConfig;
use beamcast::experiment::{
    self, check_dataset, EvaluatePlan, EvaluateRow, Policy, CONFLICT_HEADER, EVALUATE_HEADER,
};
use beamcast::interchange::{read_dataset, write_atomic, Dataset};
use beamcast::predictor::Predictor;
use beamcast::{Error, Result};

#[derive(Parser)]
#[command(name = "beamcast", version, about = "Multiuser mmWave beam and power allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario configuration (TOML). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<(ScenarioConfig, Vec<u64>)> {
        let cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        cfg.validate()?;
        let seeds = match self.seed {
            Some(s) => vec![s],
            None => cfg.seeds.clone(),
        };
        if seeds.is_empty() {
            return Err(Error::Config("no seeds configured".into()));
        }
        Ok((cfg, seeds))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a scenario, sweep it and write the interchange dataset.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Allocate beams and power frame by frame; writes JSON lines.
    Allocate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "topm")]
        policy: Policy,
        #[arg(long, default_value = "oracle")]
        predictor: String,
        /// Top-m list length (defaults to the configured top_m).
        #[arg(long)]
        m: Option<usize>,
        /// Use this dataset instead of regenerating it from the config.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Predictions file for `--predictor external`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean sum-rate per (policy, predictor, P_max, m); writes CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Repeatable.
        #[arg(long = "policy", default_values = ["topm"])]
        policies: Vec<Policy>,
        /// Repeatable: oracle, persistence, bilinear, bicubic.
        #[arg(long = "predictor", default_values = ["oracle"])]
        predictors: Vec<String>,
        /// Repeatable; defaults to the configured m_sweep.
        #[arg(long = "m")]
        m_values: Vec<usize>,
        /// Only the first N predicted frames of each seed.
        #[arg(long)]
        max_frames: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form conflict-free probability against Monte-Carlo; writes CSV.
    Conflict {
        #[arg(long, default_value_t = 2)]
        m_min: usize,
        #[arg(long, default_value_t = 10)]
        m_max: usize,
        #[arg(long = "ues", default_value_t = 10)]
        k: usize,
        /// Repeatable; defaults to every gamma in 0..=K.
        #[arg(long = "gamma")]
        gammas: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit a gnuplot script for an evaluate CSV.
    PlotScript {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration as TOML.
    ConfigDefaults {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `bytes` atomically plus a `<out>.log` sidecar with the run metadata.
fn emit(out: &Path, bytes: &[u8]) -> Result<String> {
    write_atomic(out, bytes)?;
    let digest = sha256_hex(bytes);
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let args: Vec<String> = std::env::args().collect();
    let log = format!(
        "timestamp_unix = {stamp}\ncommand = {:?}\noutput = {:?}\nsha256 = \"{digest}\"\n",
        args.join(" "),
        out.display().to_string()
    );
    let mut log_path = out.as_os_str().to_owned();
    log_path.push(".log");
    fs::write(PathBuf::from(log_path), log)?;
    Ok(digest)
}

fn load_dataset(path: &Path, cfg: &ScenarioConfig) -> Result<Dataset> {
    let ds = read_dataset(path)?;
    check_dataset(cfg, &ds)?;
    Ok(ds)
}

fn predictor_for(name: &str, predictions: Option<&Path>, cfg: &ScenarioConfig, seed: u64) -> Result<Predictor> {
    let p = Predictor::from_name(name, predictions)?;
    if let Predictor::External(table) = &p {
        let want = experiment::dataset_layout(cfg, seed);
        if table.layout != want {
            return Err(Error::Config(format!(
                "predictions layout {:?} does not match the dataset {:?}",
                table.layout, want
            )));
        }
        let wanted: Vec<(usize, usize)> = (0..want.ues)
            .flat_map(|ue| want.predicted_frames().map(move |f| (ue, f)))
            .collect();
        if let Some(&(ue, frame)) = table.missing(&wanted).first() {
            return Err(Error::MissingPrediction { ue, frame });
        }
    }
    Ok(p)
}

fn run(cli: Cli) -> Result<Option<PathBuf>> {
    match cli.command {
        Command::Generate { common, out } => {
            let (cfg, seeds) = common.load()?;
            if seeds.len() != 1 {
                return Err(Error::Config("generate writes one dataset; pass --seed or configure one seed".into()));
            }
            let (_, ds) = experiment::generate(&cfg, seeds[0])?;
            let bytes = ds.to_bytes();
            let digest = fail_cleanup(&out, emit(&out, &bytes))?;
            let episodes = ds.episodes()?.len();
            let l = ds.layout;
            println!(
                "wrote {} (K={}, M=({}, {}), m=({}, {}), s={}, frames={})",
                out.display(),
                l.ues,
                l.high.0,
                l.high.1,
                l.low.0,
                l.low.1,
                l.window,
                l.frames
            );
            println!("episodes: {episodes}");
            println!("seeds: {seeds:?}");
            println!("sha256: {digest}");
            Ok(Some(out))
        }
        Command::Allocate {
            common,
            policy,
            predictor,
            m,
            dataset,
            predictions,
            out,
        } => {
            let (cfg, mut seeds) = common.load()?;
            let ds = match &dataset {
                Some(p) => {
                    let ds = load_dataset(p, &cfg)?;
                    seeds = vec![ds.layout.seed];
                    Some(ds)
                }
                None => None,
            };
            if predictions.is_some() && seeds.len() != 1 {
                return Err(Error::Config("a predictions file covers one seed; pass --seed or --dataset".into()));
            }
            let pred = predictor_for(&predictor, predictions.as_deref(), &cfg, seeds[0])?;
            let m = m.unwrap_or(cfg.top_m);
            let records = experiment::run_allocate(&cfg, &seeds, policy, m, &pred, ds.as_ref())?;
            let mut text = String::new();
            for r in &records {
                text.push_str(&serde_json::to_string(r).map_err(|e| Error::domain(e.to_string()))?);
                text.push('\n');
            }
            let digest = fail_cleanup(&out, emit(&out, text.as_bytes()))?;
            let mean = records.iter().map(|r| r.realized_sum_rate).sum::<f64>() / records.len().max(1) as f64;
            println!("wrote {} records to {}", records.len(), out.display());
            println!("mean realized sum-rate: {mean:.6} bits/s/Hz");
            println!("sha256: {digest}");
            Ok(Some(out))
        }
        Command::Evaluate {
            common,
            policies,
            predictors,
            m_values,
            max_frames,
            out,
        } => {
            let (cfg, seeds) = common.load()?;
            let predictors = predictors
                .iter()
                .map(|name| {
                    if name == "external" {
                        Err(Error::Config("evaluate regenerates data per seed; use allocate for external predictions".into()))
                    } else {
                        Predictor::from_name(name, None)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let plan = EvaluatePlan {
                policies,
                predictors,
                p_max_dbm: cfg.p_max_dbm_sweep.clone(),
                m_values: if m_values.is_empty() { cfg.m_sweep.clone() } else { m_values },
                seeds,
                max_frames,
            };
            let rows = experiment::run_evaluate(&cfg, &plan)?;
            let mut text = format!("{EVALUATE_HEADER}\n");
            for r in &rows {
                text.push_str(&r.csv_line());
                text.push('\n');
            }
            let digest = fail_cleanup(&out, emit(&out, text.as_bytes()))?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            println!("sha256: {digest}");
            Ok(Some(out))
        }
        Command::Conflict {
            m_min,
            m_max,
            k,
            gammas,
            trials,
            seed,
            out,
        } => {
            if m_min == 0 || m_min > m_max {
                return Err(Error::Config(format!("invalid m range {m_min}..={m_max}")));
            }
            let ms: Vec<usize> = (m_min..=m_max).collect();
            let gammas = if gammas.is_empty() { (0..=k).collect() } else { gammas };
            let rows = experiment::run_conflict(&ms, k, &gammas, trials, seed)?;
            let mut text = format!("{CONFLICT_HEADER}\n");
            for r in &rows {
                text.push_str(&r.csv_line());
                text.push('\n');
            }
            let digest = fail_cleanup(&out, emit(&out, text.as_bytes()))?;
            let outside = rows.iter().filter(|r| !r.within_3_sigma).count();
            println!("wrote {} rows to {} ({outside} outside 3 sigma)", rows.len(), out.display());
            println!("sha256: {digest}");
            Ok(Some(out))
        }
        Command::PlotScript { csv, out } => {
            let text = fs::read_to_string(&csv)?;
            let rows = parse_evaluate_csv(&text)?;
            let script = experiment::gnuplot_script(&csv.display().to_string(), &rows);
            fail_cleanup(&out, emit(&out, script.as_bytes()))?;
            println!("wrote {}", out.display());
            Ok(Some(out))
        }
        Command::ConfigDefaults { out } => {
            let text = ScenarioConfig::default().to_toml_string();
            match out {
                Some(p) => {
                    fail_cleanup(&p, emit(&p, text.as_bytes()))?;
                    Ok(Some(p))
                }
                None => {
                    print!("{text}");
                    Ok(None)
                }
            }
        }
    }
}

fn parse_evaluate_csv(text: &str) -> Result<Vec<EvaluateRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(EVALUATE_HEADER) {
        return Err(Error::Config("not an evaluate CSV (header mismatch)".into()));
    }
    let bad = |n: usize| Error::Config(format!("malformed evaluate CSV at line {}", n + 2));
    lines
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(n));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n));
            Ok(EvaluateRow {
                policy: f[0].parse()?,
                predictor: f[1].to_string(),
                p_max_dbm: num(f[2])?,
                m: if f[3].is_empty() { None } else { Some(f[3].parse().map_err(|_| bad(n))?) },
                samples: f[4].parse().map_err(|_| bad(n))?,
                mean_sum_rate: num(f[5])?,
                std_error: num(f[6])?,
                mean_planned_sum_rate: num(f[7])?,
            })
        })
        .collect()
}

/// Remove `out` and its sidecar if writing failed.
fn fail_cleanup<T>(out: &Path, r: Result<T>) -> Result<T> {
    if r.is_err() {
        let _ = fs::remove_file(out);
        let mut log = out.as_os_str().to_owned();
        log.push(".log");
        let _ = fs::remove_file(PathBuf::from(log));
    }
    r
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BEAMCAST_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("BEAMCAST_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::Config("BEAMCAST_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

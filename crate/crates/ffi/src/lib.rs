//! C ABI for `beamcast`.
//!
//! Every fallible function returns a [`BcStatus`]. On failure a message is
//! kept per thread and can be copied out with [`bc_last_error_message`].
//! Objects are opaque handles returned through out-pointers (for example by
//! `bc_config_from_toml` or `bc_dataset_read`) and released with the
//! matching `bc_*_free`. Passing a null handle to a free
//! function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use beamcast::allocator::{
    conflict_probability, conflict_probability_mc, enumerate_optimal, power_allocate_kkt, topm_allocate,
    AllocationResult, CouplingMatrix, KktOptions,
};
use beamcast::config::{InterferenceModel, PowerMode, ScenarioConfig};
use beamcast::estimator::EffectiveChannels;
use beamcast::experiment;
use beamcast::interchange::{self, Dataset, Layout, PredictionTable};
use beamcast::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Config = 4,
    Format = 5,
    Io = 6,
    MissingPrediction = 7,
    NotConverged = 8,
    BufferTooSmall = 9,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcInterference {
    OwnChannel = 0,
    Printed = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcPowerMode {
    SumRate = 0,
    Selfish = 1,
}

/// Shape of a dataset or prediction file.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BcLayout {
    pub ues: usize,
    pub high_rows: usize,
    pub high_cols: usize,
    pub low_rows: usize,
    pub low_cols: usize,
    pub window: usize,
    pub frames: usize,
    pub seed: u64,
}

impl From<Layout> for BcLayout {
    fn from(l: Layout) -> Self {
        BcLayout {
            ues: l.ues,
            high_rows: l.high.0,
            high_cols: l.high.1,
            low_rows: l.low.0,
            low_cols: l.low.1,
            window: l.window,
            frames: l.frames,
            seed: l.seed,
        }
    }
}

pub struct BcConfig(ScenarioConfig);
pub struct BcDataset(Dataset);
pub struct BcPredictions(PredictionTable);
pub struct BcChannels(EffectiveChannels);
pub struct BcAllocation(AllocationResult);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(BcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Domain(_) => BcStatus::Domain,
            Error::Format { .. } => BcStatus::Format,
            Error::Config(_) => BcStatus::Config,
            Error::MissingPrediction { .. } => BcStatus::MissingPrediction,
            Error::NotConverged { .. } => BcStatus::NotConverged,
            Error::Io(_) => BcStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(BcStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BcStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure(BcStatus::Panic, format!("panic: {msg}")))
    });
    match outcome {
        Ok(()) => BcStatus::Ok,
        Err(Failure(status, msg)) => {
            set_error(msg);
            status
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn copy_out<T: Copy>(src: &[T], dst: *mut T, capacity: usize) -> Result<(), Failure> {
    if capacity < src.len() {
        return Err(Failure(
            BcStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, need {}", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Copy `text` plus a terminating NUL into `buf`. `needed` (if non-null)
/// always receives the full size including the NUL.
unsafe fn copy_text(text: &str, buf: *mut c_char, capacity: usize, needed: *mut usize) -> Result<(), Failure> {
    let bytes = text.as_bytes();
    if !needed.is_null() {
        needed.write(bytes.len() + 1);
    }
    if buf.is_null() && capacity == 0 {
        return Ok(());
    }
    if capacity < bytes.len() + 1 {
        return Err(Failure(BcStatus::BufferTooSmall, format!("text needs {} bytes", bytes.len() + 1)));
    }
    if buf.is_null() {
        return Err(null("text buffer"));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
    buf.add(bytes.len()).write(0);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn interference(m: BcInterference) -> InterferenceModel {
    match m {
        BcInterference::OwnChannel => InterferenceModel::OwnChannel,
        BcInterference::Printed => InterferenceModel::Printed,
    }
}

fn kkt(mode: BcPowerMode) -> KktOptions {
    KktOptions {
        mode: match mode {
            BcPowerMode::SumRate => PowerMode::SumRate,
            BcPowerMode::Selfish => PowerMode::Selfish,
        },
        ..KktOptions::default()
    }
}

/// Copy the calling thread's last error message. Semantics of `buf`,
/// `capacity` and `needed` as in [`bc_config_to_toml`].
///
/// # Safety
/// `buf` must hold `capacity` bytes; `needed` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn bc_last_error_message(buf: *mut c_char, capacity: usize, needed: *mut usize) -> BcStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match copy_text(&msg, buf, capacity, needed) {
        Ok(()) => BcStatus::Ok,
        Err(Failure(s, _)) => s,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New handle holding the default configuration.
#[no_mangle]
pub extern "C" fn bc_config_default() -> *mut BcConfig {
    boxed(BcConfig(ScenarioConfig::default()))
}

/// Parse and validate a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_config_from_toml(toml: *const c_char, out: *mut *mut BcConfig) -> BcStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        let text = CStr::from_ptr(toml).to_str().map_err(|_| invalid("toml is not valid UTF-8"))?;
        let cfg = ScenarioConfig::from_toml_str(text)?;
        cfg.validate()?;
        write_out(out, boxed(BcConfig(cfg)), "out")
    })
}

/// Serialize a configuration to TOML. With `buf == NULL` and `capacity == 0`
/// only `needed` is filled, so callers can size the buffer first.
///
/// # Safety
/// `cfg` must be a live handle; `buf` must hold `capacity` bytes; `needed`
/// must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn bc_config_to_toml(
    cfg: *const BcConfig,
    buf: *mut c_char,
    capacity: usize,
    needed: *mut usize,
) -> BcStatus {
    guard(|| copy_text(&handle(cfg, "cfg")?.0.to_toml_string(), buf, capacity, needed))
}

/// # Safety
/// `cfg` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bc_config_free(cfg: *mut BcConfig) {
    free(cfg)
}

/// Synthesize the scenario for `seed` and sweep it into a dataset.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_dataset_generate(cfg: *const BcConfig, seed: u64, out: *mut *mut BcDataset) -> BcStatus {
    guard(|| {
        let cfg = &handle(cfg, "cfg")?.0;
        cfg.validate()?;
        let (_, ds) = experiment::generate(cfg, seed)?;
        write_out(out, boxed(BcDataset(ds)), "out")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_dataset_read(path: *const c_char, out: *mut *mut BcDataset) -> BcStatus {
    guard(|| {
        let ds = interchange::read_dataset(path_arg(path)?)?;
        write_out(out, boxed(BcDataset(ds)), "out")
    })
}

/// # Safety
/// `ds` must be a live handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bc_dataset_write(ds: *const BcDataset, path: *const c_char) -> BcStatus {
    guard(|| Ok(interchange::write_dataset(&handle(ds, "dataset")?.0, path_arg(path)?)?))
}

/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_dataset_layout(ds: *const BcDataset, out: *mut BcLayout) -> BcStatus {
    guard(|| write_out(out, handle(ds, "dataset")?.0.layout.into(), "out"))
}

/// High-resolution power image (`real^2 + imag^2`, row-major) of one
/// `(ue, frame)` record.
///
/// # Safety
/// `ds` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn bc_dataset_power_image(
    ds: *const BcDataset,
    ue: usize,
    frame: usize,
    out: *mut f64,
    capacity: usize,
) -> BcStatus {
    guard(|| {
        let ds = &handle(ds, "dataset")?.0;
        let rec = ds
            .records
            .get(ue)
            .and_then(|r| r.get(frame))
            .ok_or_else(|| invalid(format!("no record for ue {ue}, frame {frame}")))?;
        copy_out(&rec.high.power().values, out, capacity)
    })
}

/// # Safety
/// `ds` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bc_dataset_free(ds: *mut BcDataset) {
    free(ds)
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_predictions_read(path: *const c_char, out: *mut *mut BcPredictions) -> BcStatus {
    guard(|| {
        let table = interchange::read_predictions(path_arg(path)?)?;
        write_out(out, boxed(BcPredictions(table)), "out")
    })
}

/// # Safety
/// `pred` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_predictions_layout(pred: *const BcPredictions, out: *mut BcLayout) -> BcStatus {
    guard(|| write_out(out, handle(pred, "predictions")?.0.layout.into(), "out"))
}

/// Predicted power image (row-major) for `(ue, frame)`.
///
/// # Safety
/// `pred` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn bc_predictions_power_image(
    pred: *const BcPredictions,
    ue: usize,
    frame: usize,
    out: *mut f64,
    capacity: usize,
) -> BcStatus {
    guard(|| {
        let pair = handle(pred, "predictions")?.0.get(ue, frame)?;
        copy_out(&pair.power().values, out, capacity)
    })
}

/// # Safety
/// `pred` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bc_predictions_free(pred: *mut BcPredictions) {
    free(pred)
}

/// Closed-form probability that `k - gamma` UEs drawing from a top-m list
/// pick distinct beams. `certain_conflict` is set to 1 when `k - gamma > m`.
///
/// # Safety
/// `probability` and `certain_conflict` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_conflict_probability(
    m: usize,
    k: usize,
    gamma: usize,
    probability: *mut f64,
    certain_conflict: *mut u8,
) -> BcStatus {
    guard(|| {
        let est = conflict_probability(m, k, gamma)?;
        write_out(probability, est.probability, "probability")?;
        if !certain_conflict.is_null() {
            certain_conflict.write(est.certain_conflict as u8);
        }
        Ok(())
    })
}

/// Monte-Carlo estimate of [`bc_conflict_probability`].
///
/// # Safety
/// `probability` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_conflict_probability_mc(
    m: usize,
    k: usize,
    gamma: usize,
    trials: u64,
    seed: u64,
    probability: *mut f64,
) -> BcStatus {
    guard(|| write_out(probability, conflict_probability_mc(m, k, gamma, trials, seed)?, "probability"))
}

/// Power allocation for a fixed beam assignment. `coupling` is the `k x k`
/// row-major matrix whose entry `(j, l)` multiplies `p_l` in UE j's SINR.
/// Writes `k` powers (watts) and the water level.
///
/// # Safety
/// `coupling` must hold `k * k` doubles, `power` must hold `k`, `mu` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn bc_power_allocate(
    k: usize,
    coupling: *const f64,
    p_max: f64,
    n0: f64,
    mode: BcPowerMode,
    power: *mut f64,
    mu: *mut f64,
) -> BcStatus {
    guard(|| {
        let g = slice_arg(coupling, k * k, "coupling")?;
        let g = CouplingMatrix::new(k, g.to_vec())?;
        let sol = power_allocate_kkt(&g, p_max, n0, &kkt(mode))?;
        copy_out(&sol.power, power, k)?;
        if !mu.is_null() {
            mu.write(sol.mu);
        }
        Ok(())
    })
}

/// Effective channels from nonnegative gains `|h_k^H w_b|^2`, `ues x beams`
/// row-major.
///
/// # Safety
/// `gains` must hold `ues * beams` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_channels_from_gains(
    ues: usize,
    beams: usize,
    gains: *const f64,
    out: *mut *mut BcChannels,
) -> BcStatus {
    guard(|| {
        let g = slice_arg(gains, ues * beams, "gains")?;
        let eff = EffectiveChannels::from_gains(ues, beams, g)?;
        write_out(out, boxed(BcChannels(eff)), "out")
    })
}

/// Oracle effective channels of every UE in frame `frame` of the scenario
/// generated from `cfg` and `seed`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_channels_oracle(
    cfg: *const BcConfig,
    seed: u64,
    frame: usize,
    out: *mut *mut BcChannels,
) -> BcStatus {
    guard(|| {
        let cfg = &handle(cfg, "cfg")?.0;
        cfg.validate()?;
        let scenario = beamcast::channel::synthesize_scenario(cfg, seed)?;
        let channels = scenario
            .channels
            .get(frame)
            .ok_or_else(|| invalid(format!("frame {frame} out of range 0..{}", scenario.frames())))?;
        let codebook = beamcast::codebook::Codebook::dft(scenario.geometry);
        let hs: Vec<_> = channels.iter().map(|c| c.coeffs.as_slice()).collect();
        let eff = EffectiveChannels::oracle(&hs, &codebook)?;
        write_out(out, boxed(BcChannels(eff)), "out")
    })
}

/// # Safety
/// `ch` must be a live handle; `ues`/`beams` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn bc_channels_shape(ch: *const BcChannels, ues: *mut usize, beams: *mut usize) -> BcStatus {
    guard(|| {
        let eff = &handle(ch, "channels")?.0;
        if !ues.is_null() {
            ues.write(eff.ues());
        }
        if !beams.is_null() {
            beams.write(eff.beams());
        }
        Ok(())
    })
}

/// # Safety
/// `ch` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bc_channels_free(ch: *mut BcChannels) {
    free(ch)
}

/// Exhaustive beam assignment with per-candidate power allocation.
///
/// # Safety
/// `ch` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bc_enumerate_optimal(
    ch: *const BcChannels,
    p_max: f64,
    n0: f64,
    model: BcInterference,
    mode: BcPowerMode,
    out: *mut *mut BcAllocation,
) -> BcStatus {
    guard(|| {
        let eff = &handle(ch, "channels")?.0;
        let r = enumerate_optimal(eff, p_max, n0, interference(model), &kkt(mode))?;
        write_out(out, boxed(BcAllocation(r)), "out")
    })
}

/// Top-m policy. `rankings` holds, for each UE in turn, all `beams` beam
/// indices strongest first (`ues * beams` entries).
///
/// # Safety
/// `ch` must be a live handle; `rankings` must hold `ues * beams` entries;
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn bc_topm_allocate(
    ch: *const BcChannels,
    rankings: *const usize,
    m: usize,
    p_max: f64,
    n0: f64,
    model: BcInterference,
    mode: BcPowerMode,
    out: *mut *mut BcAllocation,
) -> BcStatus {
    guard(|| {
        let eff = &handle(ch, "channels")?.0;
        let (k, n) = (eff.ues(), eff.beams());
        let flat = slice_arg(rankings, k * n, "rankings")?;
        let lists: Vec<Vec<usize>> = flat.chunks(n.max(1)).map(<[usize]>::to_vec).collect();
        let r = topm_allocate(&lists, m, eff, p_max, n0, interference(model), &kkt(mode))?;
        write_out(out, boxed(BcAllocation(r)), "out")
    })
}

/// Sum-rate in bits/s/Hz, or NaN for a null handle.
///
/// # Safety
/// `a` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bc_allocation_sum_rate(a: *const BcAllocation) -> f64 {
    a.as_ref().map_or(f64::NAN, |a| a.0.sum_rate)
}

/// Number of UEs in the allocation, or 0 for a null handle.
///
/// # Safety
/// `a` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bc_allocation_ues(a: *const BcAllocation) -> usize {
    a.as_ref().map_or(0, |a| a.0.power.0.len())
}

/// # Safety
/// `a` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bc_allocation_combinations(a: *const BcAllocation) -> u64 {
    a.as_ref().map_or(0, |a| a.0.combinations_evaluated)
}

/// Beam index per UE.
///
/// # Safety
/// `a` must be a live handle; `out` must hold `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn bc_allocation_beams(a: *const BcAllocation, out: *mut usize, capacity: usize) -> BcStatus {
    guard(|| copy_out(handle(a, "allocation")?.0.assignment.beams_per_ue(), out, capacity))
}

/// Transmit power per UE in watts.
///
/// # Safety
/// `a` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn bc_allocation_power(a: *const BcAllocation, out: *mut f64, capacity: usize) -> BcStatus {
    guard(|| copy_out(&handle(a, "allocation")?.0.power.0, out, capacity))
}

/// # Safety
/// `a` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bc_allocation_free(a: *mut BcAllocation) {
    free(a)
}

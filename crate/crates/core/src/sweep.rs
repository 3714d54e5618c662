//! Beam sweeping into beam-quality images and time-windowed episodes.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::Scenario;
use crate::codebook::{received_sample, Codebook};
use crate::config::{LowResMode, ScenarioConfig};
use crate::error::{Error, Result};

/// Pilot used for every sweep.
pub const TRAINING_SYMBOL: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageKind {
    Power,
    RealSq,
    ImagSq,
    SignReal,
    SignImag,
}

/// Row-major grid of per-beam values.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamImage {
    pub rows: usize,
    pub cols: usize,
    pub kind: ImageKind,
    pub values: Vec<f64>,
}

impl BeamImage {
    pub fn new(rows: usize, cols: usize, kind: ImageKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::domain(format!(
                "image {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(BeamImage {
            rows,
            cols,
            kind,
            values,
        })
    }

    pub fn filled(rows: usize, cols: usize, kind: ImageKind, v: f64) -> Self {
        BeamImage {
            rows,
            cols,
            kind,
            values: vec![v; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Squared real and imaginary parts of the per-beam received samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub real_sq: BeamImage,
    pub imag_sq: BeamImage,
}

impl ImagePair {
    /// Pixelwise `real_sq + imag_sq`.
    pub fn power(&self) -> BeamImage {
        let values = self
            .real_sq
            .values
            .iter()
            .zip(&self.imag_sq.values)
            .map(|(a, b)| a + b)
            .collect();
        BeamImage {
            rows: self.real_sq.rows,
            cols: self.real_sq.cols,
            kind: ImageKind::Power,
            values,
        }
    }
}

/// Sign planes of `Re r` and `Im r`, each entry `+1` or `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignPlanes {
    pub real: BeamImage,
    pub imag: BeamImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepImages {
    pub real_sq: BeamImage,
    pub imag_sq: BeamImage,
    pub power: BeamImage,
    pub signs: SignPlanes,
}

impl SweepImages {
    pub fn pair(&self) -> ImagePair {
        ImagePair {
            real_sq: self.real_sq.clone(),
            imag_sq: self.imag_sq.clone(),
        }
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Sweep every beam of `codebook` in index order. Each beam gets an
/// independent complex Gaussian noise draw of variance `noise_power`.
pub fn sweep_high_res(
    h: &[Complex64],
    codebook: &Codebook,
    p: f64,
    noise_power: f64,
    seed: u64,
) -> Result<SweepImages> {
    if !(p > 0.0) {
        return Err(Error::domain(format!("sweep power must be positive, got {p}")));
    }
    if !(noise_power >= 0.0) {
        return Err(Error::domain(format!("noise power must be nonnegative, got {noise_power}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = (noise_power / 2.0).sqrt();
    let (rows, cols) = codebook.grid();
    let n = codebook.len();
    let mut re_sq = Vec::with_capacity(n);
    let mut im_sq = Vec::with_capacity(n);
    let mut pw = Vec::with_capacity(n);
    let mut s_re = Vec::with_capacity(n);
    let mut s_im = Vec::with_capacity(n);
    for w in codebook.beams() {
        let nr: f64 = StandardNormal.sample(&mut rng);
        let ni: f64 = StandardNormal.sample(&mut rng);
        let noise = Complex64::new(sigma * nr, sigma * ni);
        let r = received_sample(h, w, p, TRAINING_SYMBOL, noise)?;
        let (a, b) = (r.re * r.re, r.im * r.im);
        re_sq.push(a);
        im_sq.push(b);
        pw.push(a + b);
        s_re.push(sign(r.re));
        s_im.push(sign(r.im));
    }
    Ok(SweepImages {
        real_sq: BeamImage::new(rows, cols, ImageKind::RealSq, re_sq)?,
        imag_sq: BeamImage::new(rows, cols, ImageKind::ImagSq, im_sq)?,
        power: BeamImage::new(rows, cols, ImageKind::Power, pw)?,
        signs: SignPlanes {
            real: BeamImage::new(rows, cols, ImageKind::SignReal, s_re)?,
            imag: BeamImage::new(rows, cols, ImageKind::SignImag, s_im)?,
        },
    })
}

/// Uniform lattice subsampling: `low(a, b) = high(fr * a, fc * b)`.
pub fn downsample_to_low_res(high: &BeamImage, factor: (usize, usize)) -> Result<BeamImage> {
    let (fr, fc) = factor;
    if fr == 0 || fc == 0 || !high.rows.is_multiple_of(fr) || !high.cols.is_multiple_of(fc) {
        return Err(Error::domain(format!(
            "image {}x{} is not divisible by factor {fr}x{fc}",
            high.rows, high.cols
        )));
    }
    let (rows, cols) = (high.rows / fr, high.cols / fc);
    let mut values = Vec::with_capacity(rows * cols);
    for a in 0..rows {
        for b in 0..cols {
            values.push(high.get(fr * a, fc * b));
        }
    }
    BeamImage::new(rows, cols, high.kind, values)
}

/// Everything recorded for one UE in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub high: ImagePair,
    pub signs: SignPlanes,
    pub low: ImagePair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub ue: usize,
    /// Last input frame `t`; the target is frame `t + 1`.
    pub frame: usize,
    /// Low-resolution inputs for frames `t - s + 1 ..= t`, oldest first.
    pub inputs: Vec<ImagePair>,
    pub target: ImagePair,
    pub target_signs: SignPlanes,
}

impl Episode {
    pub fn window(&self) -> usize {
        self.inputs.len()
    }

    pub fn target_frame(&self) -> usize {
        self.frame + 1
    }

    pub fn latest_input(&self) -> &ImagePair {
        self.inputs.last().expect("episodes have at least one input")
    }
}

/// Episodes for one UE: one per frame `t` in `s-1 ..= frames-2`.
pub fn build_episodes(ue: usize, records: &[FrameRecord], s: usize) -> Result<Vec<Episode>> {
    if s == 0 {
        return Err(Error::domain("window length s must be at least 1"));
    }
    if records.len() < s + 1 {
        return Err(Error::domain(format!(
            "{} frames are too few for window s = {s} (need at least {})",
            records.len(),
            s + 1
        )));
    }
    (s - 1..records.len() - 1).map(|t| build_episode(ue, records, s, t)).collect()
}

/// The episode whose last input frame is `t`.
pub fn build_episode(ue: usize, records: &[FrameRecord], s: usize, t: usize) -> Result<Episode> {
    if s == 0 || t + 1 < s || t + 1 >= records.len() {
        return Err(Error::domain(format!(
            "no episode ends at frame {t} with window {s} over {} frames",
            records.len()
        )));
    }
    Ok(Episode {
        ue,
        frame: t,
        inputs: records[t + 1 - s..=t].iter().map(|r| r.low.clone()).collect(),
        target: records[t + 1].high.clone(),
        target_signs: records[t + 1].signs.clone(),
    })
}

/// SplitMix64-style mixer for deriving independent per-sweep seeds.
pub fn derive_seed(seed: u64, ue: usize, frame: usize, stream: u64) -> u64 {
    let mut z = seed
        ^ (ue as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (frame as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ stream.wrapping_mul(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sweep every (UE, frame) of a scenario. Returns `records[ue][frame]`.
pub fn sweep_scenario(cfg: &ScenarioConfig, scenario: &Scenario, seed: u64) -> Result<Vec<Vec<FrameRecord>>> {
    let codebook = Codebook::dft(scenario.geometry);
    let (lr, lc) = cfg.low_res_dims();
    let wide = match cfg.lowres_mode {
        LowResMode::WideBeam => Some(Codebook::wide_beam(scenario.geometry, lr, lc)?),
        LowResMode::Subsample => None,
    };
    let factor = (cfg.array_vertical / lr, cfg.array_horizontal / lc);
    let p = cfg.sweep_power_watts();
    let n0 = if cfg.sweep_noise {
        cfg.noise_power_watts()
    } else {
        0.0
    };

    let mut out = vec![Vec::with_capacity(scenario.frames()); scenario.ues()];
    for frame in &scenario.channels {
        for ch in frame {
            let hi = sweep_high_res(&ch.coeffs, &codebook, p, n0, derive_seed(seed, ch.ue, ch.frame, 0))?;
            let low = match &wide {
                Some(cb) => sweep_high_res(&ch.coeffs, cb, p, n0, derive_seed(seed, ch.ue, ch.frame, 1))?.pair(),
                None => ImagePair {
                    real_sq: downsample_to_low_res(&hi.real_sq, factor)?,
                    imag_sq: downsample_to_low_res(&hi.imag_sq, factor)?,
                },
            };
            out[ch.ue].push(FrameRecord {
                high: hi.pair(),
                signs: hi.signs,
                low,
            });
        }
    }
    Ok(out)
}

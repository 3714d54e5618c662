//! Amplitude reconstruction from squared-part images, per-beam LS estimation
//! of effective channels, and the image MSE.

use num_complex::Complex64;

use crate::codebook::{check_symbol, inner, Codebook};
use crate::error::{Error, Result};
use crate::sweep::{BeamImage, SignPlanes};

impl AsRef<[f64]> for BeamImage {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Computed directly from true channels and the codebook.
    Oracle,
    /// LS-inverted from (predicted) beam images.
    LsFromPrediction,
}

/// `values[k * beams + b]` holds the effective channel `h_k^H w_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannels {
    ues: usize,
    beams: usize,
    values: Vec<Complex64>,
    pub provenance: Provenance,
    /// Negative squared parts clamped to zero while building the estimate.
    pub clamped: usize,
}

impl EffectiveChannels {
    pub fn new(ues: usize, beams: usize, values: Vec<Complex64>, provenance: Provenance) -> Result<Self> {
        if values.len() != ues * beams {
            return Err(Error::domain(format!(
                "effective channel table needs {} entries, got {}",
                ues * beams,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::domain("effective channel contains non-finite values"));
        }
        Ok(EffectiveChannels {
            ues,
            beams,
            values,
            provenance,
            clamped: 0,
        })
    }

    /// Build from real-valued gains `|h_k^H w_b|^2` (row-major, ue-major).
    pub fn from_gains(ues: usize, beams: usize, gains: &[f64]) -> Result<Self> {
        if gains.iter().any(|&g| g < 0.0) {
            return Err(Error::domain("gains must be nonnegative"));
        }
        let values = gains.iter().map(|g| Complex64::new(g.sqrt(), 0.0)).collect();
        Self::new(ues, beams, values, Provenance::Oracle)
    }

    /// Exact `h_k^H w_b` for every UE and beam.
    pub fn oracle<H: AsRef<[Complex64]>>(channels: &[H], codebook: &Codebook) -> Result<Self> {
        let mut values = Vec::with_capacity(channels.len() * codebook.len());
        for h in channels {
            for w in codebook.beams() {
                values.push(inner(h.as_ref(), w)?);
            }
        }
        Self::new(channels.len(), codebook.len(), values, Provenance::Oracle)
    }

    /// LS estimate from per-UE high-resolution images swept at power `p`
    /// with pilot `s`.
    pub fn from_images(
        images: &[(&BeamImage, &BeamImage, Option<&SignPlanes>)],
        s: Complex64,
        p: f64,
    ) -> Result<Self> {
        let beams = images.first().map_or(0, |(r, _, _)| r.len());
        let mut values = Vec::with_capacity(images.len() * beams);
        let mut clamped = 0;
        for (re, im, signs) in images {
            if re.len() != beams {
                return Err(Error::domain("all UEs must share one beam grid"));
            }
            let rec = reconstruct_amplitude(re, im, *signs)?;
            clamped += rec.clamped;
            for r in rec.values {
                values.push(ls_effective_channel(r, s, p)?);
            }
        }
        let mut out = Self::new(images.len(), beams, values, Provenance::LsFromPrediction)?;
        out.clamped = clamped;
        Ok(out)
    }

    pub fn ues(&self) -> usize {
        self.ues
    }

    pub fn beams(&self) -> usize {
        self.beams
    }

    pub fn get(&self, ue: usize, beam: usize) -> Complex64 {
        self.values[ue * self.beams + beam]
    }

    /// `|h_k^H w_b|^2`
    pub fn gain(&self, ue: usize, beam: usize) -> f64 {
        self.get(ue, beam).norm_sqr()
    }

    /// Per-beam gains of one UE, as a beam-quality image of shape `grid`.
    pub fn gain_image(&self, ue: usize, grid: (usize, usize)) -> Result<BeamImage> {
        let values = (0..self.beams).map(|b| self.gain(ue, b)).collect();
        BeamImage::new(grid.0, grid.1, crate::sweep::ImageKind::Power, values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub values: Vec<Complex64>,
    /// How many negative squared parts were clamped to zero.
    pub clamped: usize,
}

/// `sign_r sqrt(real_sq) + j sign_i sqrt(imag_sq)` per pixel. Without signs
/// both signs are taken as `+1`.
pub fn reconstruct_amplitude(
    real_sq: &BeamImage,
    imag_sq: &BeamImage,
    signs: Option<&SignPlanes>,
) -> Result<Reconstruction> {
    if real_sq.shape() != imag_sq.shape() {
        return Err(Error::domain("real and imaginary images differ in shape"));
    }
    if let Some(sp) = signs {
        if sp.real.shape() != real_sq.shape() || sp.imag.shape() != real_sq.shape() {
            return Err(Error::domain("sign planes differ in shape"));
        }
    }
    let mut clamped = 0;
    let mut root = |v: f64| {
        if v < 0.0 {
            clamped += 1;
            0.0
        } else {
            v.sqrt()
        }
    };
    let values = (0..real_sq.len())
        .map(|i| {
            let (sr, si) = signs.map_or((1.0, 1.0), |sp| (sp.real.values[i], sp.imag.values[i]));
            let re = sr * root(real_sq.values[i]);
            let im = si * root(imag_sq.values[i]);
            Complex64::new(re, im)
        })
        .collect();
    Ok(Reconstruction { values, clamped })
}

/// LS inverse of `r = sqrt(p) x s + n` for the scalar `x = h^H w`.
pub fn ls_effective_channel(r: Complex64, s: Complex64, p: f64) -> Result<Complex64> {
    if !(p > 0.0) {
        return Err(Error::domain(format!("sweep power must be positive, got {p}")));
    }
    check_symbol(s)?;
    // pseudo-inverse of a scalar: conj(s) / |s|^2
    let s_pinv = s.conj() / s.norm_sqr();
    Ok(s_pinv * r / p.sqrt())
}

/// `(1/Q) sum_i ||pred_i - truth_i||^2`.
pub fn mse<A: AsRef<[f64]>, B: AsRef<[f64]>>(predicted: &[A], truth: &[B]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::domain("mse needs a batch of at least one image"));
    }
    if predicted.len() != truth.len() {
        return Err(Error::domain(format!(
            "batch sizes differ: {} vs {}",
            predicted.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in predicted.iter().zip(truth) {
        let (p, t) = (p.as_ref(), t.as_ref());
        if p.len() != t.len() {
            return Err(Error::domain("image shapes differ"));
        }
        total += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / predicted.len() as f64)
}

//! High-resolution beam-image predictors.
//!
//! Analytic baselines look only at the most recent low-resolution frame of
//! an episode. Learned predictors run out of process and are consumed through
//! a predictions file ([`Predictor::External`]).

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::interchange::{read_predictions, PredictionTable};
use crate::sweep::{BeamImage, Episode, ImagePair, SignPlanes};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Bilinear,
    /// Catmull-Rom cubic convolution (`a = -0.5`) with edge clamping.
    Bicubic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    /// Ground-truth target images.
    Oracle,
    /// Nearest-neighbour upsampling of the latest input.
    Persistence,
    Interpolation(Interpolation),
    External(Box<PredictionTable>),
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Predictor::Oracle => "oracle",
            Predictor::Persistence => "persistence",
            Predictor::Interpolation(Interpolation::Bilinear) => "bilinear",
            Predictor::Interpolation(Interpolation::Bicubic) => "bicubic",
            Predictor::External(_) => "external",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub images: ImagePair,
    /// Only the oracle knows the signs of the target frame.
    pub signs: Option<SignPlanes>,
}

impl Predictor {
    /// Parse a predictor name; `external` needs a predictions file.
    pub fn from_name(name: &str, predictions: Option<&Path>) -> Result<Self> {
        Ok(match name {
            "oracle" => Predictor::Oracle,
            "persistence" => Predictor::Persistence,
            "bilinear" => Predictor::Interpolation(Interpolation::Bilinear),
            "bicubic" => Predictor::Interpolation(Interpolation::Bicubic),
            "external" => {
                let path = predictions.ok_or_else(|| Error::Config("external predictor needs a predictions file".into()))?;
                Predictor::External(Box::new(read_predictions(path)?))
            }
            other => return Err(Error::Config(format!("unknown predictor '{other}'"))),
        })
    }

    /// Predict the frame `t + 1` high-resolution images of `episode` on a
    /// grid of shape `high`.
    pub fn predict(&self, episode: &Episode, high: (usize, usize)) -> Result<Prediction> {
        match self {
            Predictor::Oracle => Ok(Prediction {
                images: episode.target.clone(),
                signs: Some(episode.target_signs.clone()),
            }),
            Predictor::Persistence => {
                let last = episode.latest_input();
                Ok(Prediction {
                    images: ImagePair {
                        real_sq: upsample_nearest(&last.real_sq, high)?,
                        imag_sq: upsample_nearest(&last.imag_sq, high)?,
                    },
                    signs: None,
                })
            }
            Predictor::Interpolation(kind) => {
                let last = episode.latest_input();
                Ok(Prediction {
                    images: ImagePair {
                        real_sq: upsample(&last.real_sq, high, *kind)?,
                        imag_sq: upsample(&last.imag_sq, high, *kind)?,
                    },
                    signs: None,
                })
            }
            Predictor::External(table) => {
                table.check_geometry(high)?;
                Ok(Prediction {
                    images: table.get(episode.ue, episode.target_frame())?.clone(),
                    signs: None,
                })
            }
        }
    }
}

fn scale_factors(low: &BeamImage, high: (usize, usize)) -> Result<(usize, usize)> {
    if low.rows == 0 || low.cols == 0 || !high.0.is_multiple_of(low.rows) || !high.1.is_multiple_of(low.cols) {
        return Err(Error::domain(format!(
            "cannot upsample {}x{} onto {}x{}",
            low.rows, low.cols, high.0, high.1
        )));
    }
    Ok((high.0 / low.rows, high.1 / low.cols))
}

/// `high(i, j) = low(i / f, j / f)`; the low sample sits on high index `f * a`.
pub fn upsample_nearest(low: &BeamImage, high: (usize, usize)) -> Result<BeamImage> {
    let (fr, fc) = scale_factors(low, high)?;
    let mut values = Vec::with_capacity(high.0 * high.1);
    for i in 0..high.0 {
        for j in 0..high.1 {
            values.push(low.get(i / fr, j / fc));
        }
    }
    BeamImage::new(high.0, high.1, low.kind, values)
}

/// Catmull-Rom weights for taps at offsets -1, 0, 1, 2 and fraction `t`.
pub fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

fn linear_weights(t: f64) -> [f64; 4] {
    [0.0, 1.0 - t, t, 0.0]
}

/// Separable interpolation on the beam-index lattice. High pixel `i` maps to
/// low coordinate `i / f`; out-of-range taps clamp to the edge. Results are
/// clamped at zero since the images hold squared magnitudes.
pub fn upsample(low: &BeamImage, high: (usize, usize), kind: Interpolation) -> Result<BeamImage> {
    let (fr, fc) = scale_factors(low, high)?;
    let weights = |t: f64| match kind {
        Interpolation::Bilinear => linear_weights(t),
        Interpolation::Bicubic => catmull_rom_weights(t),
    };
    let clamp = |x: isize, n: usize| x.clamp(0, n as isize - 1) as usize;
    let mut values = Vec::with_capacity(high.0 * high.1);
    for i in 0..high.0 {
        let (r0, tr) = ((i / fr) as isize, (i % fr) as f64 / fr as f64);
        let wr = weights(tr);
        for j in 0..high.1 {
            let (c0, tc) = ((j / fc) as isize, (j % fc) as f64 / fc as f64);
            let wc = weights(tc);
            let mut acc = 0.0;
            for (dr, w_r) in wr.iter().enumerate() {
                if *w_r == 0.0 {
                    continue;
                }
                let r = clamp(r0 + dr as isize - 1, low.rows);
                for (dc, w_c) in wc.iter().enumerate() {
                    if *w_c == 0.0 {
                        continue;
                    }
                    let c = clamp(c0 + dc as isize - 1, low.cols);
                    acc += w_r * w_c * low.get(r, c);
                }
            }
            values.push(acc.max(0.0));
        }
    }
    BeamImage::new(high.0, high.1, low.kind, values)
}

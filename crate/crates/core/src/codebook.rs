//! DFT beam codebook for a UPA.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::{kron, UpaGeometry};
use crate::error::{Error, Result};

/// Tolerance on `|s| = 1` for training symbols.
pub const SYMBOL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    geometry: UpaGeometry,
    /// Beam grid shape `(rows, cols)`; equals the array shape for a full codebook.
    grid: (usize, usize),
    beams: Vec<Vec<Complex64>>,
}

/// Column `a` of the size-`n` unitary DFT matrix: `exp(-j 2 pi i a / n) / sqrt(n)`.
pub fn dft_column(n: usize, a: usize) -> Vec<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|i| {
            // reduce i*a mod n before scaling so large products stay exact
            let k = (i * a) % n;
            Complex64::from_polar(scale, -2.0 * PI * k as f64 / n as f64)
        })
        .collect()
}

impl Codebook {
    /// Full DFT codebook; beam `(a, b)` sits at index `a * m_h + b`.
    pub fn dft(geometry: UpaGeometry) -> Self {
        let (mv, mh) = (geometry.vertical(), geometry.horizontal());
        let mut beams = Vec::with_capacity(mv * mh);
        for a in 0..mv {
            let wv = dft_column(mv, a);
            for b in 0..mh {
                beams.push(kron(&wv, &dft_column(mh, b)));
            }
        }
        Codebook {
            geometry,
            grid: (mv, mh),
            beams,
        }
    }

    /// Wide beams: an `rows x cols` DFT codebook on the sub-array made of
    /// every `(m_v/rows)`-th vertical and `(m_h/cols)`-th horizontal element.
    pub fn wide_beam(geometry: UpaGeometry, rows: usize, cols: usize) -> Result<Self> {
        let (mv, mh) = (geometry.vertical(), geometry.horizontal());
        if rows == 0 || cols == 0 || mv % rows != 0 || mh % cols != 0 {
            return Err(Error::domain(format!(
                "wide-beam grid {rows}x{cols} does not divide array {mv}x{mh}"
            )));
        }
        let (fv, fh) = (mv / rows, mh / cols);
        let mut beams = Vec::with_capacity(rows * cols);
        for a in 0..rows {
            let wv = dft_column(rows, a);
            for b in 0..cols {
                let wh = dft_column(cols, b);
                let mut w = vec![Complex64::new(0.0, 0.0); mv * mh];
                for (i, x) in wv.iter().enumerate() {
                    for (j, y) in wh.iter().enumerate() {
                        w[(i * fv) * mh + j * fh] = x * y;
                    }
                }
                beams.push(w);
            }
        }
        Ok(Codebook {
            geometry,
            grid: (rows, cols),
            beams,
        })
    }

    pub fn geometry(&self) -> &UpaGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn beam(&self, index: usize) -> &[Complex64] {
        &self.beams[index]
    }

    pub fn beams(&self) -> &[Vec<Complex64>] {
        &self.beams
    }

    /// Row-major flat index of grid position `(a, b)`.
    pub fn index_of(&self, a: usize, b: usize) -> usize {
        a * self.grid.1 + b
    }
}

/// `h^H w`.
pub fn inner(h: &[Complex64], w: &[Complex64]) -> Result<Complex64> {
    if h.len() != w.len() {
        return Err(Error::domain(format!(
            "dimension mismatch: channel {} vs beam {}",
            h.len(),
            w.len()
        )));
    }
    Ok(h.iter().zip(w).map(|(a, b)| a.conj() * b).sum())
}

/// `|h^H w|^2`.
pub fn beam_gain(h: &[Complex64], w: &[Complex64]) -> Result<f64> {
    inner(h, w).map(|x| x.norm_sqr())
}

/// `sqrt(p) (h^H w) s + noise`. Interference from co-scheduled beams is
/// added by the caller.
pub fn received_sample(
    h: &[Complex64],
    w: &[Complex64],
    p: f64,
    s: Complex64,
    noise: Complex64,
) -> Result<Complex64> {
    if !(p >= 0.0) {
        return Err(Error::domain(format!("transmit power must be nonnegative, got {p}")));
    }
    check_symbol(s)?;
    Ok(p.sqrt() * inner(h, w)? * s + noise)
}

pub(crate) fn check_symbol(s: Complex64) -> Result<()> {
    if (s.norm() - 1.0).abs() > SYMBOL_TOLERANCE {
        return Err(Error::domain(format!("training symbol must have unit modulus, got |s| = {}", s.norm())));
    }
    Ok(())
}

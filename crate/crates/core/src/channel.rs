//! Geometric narrowband channel for a half-wavelength UPA at the base station
//! and single-antenna UEs.
//!
//! Angle convention (BS at the origin of its local frame, array in the y-z
//! plane, broadside along +x):
//!
//! ```text
//!            z (vertical array axis)
//!            |
//!            |  elevation = angle from +z
//!            | /
//!            |/______ y (horizontal array axis)
//!           /
//!          /  azimuth = angle from +x in the x-y plane
//!         x (broadside)
//! ```
//!
//! With this frame the vertical element phase is `pi n cos(elevation)` and
//! the horizontal element phase is `pi n sin(elevation) sin(azimuth)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpaGeometry {
    m_v: usize,
    m_h: usize,
    wavelength: f64,
}

impl UpaGeometry {
    pub fn new(m_v: usize, m_h: usize, wavelength: f64) -> Result<Self> {
        if m_v == 0 || m_h == 0 {
            return Err(Error::domain(format!("array must be at least 1x1, got {m_v}x{m_h}")));
        }
        if !(wavelength > 0.0) || !wavelength.is_finite() {
            return Err(Error::domain(format!("wavelength must be positive, got {wavelength}")));
        }
        Ok(UpaGeometry { m_v, m_h, wavelength })
    }

    pub fn from_frequency(m_v: usize, m_h: usize, carrier_hz: f64) -> Result<Self> {
        Self::new(m_v, m_h, crate::config::SPEED_OF_LIGHT / carrier_hz)
    }

    pub fn vertical(&self) -> usize {
        self.m_v
    }

    pub fn horizontal(&self) -> usize {
        self.m_h
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Total element count `M_tx = m_v * m_h`.
    pub fn antennas(&self) -> usize {
        self.m_v * self.m_h
    }
}

/// One propagation path as seen from the BS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub azimuth: f64,
    pub elevation: f64,
    /// Total travelled distance in meters.
    pub distance: f64,
    /// Linear amplitude factor (1 for line of sight).
    pub reflection_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub ue: usize,
    pub frame: usize,
    pub coeffs: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    pub frame_interval: f64,
    /// `positions[frame][ue]`
    pub positions: Vec<Vec<Point>>,
    pub scatterers: Vec<Point>,
    /// Index of the UE whose cluster each scatterer was drawn around.
    pub scatterer_owner: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: UpaGeometry,
    /// `channels[frame][ue]`
    pub channels: Vec<Vec<ChannelRealization>>,
    pub trace: MobilityTrace,
}

impl Scenario {
    pub fn frames(&self) -> usize {
        self.channels.len()
    }

    pub fn ues(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }
}

pub fn steering_vertical(elevation: f64, m_v: usize) -> Vec<Complex64> {
    let c = elevation.cos();
    (0..m_v)
        .map(|n| Complex64::from_polar(1.0, -PI * n as f64 * c))
        .collect()
}

pub fn steering_horizontal(azimuth: f64, elevation: f64, m_h: usize) -> Vec<Complex64> {
    let s = elevation.sin() * azimuth.sin();
    (0..m_h)
        .map(|n| Complex64::from_polar(1.0, -PI * n as f64 * s))
        .collect()
}

/// Kronecker product `a (x) b`; entry `i * b.len() + j` is `a[i] * b[j]`.
pub fn kron(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        out.extend(b.iter().map(|y| x * y));
    }
    out
}

/// Full UPA steering vector, vertical index major.
pub fn steering(azimuth: f64, elevation: f64, geometry: &UpaGeometry) -> Vec<Complex64> {
    kron(
        &steering_vertical(elevation, geometry.vertical()),
        &steering_horizontal(azimuth, elevation, geometry.horizontal()),
    )
}

/// `sqrt(M_tx) * lambda * g / (4 pi d) * exp(-j 2 pi d / lambda)`.
pub fn path_gain(path: &PathComponent, geometry: &UpaGeometry) -> Result<Complex64> {
    path_gain_with(path, geometry, true)
}

/// As [`path_gain`]; `array_factor = false` drops the `sqrt(M_tx)` term.
pub fn path_gain_with(path: &PathComponent, geometry: &UpaGeometry, array_factor: bool) -> Result<Complex64> {
    if !(path.distance > 0.0) || !path.distance.is_finite() {
        return Err(Error::domain(format!("path distance must be positive, got {}", path.distance)));
    }
    let lambda = geometry.wavelength();
    let af = if array_factor {
        (geometry.antennas() as f64).sqrt()
    } else {
        1.0
    };
    let magnitude = af * lambda * path.reflection_gain / (4.0 * PI * path.distance);
    // Reduce to the fractional cycle first; d/lambda is in the thousands.
    let cycles = path.distance / lambda;
    let phase = -2.0 * PI * (cycles - cycles.floor());
    Ok(Complex64::from_polar(magnitude, phase))
}

/// `h = sqrt(M_tx / L_p) * sum_l alpha_l a(az_l, el_l)`, summed in path order.
pub fn channel_vector(paths: &[PathComponent], geometry: &UpaGeometry) -> Result<Vec<Complex64>> {
    channel_vector_with(paths, geometry, true)
}

pub fn channel_vector_with(
    paths: &[PathComponent],
    geometry: &UpaGeometry,
    array_factor: bool,
) -> Result<Vec<Complex64>> {
    if paths.is_empty() {
        return Err(Error::domain("channel needs at least one path"));
    }
    let gains = paths
        .iter()
        .map(|p| path_gain_with(p, geometry, array_factor))
        .collect::<Result<Vec<_>>>()?;
    Ok(channel_from_gains(paths, &gains, geometry))
}

/// Channel for explicit per-path complex gains. Used when the gains do not
/// come from the free-space formula (tests, linearity checks).
pub fn channel_from_gains(paths: &[PathComponent], gains: &[Complex64], geometry: &UpaGeometry) -> Vec<Complex64> {
    assert_eq!(paths.len(), gains.len());
    let n = geometry.antennas();
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for (path, alpha) in paths.iter().zip(gains) {
        let a = steering(path.azimuth, path.elevation, geometry);
        for (hi, ai) in h.iter_mut().zip(&a) {
            *hi += alpha * ai;
        }
    }
    let scale = (n as f64 / paths.len() as f64).sqrt();
    for hi in &mut h {
        *hi *= scale;
    }
    h
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: &Point) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Departure angles `(azimuth, elevation)` of the ray from `from` to `to`.
pub fn departure_angles(from: &Point, to: &Point) -> (f64, f64) {
    let v = sub(to, from);
    let r = norm(&v);
    let elevation = (v[2] / r).clamp(-1.0, 1.0).acos();
    let azimuth = v[1].atan2(v[0]);
    (azimuth, elevation)
}

/// Line-of-sight path plus one single-bounce path per scatterer.
/// `scatterer_scale[j]` multiplies the reflection gain of scatterer `j`.
pub fn paths_for_position(
    bs: &Point,
    ue: &Point,
    scatterers: &[Point],
    scatterer_scale: &[f64],
    reflection_gain: f64,
) -> Result<Vec<PathComponent>> {
    let los = norm(&sub(ue, bs));
    if !(los > 0.0) {
        return Err(Error::domain("UE placed at the BS position"));
    }
    let (az, el) = departure_angles(bs, ue);
    let mut paths = Vec::with_capacity(1 + scatterers.len());
    paths.push(PathComponent {
        azimuth: az,
        elevation: el,
        distance: los,
        reflection_gain: 1.0,
    });
    for (s, scale) in scatterers.iter().zip(scatterer_scale) {
        let d1 = norm(&sub(s, bs));
        let d2 = norm(&sub(ue, s));
        if !(d1 > 0.0) {
            return Err(Error::domain("scatterer placed at the BS position"));
        }
        let (az, el) = departure_angles(bs, s);
        paths.push(PathComponent {
            azimuth: az,
            elevation: el,
            distance: d1 + d2,
            reflection_gain: reflection_gain * scale,
        });
    }
    Ok(paths)
}

/// Horizontal sector the UEs move in, as seen from the BS.
const MAX_SECTOR_AZIMUTH: f64 = PI / 3.0;

fn in_cell(p: &Point, cfg: &ScenarioConfig) -> bool {
    let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
    let az = p[1].atan2(p[0]);
    r >= cfg.min_distance_m && r <= cfg.cell_radius_m && az.abs() <= MAX_SECTOR_AZIMUTH
}

fn random_cell_point(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig) -> Point {
    let r = rng.random_range(cfg.min_distance_m..=cfg.cell_radius_m);
    let az = rng.random_range(-MAX_SECTOR_AZIMUTH..=MAX_SECTOR_AZIMUTH);
    [r * az.cos(), r * az.sin(), cfg.ue_height_m]
}

/// Deterministic scenario: scatterer clusters around each UE's starting
/// point, a bounded 2-D random walk per UE, and one channel per (frame, UE).
pub fn synthesize_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let geometry = cfg.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bs: Point = [0.0, 0.0, cfg.bs_height_m];
    let k = cfg.ue_count;

    let start: Vec<Point> = (0..k).map(|_| random_cell_point(&mut rng, cfg)).collect();

    let n_scat = cfg.path_count - 1;
    let mut scatterers = Vec::with_capacity(n_scat);
    let mut owner = Vec::with_capacity(n_scat);
    for j in 0..n_scat {
        let o = j % k;
        let c = start[o];
        let radius = rng.random_range(2.0..15.0);
        let theta = rng.random_range(0.0..2.0 * PI);
        let z = rng.random_range(0.0..2.0 * cfg.bs_height_m);
        // keep scatterers in front of the array
        let x = (c[0] + radius * theta.cos()).max(1.0);
        scatterers.push([x, c[1] + radius * theta.sin(), z]);
        owner.push(o);
    }

    let step = cfg.ue_speed_mps * cfg.frame_interval_s;
    let mut positions = Vec::with_capacity(cfg.frames);
    let mut current = start;
    for f in 0..cfg.frames {
        if f > 0 && step > 0.0 {
            for p in current.iter_mut() {
                // Bounded walk: redraw the heading if the step leaves the cell.
                for _ in 0..16 {
                    let theta = rng.random_range(0.0..2.0 * PI);
                    let cand = [p[0] + step * theta.cos(), p[1] + step * theta.sin(), p[2]];
                    if in_cell(&cand, cfg) {
                        *p = cand;
                        break;
                    }
                }
            }
        }
        positions.push(current.clone());
    }

    let g = cfg.reflection_gain();
    let cross = cfg.cross_path_scale();
    let mut channels = Vec::with_capacity(cfg.frames);
    for (f, frame_pos) in positions.iter().enumerate() {
        let mut per_ue = Vec::with_capacity(k);
        for (u, pos) in frame_pos.iter().enumerate() {
            let scale: Vec<f64> = owner.iter().map(|&o| if o == u { 1.0 } else { cross }).collect();
            let paths = paths_for_position(&bs, pos, &scatterers, &scale, g)?;
            let coeffs = channel_vector_with(&paths, &geometry, cfg.array_factor_in_path_gain)?;
            per_ue.push(ChannelRealization { ue: u, frame: f, coeffs });
        }
        channels.push(per_ue);
    }

    Ok(Scenario {
        geometry,
        channels,
        trace: MobilityTrace {
            frame_interval: cfg.frame_interval_s,
            positions,
            scatterers,
            scatterer_owner: owner,
        },
    })
}

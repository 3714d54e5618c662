//! Interchange files shared with external predictors.
//!
//! A file is one line of JSON (the header, terminated by `\n`) followed by a
//! raw payload of little-endian `f64` values. Records are laid out
//! ue-major, then frame-major, then image-kind-major, with row-major pixels
//! inside each image. See `docs/interchange.md` for the byte layout.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sweep::{build_episodes, BeamImage, Episode, FrameRecord, ImageKind, ImagePair, SignPlanes};

pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE: &str = "f64le";
pub const BEAM_ORDER: &str = "row-major";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Dataset,
    Predictions,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub version: u32,
    pub kind: FileKind,
    pub K: usize,
    pub M_v: usize,
    pub M_h: usize,
    pub m_v: usize,
    pub m_h: usize,
    pub s: usize,
    pub frames: usize,
    pub seed: u64,
    pub dtype: String,
    pub beam_order: String,
}

/// Shape parameters shared by datasets and prediction files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub ues: usize,
    pub high: (usize, usize),
    pub low: (usize, usize),
    pub window: usize,
    pub frames: usize,
    pub seed: u64,
}

impl Layout {
    fn header(&self, kind: FileKind) -> Header {
        Header {
            version: FORMAT_VERSION,
            kind,
            K: self.ues,
            M_v: self.high.0,
            M_h: self.high.1,
            m_v: self.low.0,
            m_h: self.low.1,
            s: self.window,
            frames: self.frames,
            seed: self.seed,
            dtype: DTYPE.to_string(),
            beam_order: BEAM_ORDER.to_string(),
        }
    }

    fn from_header(h: &Header) -> Self {
        Layout {
            ues: h.K,
            high: (h.M_v, h.M_h),
            low: (h.m_v, h.m_h),
            window: h.s,
            frames: h.frames,
            seed: h.seed,
        }
    }

    fn high_pixels(&self) -> usize {
        self.high.0 * self.high.1
    }

    fn low_pixels(&self) -> usize {
        self.low.0 * self.low.1
    }

    /// f64 values per dataset (ue, frame) record.
    pub fn dataset_record_len(&self) -> usize {
        4 * self.high_pixels() + 2 * self.low_pixels()
    }

    /// Frames carrying predictions: the targets `s ..frames`.
    pub fn predicted_frames(&self) -> std::ops::Range<usize> {
        self.window.min(self.frames)..self.frames
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: Layout,
    /// `records[ue][frame]`
    pub records: Vec<Vec<FrameRecord>>,
}

impl Dataset {
    pub fn new(layout: Layout, records: Vec<Vec<FrameRecord>>) -> Result<Self> {
        if records.len() != layout.ues || records.iter().any(|r| r.len() != layout.frames) {
            return Err(Error::domain("record table does not match the declared UE/frame counts"));
        }
        for rec in records.iter().flatten() {
            let hi = (rec.high.real_sq.shape(), rec.high.imag_sq.shape(), rec.signs.real.shape(), rec.signs.imag.shape());
            let lo = (rec.low.real_sq.shape(), rec.low.imag_sq.shape());
            if hi != (layout.high, layout.high, layout.high, layout.high) || lo != (layout.low, layout.low) {
                return Err(Error::domain("image shape does not match the declared geometry"));
            }
        }
        Ok(Dataset { layout, records })
    }

    pub fn episodes(&self) -> Result<Vec<Episode>> {
        let mut out = Vec::new();
        for (ue, recs) in self.records.iter().enumerate() {
            out.extend(build_episodes(ue, recs, self.layout.window)?);
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = header_line(&self.layout.header(FileKind::Dataset));
        buf.reserve(8 * self.layout.ues * self.layout.frames * self.layout.dataset_record_len());
        for rec in self.records.iter().flatten() {
            for img in [
                &rec.high.real_sq,
                &rec.high.imag_sq,
                &rec.signs.real,
                &rec.signs.imag,
                &rec.low.real_sq,
                &rec.low.imag_sq,
            ] {
                push_values(&mut buf, &img.values);
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, mut cur) = parse_header(bytes, FileKind::Dataset)?;
        let layout = Layout::from_header(&header);
        let expected = layout.ues * layout.frames * layout.dataset_record_len();
        cur.expect_len(expected)?;
        let (hp, lp) = (layout.high, layout.low);
        let mut records = Vec::with_capacity(layout.ues);
        for _ in 0..layout.ues {
            let mut per_ue = Vec::with_capacity(layout.frames);
            for _ in 0..layout.frames {
                let high_re = cur.image(hp, ImageKind::RealSq)?;
                let high_im = cur.image(hp, ImageKind::ImagSq)?;
                let sign_re = cur.sign_image(hp, ImageKind::SignReal)?;
                let sign_im = cur.sign_image(hp, ImageKind::SignImag)?;
                let low_re = cur.image(lp, ImageKind::RealSq)?;
                let low_im = cur.image(lp, ImageKind::ImagSq)?;
                per_ue.push(FrameRecord {
                    high: ImagePair {
                        real_sq: high_re,
                        imag_sq: high_im,
                    },
                    signs: SignPlanes {
                        real: sign_re,
                        imag: sign_im,
                    },
                    low: ImagePair {
                        real_sq: low_re,
                        imag_sq: low_im,
                    },
                });
            }
            records.push(per_ue);
        }
        Ok(Dataset { layout, records })
    }
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &dataset.to_bytes())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::from_bytes(&fs::read(path)?)
}

/// High-resolution predictions keyed by `(ue, frame)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub layout: Layout,
    pub images: BTreeMap<(usize, usize), ImagePair>,
}

impl PredictionTable {
    pub fn get(&self, ue: usize, frame: usize) -> Result<&ImagePair> {
        self.images
            .get(&(ue, frame))
            .ok_or(Error::MissingPrediction { ue, frame })
    }

    /// Keys from `wanted` that have no prediction.
    pub fn missing<'a>(&self, wanted: impl IntoIterator<Item = &'a (usize, usize)>) -> Vec<(usize, usize)> {
        wanted
            .into_iter()
            .filter(|k| !self.images.contains_key(k))
            .copied()
            .collect()
    }

    /// Reject tables whose high-resolution grid differs from `high`.
    pub fn check_geometry(&self, high: (usize, usize)) -> Result<()> {
        if self.layout.high != high {
            return Err(Error::domain(format!(
                "predictions are {}x{}, expected {}x{}",
                self.layout.high.0, self.layout.high.1, high.0, high.1
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let layout = self.layout;
        let mut buf = header_line(&layout.header(FileKind::Predictions));
        for ue in 0..layout.ues {
            for frame in layout.predicted_frames() {
                let pair = self.get(ue, frame)?;
                if pair.real_sq.shape() != layout.high || pair.imag_sq.shape() != layout.high {
                    return Err(Error::domain(format!("prediction ({ue}, {frame}) has the wrong shape")));
                }
                push_values(&mut buf, &pair.real_sq.values);
                push_values(&mut buf, &pair.imag_sq.values);
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, mut cur) = parse_header(bytes, FileKind::Predictions)?;
        let layout = Layout::from_header(&header);
        let frames = layout.predicted_frames();
        cur.expect_len(layout.ues * frames.len() * 2 * layout.high_pixels())?;
        let mut images = BTreeMap::new();
        for ue in 0..layout.ues {
            for frame in frames.clone() {
                let real_sq = cur.finite_image(layout.high, ImageKind::RealSq)?;
                let imag_sq = cur.finite_image(layout.high, ImageKind::ImagSq)?;
                images.insert((ue, frame), ImagePair { real_sq, imag_sq });
            }
        }
        Ok(PredictionTable { layout, images })
    }
}

pub fn write_predictions(table: &PredictionTable, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &table.to_bytes()?)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<PredictionTable> {
    PredictionTable::from_bytes(&fs::read(path)?)
}

/// Write to a sibling temp file and rename, so a failed write leaves nothing behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    let res = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

fn header_line(h: &Header) -> Vec<u8> {
    let mut buf = serde_json::to_vec(h).expect("header serializes");
    buf.push(b'\n');
    buf
}

fn push_values(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn parse_header(bytes: &[u8], want: FileKind) -> Result<(Header, Cursor<'_>)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(bytes.len() as u64, "missing header line terminator"))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::format(e.column().saturating_sub(1) as u64, format!("malformed header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::format(0, format!("unsupported version {}", header.version)));
    }
    if header.kind != want {
        return Err(Error::format(0, format!("expected a {want:?} file, found {:?}", header.kind)));
    }
    if header.dtype != DTYPE || header.beam_order != BEAM_ORDER {
        return Err(Error::format(0, "unsupported dtype or beam order"));
    }
    if header.M_v == 0 || header.M_h == 0 || header.m_v == 0 || header.m_h == 0 {
        return Err(Error::format(0, "zero-sized beam grid"));
    }
    if header.m_v > header.M_v || header.m_h > header.M_h {
        return Err(Error::format(0, "low-resolution grid larger than high-resolution grid"));
    }
    Ok((
        header,
        Cursor {
            bytes,
            pos: nl + 1,
        },
    ))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn expect_len(&self, values: usize) -> Result<()> {
        let have = self.bytes.len() - self.pos;
        let want = values * 8;
        if have < want {
            return Err(Error::format(
                self.bytes.len() as u64,
                format!("truncated payload: {have} bytes, header implies {want}"),
            ));
        }
        if have > want {
            return Err(Error::format(
                (self.pos + want) as u64,
                format!("payload has {} trailing bytes", have - want),
            ));
        }
        Ok(())
    }

    fn value(&mut self) -> (u64, f64) {
        let off = self.pos;
        let mut b = [0u8; 8];
        b.copy_from_slice(&self.bytes[off..off + 8]);
        self.pos += 8;
        (off as u64, f64::from_le_bytes(b))
    }

    fn image(&mut self, shape: (usize, usize), kind: ImageKind) -> Result<BeamImage> {
        let values = (0..shape.0 * shape.1).map(|_| self.value().1).collect();
        BeamImage::new(shape.0, shape.1, kind, values)
    }

    fn finite_image(&mut self, shape: (usize, usize), kind: ImageKind) -> Result<BeamImage> {
        let mut values = Vec::with_capacity(shape.0 * shape.1);
        for _ in 0..shape.0 * shape.1 {
            let (off, v) = self.value();
            if !v.is_finite() {
                return Err(Error::format(off, format!("non-finite value {v} in prediction")));
            }
            values.push(v);
        }
        BeamImage::new(shape.0, shape.1, kind, values)
    }

    fn sign_image(&mut self, shape: (usize, usize), kind: ImageKind) -> Result<BeamImage> {
        let mut values = Vec::with_capacity(shape.0 * shape.1);
        for _ in 0..shape.0 * shape.1 {
            let (off, v) = self.value();
            if v != 1.0 && v != -1.0 {
                return Err(Error::format(off, format!("sign plane entry {v} is not +-1")));
            }
            values.push(v);
        }
        BeamImage::new(shape.0, shape.1, kind, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::synthesize_scenario;
    use crate::config::ScenarioConfig;
    use crate::sweep::sweep_scenario;
    use proptest::prelude::*;

    fn small_dataset(seed: u64) -> Dataset {
        let cfg = ScenarioConfig {
            ue_count: 2,
            frames: 5,
            window: 2,
            ..Default::default()
        };
        let sc = synthesize_scenario(&cfg, seed).unwrap();
        let recs = sweep_scenario(&cfg, &sc, seed).unwrap();
        let layout = Layout {
            ues: 2,
            high: (8, 8),
            low: (4, 4),
            window: 2,
            frames: 5,
            seed,
        };
        Dataset::new(layout, recs).unwrap()
    }

    fn predictions_from(ds: &Dataset) -> PredictionTable {
        let mut images = BTreeMap::new();
        for (ue, recs) in ds.records.iter().enumerate() {
            for f in ds.layout.predicted_frames() {
                images.insert((ue, f), recs[f].high.clone());
            }
        }
        PredictionTable {
            layout: ds.layout,
            images,
        }
    }

    #[test]
    fn header_echoes_geometry() {
        let bytes = small_dataset(1).to_bytes();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let v: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        assert_eq!(v["kind"], "dataset");
        assert_eq!((v["M_v"].as_u64(), v["M_h"].as_u64()), (Some(8), Some(8)));
        assert_eq!((v["m_v"].as_u64(), v["m_h"].as_u64()), (Some(4), Some(4)));
        assert_eq!(v["dtype"], "f64le");
        assert_eq!(v["beam_order"], "row-major");
        let payload = bytes.len() - nl - 1;
        assert_eq!(payload, 8 * 2 * 5 * (4 * 64 + 2 * 16));
    }

    #[test]
    fn empty_dataset_is_valid() {
        let layout = Layout {
            ues: 0,
            high: (8, 8),
            low: (4, 4),
            window: 3,
            frames: 30,
            seed: 0,
        };
        let ds = Dataset::new(layout, vec![]).unwrap();
        let back = Dataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back, ds);
        assert!(back.episodes().unwrap().is_empty());
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let mut bytes = small_dataset(2).to_bytes();
        let full = bytes.len();
        bytes.truncate(full - 3);
        match Dataset::from_bytes(&bytes) {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, (full - 3) as u64);
                assert!(message.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = small_dataset(2).to_bytes();
        bytes.extend_from_slice(&[0u8; 8]);
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn malformed_header_rejected() {
        assert!(matches!(Dataset::from_bytes(b"{\"version\":1,"), Err(Error::Format { .. })));
        assert!(matches!(Dataset::from_bytes(b"not json\n"), Err(Error::Format { .. })));
        let bytes = small_dataset(2).to_bytes();
        // a predictions reader must refuse a dataset file
        assert!(matches!(PredictionTable::from_bytes(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn bad_sign_value_rejected() {
        let ds = small_dataset(3);
        let mut bytes = ds.to_bytes();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        // first value of the first sign plane
        let off = nl + 1 + 8 * 2 * 64;
        bytes[off..off + 8].copy_from_slice(&0.5f64.to_le_bytes());
        match Dataset::from_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, off as u64),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn episodes_from_dataset() {
        let ds = small_dataset(4);
        let eps = ds.episodes().unwrap();
        // (5 - 2) per UE
        assert_eq!(eps.len(), 6);
    }

    #[test]
    fn predictions_round_trip_and_lookup() {
        let ds = small_dataset(5);
        let table = predictions_from(&ds);
        let back = PredictionTable::from_bytes(&table.to_bytes().unwrap()).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.get(1, 4).unwrap(), &ds.records[1][4].high);
        assert!(matches!(back.get(1, 1), Err(Error::MissingPrediction { ue: 1, frame: 1 })));
        assert_eq!(back.missing(&[(0, 2), (0, 1), (3, 3)]), vec![(0, 1), (3, 3)]);
        back.check_geometry((8, 8)).unwrap();
        assert!(back.check_geometry((4, 4)).is_err());
    }

    #[test]
    fn nan_prediction_rejected() {
        let ds = small_dataset(6);
        let mut bytes = predictions_from(&ds).to_bytes().unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let off = nl + 1 + 8 * 5;
        bytes[off..off + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        match PredictionTable::from_bytes(&bytes) {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, off as u64);
                assert!(message.contains("non-finite"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bcd");
        let ds = small_dataset(7);
        write_dataset(&ds, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
        assert!(!path.with_extension("partial").exists());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn dataset_round_trip_bit_exact(seed in any::<u64>()) {
            let ds = small_dataset(seed);
            let bytes = ds.to_bytes();
            let back = Dataset::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back, ds);
        }
    }
}

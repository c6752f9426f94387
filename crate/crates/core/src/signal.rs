//! Waveform ingestion, segmentation, normalization, and synthetic paired
//! data with known ground truth.
//!
//! The network contract is sample-count based: every training/eval window is
//! exactly 1000 samples regardless of source rate (8 s at 125 Hz or 10 s at
//! 100 Hz both land on 1000). PPG is normalized per segment by its own
//! min/max; ABP is normalized by a fixed dataset-level mmHg scale so that
//! generated ABP can be mapped back to pressure units.

use crate::diffcore::NdArray;
use crate::error::{Error, Result};
use crate::nets::checkpoint::{read_container, write_container};
use crate::nets::SEGMENT_LEN;
use crate::rng;
use rand::Rng;
use std::io::BufRead;
use std::path::Path;

/// Fixed dataset-level ABP normalization bounds, in mmHg.
pub const DEFAULT_ABP_SCALE: (f64, f64) = (30.0, 220.0);

/// A paired raw recording. `ppg` is in arbitrary units, `abp` in mmHg.
#[derive(Debug, Clone)]
pub struct WaveformRecord {
    pub ppg: Vec<f64>,
    pub abp: Vec<f64>,
    pub sample_rate: f64,
}

impl WaveformRecord {
    pub fn new(ppg: Vec<f64>, abp: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if ppg.len() != abp.len() {
            return Err(Error::invalid(
                "WaveformRecord",
                format!("ppg has {} samples, abp {}", ppg.len(), abp.len()),
            ));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::invalid("WaveformRecord", "sample_rate must be > 0"));
        }
        Ok(WaveformRecord {
            ppg,
            abp,
            sample_rate,
        })
    }
}

/// An unnormalized aligned window cut from a record.
#[derive(Debug, Clone)]
pub struct RawSegment {
    pub ppg: Vec<f64>,
    pub abp: Vec<f64>,
    /// Sample index of the window start in the parent record.
    pub offset: usize,
}

/// An aligned, normalized (PPG, ABP) window of exactly 1000 samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPair {
    /// In [0,1], normalized per segment.
    pub ppg: Vec<f64>,
    /// In [0,1], normalized by `abp_scale` and clipped.
    pub abp: Vec<f64>,
    /// (min, max) mmHg used for the ABP mapping; inverts the normalization.
    pub abp_scale: (f64, f64),
    /// Sample index into the parent record.
    pub source_offset: usize,
}

/// Ground-truth pressures for synthetic segments.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub sbp: Vec<f64>,
    pub dbp: Vec<f64>,
    pub map: Vec<f64>,
}

/// A dataset as an [N, 2, 1000] tensor: channel 0 is PPG, channel 1 ABP,
/// both stored row-major per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTensor {
    pub n: usize,
    /// [N * 1000]
    pub ppg: Vec<f64>,
    /// [N * 1000]
    pub abp: Vec<f64>,
    pub abp_scale: (f64, f64),
    pub truth: Option<GroundTruth>,
}

impl DatasetTensor {
    pub fn ppg_segment(&self, i: usize) -> &[f64] {
        &self.ppg[i * SEGMENT_LEN..][..SEGMENT_LEN]
    }

    pub fn abp_segment(&self, i: usize) -> &[f64] {
        &self.abp[i * SEGMENT_LEN..][..SEGMENT_LEN]
    }

    pub fn to_segment_pairs(&self) -> Vec<SegmentPair> {
        (0..self.n)
            .map(|i| SegmentPair {
                ppg: self.ppg_segment(i).to_vec(),
                abp: self.abp_segment(i).to_vec(),
                abp_scale: self.abp_scale,
                source_offset: i * SEGMENT_LEN,
            })
            .collect()
    }

    pub fn from_segment_pairs(pairs: &[SegmentPair], abp_scale: (f64, f64)) -> Self {
        let n = pairs.len();
        let mut ppg = Vec::with_capacity(n * SEGMENT_LEN);
        let mut abp = Vec::with_capacity(n * SEGMENT_LEN);
        for p in pairs {
            ppg.extend_from_slice(&p.ppg);
            abp.extend_from_slice(&p.abp);
        }
        DatasetTensor {
            n,
            ppg,
            abp,
            abp_scale,
            truth: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ppg = NdArray::new(vec![self.n, SEGMENT_LEN], self.ppg.clone())?;
        let abp = NdArray::new(vec![self.n, SEGMENT_LEN], self.abp.clone())?;
        let scale = NdArray::from_vec(vec![self.abp_scale.0, self.abp_scale.1]);
        let mut tensors: Vec<(String, &NdArray)> = vec![
            ("ppg".into(), &ppg),
            ("abp".into(), &abp),
            ("abp_scale".into(), &scale),
        ];
        let truth_arrays = self.truth.as_ref().map(|t| {
            (
                NdArray::from_vec(t.sbp.clone()),
                NdArray::from_vec(t.dbp.clone()),
                NdArray::from_vec(t.map.clone()),
            )
        });
        if let Some((sbp, dbp, map)) = &truth_arrays {
            tensors.push(("truth_sbp".into(), sbp));
            tensors.push(("truth_dbp".into(), dbp));
            tensors.push(("truth_map".into(), map));
        }
        write_container(path, &tensors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let tensors = read_container(path)?;
        let mut ppg = None;
        let mut abp = None;
        let mut scale = None;
        let (mut sbp, mut dbp, mut map) = (None, None, None);
        for (name, arr) in tensors {
            match name.as_str() {
                "ppg" => ppg = Some(arr),
                "abp" => abp = Some(arr),
                "abp_scale" => scale = Some(arr),
                "truth_sbp" => sbp = Some(arr.into_data()),
                "truth_dbp" => dbp = Some(arr.into_data()),
                "truth_map" => map = Some(arr.into_data()),
                other => {
                    return Err(Error::invalid(
                        "DatasetTensor::load",
                        format!("unknown tensor {other:?}"),
                    ))
                }
            }
        }
        let ppg = ppg.ok_or_else(|| Error::invalid("DatasetTensor::load", "missing ppg"))?;
        let abp = abp.ok_or_else(|| Error::invalid("DatasetTensor::load", "missing abp"))?;
        let scale = scale.ok_or_else(|| Error::invalid("DatasetTensor::load", "missing abp_scale"))?;
        if ppg.shape() != abp.shape() || ppg.shape().len() != 2 || ppg.shape()[1] != SEGMENT_LEN {
            return Err(Error::invalid(
                "DatasetTensor::load",
                format!("bad tensor shapes ppg {:?}, abp {:?}", ppg.shape(), abp.shape()),
            ));
        }
        let n = ppg.shape()[0];
        let truth = match (sbp, dbp, map) {
            (Some(s), Some(d), Some(m)) if s.len() == n && d.len() == n && m.len() == n => {
                Some(GroundTruth { sbp: s, dbp: d, map: m })
            }
            (None, None, None) => None,
            _ => {
                return Err(Error::invalid(
                    "DatasetTensor::load",
                    "inconsistent ground-truth tensors",
                ))
            }
        };
        Ok(DatasetTensor {
            n,
            ppg: ppg.into_data(),
            abp: abp.into_data(),
            abp_scale: (scale.data()[0], scale.data()[1]),
            truth,
        })
    }
}

// ── Segmentation and normalization ───────────────────────────────────

/// Cuts non-overlapping (or hop-strided) aligned windows; the trailing
/// partial window is dropped.
pub fn segment(record: &WaveformRecord, window: usize, hop: usize) -> Result<Vec<RawSegment>> {
    if window == 0 || hop == 0 {
        return Err(Error::invalid("segment", "window and hop must be positive"));
    }
    if record.ppg.len() < window {
        return Err(Error::invalid(
            "segment",
            format!("record has {} samples, window is {window}", record.ppg.len()),
        ));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + window <= record.ppg.len() {
        out.push(RawSegment {
            ppg: record.ppg[start..start + window].to_vec(),
            abp: record.abp[start..start + window].to_vec(),
            offset: start,
        });
        start += hop;
    }
    Ok(out)
}

/// Normalizes one raw segment. PPG maps its own min/max to [0,1]; a
/// constant PPG segment is unusable. ABP maps through the fixed dataset
/// scale and clips to [0,1].
pub fn normalize_segment(raw: &RawSegment, abp_scale: (f64, f64)) -> Result<SegmentPair> {
    let (lo, hi) = abp_scale;
    if !(lo < hi) {
        return Err(Error::invalid("normalize", "abp_scale.min must be < max"));
    }
    let pmin = raw.ppg.iter().cloned().fold(f64::INFINITY, f64::min);
    let pmax = raw.ppg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(pmax > pmin) {
        return Err(Error::UnusableSegment(format!(
            "constant PPG segment at offset {}",
            raw.offset
        )));
    }
    let span = pmax - pmin;
    let ppg = raw.ppg.iter().map(|&v| (v - pmin) / span).collect();
    let abp = raw
        .abp
        .iter()
        .map(|&v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
        .collect();
    Ok(SegmentPair {
        ppg,
        abp,
        abp_scale,
        source_offset: raw.offset,
    })
}

/// Normalizes a batch, skipping unusable segments. Returns the survivors
/// and the number rejected.
pub fn normalize(raws: &[RawSegment], abp_scale: (f64, f64)) -> (Vec<SegmentPair>, usize) {
    let mut out = Vec::with_capacity(raws.len());
    let mut rejected = 0;
    for raw in raws {
        match normalize_segment(raw, abp_scale) {
            Ok(p) => out.push(p),
            Err(_) => rejected += 1,
        }
    }
    (out, rejected)
}

/// Affine inverse of the fixed ABP scaling: [0,1] back to mmHg.
pub fn denormalize_abp(values: &[f64], abp_scale: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = abp_scale;
    values.iter().map(|&v| lo + v * (hi - lo)).collect()
}

// ── Synthetic paired data ────────────────────────────────────────────

/// One synthetic beat: raised-cosine systolic upstroke from DBP to SBP,
/// then exponential diastolic decay that lands exactly back on DBP at the
/// end of the period. The upstroke fraction tracks SBP and the decay
/// sharpness tracks DBP, so the normalized pulse shape carries pressure
/// information.
struct BeatShape {
    period: f64,
    t_sys: f64,
    sbp: f64,
    dbp: f64,
    tau: f64,
    asymptote: f64,
}

impl BeatShape {
    fn new(period: f64, sbp: f64, dbp: f64) -> Self {
        let t_sys = period * (0.20 + 0.12 * (sbp - 100.0) / 60.0);
        let k = 2.0 + 2.0 * (dbp - 60.0) / 30.0;
        let tau = (period - t_sys) / k;
        let ek = (-k).exp();
        let asymptote = (dbp - sbp * ek) / (1.0 - ek);
        BeatShape {
            period,
            t_sys,
            sbp,
            dbp,
            tau,
            asymptote,
        }
    }

    fn value(&self, t: f64) -> f64 {
        let t = t.rem_euclid(self.period);
        if t < self.t_sys {
            let phase = std::f64::consts::PI * t / self.t_sys;
            self.dbp + (self.sbp - self.dbp) * 0.5 * (1.0 - phase.cos())
        } else {
            self.asymptote + (self.sbp - self.asymptote) * (-(t - self.t_sys) / self.tau).exp()
        }
    }
}

/// Synthesizes paired PPG/ABP segments with recorded ground truth.
///
/// Per segment: heart rate uniform in [60,100] bpm; DBP in [60,90] and SBP
/// in [100,160] mmHg, both tied to the same latent state as the heart rate
/// (plus independent jitter) the way exertion moves rate and pressure
/// together; PPG is the ABP pulse shape delayed 150 ms, amplitude-normalized,
/// with 2%-of-range Gaussian noise. Ground-truth MAP is [SBP + 2·DBP]/3 of
/// the drawn values.
pub fn synth_paired_dataset(n_segments: usize, seed: u64, fs: f64) -> Result<DatasetTensor> {
    if n_segments == 0 {
        return Err(Error::invalid("synth_paired_dataset", "n_segments must be ≥ 1"));
    }
    if !(fs > 0.0) {
        return Err(Error::invalid("synth_paired_dataset", "fs must be > 0"));
    }
    let mut r = rng::stream(seed, "synth-data", 0);
    let (lo, hi) = DEFAULT_ABP_SCALE;
    let mut ppg_all = Vec::with_capacity(n_segments * SEGMENT_LEN);
    let mut abp_all = Vec::with_capacity(n_segments * SEGMENT_LEN);
    let mut truth = GroundTruth {
        sbp: Vec::with_capacity(n_segments),
        dbp: Vec::with_capacity(n_segments),
        map: Vec::with_capacity(n_segments),
    };

    for _ in 0..n_segments {
        let u: f64 = r.gen();
        let v: f64 = r.gen();
        let w: f64 = r.gen();
        let hr = 60.0 + 40.0 * u;
        let dbp = 60.0 + 30.0 * (0.75 * u + 0.25 * v);
        let sbp = 100.0 + 60.0 * (0.75 * u + 0.25 * w);
        let beat = BeatShape::new(60.0 / hr, sbp, dbp);

        let mut ppg = Vec::with_capacity(SEGMENT_LEN);
        for i in 0..SEGMENT_LEN {
            let t = i as f64 / fs;
            abp_all.push(((beat.value(t) - lo) / (hi - lo)).clamp(0.0, 1.0));
            ppg.push(beat.value(t - 0.150));
        }
        // Amplitude-normalize, add noise, renormalize to [0,1].
        min_max_normalize(&mut ppg);
        for p in ppg.iter_mut() {
            *p += 0.02 * gaussian(&mut r);
        }
        min_max_normalize(&mut ppg);
        ppg_all.extend_from_slice(&ppg);

        truth.sbp.push(sbp);
        truth.dbp.push(dbp);
        truth.map.push((sbp + 2.0 * dbp) / 3.0);
    }
    Ok(DatasetTensor {
        n: n_segments,
        ppg: ppg_all,
        abp: abp_all,
        abp_scale: DEFAULT_ABP_SCALE,
        truth: Some(truth),
    })
}

fn min_max_normalize(x: &mut [f64]) {
    let mn = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = mx - mn;
    for v in x.iter_mut() {
        *v = (*v - mn) / span;
    }
}

/// Box-Muller standard normal draw.
fn gaussian(r: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - r.gen::<f64>();
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ── Record file I/O ──────────────────────────────────────────────────
//
// Plain text: first line of each record is `rate=<Hz>`, then one
// `ppg_value,abp_value` pair per line; a blank line separates records.

pub fn load_records(path: &Path) -> Result<Vec<WaveformRecord>> {
    let p = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(&p, e))?;
    let reader = std::io::BufReader::new(file);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: p.clone(),
        line,
        msg,
    };

    let mut records = Vec::new();
    let mut rate: Option<f64> = None;
    let mut ppg = Vec::new();
    let mut abp = Vec::new();

    let mut flush = |rate: &mut Option<f64>,
                     ppg: &mut Vec<f64>,
                     abp: &mut Vec<f64>,
                     line: usize|
     -> Result<Option<WaveformRecord>> {
        match rate.take() {
            Some(r) => {
                if ppg.is_empty() {
                    return Err(parse_err(line, "record has a rate but no samples".into()));
                }
                Ok(Some(WaveformRecord::new(
                    std::mem::take(ppg),
                    std::mem::take(abp),
                    r,
                )?))
            }
            None => Ok(None),
        }
    };

    let mut line_no = 0;
    for line in reader.lines() {
        line_no += 1;
        let line = line.map_err(|e| Error::io(&p, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if let Some(rec) = flush(&mut rate, &mut ppg, &mut abp, line_no)? {
                records.push(rec);
            }
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("rate=") {
            if rate.is_some() {
                return Err(parse_err(line_no, "rate line inside a record".into()));
            }
            let r: f64 = rest
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad rate {rest:?}")))?;
            if !(r > 0.0) {
                return Err(parse_err(line_no, "rate must be positive".into()));
            }
            rate = Some(r);
            continue;
        }
        if rate.is_none() {
            return Err(parse_err(line_no, "sample before any rate= header".into()));
        }
        let cols: Vec<&str> = trimmed.split(',').collect();
        if cols.len() != 2 {
            return Err(parse_err(
                line_no,
                format!("expected 2 comma-separated values, got {}", cols.len()),
            ));
        }
        let pv: f64 = cols[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad ppg value {:?}", cols[0])))?;
        let av: f64 = cols[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad abp value {:?}", cols[1])))?;
        ppg.push(pv);
        abp.push(av);
    }
    if let Some(rec) = flush(&mut rate, &mut ppg, &mut abp, line_no)? {
        records.push(rec);
    }
    if records.is_empty() {
        return Err(parse_err(line_no.max(1), "file contains no records".into()));
    }
    Ok(records)
}

/// Writes records in the `load_records` format.
pub fn save_records(path: &Path, records: &[WaveformRecord]) -> Result<()> {
    let p = path.display().to_string();
    let mut out = String::new();
    for (i, rec) in records.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("rate={}\n", rec.sample_rate));
        for (pv, av) in rec.ppg.iter().zip(rec.abp.iter()) {
            out.push_str(&format!("{pv},{av}\n"));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(&p, e))
}

/// Reads a PPG-only series for generation: `rate=<Hz>` then one value per
/// line (the first column is used if a line has a pair).
pub fn load_ppg_series(path: &Path) -> Result<(f64, Vec<f64>)> {
    let p = path.display().to_string();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(&p, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: p.clone(),
        line,
        msg,
    };
    let mut rate = None;
    let mut values = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("rate=") {
            if rate.is_some() {
                return Err(parse_err(line_no, "duplicate rate= header".into()));
            }
            rate = Some(
                rest.parse::<f64>()
                    .map_err(|_| parse_err(line_no, format!("bad rate {rest:?}")))?,
            );
            continue;
        }
        if rate.is_none() {
            return Err(parse_err(line_no, "sample before rate= header".into()));
        }
        let first = trimmed.split(',').next().unwrap().trim();
        values.push(
            first
                .parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("bad value {first:?}")))?,
        );
    }
    match rate {
        Some(r) if !values.is_empty() => Ok((r, values)),
        _ => Err(parse_err(1, "no samples found".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: usize) -> WaveformRecord {
        let ppg: Vec<f64> = (0..n).map(|i| (i as f64 * 0.05).sin()).collect();
        let abp: Vec<f64> = (0..n).map(|i| 100.0 + 20.0 * (i as f64 * 0.05).cos()).collect();
        WaveformRecord::new(ppg, abp, 125.0).unwrap()
    }

    #[test]
    fn segment_counts() {
        let r = record(10_000);
        assert_eq!(segment(&r, 1000, 1000).unwrap().len(), 10);
        let r = record(1000);
        assert_eq!(segment(&r, 1000, 1000).unwrap().len(), 1);
        let r = record(999);
        assert!(segment(&r, 1000, 1000).is_err());
    }

    #[test]
    fn segment_drops_trailing_remainder() {
        let r = record(2500);
        let segs = segment(&r, 1000, 1000).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].offset, 0);
        assert_eq!(segs[1].offset, 1000);
        // Samples 2000..2499 discarded: the last covered index is 1999.
        assert_eq!(segs[1].ppg[999], r.ppg[1999]);
    }

    #[test]
    fn normalize_maps_scale_endpoints() {
        // ABP spanning exactly the scale maps onto [0,1].
        let mut abp = vec![30.0; SEGMENT_LEN];
        abp[10] = 220.0;
        let raw = RawSegment {
            ppg: (0..SEGMENT_LEN).map(|i| i as f64).collect(),
            abp,
            offset: 0,
        };
        let p = normalize_segment(&raw, DEFAULT_ABP_SCALE).unwrap();
        assert_eq!(p.abp[0], 0.0);
        assert_eq!(p.abp[10], 1.0);
        // Constant ABP at the midpoint maps to 0.5.
        let raw = RawSegment {
            ppg: (0..SEGMENT_LEN).map(|i| i as f64).collect(),
            abp: vec![125.0; SEGMENT_LEN],
            offset: 0,
        };
        let p = normalize_segment(&raw, DEFAULT_ABP_SCALE).unwrap();
        assert!(p.abp.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn constant_ppg_rejected() {
        let raw = RawSegment {
            ppg: vec![3.0; SEGMENT_LEN],
            abp: vec![100.0; SEGMENT_LEN],
            offset: 7,
        };
        assert!(matches!(
            normalize_segment(&raw, DEFAULT_ABP_SCALE),
            Err(Error::UnusableSegment(_))
        ));
    }

    #[test]
    fn denormalize_inverts_normalize() {
        let scale = (50.0, 150.0);
        assert_eq!(denormalize_abp(&[0.0], scale)[0], 50.0);
        assert_eq!(denormalize_abp(&[1.0], scale)[0], 150.0);
        assert_eq!(denormalize_abp(&[0.5], scale)[0], 100.0);

        // Round trip within 1e-12 for in-range data.
        let r = record(1000);
        let raw = &segment(&r, 1000, 1000).unwrap()[0];
        let p = normalize_segment(raw, DEFAULT_ABP_SCALE).unwrap();
        let back = denormalize_abp(&p.abp, DEFAULT_ABP_SCALE);
        for (orig, rec) in raw.abp.iter().zip(back.iter()) {
            assert!((orig - rec).abs() < 1e-12);
        }
    }

    #[test]
    fn synth_is_deterministic_and_truth_consistent() {
        let a = synth_paired_dataset(8, 42, 100.0).unwrap();
        let b = synth_paired_dataset(8, 42, 100.0).unwrap();
        assert_eq!(a, b);
        let t = a.truth.as_ref().unwrap();
        for i in 0..a.n {
            let want = (t.sbp[i] + 2.0 * t.dbp[i]) / 3.0;
            assert_eq!(t.map[i], want);
            assert!((60.0..=90.0).contains(&t.dbp[i]));
            assert!((100.0..=160.0).contains(&t.sbp[i]));
        }
        // All stored values in [0,1].
        assert!(a.ppg.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(a.abp.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let c = synth_paired_dataset(8, 43, 100.0).unwrap();
        assert_ne!(a.ppg, c.ppg);
    }

    #[test]
    fn dataset_tensor_roundtrip() {
        let d = synth_paired_dataset(5, 7, 100.0).unwrap();
        let dir = std::env::temp_dir().join(format!("fedwave-signal-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ds.fwc");
        d.save(&path).unwrap();
        let back = DatasetTensor::load(&path).unwrap();
        assert_eq!(d, back);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn record_file_roundtrip_and_errors() {
        let dir = std::env::temp_dir().join(format!("fedwave-rec-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();

        let recs = vec![record(1200), WaveformRecord::new(vec![1.0; 40], vec![2.0; 40], 100.0).unwrap()];
        let path = dir.join("two.rec");
        save_records(&path, &recs).unwrap();
        let back = load_records(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].sample_rate, 125.0);
        assert_eq!(back[1].sample_rate, 100.0);
        assert_eq!(back[0].ppg.len(), 1200);

        // Empty file.
        let empty = dir.join("empty.rec");
        std::fs::write(&empty, "").unwrap();
        assert!(load_records(&empty).is_err());

        // Mismatched column count on line 7 is reported as line 7.
        let bad = dir.join("bad.rec");
        let mut text = String::from("rate=125\n");
        for i in 0..5 {
            text.push_str(&format!("{}.0,{}.0\n", i, i));
        }
        text.push_str("1.0,2.0,3.0\n");
        std::fs::write(&bad, text).unwrap();
        match load_records(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_dir_all(dir).unwrap();
    }
}

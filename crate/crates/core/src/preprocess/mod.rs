//! Filtering, pulse segmentation and artifact flagging.
//!
//! Pulses are *detected* on the band-passed waveform and *measured* on a
//! low-passed copy of the raw record. Measuring on the band-passed signal
//! would strip the baseline swings that carry the intensity variation at
//! rates below ~24 breaths/min.

mod filter;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::PpgRecord;

pub use filter::{bandpass, lowpass, ZeroPhaseFilter, HIGH_CUT_HZ, LOW_CUT_HZ, MIN_FS};

/// Minimum spacing of two pulse peaks (caps heart rate at 200 beats/min).
pub const REFRACTORY_S: f64 = 0.3;
/// Peak acceptance threshold relative to the median recent prominence.
pub const PROMINENCE_FRACTION: f64 = 0.5;
/// Number of recent beats used by the adaptive threshold and artifact medians.
pub const HISTORY: usize = 10;
/// Maximum ratio between a beat's period/amplitude and the running median.
pub const ARTIFACT_RATIO: f64 = 1.75;
/// Consecutive samples at the record extreme that count as clipping.
pub const SATURATION_RUN: usize = 3;

const LOOKBACK_S: f64 = 1.5;

/// One detected cardiac pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    pub t_foot: f64,
    pub v_foot: f64,
    pub t_peak: f64,
    pub v_peak: f64,
    /// width at 50% of the foot-to-peak amplitude (s)
    pub width50: f64,
    /// 25% to 75% upstroke transit time (s)
    pub rise25_75: f64,
    /// peak-to-peak interval from the previous beat (s)
    pub period: Option<f64>,
    pub artifact: bool,
}

impl Beat {
    pub fn amplitude(&self) -> f64 {
        self.v_peak - self.v_foot
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn argmin(x: &[f64], lo: usize, hi: usize) -> usize {
    (lo..=hi).min_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap_or(lo)
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    // first occurrence of the maximum
    let mut best = lo;
    for i in lo..=hi {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

/// Vertex of the parabola through three samples around `i`, as (offset, value).
fn parabolic(x: &[f64], i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= x.len() {
        return (0.0, x[i]);
    }
    let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        return (0.0, b);
    }
    let off = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
    (off, b - 0.25 * (a - c) * off)
}

/// Peak indices on the detection signal.
fn detect_peaks(x: &[f64], fs: f64) -> Vec<usize> {
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let refractory = (REFRACTORY_S * fs).round() as usize;
    let lookback = (LOOKBACK_S * fs).round() as usize;
    let candidates: Vec<usize> = (1..n - 1).filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1]).collect();
    if candidates.is_empty() {
        return Vec::new();
    }

    let local_prom = |c: usize, from: usize| {
        let lo = from.max(c.saturating_sub(lookback));
        x[c] - x[lo..=c].iter().copied().fold(f64::INFINITY, f64::min)
    };

    // seed: typical prominence among the dominant maxima of the record
    let mut proms: Vec<f64> = candidates.iter().map(|&c| local_prom(c, 0)).collect();
    proms.sort_by(|a, b| a.total_cmp(b));
    let top = proms[((proms.len() - 1) as f64 * 0.99).round() as usize];
    if !(top > 0.0) {
        return Vec::new();
    }
    let mut dominant: Vec<f64> = proms.iter().copied().filter(|&p| p >= 0.3 * top).collect();
    let seed = median(&mut dominant).unwrap_or(top);

    let mut peaks: Vec<usize> = Vec::new();
    let mut accepted: Vec<f64> = Vec::new();
    let threshold = |accepted: &[f64]| {
        let recent = &accepted[accepted.len().saturating_sub(HISTORY)..];
        let mut r = recent.to_vec();
        PROMINENCE_FRACTION * median(&mut r).unwrap_or(seed)
    };

    for &c in &candidates {
        match peaks.last().copied() {
            Some(last) if c - last < refractory => {
                if x[c] > x[last] {
                    let from = if peaks.len() >= 2 { peaks[peaks.len() - 2] } else { 0 };
                    let prom = local_prom(c, from);
                    *peaks.last_mut().unwrap() = c;
                    *accepted.last_mut().unwrap() = prom;
                }
            }
            last => {
                let prom = local_prom(c, last.unwrap_or(0));
                if prom >= threshold(&accepted) {
                    peaks.push(c);
                    accepted.push(prom);
                }
            }
        }
    }

    // search back through long gaps with a relaxed threshold
    if peaks.len() >= 3 {
        let mut periods: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
        let typical = median(&mut periods).unwrap_or(f64::INFINITY);
        let mut proms = accepted.clone();
        let relaxed = 0.5 * PROMINENCE_FRACTION * median(&mut proms).unwrap_or(seed);
        let mut extra = Vec::new();
        for w in peaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if ((b - a) as f64) < 1.6 * typical {
                continue;
            }
            let best = candidates
                .iter()
                .copied()
                .filter(|&c| c >= a + refractory && c + refractory <= b)
                .map(|c| (c, local_prom(c, a)))
                .max_by(|p, q| p.1.total_cmp(&q.1));
            if let Some((c, prom)) = best {
                if prom >= relaxed {
                    extra.push(c);
                }
            }
        }
        peaks.extend(extra);
        peaks.sort_unstable();
    }
    peaks
}

/// First crossing of `level` walking from `from` toward `to` (either
/// direction), linearly interpolated, in fractional samples.
fn crossing(y: &[f64], from: usize, to: usize, level: f64) -> Option<f64> {
    if from == to {
        return None;
    }
    let step: isize = if to > from { 1 } else { -1 };
    let mut i = from as isize;
    while i != to as isize {
        let j = i + step;
        let (a, b) = (y[i as usize], y[j as usize]);
        if a > level && b <= level {
            let frac = (a - level) / (a - b);
            return Some(i as f64 + step as f64 * frac);
        }
        i = j;
    }
    None
}

/// Segments pulses detected on `filtered`, measuring them on the same signal.
pub fn segment_beats(filtered: &PpgRecord) -> Result<Vec<Beat>> {
    segment_beats_on(filtered, filtered)
}

/// Segments pulses detected on `detect`, with feet, peaks and shape features
/// measured on `measure` (same rate and length).
pub fn segment_beats_on(detect: &PpgRecord, measure: &PpgRecord) -> Result<Vec<Beat>> {
    if detect.len() != measure.len() || detect.fs() != measure.fs() {
        return Err(Error::Parameter("detection and measurement signals differ in shape".into()));
    }
    let fs = detect.fs();
    let y = measure.samples();
    let n = y.len();
    let peaks = detect_peaks(detect.samples(), fs);
    if peaks.len() < 3 {
        return Err(Error::InsufficientSignal(format!("{} pulses detected", peaks.len())));
    }
    let mut gaps: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let typical = median(&mut gaps).unwrap_or(fs) as usize;

    // feet: minima of the measured signal between consecutive detections
    let mut feet = Vec::with_capacity(peaks.len());
    feet.push(argmin(y, peaks[0].saturating_sub(typical), peaks[0]));
    for w in peaks.windows(2) {
        feet.push(argmin(y, w[0], w[1]));
    }

    let mut beats: Vec<Beat> = Vec::with_capacity(peaks.len());
    for k in 0..peaks.len() {
        let foot = feet[k];
        let end = if k + 1 < peaks.len() {
            feet[k + 1]
        } else {
            (peaks[k] + typical).min(n - 1)
        };
        if end <= foot {
            continue;
        }
        let peak = argmax(y, foot, end);
        if peak == foot || y[peak] <= y[foot] {
            continue;
        }
        let (foot_off, v_foot) = parabolic(y, foot);
        let (peak_off, v_peak) = parabolic(y, peak);
        let t_foot = (foot as f64 + foot_off) / fs;
        let t_peak = (peak as f64 + peak_off) / fs;
        if !(t_peak > t_foot && v_peak > v_foot) {
            continue;
        }

        let amp = v_peak - v_foot;
        let up = |frac: f64| crossing(y, peak, foot, v_foot + frac * amp);
        let down = crossing(y, peak, end, v_foot + 0.5 * amp);
        let mut artifact = false;
        let width50 = match (up(0.5), down) {
            (Some(a), Some(b)) if b > a => (b - a) / fs,
            // pulse cut off by the end of the record
            (_, None) if k + 1 == peaks.len() => continue,
            _ => {
                artifact = true;
                t_peak - t_foot
            }
        };
        let rise25_75 = match (up(0.25), up(0.75)) {
            (Some(a), Some(b)) if b > a => (b - a) / fs,
            _ => {
                artifact = true;
                0.5 * (t_peak - t_foot)
            }
        };
        let period = beats.last().map(|b: &Beat| t_peak - b.t_peak);
        if period.is_some_and(|p| p <= 0.0) {
            continue;
        }
        beats.push(Beat {
            t_foot,
            v_foot,
            t_peak,
            v_peak,
            width50,
            rise25_75,
            period,
            artifact,
        });
    }
    if beats.len() < 3 {
        return Err(Error::InsufficientSignal(format!("{} usable pulses", beats.len())));
    }
    Ok(beats)
}

/// Flags beats spanning a run of at least three samples pinned at the raw
/// record's global minimum or maximum.
pub fn flag_saturation(beats: &[Beat], raw: &PpgRecord) -> Vec<Beat> {
    let x = raw.samples();
    let fs = raw.fs();
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let clipped = |a: usize, b: usize| {
        let mut run = 0;
        for &v in &x[a..=b] {
            if v == hi || v == lo {
                run += 1;
                if run >= SATURATION_RUN {
                    return true;
                }
            } else {
                run = 0;
            }
        }
        false
    };
    let to_idx = |t: f64| ((t * fs).round().max(0.0) as usize).min(x.len() - 1);
    beats
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let end = beats
                .get(i + 1)
                .map(|next| next.t_foot)
                .unwrap_or(b.t_peak + (b.t_peak - b.t_foot));
            let mut out = *b;
            out.artifact |= clipped(to_idx(b.t_foot), to_idx(end));
            out
        })
        .collect()
}

/// Flags beats whose period or amplitude departs from the median of the
/// previous ten beats by more than a factor of 1.75. Existing flags are kept,
/// and the medians ignore flags, so the function is idempotent.
pub fn flag_artifacts(beats: &[Beat]) -> Vec<Beat> {
    let outside = |v: f64, m: Option<f64>| match m {
        Some(m) if m > 0.0 => {
            let r = v / m;
            !(1.0 / ARTIFACT_RATIO..=ARTIFACT_RATIO).contains(&r)
        }
        _ => false,
    };
    beats
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let prev = &beats[i.saturating_sub(HISTORY)..i];
            let mut periods: Vec<f64> = prev.iter().filter_map(|p| p.period).collect();
            let mut amps: Vec<f64> = prev.iter().map(Beat::amplitude).collect();
            let mut out = *b;
            if let Some(p) = b.period {
                out.artifact |= outside(p, median(&mut periods));
            }
            out.artifact |= outside(b.amplitude(), median(&mut amps));
            out
        })
        .collect()
}

/// Band-pass, segment, and flag artifacts for one recording.
pub fn preprocess(record: &PpgRecord) -> Result<Vec<Beat>> {
    let detect = bandpass(record)?;
    let measure = lowpass(record)?;
    let beats = segment_beats_on(&detect, &measure)?;
    let beats = flag_saturation(&beats, record);
    Ok(flag_artifacts(&beats))
}

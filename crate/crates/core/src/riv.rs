//! Respiratory-induced variation series, resampled onto a 5 Hz grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::Beat;

pub const RIV_FS: f64 = 5.0;
pub const RIV_STEP_S: f64 = 1.0 / RIV_FS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RivKind {
    Riiv,
    Riav,
    Rifv,
    Riwv,
    Risv,
}

impl RivKind {
    pub const ALL: [RivKind; 5] = [RivKind::Riiv, RivKind::Riav, RivKind::Rifv, RivKind::Riwv, RivKind::Risv];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RivKind::Riiv => "RIIV",
            RivKind::Riav => "RIAV",
            RivKind::Rifv => "RIFV",
            RivKind::Riwv => "RIWV",
            RivKind::Risv => "RISV",
        }
    }

    /// Beat feature carried by this variation.
    pub fn feature(self, beat: &Beat) -> Option<f64> {
        match self {
            RivKind::Riiv => Some(beat.v_peak),
            RivKind::Riav => Some(beat.v_peak - beat.v_foot),
            RivKind::Rifv => beat.period,
            RivKind::Riwv => Some(beat.width50),
            RivKind::Risv => Some(beat.rise25_75),
        }
    }
}

impl fmt::Display for RivKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RivKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RivKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown variation `{s}`")))
    }
}

/// One variation on the uniform 5 Hz grid `t0 + i / 5`.
#[derive(Debug, Clone, PartialEq)]
pub struct RivSeries {
    pub kind: RivKind,
    pub t0: f64,
    pub values: Vec<f64>,
    /// true where the bracketing beats include an artifact
    pub artifact_mask: Vec<bool>,
}

impl RivSeries {
    pub fn fs(&self) -> f64 {
        RIV_FS
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * RIV_STEP_S
    }

    pub fn end_s(&self) -> f64 {
        self.time(self.values.len())
    }
}

/// Linear interpolation through `(t, v)` knots with constant hold outside.
fn interpolate(knots: &[(f64, f64)], t: f64) -> f64 {
    let j = knots.partition_point(|&(tk, _)| tk <= t);
    if j == 0 {
        return knots[0].1;
    }
    if j == knots.len() {
        return knots[j - 1].1;
    }
    let (t0, v0) = knots[j - 1];
    let (t1, v1) = knots[j];
    if t1 == t0 {
        return v1;
    }
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Grid point count covering `[0, t_end]`.
pub fn grid_len(t_end: f64) -> usize {
    (t_end * RIV_FS + 1e-9).floor() as usize + 1
}

/// Builds one variation series on the grid `[0, t_end]` at 5 Hz.
///
/// Features are placed at each beat's peak time. Artifact beats are not used
/// as knots; grid points whose bracketing beats include one are masked.
/// Before the first and after the last knot the nearest knot value is held.
pub fn extract(beats: &[Beat], kind: RivKind, t_end: f64) -> Result<RivSeries> {
    let knots: Vec<(f64, f64)> = beats
        .iter()
        .filter(|b| !b.artifact)
        .filter_map(|b| kind.feature(b).map(|v| (b.t_peak, v)))
        .collect();
    if knots.len() < 3 || beats.iter().filter(|b| !b.artifact).count() < 3 {
        return Err(Error::InsufficientSignal(format!(
            "{} usable beats for {kind}",
            knots.len()
        )));
    }

    let n = grid_len(t_end);
    let mut values = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * RIV_STEP_S;
        values.push(interpolate(&knots, t));
        let j = beats.partition_point(|b| b.t_peak <= t);
        let before = j.checked_sub(1).map(|k| beats[k].artifact).unwrap_or(false);
        let after = beats.get(j).map(|b| b.artifact).unwrap_or(false);
        mask.push(before || after);
    }
    Ok(RivSeries {
        kind,
        t0: 0.0,
        values,
        artifact_mask: mask,
    })
}

/// All five variations in `RivKind::ALL` order.
pub fn extract_all(beats: &[Beat], t_end: f64) -> Result<[RivSeries; 5]> {
    let mut out = Vec::with_capacity(5);
    for kind in RivKind::ALL {
        out.push(extract(beats, kind, t_end)?);
    }
    Ok(out.try_into().expect("five kinds"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beats_with_periods(periods: &[f64]) -> Vec<Beat> {
        let mut t = 1.0;
        let mut out = vec![];
        for (i, &p) in std::iter::once(&0.0).chain(periods).enumerate() {
            t += p;
            out.push(Beat {
                t_foot: t - 0.2,
                v_foot: 0.0,
                t_peak: t,
                v_peak: 1.0,
                width50: 0.3,
                rise25_75: 0.07,
                period: (i > 0).then_some(p),
                artifact: false,
            });
        }
        out
    }

    #[test]
    fn constant_train_gives_constant_series() {
        let beats = beats_with_periods(&[0.8; 20]);
        for s in extract_all(&beats, 17.0).unwrap() {
            let first = s.values[0];
            assert!(s.values.iter().all(|&v| (v - first).abs() < 1e-12), "{}", s.kind);
            assert!(s.artifact_mask.iter().all(|m| !m));
        }
    }

    #[test]
    fn rifv_interpolates_between_periods() {
        let beats = beats_with_periods(&[0.75, 0.75, 0.80]);
        let s = extract(&beats, RivKind::Rifv, 4.0).unwrap();
        // knots at t = 1.75 (0.75), 2.5 (0.75), 3.3 (0.80)
        for (i, &v) in s.values.iter().enumerate() {
            let t = s.time(i);
            assert!((0.75..=0.80).contains(&v));
            if t > 2.5 && t < 3.3 {
                let expect = 0.75 + 0.05 * (t - 2.5) / 0.8;
                assert!((v - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_is_five_hz() {
        let beats = beats_with_periods(&[0.8; 10]);
        let s = extract(&beats, RivKind::Riav, 9.0).unwrap();
        assert_eq!(s.len(), 46);
        assert!((s.time(1) - s.time(0) - 0.2).abs() < 1e-15);
        assert_eq!(s.fs(), 5.0);
    }

    #[test]
    fn artifact_beats_masked_not_used() {
        let mut beats = beats_with_periods(&[0.8; 10]);
        beats[4].artifact = true;
        beats[4].v_peak = 10.0;
        let s = extract(&beats, RivKind::Riiv, 9.0).unwrap();
        assert!(s.values.iter().all(|&v| v == 1.0));
        let masked: Vec<f64> = (0..s.len()).filter(|&i| s.artifact_mask[i]).map(|i| s.time(i)).collect();
        let (lo, hi) = (beats[3].t_peak, beats[5].t_peak);
        assert!(!masked.is_empty());
        assert!(masked.iter().all(|&t| t >= lo && t < hi));
    }

    #[test]
    fn too_few_beats() {
        let beats = beats_with_periods(&[0.8]);
        assert!(matches!(extract(&beats, RivKind::Riav, 3.0), Err(Error::InsufficientSignal(_))));
    }

    #[test]
    fn parses_names() {
        assert_eq!("risv".parse::<RivKind>().unwrap(), RivKind::Risv);
        assert!("xyz".parse::<RivKind>().is_err());
    }
}

//! Zero-phase Butterworth filtering.
//!
//! The band-pass is a 3rd-order Butterworth high-pass at 0.4 Hz cascaded with
//! a 3rd-order Butterworth low-pass at 8 Hz. Each 3rd-order stage is realised
//! as a first-order section plus a second-order section with Q = 1 (the
//! analog prototype poles -1 and -1/2 ± j√3/2), discretised with the bilinear
//! transform at prewarped cut-offs. The cascade runs forward then backward
//! over an odd-reflected extension of the signal, so the magnitude response
//! is squared and the phase cancels. The output mean is removed last.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::signal_io::PpgRecord;

pub const MIN_FS: f64 = 25.0;
pub const LOW_CUT_HZ: f64 = 0.4;
pub const HIGH_CUT_HZ: f64 = 8.0;

#[derive(Debug, Clone, Copy)]
struct Section {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Section {
    fn first_order(k: f64, high_pass: bool) -> Self {
        let norm = 1.0 / (1.0 + k);
        let (b0, b1) = if high_pass { (norm, -norm) } else { (k * norm, k * norm) };
        Section {
            b0,
            b1,
            b2: 0.0,
            a1: (k - 1.0) * norm,
            a2: 0.0,
        }
    }

    fn second_order(k: f64, q: f64, high_pass: bool) -> Self {
        let norm = 1.0 / (1.0 + k / q + k * k);
        let (b0, b1, b2) = if high_pass {
            (norm, -2.0 * norm, norm)
        } else {
            let b = k * k * norm;
            (b, 2.0 * b, b)
        };
        Section {
            b0,
            b1,
            b2,
            a1: 2.0 * (k * k - 1.0) * norm,
            a2: (1.0 - k / q + k * k) * norm,
        }
    }

    /// Direct form II transposed, zero initial state.
    fn run(&self, x: &mut [f64]) {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let out = self.b0 * input + z1;
            z1 = self.b1 * input - self.a1 * out + z2;
            z2 = self.b2 * input - self.a2 * out;
            *v = out;
        }
    }

    /// Complex gain at normalised frequency `f / fs`.
    #[cfg(test)]
    fn gain(&self, f_norm: f64) -> f64 {
        let w = 2.0 * PI * f_norm;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num = ((self.b0 + self.b1 * c1 + self.b2 * c2).powi(2) + (self.b1 * s1 + self.b2 * s2).powi(2)).sqrt();
        let den = ((1.0 + self.a1 * c1 + self.a2 * c2).powi(2) + (self.a1 * s1 + self.a2 * s2).powi(2)).sqrt();
        num / den
    }
}

/// 3rd-order Butterworth stage as two sections.
fn butter3(fc: f64, fs: f64, high_pass: bool) -> [Section; 2] {
    let k = (PI * fc / fs).tan();
    [Section::first_order(k, high_pass), Section::second_order(k, 1.0, high_pass)]
}

#[derive(Debug, Clone)]
pub struct ZeroPhaseFilter {
    sections: Vec<Section>,
    pad: usize,
}

impl ZeroPhaseFilter {
    pub fn bandpass(fs: f64) -> Result<Self> {
        check_rate(fs)?;
        let mut sections = butter3(LOW_CUT_HZ, fs, true).to_vec();
        sections.extend(butter3(HIGH_CUT_HZ, fs, false));
        Ok(Self {
            sections,
            pad: (3.0 * fs / LOW_CUT_HZ).ceil() as usize,
        })
    }

    pub fn lowpass(fs: f64) -> Result<Self> {
        check_rate(fs)?;
        Ok(Self {
            sections: butter3(HIGH_CUT_HZ, fs, false).to_vec(),
            pad: (3.0 * fs / HIGH_CUT_HZ).ceil() as usize,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = self.pad.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        for s in &self.sections {
            s.run(&mut ext);
        }
        ext.reverse();
        for s in &self.sections {
            s.run(&mut ext);
        }
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }

    #[cfg(test)]
    fn magnitude(&self, f_norm: f64) -> f64 {
        self.sections.iter().map(|s| s.gain(f_norm)).product::<f64>().powi(2)
    }
}

fn check_rate(fs: f64) -> Result<()> {
    if fs < MIN_FS {
        Err(Error::UnsupportedRate { fs, min: MIN_FS })
    } else {
        Ok(())
    }
}

/// Zero-phase 0.4–8 Hz band-pass with the mean removed.
pub fn bandpass(record: &PpgRecord) -> Result<PpgRecord> {
    let filter = ZeroPhaseFilter::bandpass(record.fs())?;
    let x = record.samples();
    let first = x[0];
    if x.iter().all(|&v| v == first) {
        return record.with_samples(vec![0.0; x.len()]);
    }
    let mut y = filter.apply(x);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter_mut().for_each(|v| *v -= mean);
    record.with_samples(y)
}

/// Zero-phase 8 Hz low-pass; keeps baseline and respiratory intensity swings.
pub fn lowpass(record: &PpgRecord) -> Result<PpgRecord> {
    let filter = ZeroPhaseFilter::lowpass(record.fs())?;
    record.with_samples(filter.apply(record.samples()))
}

//! Deterministic synthetic PPG with known respiratory rate.
//!
//! Each cardiac pulse is a raised-cosine upstroke from foot to peak followed by
//! an exponential decay that lands exactly on the next foot. Peak timing,
//! peak level, pulse amplitude, pulse width and upstroke duration are each
//! modulated by `sin(2π·rr/60·t)` evaluated at the pulse peak, with a depth
//! of `d` giving a peak-to-peak swing of `d` relative to nominal. The five
//! features are set independently:
//!
//! * intensity: peak level moves by `±d/2` pulse amplitudes, foot follows;
//! * amplitude: foot moves, peak level stays put;
//! * frequency: the peak-to-peak interval is scaled by `1 ± d/2`;
//! * width: the decay constant is solved per beat so that the width at half
//!   amplitude hits its target;
//! * slope: upstroke duration (30% of the nominal beat) is scaled by `1 ± d/2`.
//!
//! Noise is white Gaussian drawn from `ChaCha8Rng::seed_from_u64(seed)` via
//! `rand_distr::Normal`, one draw per sample in sample order.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{PpgRecord, ReferenceRr};
use crate::error::{Error, Result};

/// Upstroke duration as a fraction of the nominal beat period.
pub const RISE_FRACTION: f64 = 0.3;
/// Width at half amplitude as a fraction of the nominal beat period.
pub const WIDTH_FRACTION: f64 = 0.35;
/// Spacing of the generated reference annotations.
pub const REFERENCE_STEP_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModDepths {
    pub intensity: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub width: f64,
    pub slope: f64,
}

impl ModDepths {
    pub fn uniform(d: f64) -> Self {
        Self {
            intensity: d,
            amplitude: d,
            frequency: d,
            width: d,
            slope: d,
        }
    }

    fn all(&self) -> [f64; 5] {
        [self.intensity, self.amplitude, self.frequency, self.width, self.slope]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// breaths/min
    pub rr: f64,
    /// beats/min
    pub hr: f64,
    pub duration_s: f64,
    pub fs: f64,
    pub mod_depths: ModDepths,
    /// relative to the nominal pulse amplitude (1.0)
    pub noise_sd: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(rr: f64, hr: f64, duration_s: f64, fs: f64) -> Self {
        Self {
            rr,
            hr,
            duration_s,
            fs,
            mod_depths: ModDepths::default(),
            noise_sd: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(4.0..=65.0).contains(&self.rr) {
            return Err(Error::Parameter(format!("rr {} outside [4, 65]", self.rr)));
        }
        if !(self.hr > 2.0 * self.rr) || !self.hr.is_finite() {
            return Err(Error::Parameter(format!(
                "hr {} must exceed twice the respiratory rate {}",
                self.hr, self.rr
            )));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Parameter("duration must be positive".into()));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::Parameter("sampling rate must be positive".into()));
        }
        if self.mod_depths.all().iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(Error::Parameter("modulation depths must lie in [0, 1]".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Parameter("noise_sd must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Pulse {
    foot_t: f64,
    foot_v: f64,
    peak_t: f64,
    peak_v: f64,
    rise: f64,
    /// decay constant toward the next foot
    tau: f64,
}

/// `(exp(-s/tau) - exp(-d/tau)) / (1 - exp(-d/tau))`: 1 at s = 0, 0 at s = d.
fn decay_shape(s: f64, d: f64, tau: f64) -> f64 {
    let end = (-d / tau).exp();
    ((-s / tau).exp() - end) / (1.0 - end)
}

/// Decay constant such that `decay_shape(s, d, tau) = level`.
fn solve_tau(s: f64, d: f64, level: f64) -> f64 {
    // decay_shape is increasing in tau, from 0 toward the linear ramp 1 - s/d.
    let (mut lo, mut hi) = ((1e-4 * d).ln(), (1e3 * d).ln());
    if !(s > 0.0 && s < d && level > 0.0 && level < 1.0 - s / d) {
        return if level >= 1.0 - s / d { hi.exp() } else { d / 3.0 };
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if decay_shape(s, d, mid.exp()) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn build_pulses(spec: &SynthSpec) -> Vec<Pulse> {
    let t0 = 60.0 / spec.hr;
    let w = 2.0 * PI * spec.rr / 60.0;
    let d = spec.mod_depths;
    let modulate = |t: f64| (w * t).sin();

    // peak times, starting one beat before the record so it opens mid-train
    let mut peaks = vec![-t0];
    while *peaks.last().unwrap() < spec.duration_s + 2.0 * t0 {
        let p = *peaks.last().unwrap();
        peaks.push(p + t0 * (1.0 + 0.5 * d.frequency * modulate(p)));
    }

    let mut pulses: Vec<Pulse> = peaks
        .iter()
        .map(|&p| {
            let m = modulate(p);
            let peak_v = 0.5 * d.intensity * m;
            let amp = 1.0 + 0.5 * d.amplitude * m;
            let rise = RISE_FRACTION * t0 * (1.0 + 0.5 * d.slope * m);
            Pulse {
                foot_t: p - rise,
                foot_v: peak_v - amp,
                peak_t: p,
                peak_v,
                rise,
                tau: f64::NAN,
            }
        })
        .collect();

    for n in 0..pulses.len() - 1 {
        let next = pulses[n + 1];
        let cur = pulses[n];
        let m = modulate(cur.peak_t);
        let width = WIDTH_FRACTION * t0 * (1.0 + 0.5 * d.width * m);
        let half_after_peak = width - 0.5 * cur.rise;
        let span = next.foot_t - cur.peak_t;
        let drop = cur.peak_v - next.foot_v;
        let amp = cur.peak_v - cur.foot_v;
        let level = 1.0 - 0.5 * amp / drop;
        pulses[n].tau = solve_tau(half_after_peak, span, level);
    }
    pulses.pop();
    pulses
}

fn pulse_value(p: &Pulse, next: &Pulse, t: f64) -> f64 {
    if t <= p.peak_t {
        let u = ((t - p.foot_t) / p.rise).clamp(0.0, 1.0);
        p.foot_v + (p.peak_v - p.foot_v) * 0.5 * (1.0 - (PI * u).cos())
    } else {
        let span = next.foot_t - p.peak_t;
        let s = (t - p.peak_t).min(span);
        next.foot_v + (p.peak_v - next.foot_v) * decay_shape(s, span, p.tau)
    }
}

/// Builds the PPG and a constant reference sampled every 2 s.
pub fn synthesize(spec: &SynthSpec) -> Result<(PpgRecord, ReferenceRr)> {
    spec.validate()?;
    let n = (spec.duration_s * spec.fs).round() as usize;
    if n == 0 {
        return Err(Error::Parameter("duration shorter than one sample".into()));
    }
    let pulses = build_pulses(spec);

    let mut samples = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let t = i as f64 / spec.fs;
        while k + 2 < pulses.len() && t >= pulses[k + 1].foot_t {
            k += 1;
        }
        samples.push(pulse_value(&pulses[k], &pulses[k + 1], t));
    }

    if spec.noise_sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sd).expect("validated noise sd");
        for v in &mut samples {
            *v += normal.sample(&mut rng);
        }
    }

    let duration = n as f64 / spec.fs;
    let count = (duration / REFERENCE_STEP_S + 1e-9).floor() as usize + 1;
    let times: Vec<f64> = (0..count).map(|i| i as f64 * REFERENCE_STEP_S).collect();
    let rr = vec![spec.rr; count];

    let id = format!("synth-rr{}-hr{}-s{}", spec.rr, spec.hr, spec.seed);
    Ok((PpgRecord::new(id, spec.fs, samples)?, ReferenceRr::new(times, rr)?))
}

//! Windowed spectra with power-law background subtraction and the noise index.
//!
//! For each 32 s window (2 s shift) of a 5 Hz variation series: remove the
//! mean, apply a Hamming taper, zero-pad to 4096 points and take |X|². A
//! straight line is fitted to ln P against ln f over 2–4 and 65–100
//! breaths/min, the fitted background `exp(k)·f^a` is subtracted, and the
//! largest residual between 4 and 65 breaths/min is the rate estimate. The
//! noise index is that peak over the summed positive residual in the band,
//! with the sum expressed at the window's native resolution: zero padding
//! spreads one tone over `FFT_LEN / window_len` times more bins without adding
//! information, so the padded sum is divided by that factor.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riv::{RivKind, RivSeries, RIV_FS};

pub const WINDOW_S: f64 = 32.0;
pub const SHIFT_S: f64 = 2.0;
pub const FFT_LEN: usize = 4096;
/// breaths/min
pub const RR_BAND: (f64, f64) = (4.0, 65.0);
pub const FIT_BAND_LOW: (f64, f64) = (2.0, 4.0);
pub const FIT_BAND_HIGH: (f64, f64) = (65.0, 100.0);
pub const MIN_FIT_BINS: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.13;

/// Analysis windows over a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGrid {
    pub window_s: f64,
    pub shift_s: f64,
    pub windows: Vec<(f64, f64)>,
}

impl WindowGrid {
    pub fn new(duration_s: f64) -> Self {
        Self::with(duration_s, WINDOW_S, SHIFT_S)
    }

    pub fn with(duration_s: f64, window_s: f64, shift_s: f64) -> Self {
        let count = window_count(duration_s, window_s, shift_s);
        let windows = (0..count)
            .map(|i| {
                let start = i as f64 * shift_s;
                (start, start + window_s)
            })
            .collect();
        Self {
            window_s,
            shift_s,
            windows,
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// `floor((D - window) / shift) + 1`, or 0 when the record is shorter than a window.
pub fn window_count(duration_s: f64, window_s: f64, shift_s: f64) -> usize {
    if duration_s + 1e-9 < window_s {
        return 0;
    }
    ((duration_s - window_s) / shift_s + 1e-9).floor() as usize + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    /// slope of ln P against ln f
    pub a: f64,
    /// intercept
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    /// breaths/min, ascending, DC excluded
    pub freqs: Vec<f64>,
    pub p: Vec<f64>,
    pub p_fit: Vec<f64>,
    pub p_out: Vec<f64>,
    pub fit: Option<PowerLaw>,
    pub fit_degenerate: bool,
    /// spectrum bins per native frequency bin (zero-padding factor)
    pub bins_per_native: f64,
}

impl PowerSpectrum {
    /// Raw spectrum with no background removed.
    pub fn from_power(freqs: Vec<f64>, p: Vec<f64>) -> Self {
        let n = p.len();
        Self {
            freqs,
            p_out: p.clone(),
            p,
            p_fit: vec![0.0; n],
            fit: None,
            fit_degenerate: false,
            bins_per_native: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowOutcome {
    Spectrum(PowerSpectrum),
    ArtifactSkip,
}

/// Cached FFT plan and taper for repeated window spectra.
pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    taper: Vec<f64>,
    freqs: Vec<f64>,
}

impl std::fmt::Debug for SpectrumAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumAnalyzer").field("taper_len", &self.taper.len()).finish()
    }
}

impl Default for SpectrumAnalyzer {
    fn default() -> Self {
        Self::new()
    }
}

fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

impl SpectrumAnalyzer {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(FFT_LEN);
        let n = (WINDOW_S * RIV_FS).round() as usize;
        let freqs = (1..=FFT_LEN / 2)
            .map(|k| k as f64 * RIV_FS / FFT_LEN as f64 * 60.0)
            .collect();
        Self {
            fft,
            taper: hamming(n),
            freqs,
        }
    }

    /// Frequency grid of every spectrum this analyzer produces (breaths/min).
    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    /// Raw power spectrum of `series` over `window`, or an artifact skip.
    pub fn window_spectrum(&self, series: &RivSeries, window: (f64, f64)) -> Result<WindowOutcome> {
        let (start_s, end_s) = window;
        let out_of_bounds = Error::OutOfBounds { start_s, end_s };
        let start = ((start_s - series.t0) * RIV_FS).round();
        let len = ((end_s - start_s) * RIV_FS).round();
        if start < 0.0 || len < 2.0 || len as usize > FFT_LEN {
            return Err(out_of_bounds);
        }
        let (start, len) = (start as usize, len as usize);
        if start + len > series.len() {
            return Err(out_of_bounds);
        }
        if series.artifact_mask[start..start + len].iter().any(|&m| m) {
            return Ok(WindowOutcome::ArtifactSkip);
        }
        let seg = &series.values[start..start + len];
        let taper_owned;
        let taper = if len == self.taper.len() {
            &self.taper
        } else {
            taper_owned = hamming(len);
            &taper_owned
        };
        Ok(WindowOutcome::Spectrum(self.spectrum_of(seg, taper)))
    }

    fn spectrum_of(&self, seg: &[f64], taper: &[f64]) -> PowerSpectrum {
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
        for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(taper) {
            b.re = (v - mean) * w;
        }
        self.fft.process(&mut buf);
        let p = buf[1..=FFT_LEN / 2].iter().map(|c| c.norm_sqr()).collect();
        let mut spectrum = PowerSpectrum::from_power(self.freqs.clone(), p);
        spectrum.bins_per_native = FFT_LEN as f64 / seg.len() as f64;
        spectrum
    }
}

fn in_band(f: f64, band: (f64, f64)) -> bool {
    f >= band.0 && f <= band.1
}

/// Least-squares power law over the fit bands, subtracted over the full grid.
pub fn fit_power_law(spectrum: &PowerSpectrum) -> PowerSpectrum {
    let pts: Vec<(f64, f64)> = spectrum
        .freqs
        .iter()
        .zip(&spectrum.p)
        .filter(|&(&f, &p)| f > 0.0 && p > 0.0 && (in_band(f, FIT_BAND_LOW) || in_band(f, FIT_BAND_HIGH)))
        .map(|(&f, &p)| (f.ln(), p.ln()))
        .collect();

    let mut out = spectrum.clone();
    let n = pts.len() as f64;
    let fit = if pts.len() >= MIN_FIT_BINS {
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| {
            let a = sxy / sxx;
            PowerLaw { a, k: my - a * mx }
        })
    } else {
        None
    };

    match fit {
        Some(law) => {
            out.p_fit = out.freqs.iter().map(|&f| (law.k + law.a * f.ln()).exp()).collect();
            out.fit = Some(law);
            out.fit_degenerate = false;
        }
        None => {
            out.p_fit = vec![0.0; out.p.len()];
            out.fit = None;
            out.fit_degenerate = true;
        }
    }
    out.p_out = out.p.iter().zip(&out.p_fit).map(|(p, f)| p - f).collect();
    out
}

/// Rate and noise index from a background-subtracted spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// absent when the band holds no positive residual power
    pub rr: Option<f64>,
    pub ni: f64,
}

pub fn estimate_rr(spectrum: &PowerSpectrum) -> RateEstimate {
    let mut peak: Option<(f64, f64)> = None;
    let mut total = 0.0;
    for (&f, &v) in spectrum.freqs.iter().zip(&spectrum.p_out) {
        if !in_band(f, RR_BAND) {
            continue;
        }
        total += v.max(0.0);
        if peak.is_none_or(|(_, best)| v > best) {
            peak = Some((f, v));
        }
    }
    match peak {
        Some((f, v)) if total > 0.0 => RateEstimate {
            rr: Some(f),
            ni: (v.max(0.0) * spectrum.bins_per_native / total).clamp(0.0, 1.0),
        },
        _ => RateEstimate { rr: None, ni: 0.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    Artifact,
    LowNi,
    FitDegenerate,
    None,
}

/// Per-variation, per-window estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrEstimate {
    pub kind: RivKind,
    pub window_index: usize,
    pub rr: Option<f64>,
    pub ni: Option<f64>,
    pub fit_degenerate: bool,
    pub valid: bool,
    pub invalid_reason: InvalidReason,
}

impl RrEstimate {
    pub fn artifact(kind: RivKind, window_index: usize) -> Self {
        Self {
            kind,
            window_index,
            rr: None,
            ni: None,
            fit_degenerate: false,
            valid: false,
            invalid_reason: InvalidReason::Artifact,
        }
    }

    /// Ungated estimate; call [`gate`] to set validity.
    pub fn measured(kind: RivKind, window_index: usize, est: RateEstimate, fit_degenerate: bool) -> Self {
        Self {
            kind,
            window_index,
            rr: est.rr,
            ni: Some(est.ni),
            fit_degenerate,
            valid: false,
            invalid_reason: InvalidReason::LowNi,
        }
    }

    pub fn is_artifact(&self) -> bool {
        self.invalid_reason == InvalidReason::Artifact
    }
}

pub fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("threshold {t} outside [0, 1]")))
    }
}

/// Marks an estimate valid iff it has a rate and `ni >= t`.
pub fn gate(estimate: &RrEstimate, t: f64) -> Result<RrEstimate> {
    check_threshold(t)?;
    let mut out = *estimate;
    if estimate.is_artifact() {
        return Ok(out);
    }
    let (valid, reason) = match (estimate.rr, estimate.ni) {
        (Some(_), Some(ni)) if ni >= t => (true, InvalidReason::None),
        (None, _) if estimate.fit_degenerate => (false, InvalidReason::FitDegenerate),
        _ => (false, InvalidReason::LowNi),
    };
    out.valid = valid;
    out.invalid_reason = reason;
    Ok(out)
}

/// Estimates for every window of one series, gated at `t`.
pub fn analyze_series(
    analyzer: &SpectrumAnalyzer,
    series: &RivSeries,
    grid: &WindowGrid,
    t: f64,
) -> Result<Vec<RrEstimate>> {
    grid.windows
        .iter()
        .enumerate()
        .map(|(w, &window)| {
            let est = match analyzer.window_spectrum(series, window)? {
                WindowOutcome::ArtifactSkip => RrEstimate::artifact(series.kind, w),
                WindowOutcome::Spectrum(raw) => {
                    let spec = fit_power_law(&raw);
                    RrEstimate::measured(series.kind, w, estimate_rr(&spec), spec.fit_degenerate)
                }
            };
            gate(&est, t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>) -> RivSeries {
        let n = values.len();
        RivSeries {
            kind: RivKind::Riav,
            t0: 0.0,
            values,
            artifact_mask: vec![false; n],
        }
    }

    fn tone(f_bpm: f64, secs: f64) -> RivSeries {
        let n = (secs * RIV_FS) as usize + 1;
        series(
            (0..n)
                .map(|i| (2.0 * PI * f_bpm / 60.0 * i as f64 / RIV_FS).sin())
                .collect(),
        )
    }

    fn spectrum_from(p: impl Fn(f64) -> f64) -> PowerSpectrum {
        let an = SpectrumAnalyzer::new();
        let freqs = an.freqs().to_vec();
        let pv = freqs.iter().map(|&f| p(f)).collect();
        PowerSpectrum::from_power(freqs, pv)
    }

    fn unwrap(o: WindowOutcome) -> PowerSpectrum {
        match o {
            WindowOutcome::Spectrum(s) => s,
            WindowOutcome::ArtifactSkip => panic!("unexpected skip"),
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(WindowGrid::new(480.0).len(), 225);
        assert_eq!(WindowGrid::new(32.0).len(), 1);
        assert_eq!(WindowGrid::new(31.9).len(), 0);
        assert_eq!(WindowGrid::new(90.0).len(), 30);
        assert_eq!(WindowGrid::new(480.0).windows[224], (448.0, 480.0));
    }

    #[test]
    fn twenty_bpm_tone_peaks_at_twenty() {
        let an = SpectrumAnalyzer::new();
        let s = unwrap(an.window_spectrum(&tone(20.0, 40.0), (0.0, 32.0)).unwrap());
        let (i, _) = s.p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert!((s.freqs[i] - 20.0).abs() <= 0.1, "{}", s.freqs[i]);
    }

    #[test]
    fn constant_has_no_power() {
        let an = SpectrumAnalyzer::new();
        let s = unwrap(an.window_spectrum(&series(vec![2.5; 200]), (0.0, 32.0)).unwrap());
        assert!(s.p.iter().all(|&p| p < 1e-20));
        let fitted = fit_power_law(&s);
        assert!(fitted.fit_degenerate);
        let est = RrEstimate::measured(RivKind::Riav, 0, estimate_rr(&fitted), true);
        let g = gate(&est, 0.0).unwrap();
        assert!(!g.valid);
        assert_eq!(g.invalid_reason, InvalidReason::FitDegenerate);
    }

    #[test]
    fn masked_window_skipped_and_bounds_checked() {
        let an = SpectrumAnalyzer::new();
        let mut s = tone(20.0, 40.0);
        assert!(matches!(an.window_spectrum(&s, (10.0, 42.0)), Err(Error::OutOfBounds { .. })));
        s.artifact_mask[100] = true;
        assert_eq!(an.window_spectrum(&s, (0.0, 32.0)).unwrap(), WindowOutcome::ArtifactSkip);
        assert!(an.window_spectrum(&s, (20.2, 52.2)).is_err());
    }

    #[test]
    fn exact_inverse_square_law() {
        let s = fit_power_law(&spectrum_from(|f| f.powi(-2)));
        let law = s.fit.unwrap();
        assert!((law.a + 2.0).abs() < 1e-6 && law.k.abs() < 1e-6);
        for (&f, &r) in s.freqs.iter().zip(&s.p_out) {
            if in_band(f, FIT_BAND_LOW) || in_band(f, FIT_BAND_HIGH) {
                assert!(r.abs() < 1e-6 * f.powi(-2));
            }
        }
    }

    #[test]
    fn flat_spectrum_fit() {
        let s = fit_power_law(&spectrum_from(|_| 3.0));
        let law = s.fit.unwrap();
        assert!(law.a.abs() < 1e-9 && (law.k - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn spike_survives_subtraction() {
        let an = SpectrumAnalyzer::new();
        let spike = an.freqs().iter().position(|&f| f >= 20.0).unwrap();
        let mut raw = spectrum_from(|f| f.powi(-2));
        raw.p[spike] += 5.0;
        let s = fit_power_law(&raw);
        for (i, &r) in s.p_out.iter().enumerate() {
            if i == spike {
                assert!((r - 5.0).abs() < 1e-9);
            } else {
                assert!(r.abs() < 1e-9 * (1.0 + s.p[i]));
            }
        }
        let est = estimate_rr(&s);
        assert_eq!(est.rr, Some(s.freqs[spike]));
        assert!(est.ni > 0.999_999);
        // p_out = p - p_fit elementwise
        for i in 0..s.p.len() {
            assert_eq!(s.p_out[i], s.p[i] - s.p_fit[i]);
        }
    }

    #[test]
    fn single_bin_and_uniform_noise_index() {
        let an = SpectrumAnalyzer::new();
        let freqs = an.freqs().to_vec();
        let band: Vec<usize> = (0..freqs.len()).filter(|&i| in_band(freqs[i], RR_BAND)).collect();
        let mut s = PowerSpectrum::from_power(freqs.clone(), vec![0.0; freqs.len()]);
        s.p_out[band[100]] = 2.0;
        let est = estimate_rr(&s);
        assert_eq!(est.ni, 1.0);
        assert_eq!(est.rr, Some(freqs[band[100]]));

        let mut s = PowerSpectrum::from_power(freqs.clone(), vec![0.0; freqs.len()]);
        for &i in &band {
            s.p_out[i] = 0.7;
        }
        let est = estimate_rr(&s);
        assert!((est.ni - 1.0 / band.len() as f64).abs() < 1e-15);
    }

    #[test]
    fn gate_boundaries() {
        let mk = |ni| RrEstimate::measured(RivKind::Riiv, 0, RateEstimate { rr: Some(15.0), ni }, false);
        assert!(gate(&mk(0.5), 0.13).unwrap().valid);
        let low = gate(&mk(0.12), 0.13).unwrap();
        assert!(!low.valid);
        assert_eq!(low.invalid_reason, InvalidReason::LowNi);
        assert!(gate(&mk(0.13), 0.13).unwrap().valid);
        assert!(matches!(gate(&mk(0.5), 1.2), Err(Error::Parameter(_))));
        assert!(matches!(gate(&mk(0.5), -0.1), Err(Error::Parameter(_))));
    }

    #[test]
    fn scale_invariance() {
        let an = SpectrumAnalyzer::new();
        let base = tone(17.0, 40.0);
        let mut noisy = base.clone();
        for (i, v) in noisy.values.iter_mut().enumerate() {
            *v += 0.3 * ((i * 7919 % 101) as f64 / 101.0 - 0.5);
        }
        let run = |s: &RivSeries| estimate_rr(&fit_power_law(&unwrap(an.window_spectrum(s, (2.0, 34.0)).unwrap())));
        let a = run(&noisy);
        let mut scaled = noisy.clone();
        scaled.values.iter_mut().for_each(|v| *v *= 37.5);
        let b = run(&scaled);
        assert_eq!(a.rr, b.rr);
        assert!((a.ni - b.ni).abs() < 1e-9);
    }
}

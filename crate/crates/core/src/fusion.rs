//! Covariance intersection fusion of per-variation rates, plus the Smart
//! Fusion baselines.
//!
//! Each gated estimate `x_i` gets the scalar covariance `C_i = 1 - NI_i`. The
//! fused estimate is the convex combination in information space
//!
//! ```text
//! C⁻¹ = Σ ω_i C_i⁻¹        C⁻¹ x = Σ ω_i C_i⁻¹ x_i        Σ ω_i = 1
//! ```
//!
//! with the weights pinned by `ω_1 C_1 = … = ω_n C_n`, which gives
//! `ω_i = C_i⁻¹ / Σ_j C_j⁻¹` in n divisions and no optimisation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riv::RivKind;
use crate::spectral::{check_threshold, gate, RrEstimate};

/// Floor on `1 - NI` so a perfect noise index keeps a finite inverse.
pub const COVARIANCE_FLOOR: f64 = 1e-6;
/// Smart Fusion disagreement limit (breaths/min, sample SD).
pub const SF_SD_LIMIT: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    pub window_index: usize,
    pub rr_fusion: Option<f64>,
    pub c_fusion: Option<f64>,
    pub weights: Vec<f64>,
    pub contributors: Vec<RivKind>,
    pub retained: bool,
}

impl FusionResult {
    pub fn gap(window_index: usize) -> Self {
        Self {
            window_index,
            rr_fusion: None,
            c_fusion: None,
            weights: Vec::new(),
            contributors: Vec::new(),
            retained: false,
        }
    }
}

/// `ω_i = (1/C_i) / Σ_j (1/C_j)`.
pub fn cif_weights(covariances: &[f64]) -> Result<Vec<f64>> {
    if covariances.is_empty() {
        return Err(Error::EmptyFusion);
    }
    if let Some(c) = covariances.iter().find(|&&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::Parameter(format!("covariance {c} must be positive")));
    }
    let total: f64 = covariances.iter().map(|c| c.recip()).sum();
    Ok(covariances.iter().map(|c| c.recip() / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CifFusion {
    pub x: f64,
    pub c: f64,
    pub weights: Vec<f64>,
}

/// Fuses `(rate, noise index)` pairs.
pub fn cif_fuse(estimates: &[(f64, f64)]) -> Result<CifFusion> {
    if estimates.is_empty() {
        return Err(Error::EmptyFusion);
    }
    if let Some(&(_, ni)) = estimates.iter().find(|(_, ni)| !(0.0..=1.0).contains(ni)) {
        return Err(Error::Parameter(format!("noise index {ni} outside [0, 1]")));
    }
    let cov: Vec<f64> = estimates
        .iter()
        .map(|&(_, ni)| (1.0 - ni).max(COVARIANCE_FLOOR))
        .collect();
    let weights = cif_weights(&cov)?;
    let info: f64 = weights.iter().zip(&cov).map(|(w, c)| w / c).sum();
    let info_x: f64 = weights
        .iter()
        .zip(&cov)
        .zip(estimates)
        .map(|((w, c), (x, _))| w / c * x)
        .sum();
    Ok(CifFusion {
        x: info_x / info,
        c: info.recip(),
        weights,
    })
}

/// Gates each estimate at `t` and fuses the survivors.
pub fn fuse_window(estimates: &[RrEstimate], t: f64) -> Result<FusionResult> {
    check_threshold(t)?;
    let window_index = estimates.first().map(|e| e.window_index).unwrap_or(0);
    let mut pairs = Vec::new();
    let mut contributors = Vec::new();
    for e in estimates {
        let g = gate(e, t)?;
        if let (true, Some(rr), Some(ni)) = (g.valid, g.rr, g.ni) {
            pairs.push((rr, ni));
            contributors.push(g.kind);
        }
    }
    if pairs.is_empty() {
        return Ok(FusionResult::gap(window_index));
    }
    let fused = cif_fuse(&pairs)?;
    Ok(FusionResult {
        window_index,
        rr_fusion: Some(fused.x),
        c_fusion: Some(fused.c),
        weights: fused.weights,
        contributors,
        retained: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfConfig {
    pub kinds: Vec<RivKind>,
    pub sd_limit: f64,
}

impl SfConfig {
    pub fn sf3() -> Self {
        Self {
            kinds: vec![RivKind::Riiv, RivKind::Riav, RivKind::Rifv],
            sd_limit: SF_SD_LIMIT,
        }
    }

    pub fn sf5() -> Self {
        Self {
            kinds: RivKind::ALL.to_vec(),
            sd_limit: SF_SD_LIMIT,
        }
    }
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Mean of the configured rates; nothing when any is missing or they
/// disagree by more than the SD limit. The noise index is not consulted.
pub fn smart_fusion(estimates: &[RrEstimate], config: &SfConfig) -> FusionResult {
    let window_index = estimates.first().map(|e| e.window_index).unwrap_or(0);
    let mut rates = Vec::with_capacity(config.kinds.len());
    for kind in &config.kinds {
        match estimates.iter().find(|e| e.kind == *kind) {
            Some(e) if !e.is_artifact() && e.rr.is_some() => rates.push(e.rr.unwrap()),
            _ => return FusionResult::gap(window_index),
        }
    }
    if rates.is_empty() || sample_sd(&rates) > config.sd_limit {
        return FusionResult::gap(window_index);
    }
    let n = rates.len() as f64;
    FusionResult {
        window_index,
        rr_fusion: Some(rates.iter().sum::<f64>() / n),
        c_fusion: None,
        weights: vec![1.0 / n; rates.len()],
        contributors: config.kinds.clone(),
        retained: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cif,
    Sf3,
    Sf5,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Cif, Method::Sf3, Method::Sf5];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cif => "cif",
            Method::Sf3 => "sf3",
            Method::Sf5 => "sf5",
        }
    }

    /// Fuses one window; `t` only affects CIF.
    pub fn fuse(self, estimates: &[RrEstimate], t: f64) -> Result<FusionResult> {
        match self {
            Method::Cif => fuse_window(estimates, t),
            Method::Sf3 => Ok(smart_fusion(estimates, &SfConfig::sf3())),
            Method::Sf5 => Ok(smart_fusion(estimates, &SfConfig::sf5())),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown method `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::RateEstimate;

    fn est(kind: RivKind, rr: f64, ni: f64) -> RrEstimate {
        RrEstimate::measured(kind, 3, RateEstimate { rr: Some(rr), ni }, false)
    }

    #[test]
    fn weight_examples() {
        assert_eq!(cif_weights(&[0.5]).unwrap(), vec![1.0]);
        assert_eq!(cif_weights(&[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
        let w = cif_weights(&[0.2, 0.4]).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(cif_weights(&[0.2, 0.0]).is_err());
        assert!(cif_weights(&[]).is_err());
    }

    #[test]
    fn fuse_examples() {
        assert_eq!(cif_fuse(&[(12.0, 0.5)]).unwrap().x, 12.0);
        assert!((cif_fuse(&[(10.0, 0.5), (20.0, 0.5)]).unwrap().x - 15.0).abs() < 1e-12);
        let f = cif_fuse(&[(10.0, 0.8), (20.0, 0.6)]).unwrap();
        assert!((f.x - 12.0).abs() < 1e-12, "{}", f.x);
        assert!(matches!(cif_fuse(&[]), Err(Error::EmptyFusion)));
        // NI = 1 hits the covariance floor instead of dividing by zero
        let f = cif_fuse(&[(10.0, 1.0), (30.0, 0.5)]).unwrap();
        assert!((f.x - 10.0).abs() < 1e-6);
    }

    #[test]
    fn window_fusion_uses_valid_only() {
        let ests = vec![
            est(RivKind::Riiv, 10.0, 0.05),
            est(RivKind::Riav, 15.0, 0.5),
            RrEstimate::artifact(RivKind::Rifv, 3),
            est(RivKind::Riwv, 17.0, 0.3),
            est(RivKind::Risv, 40.0, 0.1),
        ];
        let r = fuse_window(&ests, 0.13).unwrap();
        assert!(r.retained);
        assert_eq!(r.contributors, vec![RivKind::Riav, RivKind::Riwv]);
        assert_eq!(r.window_index, 3);
        let sum: f64 = r.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);

        let none = fuse_window(&ests, 0.9).unwrap();
        assert!(!none.retained && none.rr_fusion.is_none());
    }

    #[test]
    fn equal_noise_index_gives_mean() {
        let ests: Vec<RrEstimate> = RivKind::ALL
            .iter()
            .zip([10.0, 12.0, 14.0, 19.0, 20.0])
            .map(|(&k, r)| est(k, r, 0.4))
            .collect();
        let r = fuse_window(&ests, 0.13).unwrap();
        assert!((r.rr_fusion.unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn smart_fusion_examples() {
        let sf3 = |a, b, c| {
            smart_fusion(
                &[est(RivKind::Riiv, a, 0.0), est(RivKind::Riav, b, 0.0), est(RivKind::Rifv, c, 0.0)],
                &SfConfig::sf3(),
            )
        };
        let r = sf3(10.0, 11.0, 12.0);
        assert!(r.retained);
        assert!((r.rr_fusion.unwrap() - 11.0).abs() < 1e-12);
        // sd = sqrt(28) > 4
        assert!(!sf3(10.0, 12.0, 20.0).retained);

        let mut five: Vec<RrEstimate> = RivKind::ALL.iter().map(|&k| est(k, 15.0, 0.01)).collect();
        assert!(smart_fusion(&five, &SfConfig::sf5()).retained);
        five[3] = RrEstimate::artifact(RivKind::Riwv, 3);
        assert!(!smart_fusion(&five, &SfConfig::sf5()).retained);
        // SF3 ignores RIWV
        assert!(smart_fusion(&five, &SfConfig::sf3()).retained);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("kalman".parse::<Method>().is_err());
    }
}

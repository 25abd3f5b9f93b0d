//! End-to-end analysis of one recording: beats, variations, window estimates.

use crate::error::Result;
use crate::fusion::{FusionResult, Method};
use crate::preprocess::{preprocess, Beat};
use crate::riv::{extract_all, RivSeries};
use crate::signal_io::PpgRecord;
use crate::spectral::{analyze_series, RrEstimate, SpectrumAnalyzer, WindowGrid};

/// Everything computed for one recording before fusion.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub beats: Vec<Beat>,
    pub rivs: [RivSeries; 5],
    pub grid: WindowGrid,
    /// one row per window, columns in `RivKind::ALL` order, gated at t = 0
    pub estimates: Vec<[RrEstimate; 5]>,
}

impl Analysis {
    /// Fuses every window with `method` at threshold `t`.
    pub fn fuse(&self, method: Method, t: f64) -> Result<Vec<FusionResult>> {
        fuse_all(&self.estimates, method, t)
    }
}

pub fn fuse_all(estimates: &[[RrEstimate; 5]], method: Method, t: f64) -> Result<Vec<FusionResult>> {
    estimates
        .iter()
        .enumerate()
        .map(|(w, row)| {
            let mut r = method.fuse(row, t)?;
            r.window_index = w;
            Ok(r)
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct Pipeline {
    analyzer: SpectrumAnalyzer,
}

impl Pipeline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn analyzer(&self) -> &SpectrumAnalyzer {
        &self.analyzer
    }

    pub fn analyze(&self, record: &PpgRecord) -> Result<Analysis> {
        let beats = preprocess(record)?;
        let duration = record.duration_s();
        let rivs = extract_all(&beats, duration)?;
        let grid = WindowGrid::new(duration);
        let mut columns = Vec::with_capacity(5);
        for series in &rivs {
            columns.push(analyze_series(&self.analyzer, series, &grid, 0.0)?);
        }
        let estimates = (0..grid.len())
            .map(|w| std::array::from_fn(|k| columns[k][w]))
            .collect();
        Ok(Analysis {
            beats,
            rivs,
            grid,
            estimates,
        })
    }
}

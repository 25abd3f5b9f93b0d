//! Per-subject scoring, threshold sweeps and the cross-method benchmark report.

mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionResult, Method};
use crate::pipeline::fuse_all;
use crate::signal_io::ReferenceRr;
use crate::spectral::{check_threshold, RrEstimate, WindowGrid, DEFAULT_THRESHOLD};

pub use stats::{
    agreement, bonferroni, median, pearson, percentile, ranks, sample_sd, spearman, wilcoxon_signed_rank,
    AgreementStats, EXACT_MAX_N, LOA_Z,
};

/// Reference rate for a window: mean of the annotations inside it, or the
/// linear interpolation at the window centre when none fall inside.
pub fn reference_at(reference: &ReferenceRr, window: (f64, f64)) -> f64 {
    let (start, end) = window;
    let t = reference.times_s();
    let rr = reference.rr();
    let inside: Vec<f64> = t
        .iter()
        .zip(rr)
        .filter(|(&ti, _)| ti >= start && ti <= end)
        .map(|(_, &r)| r)
        .collect();
    if !inside.is_empty() {
        return inside.iter().sum::<f64>() / inside.len() as f64;
    }
    let centre = 0.5 * (start + end);
    let j = t.partition_point(|&ti| ti <= centre);
    if j == 0 {
        return rr[0];
    }
    if j == t.len() {
        return rr[j - 1];
    }
    let (t0, t1) = (t[j - 1], t[j]);
    if t1 == t0 {
        return rr[j];
    }
    rr[j - 1] + (rr[j] - rr[j - 1]) * (centre - t0) / (t1 - t0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub id: String,
    pub method: Method,
    pub t: f64,
    /// absent when no window was retained
    pub rmse: Option<f64>,
    pub retention: f64,
    pub retained: usize,
    pub total: usize,
    /// (estimated, reference) for each retained window
    pub pairs: Vec<(f64, f64)>,
}

pub fn score_subject(
    id: &str,
    method: Method,
    t: f64,
    fusions: &[FusionResult],
    grid: &WindowGrid,
    reference: &ReferenceRr,
) -> SubjectResult {
    let pairs: Vec<(f64, f64)> = fusions
        .iter()
        .filter(|f| f.retained)
        .filter_map(|f| {
            let est = f.rr_fusion?;
            let window = *grid.windows.get(f.window_index)?;
            Some((est, reference_at(reference, window)))
        })
        .collect();
    let total = grid.len();
    let rmse = (!pairs.is_empty())
        .then(|| (pairs.iter().map(|(e, r)| (e - r).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt());
    SubjectResult {
        id: id.to_string(),
        method,
        t,
        rmse,
        retention: if total == 0 { 0.0 } else { pairs.len() as f64 / total as f64 },
        retained: pairs.len(),
        total,
        pairs,
    }
}

/// Window estimates and reference for one subject, ready to fuse at any threshold.
#[derive(Debug, Clone)]
pub struct SubjectData {
    pub id: String,
    pub grid: WindowGrid,
    pub estimates: Vec<[RrEstimate; 5]>,
    pub reference: ReferenceRr,
}

impl SubjectData {
    pub fn score(&self, method: Method, t: f64) -> Result<SubjectResult> {
        let fusions = fuse_all(&self.estimates, method, t)?;
        Ok(score_subject(&self.id, method, t, &fusions, &self.grid, &self.reference))
    }
}

/// Thresholds `min, min + step, …, max` (inclusive, within rounding).
pub fn threshold_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    check_threshold(min)?;
    check_threshold(max)?;
    if min > max {
        return Err(Error::Parameter(format!("t-min {min} exceeds t-max {max}")));
    }
    if !(step > 0.0) {
        return Err(Error::Parameter("t-step must be positive".into()));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| ((min + i as f64 * step) * 1e12).round() / 1e12).collect())
}

pub fn default_threshold_grid() -> Vec<f64> {
    threshold_grid(0.0, 0.3, 0.01).expect("static grid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t: f64,
    pub rmse_p25: Option<f64>,
    pub rmse_median: Option<f64>,
    pub rmse_p75: Option<f64>,
    pub retention_median: f64,
}

/// CIF across a threshold grid; percentiles are taken across subjects.
pub fn sweep(subjects: &[SubjectData], t_grid: &[f64]) -> Result<Vec<SweepRow>> {
    if subjects.is_empty() {
        return Err(Error::Parameter("sweep needs at least one subject".into()));
    }
    t_grid
        .iter()
        .map(|&t| {
            let results = subjects
                .iter()
                .map(|s| s.score(Method::Cif, t))
                .collect::<Result<Vec<_>>>()?;
            let rmses: Vec<f64> = results.iter().filter_map(|r| r.rmse).collect();
            let retentions: Vec<f64> = results.iter().map(|r| r.retention).collect();
            Ok(SweepRow {
                t,
                rmse_p25: percentile(&rmses, 25.0),
                rmse_median: percentile(&rmses, 50.0),
                rmse_p75: percentile(&rmses, 75.0),
                retention_median: median(&retentions).unwrap_or(0.0),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub median_rmse: Option<f64>,
    pub median_retention: f64,
    pub subjects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: Method,
    pub b: Method,
    /// `rmse` or `retention`
    pub metric: String,
    pub n: usize,
    pub p: Option<f64>,
    pub p_bonferroni: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub t: f64,
    pub summaries: Vec<MethodSummary>,
    pub comparisons: Vec<Comparison>,
    pub agreement: Option<AgreementStats>,
    pub skipped: Vec<(String, String)>,
    pub results: Vec<SubjectResult>,
}

fn compare(results: &[SubjectResult], a: Method, b: Method, metric: &str, comparisons: usize) -> Comparison {
    let value = |r: &SubjectResult| match metric {
        "rmse" => r.rmse,
        _ => Some(r.retention),
    };
    let mut xa = Vec::new();
    let mut xb = Vec::new();
    for ra in results.iter().filter(|r| r.method == a) {
        if let Some(rb) = results.iter().find(|r| r.method == b && r.id == ra.id) {
            if let (Some(va), Some(vb)) = (value(ra), value(rb)) {
                xa.push(va);
                xb.push(vb);
            }
        }
    }
    let p = wilcoxon_signed_rank(&xa, &xb).ok();
    Comparison {
        a,
        b,
        metric: metric.to_string(),
        n: xa.len(),
        p,
        p_bonferroni: p.map(|p| bonferroni(p, comparisons)),
    }
}

/// Scores every subject with every method at `t` and aggregates.
pub fn benchmark(subjects: &[SubjectData], methods: &[Method], t: f64) -> Result<BenchmarkReport> {
    check_threshold(t)?;
    let mut results = Vec::with_capacity(subjects.len() * methods.len());
    for s in subjects {
        for &m in methods {
            results.push(s.score(m, t)?);
        }
    }
    let summaries = methods
        .iter()
        .map(|&m| {
            let rs: Vec<&SubjectResult> = results.iter().filter(|r| r.method == m).collect();
            let rmses: Vec<f64> = rs.iter().filter_map(|r| r.rmse).collect();
            let rets: Vec<f64> = rs.iter().map(|r| r.retention).collect();
            MethodSummary {
                method: m,
                median_rmse: median(&rmses),
                median_retention: median(&rets).unwrap_or(0.0),
                subjects: rs.len(),
            }
        })
        .collect();

    let mut pairs = Vec::new();
    for (i, &a) in methods.iter().enumerate() {
        for &b in &methods[i + 1..] {
            pairs.push((a, b));
        }
    }
    let mut comparisons = Vec::new();
    for metric in ["rmse", "retention"] {
        for &(a, b) in &pairs {
            comparisons.push(compare(&results, a, b, metric, pairs.len()));
        }
    }

    let pooled: Vec<(f64, f64)> = results
        .iter()
        .filter(|r| r.method == Method::Cif)
        .flat_map(|r| r.pairs.iter().copied())
        .collect();
    let agreement = agreement(&pooled).ok();

    Ok(BenchmarkReport {
        t,
        summaries,
        comparisons,
        agreement,
        skipped: Vec::new(),
        results,
    })
}

impl BenchmarkReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

pub fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riv::RivKind;
    use crate::spectral::RateEstimate;

    fn constant_ref(rr: f64, secs: f64) -> ReferenceRr {
        let n = (secs / 2.0) as usize + 1;
        ReferenceRr::new((0..n).map(|i| i as f64 * 2.0).collect(), vec![rr; n]).unwrap()
    }

    #[test]
    fn reference_alignment() {
        let r = constant_ref(20.0, 480.0);
        assert_eq!(reference_at(&r, (0.0, 32.0)), 20.0);
        assert_eq!(reference_at(&r, (448.0, 480.0)), 20.0);

        // step 15 -> 25 at the window centre, symmetric samples
        let step = ReferenceRr::new(vec![0.0, 8.0, 24.0, 32.0], vec![15.0, 15.0, 25.0, 25.0]).unwrap();
        assert_eq!(reference_at(&step, (0.0, 32.0)), 20.0);

        let sparse = ReferenceRr::new(vec![0.0, 100.0], vec![10.0, 20.0]).unwrap();
        assert!((reference_at(&sparse, (34.0, 66.0)) - 15.0).abs() < 1e-12);
    }

    fn fusion(w: usize, rr: Option<f64>) -> FusionResult {
        let mut f = FusionResult::gap(w);
        if let Some(r) = rr {
            f.rr_fusion = Some(r);
            f.retained = true;
        }
        f
    }

    #[test]
    fn scoring_examples() {
        let grid = WindowGrid::new(480.0);
        let reference = constant_ref(18.0, 480.0);
        let perfect: Vec<FusionResult> = (0..225).map(|w| fusion(w, Some(18.0))).collect();
        let s = score_subject("a", Method::Cif, 0.13, &perfect, &grid, &reference);
        assert_eq!((s.rmse, s.retention), (Some(0.0), 1.0));

        let off: Vec<FusionResult> = (0..225).map(|w| fusion(w, (w % 2 == 0).then_some(20.0))).collect();
        let s = score_subject("a", Method::Cif, 0.13, &off, &grid, &reference);
        assert!((s.rmse.unwrap() - 2.0).abs() < 1e-12);

        let some: Vec<FusionResult> = (0..225).map(|w| fusion(w, (w < 90).then_some(18.0))).collect();
        let s = score_subject("a", Method::Cif, 0.13, &some, &grid, &reference);
        assert_eq!(s.retention, 0.4);

        let none: Vec<FusionResult> = (0..225).map(|w| fusion(w, None)).collect();
        let s = score_subject("a", Method::Cif, 0.13, &none, &grid, &reference);
        assert_eq!((s.rmse, s.retention), (None, 0.0));
    }

    #[test]
    fn threshold_grids() {
        assert_eq!(default_threshold_grid().len(), 31);
        assert_eq!(default_threshold_grid()[13], 0.13);
        assert_eq!(threshold_grid(0.0, 0.3, 0.1).unwrap(), vec![0.0, 0.1, 0.2, 0.3]);
        assert!(threshold_grid(0.3, 0.1, 0.01).is_err());
        assert!(threshold_grid(0.0, 1.5, 0.01).is_err());
    }

    fn subject(id: &str, ni: f64) -> SubjectData {
        let grid = WindowGrid::new(60.0);
        let estimates = (0..grid.len())
            .map(|w| {
                std::array::from_fn(|k| {
                    RrEstimate::measured(
                        RivKind::ALL[k],
                        w,
                        RateEstimate {
                            rr: Some(15.0 + k as f64 * 0.1),
                            ni: ni * (1.0 + k as f64 * 0.2),
                        },
                        false,
                    )
                })
            })
            .collect();
        SubjectData {
            id: id.into(),
            grid,
            estimates,
            reference: constant_ref(15.0, 60.0),
        }
    }

    #[test]
    fn sweep_single_subject() {
        let rows = sweep(&[subject("s", 0.1)], &default_threshold_grid()).unwrap();
        assert_eq!(rows.len(), 31);
        assert_eq!(rows[0].retention_median, 1.0);
        for r in &rows {
            assert_eq!(r.rmse_p25, r.rmse_median);
            assert_eq!(r.rmse_p75, r.rmse_median);
        }
        for w in rows.windows(2) {
            assert!(w[1].retention_median <= w[0].retention_median);
        }
        // ni tops out at 0.18 for the last kind
        assert_eq!(rows[30].retention_median, 0.0);
    }

    #[test]
    fn benchmark_report_shape() {
        let subjects: Vec<SubjectData> = (0..6).map(|i| subject(&format!("s{i}"), 0.1 + 0.01 * i as f64)).collect();
        let rep = benchmark(&subjects, &Method::ALL, 0.13).unwrap();
        assert_eq!(rep.results.len(), 18);
        assert_eq!(rep.comparisons.len(), 6);
        assert!(rep.summary(Method::Sf5).unwrap().median_retention == 1.0);
        assert!(rep.agreement.is_some());
    }
}

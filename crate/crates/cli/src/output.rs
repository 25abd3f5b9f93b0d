//! CSV and JSON writers for command output. Every file starts with a
//! `# rrcif <version> ...` comment line (JSON carries a `tool` field instead).

use std::io::{Result, Write};

use serde_json::{json, Value};

use rrcif::evaluation::{BenchmarkReport, SubjectResult, SweepRow};
use rrcif::fusion::FusionResult;
use rrcif::preprocess::Beat;
use rrcif::riv::RivSeries;
use rrcif::spectral::{PowerSpectrum, WindowGrid};

pub fn header(note: &str) -> String {
    format!("# rrcif {} {note}", rrcif::VERSION)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_estimates(w: &mut dyn Write, header: &str, grid: &WindowGrid, fused: &[FusionResult]) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "window_start_s,rr_fusion,c_fusion,retained,contributors")?;
    for f in fused {
        let start = grid.windows.get(f.window_index).map_or(f64::NAN, |w| w.0);
        let names: Vec<&str> = f.contributors.iter().map(|k| k.name()).collect();
        writeln!(
            w,
            "{start},{},{},{},{}",
            opt(f.rr_fusion),
            opt(f.c_fusion),
            f.retained,
            names.join(";")
        )?;
    }
    Ok(())
}

pub fn write_beats(w: &mut dyn Write, header: &str, beats: &[Beat]) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "t_foot,v_foot,t_peak,v_peak,width50,rise25_75,period,artifact")?;
    for b in beats {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            b.t_foot,
            b.v_foot,
            b.t_peak,
            b.v_peak,
            b.width50,
            b.rise25_75,
            opt(b.period),
            b.artifact
        )?;
    }
    Ok(())
}

pub fn write_riv(w: &mut dyn Write, header: &str, series: &RivSeries) -> Result<()> {
    writeln!(w, "{header} kind={}", series.kind)?;
    writeln!(w, "t,value,artifact")?;
    for (i, (v, a)) in series.values.iter().zip(&series.artifact_mask).enumerate() {
        writeln!(w, "{},{v},{a}", series.time(i))?;
    }
    Ok(())
}

pub fn write_spectrum(w: &mut dyn Write, header: &str, s: &PowerSpectrum) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "f,P,P_fit,P_out")?;
    for i in 0..s.freqs.len() {
        writeln!(w, "{},{},{},{}", s.freqs[i], s.p[i], s.p_fit[i], s.p_out[i])?;
    }
    Ok(())
}

pub fn write_subjects(w: &mut dyn Write, header: &str, results: &[SubjectResult]) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "id,method,t,rmse,retention")?;
    for r in results {
        writeln!(w, "{},{},{},{},{}", r.id, r.method, r.t, opt(r.rmse), r.retention)?;
    }
    Ok(())
}

pub fn write_sweep(w: &mut dyn Write, header: &str, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "t,rmse_p25,rmse_median,rmse_p75,retention_median")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.t,
            opt(r.rmse_p25),
            opt(r.rmse_median),
            opt(r.rmse_p75),
            r.retention_median
        )?;
    }
    Ok(())
}

pub fn report_json(report: &BenchmarkReport) -> Value {
    let skipped: Vec<Value> = report
        .skipped
        .iter()
        .map(|(id, reason)| json!({ "id": id, "reason": reason }))
        .collect();
    json!({
        "tool": format!("rrcif {}", rrcif::VERSION),
        "t": report.t,
        "subjects": report.results.iter().map(|r| &r.id).collect::<std::collections::BTreeSet<_>>().len(),
        "summaries": report.summaries,
        "comparisons": report.comparisons,
        "agreement": report.agreement,
        "skipped": skipped,
    })
}

pub fn write_json(w: &mut dyn Write, value: &Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)
}

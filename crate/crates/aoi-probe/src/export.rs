//! CSV writers for solver tables, threshold reports, traces, and learning
//! curves. All columns are stable and documented here; callers own the
//! files. Floats are printed with enough digits to round-trip.

use std::io::Write;

use crate::channel::{IidChannel, MarkovChannel};
use crate::qlearning::CurvePoint;
use crate::solver::iid_multi::ThresholdReportN;
use crate::solver::iid_single::{Solution, ThresholdReport};
use crate::solver::markov::ThresholdReportM;
use crate::Result;

fn fmt_f64(x: f64) -> String {
    format!("{x:.12}")
}

fn fmt_opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn fmt_opt_u32(x: Option<u32>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Columns: `E,T,action,J,V`. `action` is `probe` or `idle`; `V` is empty
/// below the probing energy where no probe branch exists.
pub fn write_values_iid<W: Write>(out: W, solution: &Solution) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["E", "T", "action", "J", "V"])?;
    let tables = &solution.tables;
    for (e, t) in tables.grid.iter() {
        let probe = e >= tables.probe_energy_min && solution.policy.probe(e, t);
        let v = (e >= tables.probe_energy_min).then(|| tables.v(e, t));
        w.write_record([
            e.to_string(),
            t.to_string(),
            if probe { "probe" } else { "idle" }.to_string(),
            fmt_f64(tables.j(e, t)),
            fmt_opt_f64(v),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `E,T_th,truncation_affected`. `T_th` is empty where probing is
/// never optimal.
pub fn write_probe_thresholds_iid<W: Write>(out: W, report: &ThresholdReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["E", "T_th", "truncation_affected"])?;
    for e in report.probe_energy_min..=report.grid.buffer {
        let t_th = report.probe_age_threshold[e as usize];
        let flagged = t_th.map(|t| report.truncation_affected(t)).unwrap_or(false);
        w.write_record([e.to_string(), fmt_opt_u32(t_th), flagged.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `E,T,p_th,truncation_affected`. `p_th` is empty where sampling
/// is never optimal at that state.
pub fn write_sample_thresholds_iid<W: Write>(out: W, report: &ThresholdReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["E", "T", "p_th", "truncation_affected"])?;
    for e in report.probe_energy_min..=report.grid.buffer {
        for t in 1..=report.grid.age_cap {
            let p_th = report.sample_prob_threshold[e as usize][(t - 1) as usize];
            w.write_record([
                e.to_string(),
                t.to_string(),
                fmt_opt_f64(p_th),
                report.truncation_affected(t).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns: `iteration,sup_norm_error`.
pub fn write_error_trace<W: Write>(out: W, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "sup_norm_error"])?;
    for (i, e) in trace.iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt_f64(*e)])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `E,T1..TN,p_th,truncation_affected` over canonical
/// (non-increasing) age vectors.
pub fn write_sample_thresholds_multi<W: Write>(out: W, report: &ThresholdReportN) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = report
        .sample_prob_threshold
        .first()
        .map(|(_, ages, _)| ages.len())
        .unwrap_or(0);
    let mut header = vec!["E".to_string()];
    header.extend((1..=n).map(|k| format!("T{k}")));
    header.push("p_th".into());
    header.push("truncation_affected".into());
    w.write_record(&header)?;
    for (e, ages, p_th) in &report.sample_prob_threshold {
        let mut rec = vec![e.to_string()];
        rec.extend(ages.iter().map(|t| t.to_string()));
        rec.push(fmt_opt_f64(*p_th));
        rec.push(report.truncation_affected(ages[0]).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `E,T2..TN,T_th,truncation_affected`: the probing threshold on
/// the maximum age given the other (sorted) ages.
pub fn write_probe_thresholds_multi<W: Write>(out: W, report: &ThresholdReportN) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n_rest = report
        .probe_age_threshold
        .first()
        .map(|(_, rest, _)| rest.len())
        .unwrap_or(0);
    let mut header = vec!["E".to_string()];
    header.extend((2..=n_rest + 1).map(|k| format!("T{k}")));
    header.push("T_th".into());
    header.push("truncation_affected".into());
    w.write_record(&header)?;
    for (e, rest, t_th) in &report.probe_age_threshold {
        let mut rec = vec![e.to_string()];
        rec.extend(rest.iter().map(|t| t.to_string()));
        rec.push(fmt_opt_u32(*t_th));
        rec.push(
            t_th.map(|t| report.truncation_affected(t))
                .unwrap_or(false)
                .to_string(),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `E,tau,C_prev,H,T_th,truncation_affected` (C_prev is the
/// external 1-based state index).
pub fn write_probe_thresholds_markov<W: Write>(
    out: W,
    report: &ThresholdReportM,
    channel: &MarkovChannel,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["E", "tau", "C_prev", "H", "T_th", "truncation_affected"])?;
    for &(e, tau, c_prev, h, t_th) in &report.probe_age_threshold {
        w.write_record([
            e.to_string(),
            tau.to_string(),
            channel.state(c_prev).index.to_string(),
            h.label().to_string(),
            fmt_opt_u32(t_th),
            t_th.map(|t| report.truncation_affected(t))
                .unwrap_or(false)
                .to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `E,T,H,p_th,truncation_affected`.
pub fn write_sample_thresholds_markov<W: Write>(out: W, report: &ThresholdReportM) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["E", "T", "H", "p_th", "truncation_affected"])?;
    for &(e, t, h, p_th) in &report.sample_prob_threshold {
        w.write_record([
            e.to_string(),
            t.to_string(),
            h.label().to_string(),
            fmt_opt_f64(p_th),
            report.truncation_affected(t).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `E,C,H,T_th,truncation_affected` — the post-probe age-threshold
/// representation of the sampling policy.
pub fn write_post_probe_thresholds_markov<W: Write>(
    out: W,
    report: &ThresholdReportM,
    channel: &MarkovChannel,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["E", "C", "H", "T_th", "truncation_affected"])?;
    for &(e, c, h, t_th) in &report.post_probe_age_threshold {
        w.write_record([
            e.to_string(),
            channel.state(c).index.to_string(),
            h.label().to_string(),
            fmt_opt_u32(t_th),
            t_th.map(|t| report.truncation_affected(t))
                .unwrap_or(false)
                .to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `slot,window_aoi,epsilon,mean_step_size`.
pub fn write_learning_curve<W: Write>(out: W, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "window_aoi", "epsilon", "mean_step_size"])?;
    for p in curve {
        w.write_record([
            p.slot.to_string(),
            fmt_f64(p.window_aoi),
            fmt_f64(p.epsilon),
            fmt_f64(p.mean_step_size),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sanity helper used by tests: external channel indices paired with
/// success probabilities in internal order.
pub fn channel_order(channel: &IidChannel) -> Vec<(usize, f64)> {
    channel
        .states()
        .iter()
        .map(|s| (s.index, s.success_prob))
        .collect()
}

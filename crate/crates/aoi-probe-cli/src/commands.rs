//! One function per subcommand: solve the requested model, write the
//! documented CSVs plus metadata, all through atomic file writes.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use aoi_probe::channel::{IidChannel, MarkovChannel};
use aoi_probe::config::SystemConfig;
use aoi_probe::energy::{ArrivalDistribution, HarvestChain};
use aoi_probe::export;
use aoi_probe::presets;
use aoi_probe::qlearning::iid::{run_learning_iid_from, QTablesIid};
use aoi_probe::qlearning::markov::{run_learning_markov_from, QTablesMarkov};
use aoi_probe::qlearning::{
    ChannelKnowledge, ExplorationSchedule, LearningConfig, StepSizeSchedule,
};
use aoi_probe::sim::policies::{UniformRandomIid, UniformRandomMarkov};
use aoi_probe::sim::{
    self, evaluate_iid_policy, evaluate_markov_policy, stationary_aoi_iid, EnvIid, EnvMarkov,
    EvalReport,
};
use aoi_probe::solver::iid_multi::{
    extract_thresholds_multi, value_iteration_multi, value_iteration_multi_canonical, MultiGrid,
    MultiSolveOptions,
};
use aoi_probe::solver::iid_single::{extract_thresholds, value_iteration};
use aoi_probe::solver::markov::{extract_thresholds_markov, value_iteration_markov};
use aoi_probe::solver::SolveOptions;

use crate::spec::{self, parse_model, resolve, write_metadata, ModelKind, Resolved};
use crate::CommonArgs;

fn iid_parts(resolved: &Resolved) -> Result<(SystemConfig, IidChannel, ArrivalDistribution)> {
    let exp = &resolved.experiment;
    if exp.channel.is_markov() {
        bail!(aoi_probe::Error::InvalidConfig(
            "this command expects an i.i.d. channel; use the markov command or a fig3/fig4 preset \
             with solve-markov"
                .into()
        ));
    }
    Ok((
        exp.system.clone(),
        exp.channel.build_iid().map_err(anyhow::Error::from)?,
        exp.energy
            .build_distribution()
            .map_err(anyhow::Error::from)?,
    ))
}

fn markov_parts(
    resolved: &Resolved,
) -> Result<(
    SystemConfig,
    MarkovChannel,
    ArrivalDistribution,
    HarvestChain,
)> {
    let exp = &resolved.experiment;
    if !exp.channel.is_markov() {
        bail!(aoi_probe::Error::InvalidConfig(
            "this command expects a Markov channel (transition_matrix block)".into()
        ));
    }
    let chain = exp.energy.harvest_chain.unwrap_or(HarvestChain {
        to_non_harvesting: 0.0,
        to_harvesting: 1.0,
    });
    Ok((
        exp.system.clone(),
        exp.channel.build_markov().map_err(anyhow::Error::from)?,
        exp.energy
            .build_distribution()
            .map_err(anyhow::Error::from)?,
        chain,
    ))
}

fn write_csv(
    out: &std::path::Path,
    name: &str,
    build: impl FnOnce(&mut Vec<u8>) -> aoi_probe::Result<()>,
) -> Result<()> {
    let mut buf = Vec::new();
    build(&mut buf).map_err(anyhow::Error::from)?;
    spec::write_atomic(&out.join(name), &buf)?;
    Ok(())
}

pub fn solve(common: &CommonArgs, tol: f64) -> Result<()> {
    let resolved = resolve(common, Some(ModelKind::Iid))?;
    let (cfg, ch, en) = iid_parts(&resolved)?;
    let opts = SolveOptions {
        tol,
        ..Default::default()
    };
    let sol = value_iteration(&cfg, &ch, &en, &opts).map_err(anyhow::Error::from)?;
    let report = extract_thresholds(&sol.tables, &sol.policy, &ch).map_err(anyhow::Error::from)?;

    let out = write_metadata(
        &resolved,
        common,
        "solve",
        serde_json::json!({
            "tolerance": tol,
            "iterations": sol.iterations,
            "final_residual": sol.error_trace.last(),
            "lambda": en.mean(),
            "probe_threshold_monotonicity_violations": report.probe_monotonicity_violations.len(),
        }),
    )?;
    write_csv(&out, "values.csv", |w| export::write_values_iid(w, &sol))?;
    write_csv(&out, "probe_thresholds.csv", |w| {
        export::write_probe_thresholds_iid(w, &report)
    })?;
    write_csv(&out, "sample_thresholds.csv", |w| {
        export::write_sample_thresholds_iid(w, &report)
    })?;
    write_csv(&out, "error_trace.csv", |w| {
        export::write_error_trace(w, &sol.error_trace)
    })?;
    println!(
        "solved {} states in {} iterations; outputs in {}",
        sol.tables.grid.len(),
        sol.iterations,
        out.display()
    );
    Ok(())
}

pub fn solve_multi(
    common: &CommonArgs,
    tol: f64,
    processes: Option<usize>,
    cell_budget: u64,
    fix_ages: Option<Vec<u32>>,
    canonical: bool,
) -> Result<()> {
    let mut resolved = resolve(common, Some(ModelKind::Iid))?;
    // Preset defaults for the multi-process experiment: three processes
    // and a small age cap keep the T_max^N grid tractable.
    if common.preset.is_some() {
        if common.t_max.is_none() {
            resolved.experiment.system.age_cap = 10;
        }
        if processes.is_none() {
            resolved.experiment.system.num_processes = 3;
        }
    }
    if let Some(n) = processes {
        resolved.experiment.system.num_processes = n;
    }
    resolved.experiment = resolved
        .experiment
        .validated()
        .map_err(anyhow::Error::from)?;

    let (cfg, ch, en) = iid_parts(&resolved)?;
    let opts = MultiSolveOptions {
        base: SolveOptions {
            tol,
            ..Default::default()
        },
        cell_budget,
    };
    let sol = value_iteration_multi(&cfg, &ch, &en, &opts).map_err(anyhow::Error::from)?;
    let report =
        extract_thresholds_multi(&sol.tables, &sol.policy, &ch).map_err(anyhow::Error::from)?;

    let mut canonical_meta = serde_json::Value::Null;
    if canonical {
        let compact =
            value_iteration_multi_canonical(&cfg, &ch, &en, &opts).map_err(anyhow::Error::from)?;
        let (stored, dense) = compact.compression();
        let grid = MultiGrid::new(&cfg).map_err(anyhow::Error::from)?;
        let mut ages = vec![0u32; cfg.num_processes];
        let mut max_diff = 0.0f64;
        for e in 0..=cfg.buffer_capacity {
            for rank in 0..grid.age_cells() {
                grid.decode_ages(rank, &mut ages);
                max_diff = max_diff.max((sol.tables.j(e, &ages) - compact.j(e, &ages)).abs());
            }
        }
        canonical_meta = serde_json::json!({
            "stored_cells": stored,
            "dense_cells": dense,
            "max_abs_diff_vs_full": max_diff,
        });
    }

    let out = write_metadata(
        &resolved,
        common,
        "solve-multi",
        serde_json::json!({
            "tolerance": tol,
            "iterations": sol.iterations,
            "final_residual": sol.error_trace.last(),
            "lambda": en.mean(),
            "cell_budget": cell_budget,
            "probe_threshold_monotonicity_violations": report.probe_monotonicity_violations.len(),
            "canonical": canonical_meta,
        }),
    )?;
    write_csv(&out, "probe_thresholds_multi.csv", |w| {
        export::write_probe_thresholds_multi(w, &report)
    })?;
    write_csv(&out, "sample_thresholds_multi.csv", |w| {
        export::write_sample_thresholds_multi(w, &report)
    })?;
    write_csv(&out, "error_trace.csv", |w| {
        export::write_error_trace(w, &sol.error_trace)
    })?;

    if let Some(mut rest) = fix_ages {
        if rest.len() + 1 != cfg.num_processes {
            bail!(aoi_probe::Error::InvalidConfig(format!(
                "--fix-ages needs N - 1 = {} values, got {}",
                cfg.num_processes - 1,
                rest.len()
            )));
        }
        rest.sort_unstable_by(|a, b| b.cmp(a));
        let mut probe_buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut probe_buf);
            w.write_record(["E", "T_th"])?;
            for (e, r, t_th) in &report.probe_age_threshold {
                if *r == rest {
                    w.write_record([
                        e.to_string(),
                        t_th.map(|t| t.to_string()).unwrap_or_default(),
                    ])?;
                }
            }
            w.flush()?;
        }
        spec::write_atomic(&out.join("slice_probe_thresholds.csv"), &probe_buf)?;

        let mut sample_buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut sample_buf);
            w.write_record(["E", "T1", "p_th"])?;
            for (e, ages, p_th) in &report.sample_prob_threshold {
                if ages[1..] == rest[..] {
                    w.write_record([
                        e.to_string(),
                        ages[0].to_string(),
                        p_th.map(|p| format!("{p:.12}")).unwrap_or_default(),
                    ])?;
                }
            }
            w.flush()?;
        }
        spec::write_atomic(&out.join("slice_sample_thresholds.csv"), &sample_buf)?;
    }

    println!(
        "solved N={} grid ({} cells) in {} iterations; outputs in {}",
        cfg.num_processes,
        sol.tables.grid.cells(),
        sol.iterations,
        out.display()
    );
    Ok(())
}

pub fn solve_markov(common: &CommonArgs, tol: f64) -> Result<()> {
    let resolved = resolve(common, Some(ModelKind::Markov))?;
    let (cfg, ch, en, chain) = markov_parts(&resolved)?;
    let opts = SolveOptions {
        tol,
        ..Default::default()
    };
    let sol = value_iteration_markov(&cfg, &ch, &en, &chain, &opts).map_err(anyhow::Error::from)?;
    let report = extract_thresholds_markov(&sol.tables, &sol.policy, &ch);

    let out = write_metadata(
        &resolved,
        common,
        "solve-markov",
        serde_json::json!({
            "tolerance": tol,
            "iterations": sol.iterations,
            "final_residual": sol.error_trace.last(),
            "lambda": en.mean(),
            "tau_cap_mixing_gap": sol.tau_cap_mixing_gap,
            "conjecture_violations": {
                "probe_in_age": report.probe_violations.len(),
                "sample_in_p": report.sample_violations.len(),
                "post_probe_in_age": report.post_probe_violations.len(),
                "value_in_age": report.value_age_violations.len(),
                "w_in_p": report.w_channel_violations.len(),
            },
        }),
    )?;
    write_csv(&out, "probe_thresholds_markov.csv", |w| {
        export::write_probe_thresholds_markov(w, &report, &ch)
    })?;
    write_csv(&out, "sample_thresholds_markov.csv", |w| {
        export::write_sample_thresholds_markov(w, &report)
    })?;
    write_csv(&out, "post_probe_thresholds_markov.csv", |w| {
        export::write_post_probe_thresholds_markov(w, &report, &ch)
    })?;
    write_csv(&out, "error_trace.csv", |w| {
        export::write_error_trace(w, &sol.error_trace)
    })?;
    println!(
        "solved Markov grid in {} iterations ({} conjecture-violation cells); outputs in {}",
        sol.iterations,
        report.total_violations(),
        out.display()
    );
    Ok(())
}

pub struct LearnParams {
    pub common: CommonArgs,
    pub model: Option<String>,
    pub seeds: u64,
    pub seed_base: u64,
    pub horizon: u64,
    pub epsilon: f64,
    pub epsilon_min: Option<f64>,
    pub epsilon_decay: Option<u64>,
    pub d0: f64,
    pub omega: f64,
    pub unknown_p: bool,
    pub optimistic: Option<f64>,
    pub resume_from: Option<PathBuf>,
    pub eval_horizon: u64,
    pub eval_seeds: u64,
}

pub fn learn(p: LearnParams) -> Result<()> {
    let model = parse_model(&p.model)?;
    let mut resolved = resolve(&p.common, model)?;
    // Learning defaults to the small age cap unless overridden.
    if p.common.preset.is_some() && p.common.t_max.is_none() {
        resolved.experiment.system.age_cap = SystemConfig::DEFAULT_AGE_CAP_LEARN;
        resolved.experiment = resolved
            .experiment
            .validated()
            .map_err(anyhow::Error::from)?;
    }

    let lc = LearningConfig {
        steps: StepSizeSchedule::new(p.d0, p.omega).map_err(anyhow::Error::from)?,
        exploration: ExplorationSchedule::new(
            p.epsilon,
            p.epsilon_min.unwrap_or(p.epsilon),
            p.epsilon_decay,
        )
        .map_err(anyhow::Error::from)?,
        horizon: p.horizon,
        mode: if p.unknown_p {
            ChannelKnowledge::Unknown
        } else {
            ChannelKnowledge::Known
        },
        optimistic_init: p.optimistic,
        window: 10_000,
        report_every: 1_000,
    };

    let meta_extra = serde_json::json!({
        "seeds": (0..p.seeds).map(|k| p.seed_base + k).collect::<Vec<_>>(),
        "horizon": p.horizon,
        "epsilon": p.epsilon,
        "epsilon_min": p.epsilon_min,
        "epsilon_decay": p.epsilon_decay,
        "d0": p.d0,
        "omega": p.omega,
        "channel_knowledge": if p.unknown_p { "unknown" } else { "known" },
        "eval_horizon": p.eval_horizon,
        "eval_seeds": p.eval_seeds,
    });

    if resolved.experiment.channel.is_markov() {
        learn_markov(&p, &resolved, lc, meta_extra)
    } else {
        learn_iid(&p, &resolved, lc, meta_extra)
    }
}

fn reference_rows(out: &std::path::Path, rows: &[(String, EvalReport)]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["policy", "aoi", "ci_half_width", "horizon"])?;
        for (name, report) in rows {
            w.write_record([
                name.clone(),
                format!("{:.12}", report.mean),
                format!("{:.12}", report.ci_half_width),
                report.horizon.to_string(),
            ])?;
        }
        w.flush()?;
    }
    spec::write_atomic(&out.join("reference.csv"), &buf)?;
    Ok(())
}

fn learn_iid(
    p: &LearnParams,
    resolved: &Resolved,
    lc: LearningConfig,
    meta_extra: serde_json::Value,
) -> Result<()> {
    let (cfg, ch, en) = iid_parts(resolved)?;
    let vi =
        value_iteration(&cfg, &ch, &en, &SolveOptions::default()).map_err(anyhow::Error::from)?;
    let template = EnvIid::new(cfg.clone(), ch.clone(), en.clone(), 0);

    let resume: Option<QTablesIid> = match &p.resume_from {
        Some(path) => Some(
            serde_json::from_str(&std::fs::read_to_string(path)?)
                .with_context(|| format!("parsing Q tables from {}", path.display()))?,
        ),
        None => None,
    };

    let out = write_metadata(resolved, &p.common, "learn", meta_extra)?;
    let mut rows = vec![
        (
            "value_iteration".to_string(),
            evaluate_iid_policy(|_| &vi.policy, &template, p.eval_horizon, p.eval_seeds, 1)
                .map_err(anyhow::Error::from)?,
        ),
        (
            "uniform_random".to_string(),
            evaluate_iid_policy(
                |seed| UniformRandomIid::new(cfg.probe_feasible_energy(), 1, seed),
                &template,
                p.eval_horizon,
                p.eval_seeds,
                2,
            )
            .map_err(anyhow::Error::from)?,
        ),
    ];

    for k in 0..p.seeds {
        let seed = p.seed_base + k;
        let mut env = template.reseeded(seed);
        let (q, curve) =
            run_learning_iid_from(&mut env, &lc, seed.wrapping_mul(0x9E37), resume.clone())
                .map_err(anyhow::Error::from)?;
        write_csv(&out, &format!("learning_curve_seed{k}.csv"), |w| {
            export::write_learning_curve(w, &curve)
        })?;
        spec::write_atomic(
            &out.join(format!("qtables_seed{k}.json")),
            serde_json::to_string(&q)?.as_bytes(),
        )?;
        rows.push((
            format!("greedy_from_q_seed{k}"),
            evaluate_iid_policy(
                |_| q.greedy(),
                &template,
                p.eval_horizon,
                p.eval_seeds,
                3 + k,
            )
            .map_err(anyhow::Error::from)?,
        ));
    }
    reference_rows(&out, &rows)?;
    println!("learning outputs in {}", out.display());
    Ok(())
}

fn learn_markov(
    p: &LearnParams,
    resolved: &Resolved,
    lc: LearningConfig,
    meta_extra: serde_json::Value,
) -> Result<()> {
    let (cfg, ch, en, chain) = markov_parts(resolved)?;
    let vi = value_iteration_markov(&cfg, &ch, &en, &chain, &SolveOptions::default())
        .map_err(anyhow::Error::from)?;
    let template = EnvMarkov::new(cfg.clone(), ch.clone(), en.clone(), chain, 0);

    let resume: Option<QTablesMarkov> = match &p.resume_from {
        Some(path) => Some(
            serde_json::from_str(&std::fs::read_to_string(path)?)
                .with_context(|| format!("parsing Q tables from {}", path.display()))?,
        ),
        None => None,
    };

    let out = write_metadata(resolved, &p.common, "learn", meta_extra)?;
    let mut rows = vec![
        (
            "value_iteration".to_string(),
            evaluate_markov_policy(|_| &vi.policy, &template, p.eval_horizon, p.eval_seeds, 1)
                .map_err(anyhow::Error::from)?,
        ),
        (
            "uniform_random".to_string(),
            evaluate_markov_policy(
                |seed| UniformRandomMarkov::new(cfg.probe_feasible_energy(), seed),
                &template,
                p.eval_horizon,
                p.eval_seeds,
                2,
            )
            .map_err(anyhow::Error::from)?,
        ),
    ];

    for k in 0..p.seeds {
        let seed = p.seed_base + k;
        let mut env = template.reseeded(seed);
        let (q, curve) =
            run_learning_markov_from(&mut env, &lc, seed.wrapping_mul(0x9E37), resume.clone())
                .map_err(anyhow::Error::from)?;
        write_csv(&out, &format!("learning_curve_seed{k}.csv"), |w| {
            export::write_learning_curve(w, &curve)
        })?;
        spec::write_atomic(
            &out.join(format!("qtables_seed{k}.json")),
            serde_json::to_string(&q)?.as_bytes(),
        )?;
        rows.push((
            format!("greedy_from_q_seed{k}"),
            evaluate_markov_policy(
                |_| q.greedy(),
                &template,
                p.eval_horizon,
                p.eval_seeds,
                3 + k,
            )
            .map_err(anyhow::Error::from)?,
        ));
    }
    reference_rows(&out, &rows)?;
    println!("learning outputs in {}", out.display());
    Ok(())
}

pub fn simulate(
    common: &CommonArgs,
    model: Option<String>,
    horizon: u64,
    seeds: u64,
    seed_base: u64,
    trace_every: Option<u64>,
) -> Result<()> {
    let model = parse_model(&model)?;
    let resolved = resolve(common, model)?;
    if resolved.experiment.channel.is_markov() {
        return simulate_markov(common, &resolved, horizon, seeds, seed_base);
    }
    let (cfg, ch, en) = iid_parts(&resolved)?;

    // Multi-process systems use the N-process solver; the single-process
    // case additionally gets the exact chain cross-check.
    let (report, exact, sol_single) = if cfg.num_processes == 1 {
        let sol = value_iteration(&cfg, &ch, &en, &SolveOptions::default())
            .map_err(anyhow::Error::from)?;
        let template = EnvIid::new(cfg.clone(), ch.clone(), en.clone(), 0);
        let report = evaluate_iid_policy(|_| &sol.policy, &template, horizon, seeds, seed_base)
            .map_err(anyhow::Error::from)?;
        let exact = stationary_aoi_iid(&sol.policy, &cfg, &ch, &en);
        (report, Some(exact), Some(sol))
    } else {
        let sol = value_iteration_multi(&cfg, &ch, &en, &MultiSolveOptions::default())
            .map_err(anyhow::Error::from)?;
        let template = EnvIid::new(cfg.clone(), ch.clone(), en.clone(), 0);
        let report = evaluate_iid_policy(|_| &sol.policy, &template, horizon, seeds, seed_base)
            .map_err(anyhow::Error::from)?;
        (report, None, None)
    };

    let out = write_metadata(
        &resolved,
        common,
        "simulate",
        serde_json::json!({
            "horizon": horizon,
            "seeds": (0..seeds).map(|k| seed_base + k).collect::<Vec<_>>(),
            "exact_stationary_aoi": exact,
        }),
    )?;
    let eval_json = serde_json::json!({
        "report": report,
        "exact_stationary_aoi": exact,
    });
    spec::write_atomic(
        &out.join("eval_report.json"),
        serde_json::to_string_pretty(&eval_json)?.as_bytes(),
    )?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["seed", "aoi"])?;
        for (k, aoi) in report.per_seed.iter().enumerate() {
            w.write_record([(seed_base + k as u64).to_string(), format!("{aoi:.12}")])?;
        }
        w.flush()?;
    }
    spec::write_atomic(&out.join("per_seed.csv"), &buf)?;

    if let (Some(every), Some(sol)) = (trace_every, sol_single) {
        let every = every.max(1);
        let mut env = EnvIid::new(cfg.clone(), ch.clone(), en.clone(), seed_base + 999_983);
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["slot", "E", "T", "probed", "sampled", "delivered", "cost"])?;
            let mut policy: &aoi_probe::solver::iid_single::Policy = &sol.policy;
            for slot in 0..horizon {
                let e = env.energy();
                let t = env.ages()[0];
                let outcome = env.step(&mut policy).map_err(anyhow::Error::from)?;
                if slot % every == 0 {
                    w.write_record([
                        slot.to_string(),
                        e.to_string(),
                        t.to_string(),
                        outcome.probed.to_string(),
                        outcome.sampled.is_some().to_string(),
                        outcome.delivered.map(|d| d.to_string()).unwrap_or_default(),
                        format!("{:.1}", outcome.cost),
                    ])?;
                }
            }
            w.flush()?;
        }
        spec::write_atomic(&out.join("trace.csv"), &buf)?;
    }
    println!(
        "simulated AoI {:.4} +/- {:.4} over {} seeds; outputs in {}",
        report.mean,
        report.ci_half_width,
        seeds,
        out.display()
    );
    Ok(())
}

fn simulate_markov(
    common: &CommonArgs,
    resolved: &Resolved,
    horizon: u64,
    seeds: u64,
    seed_base: u64,
) -> Result<()> {
    let (cfg, ch, en, chain) = markov_parts(resolved)?;
    let sol = value_iteration_markov(&cfg, &ch, &en, &chain, &SolveOptions::default())
        .map_err(anyhow::Error::from)?;
    let template = EnvMarkov::new(cfg.clone(), ch.clone(), en.clone(), chain, 0);
    let report = evaluate_markov_policy(|_| &sol.policy, &template, horizon, seeds, seed_base)
        .map_err(anyhow::Error::from)?;

    let out = write_metadata(
        resolved,
        common,
        "simulate",
        serde_json::json!({
            "horizon": horizon,
            "seeds": (0..seeds).map(|k| seed_base + k).collect::<Vec<_>>(),
        }),
    )?;
    spec::write_atomic(
        &out.join("eval_report.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "report": report }))?.as_bytes(),
    )?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["seed", "aoi"])?;
        for (k, aoi) in report.per_seed.iter().enumerate() {
            w.write_record([(seed_base + k as u64).to_string(), format!("{aoi:.12}")])?;
        }
        w.flush()?;
    }
    spec::write_atomic(&out.join("per_seed.csv"), &buf)?;
    println!(
        "simulated AoI {:.4} +/- {:.4} over {} seeds; outputs in {}",
        report.mean,
        report.ci_half_width,
        seeds,
        out.display()
    );
    Ok(())
}

pub fn sweep(common: &CommonArgs, tol: f64, lambdas: Option<Vec<f64>>) -> Result<()> {
    let resolved = resolve(common, Some(ModelKind::Iid))?;
    let (cfg, ch, _) = iid_parts(&resolved)?;
    let lambdas = lambdas.unwrap_or_else(|| presets::LAMBDA_SWEEP.to_vec());
    let opts = SolveOptions {
        tol,
        ..Default::default()
    };

    let out = write_metadata(
        &resolved,
        common,
        "sweep",
        serde_json::json!({ "tolerance": tol, "lambdas": lambdas }),
    )?;

    let mut probe_buf = Vec::new();
    let mut sample_buf = Vec::new();
    {
        let mut probe_w = csv::Writer::from_writer(&mut probe_buf);
        let mut sample_w = csv::Writer::from_writer(&mut sample_buf);
        probe_w.write_record(["lambda", "E", "T_th", "truncation_affected"])?;
        sample_w.write_record(["lambda", "E", "T", "p_th", "truncation_affected"])?;

        for &lambda in &lambdas {
            let en = ArrivalDistribution::bernoulli(lambda).map_err(anyhow::Error::from)?;
            let sol = value_iteration(&cfg, &ch, &en, &opts).map_err(anyhow::Error::from)?;
            let report =
                extract_thresholds(&sol.tables, &sol.policy, &ch).map_err(anyhow::Error::from)?;

            // gnuplot-style two-column series per sweep point.
            let mut dat = String::from("# E T_th\n");
            for e in report.probe_energy_min..=report.grid.buffer {
                let t_th = report.probe_age_threshold[e as usize];
                probe_w.write_record([
                    format!("{lambda}"),
                    e.to_string(),
                    t_th.map(|t| t.to_string()).unwrap_or_default(),
                    t_th.map(|t| report.truncation_affected(t))
                        .unwrap_or(false)
                        .to_string(),
                ])?;
                if let Some(t) = t_th {
                    dat.push_str(&format!("{e} {t}\n"));
                }
                for t in 1..=report.grid.age_cap {
                    let p_th = report.sample_prob_threshold[e as usize][(t - 1) as usize];
                    sample_w.write_record([
                        format!("{lambda}"),
                        e.to_string(),
                        t.to_string(),
                        p_th.map(|p| format!("{p:.12}")).unwrap_or_default(),
                        report.truncation_affected(t).to_string(),
                    ])?;
                }
            }
            spec::write_atomic(
                &out.join(format!("probe_thresholds_lambda{lambda}.dat")),
                dat.as_bytes(),
            )?;
        }
        probe_w.flush()?;
        sample_w.flush()?;
    }
    spec::write_atomic(&out.join("probe_thresholds_sweep.csv"), &probe_buf)?;
    spec::write_atomic(&out.join("sample_thresholds_sweep.csv"), &sample_buf)?;
    println!(
        "swept {} arrival rates; outputs in {}",
        lambdas.len(),
        out.display()
    );
    Ok(())
}

pub fn compare_probing(
    common: &CommonArgs,
    lambdas: Option<Vec<f64>>,
    cost_pairs: Option<Vec<String>>,
    horizon: u64,
    seeds: u64,
    seed_base: u64,
) -> Result<()> {
    let resolved = resolve(common, Some(ModelKind::Iid))?;
    let (cfg, ch, _) = iid_parts(&resolved)?;
    let lambdas = lambdas.unwrap_or_else(|| presets::LAMBDA_SWEEP.to_vec());
    let pairs: Vec<(u32, u32)> = match cost_pairs {
        None => presets::COMPARISON_COST_PAIRS.to_vec(),
        Some(list) => list
            .iter()
            .map(|s| {
                let (p, q) = s.split_once(':').ok_or_else(|| {
                    aoi_probe::Error::InvalidConfig(format!("cost pair {s} must look like E_p:E_s"))
                })?;
                Ok((
                    p.parse()
                        .map_err(|_| aoi_probe::Error::InvalidConfig(format!("bad E_p in {s}")))?,
                    q.parse()
                        .map_err(|_| aoi_probe::Error::InvalidConfig(format!("bad E_s in {s}")))?,
                ))
            })
            .collect::<aoi_probe::Result<_>>()
            .map_err(anyhow::Error::from)?,
    };

    let rows = sim::compare_probing(
        &cfg,
        &ch,
        &lambdas,
        &pairs,
        horizon,
        seeds,
        seed_base,
        &SolveOptions::default(),
    )
    .map_err(anyhow::Error::from)?;

    let out = write_metadata(
        &resolved,
        common,
        "compare-probing",
        serde_json::json!({
            "horizon": horizon,
            "seeds": seeds,
            "lambdas": lambdas,
            "cost_pairs": pairs,
        }),
    )?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "lambda",
            "E_p",
            "E_s",
            "aoi_probing",
            "ci_probing",
            "aoi_no_probing",
            "ci_no_probing",
            "difference",
        ])?;
        for row in &rows {
            w.write_record([
                format!("{}", row.lambda),
                row.probe_cost.to_string(),
                row.sample_cost.to_string(),
                format!("{:.12}", row.probing.mean),
                format!("{:.12}", row.probing.ci_half_width),
                format!("{:.12}", row.no_probing.mean),
                format!("{:.12}", row.no_probing.ci_half_width),
                format!("{:.12}", row.difference),
            ])?;
        }
        w.flush()?;
    }
    spec::write_atomic(&out.join("comparison.csv"), &buf)?;
    println!(
        "compared {} points; outputs in {}",
        rows.len(),
        out.display()
    );
    Ok(())
}
